# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)


class UCloudNetError(Exception):
    pass

class ShapeError(UCloudNetError, ValueError):
    pass

class ConfigError(UCloudNetError):
    pass

class DatasetError(UCloudNetError):
    pass

class CheckpointError(UCloudNetError):
    pass

class MetricsError(UCloudNetError):
    pass

class NumericalAbort(UCloudNetError):
    """Raised when a loss or gradient becomes non-finite during training."""
    pass
