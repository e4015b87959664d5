# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

from pathlib import Path
from os.path import abspath, split

ucloudnet_dir = Path(split(abspath(__file__))[0])

__version__ = "1.0"
