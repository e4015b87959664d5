# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from .errors import ConfigError

SUBSETS = ("day", "night", "all")
DTYPES = ("float32", "float64")


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines a training run, given the dataset bytes."""
    k: int = 4
    aux_enabled: bool = False
    lr_decay_enabled: bool = False
    epochs: int = 100
    batch_size: int = 16
    lr: float = 0.001
    gamma: float = 0.95
    seed: int = 0
    subset: str = "all"
    target_size: Tuple[int, int] = (320, 320)
    dtype: str = "float32"
    split_ratio: float = 0.8
    # > 0 trains on generated samples instead of a dataset folder
    synthetic: int = 0

    def validate(self) -> "RunConfig":
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if not 0 < self.gamma <= 1:
            raise ConfigError(f"gamma must lie in (0,1], got {self.gamma}")
        h, w = self.target_size
        if h <= 0 or w <= 0 or h % 16 or w % 16:
            raise ConfigError(f"target_size {h}x{w} must be positive and divisible by 16")
        if self.dtype not in DTYPES:
            raise ConfigError(f"dtype must be one of {DTYPES}, got {self.dtype}")
        if self.subset not in SUBSETS:
            raise ConfigError(f"subset must be one of {SUBSETS}, got {self.subset}")
        if not 0 < self.split_ratio < 1:
            raise ConfigError(f"split_ratio must lie in (0,1), got {self.split_ratio}")
        if self.synthetic < 0:
            raise ConfigError(f"synthetic must be >= 0, got {self.synthetic}")
        return self

    def run_config(self) -> "RunConfig":
        return RunConfig(**{f.name: getattr(self, f.name) for f in fields(RunConfig)})

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["target_size"] = list(self.target_size)
        return d

    @classmethod
    def from_dict(cls, d:Dict[str, Any]):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"Unknown config key {unknown[0]!r}")
        d = dict(d)
        if "target_size" in d:
            d["target_size"] = tuple(int(v) for v in d["target_size"])
        return cls(**d)


@dataclass(frozen=True)
class CliConfig(RunConfig):
    dataset: Optional[str] = None
    out: str = "./runs/"
    checkpoint: Optional[str] = None
    cache_dir: str = "./cache/"
    subset_list: Optional[str] = None
    workers: int = 0
    checkpoint_every: int = 0
    threshold: float = 0.5
    ignore_cache: bool = False

    def validate(self) -> "CliConfig":
        super().validate()
        if self.workers < 0:
            raise ConfigError(f"workers must be >= 0, got {self.workers}")
        if self.checkpoint_every < 0:
            raise ConfigError(f"checkpoint_every must be >= 0, got {self.checkpoint_every}")
        if not 0 <= self.threshold <= 1:
            raise ConfigError(f"threshold must lie in [0,1], got {self.threshold}")
        return self


def run_name(cfg:RunConfig) -> str:
    """ucloudnet_k{k} with _aux and _lrdecay suffixes for the enabled options."""
    name = f"ucloudnet_k{cfg.k}"
    if cfg.aux_enabled:
        name += "_aux"
    if cfg.lr_decay_enabled:
        name += "_lrdecay"
    return name


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return "x".join(str(v) for v in value)
    if value is None:
        return ""
    return str(value)


def _parse_bool(key:str, raw:str) -> bool:
    v = raw.strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected true/false, got {raw!r}")


def _parse(key:str, typ, raw:str):
    try:
        if typ is bool:
            return _parse_bool(key, raw)
        if typ is int:
            return int(raw)
        if typ is float:
            return float(raw)
        if typ == Tuple[int, int]:
            h, w = raw.lower().split("x")
            return (int(h), int(w))
        if typ == Optional[str]:
            return raw if raw != "" else None
        return raw
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(f"{key}: cannot parse {raw!r}: {e}") from e


def parse_values(raw:Dict[str, str], cls=CliConfig) -> Dict[str, Any]:
    types = {f.name: f.type for f in fields(cls)}
    res = {}
    for key, value in raw.items():
        if key not in types:
            raise ConfigError(f"Unknown config key {key!r}")
        res[key] = _parse(key, types[key], value)
    return res


def read_config_file(path:Path) -> Dict[str, str]:
    """Flat key=value lines; blank lines and # comments are skipped."""
    res = {}
    try:
        with open(path, "r", encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e
    for i, line in enumerate(lines):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{i+1}: expected key=value, got {line!r}")
        k, v = line.split("=", 1)
        res[k.strip()] = v.strip()
    return res


def resolve(file_path:Optional[Path], overrides:Dict[str, Any], cls=CliConfig):
    """Defaults, then the config file, then explicit flag values (None means unset)."""
    values = {}
    if file_path is not None:
        values.update(parse_values(read_config_file(file_path), cls))
    values.update({k: v for k, v in overrides.items() if v is not None})
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise ConfigError(f"Unknown config key {unknown[0]!r}")
    return cls(**values).validate()


def config_lines(cfg:RunConfig) -> str:
    return "".join(f"{f.name}={_format(getattr(cfg, f.name))}\n" for f in fields(cfg))


def write_config(cfg:RunConfig, path:Path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(config_lines(cfg))
