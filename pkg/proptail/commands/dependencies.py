"""Shared loaders for command handlers."""
from pathlib import Path
from typing import Optional
from proptail.config import FlatConfig, load_flat_config
from proptail.models.schemas import CliConfig
from proptail.storage import ensure_dir


def load_config(cfg: CliConfig) -> FlatConfig:
    return FlatConfig(load_flat_config(cfg.config_path))


def resolve_seed(cfg: CliConfig, flat: FlatConfig) -> int:
    """The --seed override wins over the `seed` key; 0 when neither is given."""
    if cfg.seed is not None:
        return cfg.seed
    return flat.get_int('seed', 0)


def resolve_path(cfg: CliConfig, value: str) -> Path:
    """Paths in a config file are relative to the file's directory."""
    path = Path(value)
    return path if path.is_absolute() else cfg.config_path.parent / path


def output_dir(cfg: CliConfig) -> Path:
    return ensure_dir(cfg.out_dir)


def format_point(point: Optional[tuple]) -> str:
    if point is None:
        return '-'
    return '(' + ', '.join(f'{v:g}' for v in point) + ')'
