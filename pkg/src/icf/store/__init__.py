"""Run configuration, checkpoints, metrics CSV and pixmap dumps."""
from .checkpoint import (MAGIC, VERSION, Checkpoint, CheckpointError, capture, from_bytes, load_checkpoint,
                         restore, save_checkpoint, to_bytes)
from .config import KINDS, SCHEMA, ConfigError, RunConfig, load_config, parse_config
from .images import dump_grid, dump_image, read_image
from .metrics import MetricsWriter, discrete_columns, read_metrics, truncate_after, write_rows

__all__ = [
    "Checkpoint", "CheckpointError", "ConfigError", "KINDS", "MAGIC", "MetricsWriter", "RunConfig", "SCHEMA",
    "VERSION", "capture", "discrete_columns", "dump_grid", "dump_image", "from_bytes", "load_checkpoint",
    "load_config", "parse_config", "read_image", "read_metrics", "restore", "save_checkpoint", "to_bytes",
    "truncate_after", "write_rows",
]
