"""Pixel gridworlds with ground-truth factor readout."""
from .base import ConfigError, Env, EnvConfig, GridWorld
from .sprites import IdxFormatError, SpriteBank, builtin_bank, load_idx, read_idx_images, read_idx_labels
from .worlds import MazeWorld, SquareWorld, TwoSpriteWorld, connected, make_world

__all__ = [
    "ConfigError", "Env", "EnvConfig", "GridWorld", "IdxFormatError", "MazeWorld", "SpriteBank",
    "SquareWorld", "TwoSpriteWorld", "builtin_bank", "connected", "load_idx", "make_world",
    "read_idx_images", "read_idx_labels",
]
