"""Sprite glyphs for the two-sprite world and the IDX (MNIST-style) reader."""
from __future__ import annotations

import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801


class IdxFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass
class SpriteBank:
    odd: np.ndarray   # [N_odd, cell, cell] in [0, 1]
    even: np.ndarray  # [N_even, cell, cell] in [0, 1]


# 6x6 stand-ins for an odd digit ("1") and an even digit ("0"); they differ in
# shape and in total ink so a pixel sum alone can tell them apart.
_ONE = """
..##..
.###..
..##..
..##..
..##..
.####.
"""
_ZERO = """
.####.
##..##
##..##
##..##
##..##
.####.
"""


def _glyph(art: str) -> np.ndarray:
    rows = [r for r in art.strip().splitlines()]
    return np.array([[c == "#" for c in r] for r in rows], dtype=np.float32)


def builtin_bank(cell: int = 6) -> SpriteBank:
    odd, even = _glyph(_ONE), _glyph(_ZERO)
    if cell != odd.shape[0]:
        odd, even = area_resize(odd, cell), area_resize(even, cell)
    return SpriteBank(odd=odd[None], even=even[None])


def area_resize(img: np.ndarray, size: int) -> np.ndarray:
    """Box-filter resample of a square image to ``size x size``."""
    n = img.shape[0]
    edges_src = np.arange(n + 1) / n
    edges_dst = np.arange(size + 1) / size
    lo = np.maximum(edges_dst[:-1, None], edges_src[None, :-1])
    hi = np.minimum(edges_dst[1:, None], edges_src[None, 1:])
    weights = np.clip(hi - lo, 0, None) * size  # rows sum to 1
    return (weights @ img @ weights.T).astype(np.float32)


def _read_bytes(path) -> bytes:
    path = Path(path)
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as fh:
            return fh.read()
    return path.read_bytes()


def parse_idx(raw: bytes, expect_magic: int) -> np.ndarray:
    """Parse an unsigned-byte IDX payload into an array of its declared shape."""
    if len(raw) < 4:
        raise IdxFormatError("file shorter than the 4-byte magic", len(raw))
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expect_magic:
        raise IdxFormatError(f"bad magic 0x{magic:08x}, expected 0x{expect_magic:08x}", 0)
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxFormatError(f"truncated dimension table ({ndim} dims)", len(raw))
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    count = int(np.prod(dims))
    if len(raw) < header + count:
        raise IdxFormatError(f"truncated data: need {count} bytes after header, found {len(raw) - header}",
                             len(raw))
    return np.frombuffer(raw, dtype=np.uint8, count=count, offset=header).reshape(dims)


def read_idx_images(path) -> np.ndarray:
    return parse_idx(_read_bytes(path), IMAGES_MAGIC)


def read_idx_labels(path) -> np.ndarray:
    return parse_idx(_read_bytes(path), LABELS_MAGIC)


def split_by_parity(images: np.ndarray, labels: np.ndarray, cell: int = 6) -> SpriteBank:
    if len(images) != len(labels):
        raise ValueError(f"{len(images)} images but {len(labels)} labels")
    scaled = np.stack([area_resize(im.astype(np.float32) / 255.0, cell) for im in images]) if len(images) \
        else np.zeros((0, cell, cell), np.float32)
    peak = scaled.reshape(len(scaled), -1).max(axis=1, initial=0.0)
    scaled = scaled / np.maximum(peak, 1e-8)[:, None, None]
    odd = labels % 2 == 1
    return SpriteBank(odd=scaled[odd], even=scaled[~odd])


def load_idx(images_path, labels_path, cell: int = 6) -> SpriteBank:
    """Odd- and even-labelled glyphs from an IDX image/label pair.

    Falls back to the builtin glyphs when either file is missing; a file that
    exists but is malformed raises :class:`IdxFormatError`.
    """
    if not (Path(images_path).exists() and Path(labels_path).exists()):
        return builtin_bank(cell)
    bank = split_by_parity(read_idx_images(images_path), read_idx_labels(labels_path), cell)
    if len(bank.odd) == 0 or len(bank.even) == 0:
        raise ValueError("IDX files must contain at least one odd and one even label")
    return bank
