"""Binary portable graymaps (P5) and pixmaps (P6)."""
from __future__ import annotations

import numpy as np


def to_bytes(image) -> bytes:
    """[1, H, W] -> P5, [3, H, W] -> P6; values clamped to [0, 1] and scaled to 0..255."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[0] not in (1, 3):
        raise ValueError(f"pixmap needs shape [1, H, W] or [3, H, W], got {img.shape}")
    c, h, w = img.shape
    # nan counts as 0
    px = np.rint(np.clip(np.nan_to_num(img, nan=0.0), 0.0, 1.0) * 255).astype(np.uint8)
    head = f"{'P5' if c == 1 else 'P6'}\n{w} {h}\n255\n".encode("ascii")
    return head + np.ascontiguousarray(px.transpose(1, 2, 0)).tobytes()


def dump_image(image, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(image))


def dump_grid(images, path, pad: int = 1) -> None:
    """Tiles [N, C, H, W] images side by side into one pixmap."""
    images = np.asarray(images)
    n, c, h, w = images.shape
    canvas = np.ones((c, h, n * (w + pad) - pad))
    for i in range(n):
        canvas[:, :, i * (w + pad):i * (w + pad) + w] = images[i]
    dump_image(canvas, path)


def _tokens(data: bytes, count: int):
    """First ``count`` whitespace-separated header tokens (comments skipped) and the data offset."""
    out, i = [], 0
    while len(out) < count:
        while data[i:i + 1].isspace():
            i += 1
        if data[i:i + 1] == b"#":
            while data[i:i + 1] not in (b"\n", b""):
                i += 1
            continue
        j = i
        while j < len(data) and not data[j:j + 1].isspace():
            j += 1
        out.append(data[i:j].decode("ascii"))
        i = j
    return out, i + 1  # exactly one whitespace byte ends the header


def read_image(path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    (magic, w, h, maxval), off = _tokens(data, 4)
    if magic not in ("P5", "P6") or maxval != "255":
        raise ValueError(f"{path}: only 8-bit P5/P6 files are supported")
    c = 1 if magic == "P5" else 3
    w, h = int(w), int(h)
    px = np.frombuffer(data, np.uint8, count=w * h * c, offset=off).reshape(h, w, c)
    return px.transpose(2, 0, 1).astype(np.float32) / 255.0
