"""Binary checkpoints.

Layout (all integers little-endian)::

    offset 0   8 bytes   magic "ICFCKPT" + format version digit ("1")
    offset 8   u32       header length L
    offset 12  L bytes   UTF-8 JSON header (sorted keys, no whitespace)
    offset 12+L          raw float32 LE tensor data, in header order

The header holds the model kind tag, step counter, RNG algorithm
identifier, the optimizer step count, free-form trainer state (RNG stream
states, baselines, ...), run metadata and the tensor table: one
``[section, name, shape]`` entry per tensor, with section one of
``param``, ``adam_m``, ``adam_v`` or ``buffer``.
"""
from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from icf import rng as rngs

MAGIC_PREFIX = b"ICFCKPT"
VERSION = 1
MAGIC = MAGIC_PREFIX + str(VERSION).encode()
SECTIONS = ("param", "adam_m", "adam_v", "buffer")


class CheckpointError(ValueError):
    """Unreadable, truncated or incompatible checkpoint."""


@dataclass
class Checkpoint:
    kind: str
    step: int
    params: Dict[str, np.ndarray]
    adam_m: Dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: Dict[str, np.ndarray] = field(default_factory=dict)
    buffers: Dict[str, np.ndarray] = field(default_factory=dict)
    opt_step: int = 0
    extra: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)
    rng_algorithm: str = rngs.ALGORITHM

    def tables(self):
        return {"param": self.params, "adam_m": self.adam_m, "adam_v": self.adam_v, "buffer": self.buffers}


def to_bytes(ckpt: Checkpoint) -> bytes:
    entries: List[list] = []
    blobs = []
    for section, table in ckpt.tables().items():
        for name in sorted(table):
            arr = np.ascontiguousarray(table[name], dtype="<f4")
            entries.append([section, name, list(arr.shape)])
            blobs.append(arr.tobytes())
    header = {"kind": ckpt.kind, "step": int(ckpt.step), "opt_step": int(ckpt.opt_step),
              "rng_algorithm": ckpt.rng_algorithm, "extra": ckpt.extra, "meta": ckpt.meta, "tensors": entries}
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<I", len(head)) + head + b"".join(blobs)


def from_bytes(data: bytes, expect_kind: Optional[str] = None) -> Checkpoint:
    if len(data) < 8:
        raise CheckpointError(f"truncated checkpoint: {len(data)} bytes, magic needs 8")
    magic = data[:8]
    if magic[:7] != MAGIC_PREFIX or not magic[7:8].isdigit():
        raise CheckpointError(f"bad magic at offset 0: expected {MAGIC!r}, found {magic!r}")
    version = int(magic[7:8])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint format version {version} (this build reads {VERSION})")
    if len(data) < 12:
        raise CheckpointError("truncated checkpoint: header length missing at offset 8")
    (n_head,) = struct.unpack("<I", data[8:12])
    if len(data) < 12 + n_head:
        raise CheckpointError(f"truncated checkpoint: header needs {n_head} bytes at offset 12, "
                              f"{len(data) - 12} present")
    try:
        header = json.loads(data[12:12 + n_head].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header at offset 12: {exc}") from None
    if expect_kind is not None and header["kind"] != expect_kind:
        raise CheckpointError(f"checkpoint holds a {header['kind']!r} model, expected {expect_kind!r}")
    tables: Dict[str, Dict[str, np.ndarray]] = {s: {} for s in SECTIONS}
    pos = 12 + n_head
    for section, name, shape in header["tensors"]:
        if section not in tables:
            raise CheckpointError(f"unknown tensor section {section!r} for {name!r}")
        nbytes = 4 * int(np.prod(shape, dtype=np.int64))
        if pos + nbytes > len(data):
            raise CheckpointError(f"truncated checkpoint: tensor {section}/{name} needs bytes "
                                  f"{pos}..{pos + nbytes}, file has {len(data)}")
        tables[section][name] = np.frombuffer(data, "<f4", count=nbytes // 4, offset=pos).reshape(shape).copy()
        pos += nbytes
    if pos != len(data):
        raise CheckpointError(f"{len(data) - pos} trailing bytes after offset {pos}")
    return Checkpoint(header["kind"], header["step"], tables["param"], tables["adam_m"], tables["adam_v"],
                      tables["buffer"], header["opt_step"], header["extra"], header["meta"],
                      header["rng_algorithm"])


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    """Writes atomically: a temporary file next to ``path`` is renamed over it."""
    path = os.fspath(path)
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(to_bytes(ckpt))
    os.replace(tmp, path)


def load_checkpoint(path, expect_kind: Optional[str] = None) -> Checkpoint:
    with open(path, "rb") as fh:
        return from_bytes(fh.read(), expect_kind)


# ---------------------------------------------------------------- trainers

def capture(trainer, meta: Optional[dict] = None) -> Checkpoint:
    """Snapshot of a trainer (discrete or continuous): everything needed to resume bitwise."""
    opt = trainer.opt
    return Checkpoint(
        kind=trainer.model.kind, step=trainer.step,
        params={k: p.data.copy() for k, p in trainer.params.items()},
        adam_m={k: v.copy() for k, v in opt.m.items()}, adam_v={k: v.copy() for k, v in opt.v.items()},
        buffers={k: v.copy() for k, v in trainer.model.buffers().items()},
        opt_step=opt.step_count, extra=json.loads(json.dumps(trainer.extra_state())), meta=dict(meta or {}))


def _check_table(section: str, saved: Dict[str, np.ndarray], live: Dict[str, tuple]) -> None:
    missing = sorted(set(live) - set(saved))
    unknown = sorted(set(saved) - set(live))
    if missing or unknown:
        raise CheckpointError(f"{section} table mismatch: missing {missing}, unexpected {unknown}")
    for name, shape in live.items():
        if tuple(saved[name].shape) != tuple(shape):
            raise CheckpointError(f"{section} table mismatch: {name} has shape {tuple(saved[name].shape)} "
                                  f"in the checkpoint, {tuple(shape)} in the model")


def restore(trainer, ckpt: Checkpoint) -> None:
    if ckpt.kind != trainer.model.kind:
        raise CheckpointError(f"checkpoint holds a {ckpt.kind!r} model, expected {trainer.model.kind!r}")
    if ckpt.rng_algorithm != rngs.ALGORITHM:
        raise CheckpointError(f"checkpoint RNG {ckpt.rng_algorithm!r} differs from {rngs.ALGORITHM!r}")
    shapes = {k: p.data.shape for k, p in trainer.params.items()}
    for section, table in (("param", ckpt.params), ("adam_m", ckpt.adam_m), ("adam_v", ckpt.adam_v)):
        _check_table(section, table, shapes)
    bufs = trainer.model.buffers()
    _check_table("buffer", ckpt.buffers, {k: v.shape for k, v in bufs.items()})
    for k, p in trainer.params.items():
        p.data[...] = ckpt.params[k]
    for k, v in bufs.items():
        v[...] = ckpt.buffers[k]
    trainer.opt.load_state(ckpt.opt_step, ckpt.adam_m, ckpt.adam_v)
    trainer.load_extra_state(ckpt.extra)
    trainer.step = int(ckpt.step)
