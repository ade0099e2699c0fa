"""Seeded random streams.

Every run derives independent named streams from one integer seed through
``numpy.random.SeedSequence.spawn``; each stream is a ``Generator`` over the
PCG64 bit generator.  Stream states are plain dicts, so they serialize into
checkpoints and restore exactly.
"""
from __future__ import annotations

from typing import Dict, Iterable

import numpy as np

ALGORITHM = "numpy.PCG64/SeedSequence.spawn"


def make_streams(seed: int, names: Iterable[str]) -> Dict[str, np.random.Generator]:
    names = list(names)
    children = np.random.SeedSequence(int(seed)).spawn(len(names))
    return {name: np.random.Generator(np.random.PCG64(child)) for name, child in zip(names, children)}


def get_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def set_state(rng: np.random.Generator, state: dict) -> None:
    if state.get("bit_generator") != "PCG64":
        raise ValueError(f"unsupported bit generator {state.get('bit_generator')!r}")
    rng.bit_generator.state = state


def categorical(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """One draw per row of ``probs`` [N, A] by inverse-CDF sampling."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(len(probs))[:, None] * cdf[:, -1:]
    return np.minimum((cdf <= u).sum(axis=1), probs.shape[1] - 1)
