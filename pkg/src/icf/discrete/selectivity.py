"""Selectivity of a latent feature with respect to an observed transition.

For a latent change ``d = h' - h`` the absolute selectivity of feature ``k``
is ``|d_k| / (sum_j |d_j| + eps)``; the directed variant replaces the
numerator by ``max(0, d_k)``.  ``log`` and ``sharpened-log`` post-process the
ratio with ``log(sel)`` and ``log(sel / (1 - sel))``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from icf.gradcore import Tensor, ops

MODES = ("absolute", "directed", "log", "sharpened-log")


@dataclass(frozen=True)
class SelectivityMode:
    variant: str = "directed"
    eps: float = 1e-8
    # numerator used under the log variants
    log_numerator: str = "directed"

    def __post_init__(self):
        if self.variant not in MODES:
            raise ValueError(f"unknown selectivity variant {self.variant!r}; expected one of {MODES}")
        if self.log_numerator not in ("absolute", "directed"):
            raise ValueError(f"log_numerator must be 'absolute' or 'directed', got {self.log_numerator!r}")

    @property
    def numerator(self) -> str:
        if self.variant in ("absolute", "directed"):
            return self.variant
        return self.log_numerator


def _transform(ratio, mode: SelectivityMode):
    if mode.variant == "log":
        return np.log(np.maximum(ratio, mode.eps))
    if mode.variant == "sharpened-log":
        r = np.clip(ratio, mode.eps, 1 - mode.eps)
        return np.log(r / (1 - r))
    return ratio


def selectivity(h, h_next, k: int, mode: SelectivityMode = SelectivityMode()):
    """Single-sample selectivity of feature ``k``; broadcasts over leading axes."""
    h, h_next = np.asarray(h, dtype=np.float64), np.asarray(h_next, dtype=np.float64)
    if h.shape[-1:] != h_next.shape[-1:]:
        raise ValueError(f"latent dimensions differ: {h.shape} vs {h_next.shape}")
    if not 0 <= k < h.shape[-1]:
        raise IndexError(f"feature {k} out of range for dimension {h.shape[-1]}")
    d = h_next - h
    num = np.abs(d[..., k]) if mode.numerator == "absolute" else np.maximum(d[..., k], 0.0)
    return _transform(num / (np.abs(d).sum(axis=-1) + mode.eps), mode)


def selectivity_all(h, h_next, mode: SelectivityMode = SelectivityMode()) -> np.ndarray:
    """Selectivity of every feature at once: array [..., n]."""
    return np.stack([selectivity(h, h_next, k, mode) for k in range(np.shape(h)[-1])], axis=-1)


def selectivity_graph(delta: Tensor, onehot: np.ndarray, mode: SelectivityMode) -> Tensor:
    """Differentiable selectivity.

    ``delta`` holds latent changes [K, B, n] where slice ``k`` came from
    policy ``k``; ``onehot`` [K, 1, n] selects the feature paired with each
    policy.  Returns [K, B].
    """
    target = ops.sum(ops.mul(delta, Tensor(onehot.astype(delta.dtype))), axis=-1)
    num = ops.abs(target) if mode.numerator == "absolute" else ops.relu(target)
    den = ops.add(ops.sum(ops.abs(delta), axis=-1), mode.eps)
    ratio = ops.div(num, den)
    if mode.variant == "log":
        return ops.log(ratio, eps=mode.eps)
    if mode.variant == "sharpened-log":
        # log(r) - log(1 - r), r kept inside (eps, 1 - eps)
        return ops.sub(ops.log(ratio, eps=mode.eps), ops.log(ops.sub(1.0, ratio), eps=mode.eps))
    return ratio
