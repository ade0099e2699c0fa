"""Attribute-variation selectors A(dh, phi) and the contrastive selectivity built on them."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from icf.gradcore import Tensor, ops

KINDS = ("gaussian-kernel", "dot-abs")


@dataclass(frozen=True)
class AttributeSelector:
    kind: str = "gaussian-kernel"
    sigma: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown selector {self.kind!r}; expected one of {KINDS}")
        if self.kind == "gaussian-kernel" and not self.sigma > 0:
            raise ValueError(f"gaussian selector needs sigma > 0, got {self.sigma}")

    def with_sigma(self, sigma: float) -> "AttributeSelector":
        return AttributeSelector(self.kind, sigma)


def attribute_variation(dh, phi, selector: AttributeSelector) -> np.ndarray:
    """A(dh, phi), broadcasting over leading axes of ``dh`` and ``phi``."""
    dh, phi = np.asarray(dh, dtype=np.float64), np.asarray(phi, dtype=np.float64)
    if dh.shape[-1] != phi.shape[-1]:
        raise ValueError(f"dimension mismatch: dh {dh.shape} vs phi {phi.shape}")
    if selector.kind == "dot-abs":
        return (phi * np.abs(dh)).sum(axis=-1)
    return np.exp(-((dh - phi) ** 2).sum(axis=-1) / (2 * selector.sigma ** 2))


def selectivity_cont(h, h_next, phi, contrast, selector: AttributeSelector, eps: float = 1e-8) -> float:
    """A(h' - h, phi) / (mean_i |A(h' - h, phi_i)| + eps) over a contrast set of embeddings."""
    contrast = np.asarray(contrast, dtype=np.float64)
    if contrast.ndim != 2 or len(contrast) < 2:
        raise ValueError(f"contrast set must be [n >= 2, K], got shape {contrast.shape}")
    dh = np.asarray(h_next, dtype=np.float64) - np.asarray(h, dtype=np.float64)
    den = np.abs(attribute_variation(dh[None], contrast, selector)).mean()
    return float(attribute_variation(dh, phi, selector) / (den + eps))


def attribute_graph(dh: Tensor, phi: Tensor, selector: AttributeSelector) -> Tensor:
    """Differentiable A for ``dh`` [B, 1, K] against ``phi`` [B, n, K]; returns [B, n]."""
    if selector.kind == "dot-abs":
        return ops.sum(ops.mul(phi, ops.abs(dh)), axis=-1)
    sq = ops.sum(ops.square(ops.sub(dh, phi)), axis=-1)
    return ops.exp(ops.mul(sq, -1.0 / (2 * selector.sigma ** 2)))


def median_sigma(dh_samples: np.ndarray, scale: float = 0.5, max_points: int = 512) -> float:
    """``scale`` times the median pairwise distance among latent differences."""
    x = np.asarray(dh_samples, dtype=np.float64)[-max_points:]
    d = np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1))
    iu = np.triu_indices(len(x), 1)
    med = float(np.median(d[iu])) if len(iu[0]) else 0.0
    return max(scale * med, 1e-6)
