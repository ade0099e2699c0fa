"""How well single latent features track the true object coordinates."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np
from scipy.stats import spearmanr


@dataclass
class RegressionReport:
    slopes: np.ndarray       # [n_factors, n_features]: d factor / d feature
    intercepts: np.ndarray   # [n_factors, n_features]
    r2: np.ndarray           # [n_factors, n_features]
    factor_names: Sequence[str]

    @property
    def best_feature(self) -> np.ndarray:
        return self.r2.argmax(axis=1)

    @property
    def best_r2(self) -> np.ndarray:
        return self.r2.max(axis=1)

    def injective(self) -> bool:
        best = self.best_feature
        return len(set(best.tolist())) == len(best)

    def table(self) -> str:
        head = "factor  " + "  ".join(f"f{k:<6d}" for k in range(self.r2.shape[1]))
        rows = [head]
        for i, name in enumerate(self.factor_names):
            rows.append(f"{name:<7s} " + "  ".join(f"{v:+.3f}" for v in self.r2[i] * np.sign(self.slopes[i])))
        return "\n".join(rows)


def factor_regression(factors: np.ndarray, latents: np.ndarray,
                      factor_names: Sequence[str] = ()) -> RegressionReport:
    """Ordinary least squares of each true factor on each single latent feature.

    A constant feature (or constant factor) has no explanatory power and
    gets R^2 = 0 and slope 0.
    """
    factors = np.asarray(factors, dtype=np.float64)
    latents = np.asarray(latents, dtype=np.float64)
    if factors.ndim != 2 or latents.ndim != 2 or len(factors) != len(latents):
        raise ValueError(f"need paired 2-D arrays, got {factors.shape} and {latents.shape}")
    if len(factors) < 2:
        raise ValueError("need at least two samples")
    fc = factors - factors.mean(axis=0)
    lc = latents - latents.mean(axis=0)
    cov = fc.T @ lc / len(factors)             # [F, K]
    var_l = (lc ** 2).mean(axis=0)             # [K]
    var_f = (fc ** 2).mean(axis=0)             # [F]
    tiny = 1e-12
    ok_l = var_l > tiny * max(1.0, np.abs(latents).max() ** 2)
    ok_f = var_f > tiny * max(1.0, np.abs(factors).max() ** 2)
    slopes = np.where(ok_l[None], cov / np.where(ok_l, var_l, 1.0)[None], 0.0)
    denom = np.outer(np.where(ok_f, var_f, 1.0), np.where(ok_l, var_l, 1.0))
    r2 = np.where(ok_f[:, None] & ok_l[None], cov ** 2 / denom, 0.0)
    r2 = np.clip(r2, 0.0, 1.0)
    intercepts = factors.mean(axis=0)[:, None] - slopes * latents.mean(axis=0)[None]
    names = list(factor_names) or [f"g{i}" for i in range(factors.shape[1])]
    return RegressionReport(slopes, intercepts, r2, names)


def spearman_matrix(factors: np.ndarray, latents: np.ndarray) -> np.ndarray:
    """|rank correlation| between every (factor, feature) pair; constant columns give 0."""
    out = np.zeros((factors.shape[1], latents.shape[1]))
    for i in range(factors.shape[1]):
        for k in range(latents.shape[1]):
            a, b = factors[:, i], latents[:, k]
            if np.ptp(a) == 0 or np.ptp(b) == 0:
                continue
            out[i, k] = abs(spearmanr(a, b).statistic)
    return out


def policy_action_matrix(model, world, n_samples: int = 1000, rng=None) -> np.ndarray:
    """Average of pi_k(a|s) over uniformly sampled states: a [K, |A|] matrix."""
    rng = rng if rng is not None else np.random.default_rng(0)
    states = world.sample(n_samples, rng)
    probs = []
    for i in range(0, n_samples, 256):
        probs.append(model.action_probs(world.render(states[i:i + 256])))
    return np.concatenate(probs).mean(axis=0)


def latent_dataset(model, world, n_samples: int = 1000, rng=None):
    """(ground truth [N, F], latents [N, K]) on uniformly sampled states."""
    rng = rng if rng is not None else np.random.default_rng(0)
    states = world.sample(n_samples, rng)
    return world.ground_truth(states), model.features(world.render(states))


def paired_actions(report: RegressionReport, action_matrix: np.ndarray) -> List[int]:
    """Argmax action of each policy row."""
    return action_matrix.argmax(axis=1).tolist()
