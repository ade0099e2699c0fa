"""Feature responses to one ground-truth factor swept while the others stay fixed."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import spearmanr

FACTOR_NAMES = ("x1", "y1", "x2", "y2")


@dataclass
class FeatureCurves:
    values: np.ndarray   # [V] swept factor values
    mean: np.ndarray     # [F, V, K] feature mean over base configurations (nan where never legal)
    std: np.ndarray      # [F, V, K]
    count: np.ndarray    # [F, V] legal base configurations behind each point
    factor_names: Sequence[str]
    # pooled (factor value, features) samples per factor, for rank statistics
    pooled: list

    def spearman(self, pooled: bool = False) -> np.ndarray:
        """|rank correlation| [F, K] between the swept value and each feature.

        By default on the averaged curve; ``pooled=True`` uses every
        (base configuration, value) sample instead.
        """
        F, _, K = self.mean.shape
        out = np.zeros((F, K))
        for f in range(F):
            if pooled:
                v, feats = self.pooled[f]
            else:
                ok = self.count[f] > 0
                v, feats = self.values[ok], self.mean[f][ok]
            for k in range(K):
                if np.ptp(feats[:, k]) == 0 or np.ptp(v) == 0:
                    continue
                out[f, k] = abs(spearmanr(v, feats[:, k]).statistic)
        return out

    def best(self, pooled: bool = False) -> np.ndarray:
        return self.spearman(pooled).max(axis=1)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["factor", "value", "feature", "mean", "std", "count"])
            for f, name in enumerate(self.factor_names):
                for i, v in enumerate(self.values):
                    for k in range(self.mean.shape[2]):
                        w.writerow([name, int(v), k, repr(float(self.mean[f, i, k])),
                                    repr(float(self.std[f, i, k])), int(self.count[f, i])])


def feature_curves(encode, world, n_bases: int = 20, rng=None) -> FeatureCurves:
    """Sweeps each coordinate of each object over 0..max_pos from ``n_bases`` random states.

    ``encode`` maps images [N, C, H, W] to features [N, K]; states made
    illegal by the sweep (e.g. overlapping sprites) are left out.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    bases = world.sample(n_bases, rng)
    values = np.arange(world.max_pos + 1)
    n_obj = bases.shape[1]
    names = list(FACTOR_NAMES[:2 * n_obj]) if n_obj <= 2 else [f"g{i}" for i in range(2 * n_obj)]
    means, stds, counts, pooled = [], [], [], []
    for f in range(2 * n_obj):
        obj, axis = divmod(f, 2)
        grid = np.repeat(bases[:, None], len(values), axis=1)            # [n_bases, V, n_obj, 3]
        grid[:, :, obj, axis] = values[None]
        flat = grid.reshape(-1, *bases.shape[1:])
        ok = world.legal(flat)
        feats = np.full((len(flat), 0), np.nan)
        if ok.any():
            got = encode(world.render(flat[ok]))
            feats = np.full((len(flat), got.shape[1]), np.nan)
            feats[ok] = got
        feats = feats.reshape(n_bases, len(values), -1)
        okv = ok.reshape(n_bases, len(values))
        cnt = okv.sum(axis=0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)  # values never legal stay nan
            m, s = np.nanmean(feats, axis=0), np.nanstd(feats, axis=0)
        means.append(m)
        stds.append(s)
        counts.append(cnt)
        pooled.append((np.broadcast_to(values, okv.shape)[okv], feats[okv]))
    return FeatureCurves(values, np.stack(means), np.stack(stds), np.stack(counts), names, pooled)
