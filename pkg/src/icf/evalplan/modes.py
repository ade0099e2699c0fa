"""Latent-difference samples, their clustering into modes, and additive planning with the modes."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from sklearn.cluster import MeanShift


@dataclass
class DhSamples:
    dh: np.ndarray        # [N, K]
    actions: np.ndarray   # [N]
    phi: np.ndarray       # [N, K] behavior embeddings
    states: np.ndarray    # [N, n_obj, 3]
    next_states: np.ndarray

    def __len__(self) -> int:
        return len(self.dh)

    @property
    def moved(self) -> np.ndarray:
        return np.any(self.states != self.next_states, axis=(1, 2))


def collect_dh(model, world, count: int = 1000, rng=None, n_phi: int = 64, chunk: int = 250) -> DhSamples:
    """Transitions driven by a uniformly chosen phi_behavior among ``n_phi`` draws per state."""
    rng = rng if rng is not None else np.random.default_rng(0)
    from icf.rng import categorical

    parts = []
    for start in range(0, count, chunk):
        m = min(chunk, count - start)
        s = world.sample(m, rng)
        h = model.features(world.render(s))
        phi = model.sample_factors(h, n_phi, rng)
        pick = rng.integers(0, n_phi, size=m)
        phi_b = phi[np.arange(m), pick]
        probs = model.action_probs(h, phi_b[:, None, :])[:, 0]
        a = categorical(rng, probs.astype(np.float64))
        s2 = world.transition(s, a, rng)
        dh = model.features(world.render(s2)) - h
        parts.append((dh, a, phi_b, s, s2))
    cols = list(zip(*parts))
    return DhSamples(*(np.concatenate(c) for c in cols))


@dataclass
class ModeCatalog:
    prototypes: np.ndarray   # [J, K], sorted by member count (descending)
    counts: np.ndarray       # [J]
    labels: np.ndarray       # [N] prototype index per sample
    radius: float

    def major(self, min_share: float = 0.1) -> np.ndarray:
        return np.flatnonzero(self.counts >= min_share * self.counts.sum())

    def assign(self, dh: np.ndarray) -> np.ndarray:
        d = ((np.asarray(dh)[:, None] - self.prototypes[None]) ** 2).sum(-1)
        return d.argmin(axis=1)


def default_radius(dh: np.ndarray, scale: float = 0.25, max_points: int = 1000) -> float:
    x = np.asarray(dh, dtype=np.float64)[:max_points]
    d = np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1))
    return scale * float(np.median(d[np.triu_indices(len(x), 1)]))


def cluster_modes(dh: np.ndarray, radius: Optional[float] = None) -> ModeCatalog:
    """Flat-kernel mean-shift with bandwidth ``radius`` (default: 0.25 * median pairwise distance)."""
    dh = np.asarray(dh, dtype=np.float64)
    if dh.ndim != 2 or len(dh) < 2:
        raise ValueError(f"need [N >= 2, K] samples, got {dh.shape}")
    if radius is None:
        radius = default_radius(dh)
    if not radius > 0:
        raise ValueError(f"merge radius must be > 0, got {radius}")
    ms = MeanShift(bandwidth=radius, cluster_all=True).fit(dh)
    centers = ms.cluster_centers_
    labels = ((dh[:, None] - centers[None]) ** 2).sum(-1).argmin(axis=1)
    counts = np.bincount(labels, minlength=len(centers))
    # deterministic order: by size, then lexicographically by coordinates
    order = sorted(range(len(centers)), key=lambda j: (-counts[j], *np.round(centers[j], 12)))
    remap = np.empty(len(centers), dtype=int)
    remap[order] = np.arange(len(centers))
    return ModeCatalog(centers[order], counts[order], remap[labels], float(radius))


def action_prototypes(catalog: ModeCatalog, samples: DhSamples, action_names: Sequence[str],
                      moved_only: bool = True) -> Dict[str, int]:
    """Most frequent prototype among each action's (effective) transitions."""
    keep = samples.moved if moved_only else np.ones(len(samples), bool)
    out = {}
    for a, name in enumerate(action_names):
        lab = catalog.labels[keep & (samples.actions == a)]
        if len(lab):
            out[name] = int(np.bincount(lab).argmax())
    return out


# ----------------------------------------------------------------- planning

def predict_state(h: np.ndarray, plan: Sequence[Tuple[np.ndarray, int]], decoder=None):
    """h + sum_j m_j * dh_j; also decoded when ``decoder`` is given."""
    out = np.array(h, dtype=np.float64, copy=True)
    for proto, mult in plan:
        out = out + mult * np.asarray(proto, dtype=np.float64)
    if decoder is None:
        return out
    return out, decoder(out[None])[0]


def decompose_dh(h_start, h_goal, prototypes, max_mult: int = 10) -> np.ndarray:
    """Non-negative integer c in [0..M]^J minimizing ||(h_goal - h_start) - sum_j c_j p_j||.

    Exhaustive; ties go to the smallest sum(c), then the lexicographically
    smallest vector.
    """
    P = np.atleast_2d(np.asarray(prototypes, dtype=np.float64))
    if P.size == 0 or len(P) == 0:
        raise ValueError("need at least one prototype")
    if len(P) > 6 or max_mult > 10 or max_mult < 0:
        raise ValueError("exhaustive search needs <= 6 prototypes and 0 <= M <= 10")
    target = np.asarray(h_goal, np.float64) - np.asarray(h_start, np.float64)
    grid = np.array(list(itertools.product(range(max_mult + 1), repeat=len(P))))  # lexicographic
    err = np.sqrt(((target[None] - grid @ P) ** 2).sum(-1))
    best = err.min()
    tied = np.flatnonzero(err <= best + 1e-12 * max(1.0, best))
    sums = grid[tied].sum(axis=1)
    return grid[tied[sums == sums.min()][0]]


def replay(world, state: np.ndarray, coefficients: Sequence[int], actions: Sequence[int]) -> np.ndarray:
    """Executes c_j moves of action_j in the true world.

    At each step the first action (in ``actions`` order) with remaining
    budget whose move is not blocked is taken; if every remaining move is
    blocked, the remaining ones are executed anyway (and have no effect).
    """
    left = list(coefficients)
    s = np.array(state)[None]
    while sum(left):
        for j, a in enumerate(actions):
            if left[j] and not np.array_equal(world.move(s, a), s):
                break
        else:
            j = next(i for i, c in enumerate(left) if c)
        s = world.move(s, actions[j])
        left[j] -= 1
    return s[0]
