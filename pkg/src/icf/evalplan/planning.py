"""Maze-level summaries: dh modes against the action set, latent prediction and decomposition."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .modes import DhSamples, ModeCatalog, action_prototypes, cluster_modes, collect_dh, decompose_dh, replay

DIRECTIONS = ("down", "left", "right", "up")


@dataclass
class ModeReport:
    catalog: ModeCatalog
    samples: DhSamples
    proto_of: Dict[str, int]          # action name -> dominant prototype index (effective moves)
    major: List[int]
    up2_agreement: float
    composite_share: float            # largest share of a cluster whose majority action is down+left
    checks: Dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def direction_prototypes(self) -> Dict[str, np.ndarray]:
        return {a: self.catalog.prototypes[self.proto_of[a]] for a in DIRECTIONS if a in self.proto_of}

    def summary(self) -> dict:
        share = self.catalog.counts / self.catalog.counts.sum()
        return {"n_modes": int(len(share)), "major_shares": [round(float(share[j]), 4) for j in self.major],
                "prototypes": self.catalog.prototypes[:8].round(4).tolist(), "radius": self.catalog.radius,
                "action_prototype": self.proto_of, "up2_agreement": self.up2_agreement,
                "down_left_cluster_share": self.composite_share, "checks": self.checks}


def mode_report(model, world, count: int = 1000, rng=None, radius: Optional[float] = None,
                n_phi: int = 64, min_share: float = 0.1) -> ModeReport:
    """Clusters ``count`` policy-driven dh samples and scores them against the maze actions.

    Checks: at least four major modes; up, down, left and right each dominated
    by a distinct major mode; up2 transitions assigned to up's mode in >= 90%
    of cases; no cluster dominated by down+left holding >= 5% of the samples.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    names = list(world.actions)
    smp = collect_dh(model, world, count, rng, n_phi)
    cat = cluster_modes(smp.dh, radius)
    proto_of = action_prototypes(cat, smp, names)
    major = cat.major(min_share).tolist()

    up2 = names.index("up2")
    moved = smp.moved
    lab2 = cat.labels[moved & (smp.actions == up2)]
    if len(lab2) == 0:  # the policy never picked up2: score forced up2 moves from fresh states
        s = world.sample(count, rng)
        s2 = world.move(s, up2)
        ok = np.any(s != s2, axis=(1, 2))
        lab2 = cat.assign(model.features(world.render(s2[ok])) - model.features(world.render(s[ok])))
    agree = float(np.mean(lab2 == proto_of["up"])) if "up" in proto_of and len(lab2) else 0.0

    comp = names.index("down+left") if "down+left" in names else -1
    comp_share = 0.0
    for j in range(len(cat.counts)):
        acts = smp.actions[(cat.labels == j) & moved]
        if len(acts) and np.bincount(acts, minlength=len(names)).argmax() == comp:
            comp_share = max(comp_share, cat.counts[j] / len(smp))
    dirs = [proto_of.get(a) for a in DIRECTIONS]
    checks = {
        "four_major_modes": len(major) >= 4,
        "directions_on_distinct_major_modes": None not in dirs and len(set(dirs)) == 4
        and all(d in major for d in dirs),
        "up2_shares_up_mode": agree >= 0.9,
        "no_down_left_mode": comp_share < 0.05,
    }
    return ModeReport(cat, smp, proto_of, major, agree, float(comp_share), checks)


def _free_moves(world, s, actions):
    return [a for a in actions if not np.array_equal(world.move(s[None], a)[0], s)]


def prediction_accuracy(model, world, prototypes: Dict[str, np.ndarray], n_pairs: int = 50, rng=None,
                        keep: int = 0):
    """Fraction of (state, 2-step plan) pairs whose predicted, decoded latent
    h + dh_a1 + dh_a2 lands nearest (pixel L2) to the true resulting state.

    Plans use the four direction actions and only moves that are not blocked.
    Returns (accuracy, list of the first ``keep`` (true image, decoded image) pairs).
    """
    from .modes import predict_state

    rng = rng if rng is not None else np.random.default_rng(0)
    names = list(world.actions)
    acts = [names.index(a) for a in DIRECTIONS]
    pool = world.all_states()
    pool_img = world.render(pool).reshape(len(pool), -1)
    hits, shown = 0, []
    for _ in range(n_pairs):
        while True:
            s = pool[rng.integers(len(pool))]
            a1s = _free_moves(world, s, acts)
            if not a1s:
                continue
            a1 = a1s[rng.integers(len(a1s))]
            s1 = world.move(s[None], a1)[0]
            a2s = _free_moves(world, s1, acts)
            if a2s:
                break
        a2 = a2s[rng.integers(len(a2s))]
        s2 = world.move(s1[None], a2)[0]
        h = model.features(world.render(s[None]))[0]
        plan = [(prototypes[names[a1]], 1), (prototypes[names[a2]], 1)]
        _, img = predict_state(h, plan, decoder=model.decode_np)
        nearest = np.argmin(((pool_img - img.reshape(1, -1)) ** 2).sum(axis=1))
        hits += bool(np.array_equal(pool[nearest], s2))
        if len(shown) < keep:
            shown.append((world.render(s2[None])[0], np.asarray(img)))
    return hits / n_pairs, shown


def decomposition_accuracy(model, world, prototypes: Dict[str, np.ndarray], n_pairs: int = 50,
                           max_distance: int = 5, rng=None, max_mult: int = 10) -> float:
    """Fraction of random (start, goal) pairs, 1 <= Manhattan distance <= ``max_distance``,
    whose decomposed coefficients replayed in the true maze end on the goal cell."""
    rng = rng if rng is not None else np.random.default_rng(0)
    names = list(world.actions)
    dirs = [a for a in DIRECTIONS if a in prototypes]
    P = np.stack([prototypes[a] for a in dirs])
    acts = [names.index(a) for a in dirs]
    pool = world.all_states()
    xy = pool[:, 0, :2]
    feats = model.features(world.render(pool))
    hits = 0
    for _ in range(n_pairs):
        i = rng.integers(len(pool))
        d = np.abs(xy - xy[i]).sum(axis=1)
        cand = np.flatnonzero((d >= 1) & (d <= max_distance))
        j = cand[rng.integers(len(cand))]
        c = decompose_dh(feats[i], feats[j], P, max_mult)
        end = replay(world, pool[i], c, acts)
        hits += bool(np.array_equal(end[:, :2], pool[j][:, :2]))
    return hits / n_pairs
