"""Linear Q-learning on top of learned features: Q(s, a) = W f(s) + b.

Task: move the square to a fixed goal cell (the origin) in as few steps as
possible.  Reward -1 per step, 0 on arrival, episodes capped at
``step_cap``; epsilon-greedy exploration annealed linearly from
``eps_start`` to ``eps_end`` over the first half of the episode budget.
One online TD(0) update per transition, no replay.
"""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from icf import rng as rngs
from icf.gradcore import Adam, Linear, Module, Tensor, backward, ops

MODES = ("pretrained-frozen", "end-to-end")


@dataclass
class QTransferConfig:
    mode: str = "pretrained-frozen"
    episodes: int = 1000
    step_cap: int = 100
    gamma: float = 0.95
    eps_start: float = 1.0
    eps_end: float = 0.05
    lr_head: float = 1e-2
    lr_encoder: float = 1e-4
    goal: tuple = (0, 0)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.episodes < 1 or self.step_cap < 1 or not 0 <= self.gamma < 1:
            raise ValueError("need episodes >= 1, step_cap >= 1 and 0 <= gamma < 1")

    def epsilon(self, episode: int) -> float:
        half = max(self.episodes // 2, 1)
        frac = min(episode / half, 1.0)
        return self.eps_start + frac * (self.eps_end - self.eps_start)


@dataclass
class QCurves:
    success: np.ndarray         # [E] bool
    steps: np.ndarray           # [E] steps taken (== step_cap on failure)
    seconds: np.ndarray         # [E] wall time per episode
    mode: str

    def success_rate(self, start: float = 0.0, stop: float = 1.0) -> float:
        n = len(self.success)
        lo = min(int(round(start * n)), n - 1)
        hi = max(int(round(stop * n)), lo + 1)
        return float(self.success[lo:hi].mean())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["episode", "success", "steps_to_goal", "seconds"])
            for i, (s, k, t) in enumerate(zip(self.success, self.steps, self.seconds)):
                w.writerow([i, int(s), int(k), repr(float(t))])


class _QNet(Module):
    def __init__(self, rng, encoder, n_features: int, n_actions: int):
        super().__init__()
        self.encoder = encoder
        self.head = Linear(rng, n_features, n_actions)


def q_transfer(config: QTransferConfig, world, model=None, seed: int = 0,
               starts: Optional[np.ndarray] = None) -> QCurves:
    """Runs one learning curve.

    ``model`` is a trained discrete ICF model (its encoder gives f); it is
    required in pretrained-frozen mode.  In end-to-end mode a fresh encoder
    of the same architecture is built from ``seed`` (or ``model``'s
    encoder is fine-tuned in place when given).  ``starts`` restricts the
    uniformly drawn start states (default: every state).
    """
    from icf.discrete import DiscreteICF

    if config.mode == "pretrained-frozen" and model is None:
        raise ValueError("pretrained-frozen mode needs a checkpoint trained with directed selectivity")
    streams = rngs.make_streams(seed, ("init", "starts", "explore"))
    if model is None:
        model = DiscreteICF(streams["init"], world.obs_shape, 4, world.n_actions)
    net = _QNet(streams["init"], model.ae, model.n_features, world.n_actions)
    frozen = config.mode == "pretrained-frozen"
    trainable = ("head.",) if frozen else ("head.", "encoder.enc_")
    params = {k: v for k, v in net.parameters().items() if k.startswith(trainable)}
    opt = Adam(params, lr=config.lr_head, lr_overrides={"encoder.": config.lr_encoder})
    before = {k: v.data.copy() for k, v in net.parameters().items() if k.startswith("encoder.")}

    states = world.all_states()
    index = {tuple(s[0, :2]): i for i, s in enumerate(states)}
    images = world.render(states)
    goal = tuple(config.goal)
    table = model.features(images) if frozen else None

    def features(ids, graph: bool):
        if frozen:
            return Tensor(table[ids])
        h = net.encoder.encode(Tensor(images[ids]))[0]
        return h if graph else h.detach()

    succ, steps, secs = [], [], []
    for ep in range(config.episodes):
        t0 = time.perf_counter()
        eps = config.epsilon(ep)
        pool = states if starts is None else starts
        s = pool[streams["starts"].integers(len(pool))][None]
        n = 0
        done = tuple(s[0, 0, :2]) == goal
        while not done and n < config.step_cap:
            i = index[tuple(s[0, 0, :2])]
            q = net.head(features([i], graph=True))
            if streams["explore"].random() < eps:
                a = int(streams["explore"].integers(world.n_actions))
            else:
                a = int(np.argmax(q.data[0]))
            s2 = world.move(s, a)
            n += 1
            done = tuple(s2[0, 0, :2]) == goal
            target = -1.0
            if not done:
                q2 = net.head(features([index[tuple(s2[0, 0, :2])]], graph=False)).data[0]
                target += config.gamma * float(q2.max())
            for p in params.values():
                p.zero_grad()
            td = ops.sub(ops.getitem(q, (slice(None), slice(a, a + 1))), Tensor(np.array([[target]], q.dtype)))
            backward(ops.mul(ops.sum(ops.square(td)), 0.5))
            opt.apply()
            s = s2
        succ.append(done)
        steps.append(n)
        secs.append(time.perf_counter() - t0)
    if frozen:
        for k, v in net.parameters().items():
            if k.startswith("encoder."):
                assert np.array_equal(v.data, before[k]), "frozen encoder moved"
    return QCurves(np.array(succ), np.array(steps), np.array(secs), config.mode)


def random_walk_lengths(world, goal=(0, 0), n_episodes: int = 200, cap: int = 10_000, rng=None) -> np.ndarray:
    """Steps a uniformly random policy needs to reach ``goal`` from uniform starts."""
    rng = rng if rng is not None else np.random.default_rng(0)
    out = []
    states = world.all_states()
    for _ in range(n_episodes):
        s = states[rng.integers(len(states))][None]
        n = 0
        while tuple(s[0, 0, :2]) != tuple(goal) and n < cap:
            s = world.move(s, int(rng.integers(world.n_actions)))
            n += 1
        out.append(n)
    return np.array(out)
