"""Shared machinery for the pixel gridworlds.

A state is an integer array of shape ``[n_objects, 3]`` holding ``(x, y,
glyph)`` per object; batches add a leading axis.  ``x`` is the column and
``y`` the row of the object's top-left cell, so ``up`` decreases ``y``.
All dynamics are vectorized over the batch axis.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

DELTAS = {"left": (-1, 0), "right": (1, 0), "up": (0, -1), "down": (0, 1)}


class ConfigError(ValueError):
    """Invalid or unsatisfiable environment configuration."""


@dataclass
class EnvConfig:
    kind: str = "square"
    seed: int = 0
    slip: float = 0.0
    sprite_source: str = "builtin"
    idx_images: Optional[str] = None
    idx_labels: Optional[str] = None
    maze_blocks: int = 4

    def __post_init__(self):
        if self.kind not in ("square", "two-sprite", "maze"):
            raise ConfigError(f"unknown env kind {self.kind!r}")
        if not 0.0 <= self.slip <= 1.0:
            raise ConfigError(f"slip probability must lie in [0, 1], got {self.slip}")
        if self.sprite_source not in ("builtin", "idx"):
            raise ConfigError(f"sprite_source must be 'builtin' or 'idx', got {self.sprite_source!r}")


class GridWorld:
    """Base class: subclasses define the action table, legality and rendering."""

    kind = ""
    actions: Tuple[str, ...] = ()
    n_objects = 1
    obs_shape: Tuple[int, int, int] = (1, 1, 1)

    def __init__(self, config: EnvConfig):
        self.config = config
        self.slip = config.slip

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    # -- subclass hooks ---------------------------------------------------
    def action_moves(self) -> Sequence[Tuple[int, Tuple[Tuple[int, int], ...]]]:
        """Per action: (object index, sequence of unit moves applied in order)."""
        raise NotImplementedError

    def legal(self, states: np.ndarray) -> np.ndarray:
        """Boolean [B] marking states whose objects are in bounds, off blocks and apart."""
        raise NotImplementedError

    def render(self, states: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def all_states(self) -> np.ndarray:
        """Every legal state with glyph 0, shape [N, n_objects, 3]."""
        raise NotImplementedError

    def n_glyphs(self, obj: int) -> int:
        return 1

    # -- dynamics -----------------------------------------------------------
    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n states drawn uniformly over legal configurations."""
        pool = self.all_states()
        if len(pool) == 0:
            raise ConfigError(f"{self.kind}: no legal placement exists")
        states = pool[rng.integers(0, len(pool), size=n)].copy()
        for obj in range(self.n_objects):
            g = self.n_glyphs(obj)
            if g > 1:
                states[:, obj, 2] = rng.integers(0, g, size=n)
        return states

    def move(self, states: np.ndarray, actions) -> np.ndarray:
        """Deterministic transition: each unit move that would be illegal is skipped."""
        states = np.asarray(states)
        single = states.ndim == 2
        if single:
            states = states[None]
        actions = np.broadcast_to(np.asarray(actions), states.shape[:1])
        if np.any((actions < 0) | (actions >= self.n_actions)):
            bad = actions[(actions < 0) | (actions >= self.n_actions)][0]
            raise ValueError(f"{self.kind}: invalid action index {bad}; expected 0..{self.n_actions - 1}")
        out = states.copy()
        table = self.action_moves()
        n_sub = max(len(moves) for _, moves in table)
        for sub in range(n_sub):
            for a, (obj, moves) in enumerate(table):
                if sub >= len(moves):
                    continue
                sel = np.nonzero(actions == a)[0]
                if len(sel) == 0:
                    continue
                cand = out[sel].copy()
                cand[:, obj, 0] += moves[sub][0]
                cand[:, obj, 1] += moves[sub][1]
                ok = self.legal(cand)
                out[sel[ok]] = cand[ok]
        return out[0] if single else out

    def transition(self, states: np.ndarray, actions, rng: np.random.Generator) -> np.ndarray:
        """Stochastic transition: with probability ``slip`` the command is replaced,
        half the time by a no-op and half the time by a uniformly random action."""
        states = np.asarray(states)
        single = states.ndim == 2
        if single:
            states = states[None]
        actions = np.array(np.broadcast_to(np.asarray(actions), states.shape[:1]))
        if np.any((actions < 0) | (actions >= self.n_actions)):
            bad = actions[(actions < 0) | (actions >= self.n_actions)][0]
            raise ValueError(f"{self.kind}: invalid action index {bad}; expected 0..{self.n_actions - 1}")
        noop = np.zeros(len(actions), dtype=bool)
        if self.slip > 0:
            u = rng.random(len(actions))
            randomized = rng.integers(0, self.n_actions, size=len(actions))
            noop = u < self.slip / 2
            swap = (u >= self.slip / 2) & (u < self.slip)
            actions[swap] = randomized[swap]
        out = self.move(states, actions)
        out[noop] = states[noop]
        return out[0] if single else out

    def ground_truth(self, states: np.ndarray) -> np.ndarray:
        """Object coordinates flattened to [B, 2 * n_objects] as (x1, y1, x2, y2, ...)."""
        states = np.asarray(states)
        return states[..., :2].reshape(*states.shape[:-2], -1).astype(np.float64)

    def observe(self, states: np.ndarray) -> np.ndarray:
        states = np.asarray(states)
        if states.ndim == 2:
            return self.render(states[None])[0]
        return self.render(states)


class Env:
    """Stateful single-episode wrapper around a :class:`GridWorld`."""

    def __init__(self, world: GridWorld, rng: Optional[np.random.Generator] = None):
        self.world = world
        self.rng = rng if rng is not None else np.random.default_rng(world.config.seed)
        self.state: Optional[np.ndarray] = None

    def reset(self, state: Optional[np.ndarray] = None):
        self.state = self.world.sample(1, self.rng)[0] if state is None else np.array(state)
        return self.world.observe(self.state), self.world.ground_truth(self.state)

    def step(self, action: int):
        if self.state is None:
            raise RuntimeError("step() before reset()")
        self.state = self.world.transition(self.state, action, self.rng)
        return self.world.observe(self.state), self.world.ground_truth(self.state)

    def clone(self) -> "Env":
        twin = Env(self.world, np.random.default_rng())
        twin.rng.bit_generator.state = self.rng.bit_generator.state
        twin.state = None if self.state is None else self.state.copy()
        return twin
