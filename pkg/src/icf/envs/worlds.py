"""The three environments: a 2x2 square, two glyph sprites, and a small pixel maze."""
from __future__ import annotations

from collections import deque
from typing import Optional

import numpy as np

from .base import DELTAS, ConfigError, EnvConfig, GridWorld
from .sprites import SpriteBank, builtin_bank, load_idx


class SquareWorld(GridWorld):
    """A 2x2 white square on a 12x12 black canvas, moved one pixel per action."""

    kind = "square"
    actions = ("left", "right", "up", "down")
    obs_shape = (1, 12, 12)
    size = 12
    square = 2

    def action_moves(self):
        return [(0, (DELTAS[a],)) for a in self.actions]

    @property
    def max_pos(self) -> int:
        return self.size - self.square

    def legal(self, states):
        xy = states[:, 0, :2]
        return np.all((xy >= 0) & (xy <= self.max_pos), axis=1)

    def all_states(self):
        g = np.arange(self.max_pos + 1)
        ys, xs = np.meshgrid(g, g, indexing="ij")
        out = np.zeros((xs.size, 1, 3), dtype=np.int64)
        out[:, 0, 0], out[:, 0, 1] = xs.ravel(), ys.ravel()
        return out

    def render(self, states):
        b = len(states)
        img = np.zeros((b, 1, self.size, self.size), dtype=np.float32)
        rows = np.arange(b)
        for dy in range(self.square):
            for dx in range(self.square):
                img[rows, 0, states[:, 0, 1] + dy, states[:, 0, 0] + dx] = 1.0
        return img


class TwoSpriteWorld(GridWorld):
    """Two 6x6 glyphs (odd-digit glyph first, even-digit glyph second) on a 16x16 canvas.

    Actions 0-3 move the first sprite, 4-7 the second; a move that would make
    the two footprints overlap is skipped like a move off the canvas.
    """

    kind = "two-sprite"
    actions = ("left1", "right1", "up1", "down1", "left2", "right2", "up2", "down2")
    n_objects = 2
    obs_shape = (1, 16, 16)
    size = 16
    cell = 6

    def __init__(self, config: EnvConfig, bank: Optional[SpriteBank] = None):
        super().__init__(config)
        if bank is None:
            if config.sprite_source == "idx":
                if not (config.idx_images and config.idx_labels):
                    raise ConfigError("sprite_source 'idx' needs idx_images and idx_labels")
                bank = load_idx(config.idx_images, config.idx_labels, cell=self.cell)
            else:
                bank = builtin_bank(self.cell)
        self.bank = bank
        self._all = None

    def n_glyphs(self, obj):
        return len(self.bank.odd if obj == 0 else self.bank.even)

    def action_moves(self):
        d = ("left", "right", "up", "down")
        return [(0, (DELTAS[a],)) for a in d] + [(1, (DELTAS[a],)) for a in d]

    @property
    def max_pos(self) -> int:
        return self.size - self.cell

    def legal(self, states):
        xy = states[:, :, :2]
        inside = np.all((xy >= 0) & (xy <= self.max_pos), axis=(1, 2))
        gap = np.abs(xy[:, 0] - xy[:, 1])
        apart = np.any(gap >= self.cell, axis=1)
        return inside & apart

    def all_states(self):
        if self._all is None:
            g = np.arange(self.max_pos + 1)
            grid = np.stack(np.meshgrid(g, g, g, g, indexing="ij"), -1).reshape(-1, 4)
            out = np.zeros((len(grid), 2, 3), dtype=np.int64)
            out[:, 0, 0], out[:, 0, 1] = grid[:, 0], grid[:, 1]
            out[:, 1, 0], out[:, 1, 1] = grid[:, 2], grid[:, 3]
            self._all = out[self.legal(out)]
        return self._all

    def render(self, states):
        b, c = len(states), self.cell
        img = np.zeros((b, 1, self.size, self.size), dtype=np.float32)
        rows = np.arange(b)[:, None, None]
        dy, dx = np.meshgrid(np.arange(c), np.arange(c), indexing="ij")
        for obj, glyphs in ((0, self.bank.odd), (1, self.bank.even)):
            ys = states[:, obj, 1][:, None, None] + dy
            xs = states[:, obj, 0][:, None, None] + dx
            img[rows, 0, ys, xs] = glyphs[states[:, obj, 2]]
        return img


ORANGE = (1.0, 0.55, 0.0)
RED = (1.0, 0.0, 0.0)
GREEN = (0.0, 0.45, 0.1)


class MazeWorld(GridWorld):
    """An agent disc on an 8x8 lattice of 8-pixel cells, with orange blocks.

    Actions are ``down, left, right, up``, a duplicate of ``up`` and the
    composite ``down+left`` (down first, then left, each skipped if blocked).
    The block layout is a function of the config seed; a couple of green
    switch cells are painted for looks only and do not affect dynamics.
    """

    kind = "maze"
    actions = ("down", "left", "right", "up", "up2", "down+left")
    obs_shape = (3, 64, 64)
    cells = 8
    pixels = 8
    radius = 4.0

    def __init__(self, config: EnvConfig):
        super().__init__(config)
        if not 0 <= config.maze_blocks < self.cells * self.cells - 1:
            raise ConfigError(f"maze_blocks={config.maze_blocks} leaves no room for the agent")
        self.blocks, self.switches = self._layout(np.random.default_rng(config.seed), config.maze_blocks)
        self._all = None
        self._disc = self._paint_disc()
        self._background = self._paint_background()

    def _layout(self, rng, n_blocks):
        n = self.cells
        for _ in range(1000):
            blocks = np.zeros((n, n), dtype=bool)  # indexed [y, x]
            flat = rng.choice(n * n, size=n_blocks, replace=False)
            blocks.flat[flat] = True
            if connected(~blocks):
                free = np.flatnonzero(~blocks)
                switches = rng.choice(free, size=min(2, len(free)), replace=False)
                return blocks, switches
        raise ConfigError(f"could not place {n_blocks} blocks with a connected free space")

    def _paint_background(self):
        img = np.zeros(self.obs_shape, dtype=np.float32)
        p = self.pixels
        for flat in self.switches:
            y, x = divmod(int(flat), self.cells)
            # corners only, outside the disc footprint, so the agent never hides them
            cell = img[:, y * p:(y + 1) * p, x * p:(x + 1) * p]
            for ch, v in enumerate(GREEN):
                cell[ch][~self._disc] = v
        for y, x in zip(*np.nonzero(self.blocks)):
            img[:, y * p:(y + 1) * p, x * p:(x + 1) * p] = np.array(ORANGE)[:, None, None]
        return img

    def _paint_disc(self):
        c = (self.pixels - 1) / 2
        yy, xx = np.mgrid[:self.pixels, :self.pixels]
        return ((yy - c) ** 2 + (xx - c) ** 2) <= self.radius ** 2

    def action_moves(self):
        d = DELTAS
        return [(0, (d["down"],)), (0, (d["left"],)), (0, (d["right"],)), (0, (d["up"],)),
                (0, (d["up"],)), (0, (d["down"], d["left"]))]

    def legal(self, states):
        x, y = states[:, 0, 0], states[:, 0, 1]
        inside = (x >= 0) & (x < self.cells) & (y >= 0) & (y < self.cells)
        ok = inside.copy()
        ok[inside] = ~self.blocks[y[inside], x[inside]]
        return ok

    def all_states(self):
        if self._all is None:
            ys, xs = np.nonzero(~self.blocks)
            out = np.zeros((len(xs), 1, 3), dtype=np.int64)
            out[:, 0, 0], out[:, 0, 1] = xs, ys
            self._all = out
        return self._all

    def render(self, states):
        b, p = len(states), self.pixels
        img = np.repeat(self._background[None], b, axis=0)
        for i, (x, y) in enumerate(states[:, 0, :2]):
            patch = img[i, :, y * p:(y + 1) * p, x * p:(x + 1) * p]
            for ch, v in enumerate(RED):
                patch[ch][self._disc] = v
        return img


def connected(free: np.ndarray) -> bool:
    """True when the free cells of a boolean [H, W] grid form one 4-connected component."""
    cells = list(zip(*np.nonzero(free)))
    if not cells:
        return False
    seen = {cells[0]}
    queue = deque([cells[0]])
    while queue:
        y, x = queue.popleft()
        for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nxt = (y + dy, x + dx)
            if 0 <= nxt[0] < free.shape[0] and 0 <= nxt[1] < free.shape[1] and free[nxt] and nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return len(seen) == len(cells)


def make_world(config: EnvConfig) -> GridWorld:
    if config.kind == "square":
        return SquareWorld(config)
    if config.kind == "two-sprite":
        return TwoSpriteWorld(config)
    return MazeWorld(config)
