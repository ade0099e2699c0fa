import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from icf.envs import (ConfigError, Env, EnvConfig, IdxFormatError, MazeWorld, SquareWorld,
                      TwoSpriteWorld, connected, load_idx, make_world, read_idx_images)
from icf.envs.sprites import parse_idx, split_by_parity

KINDS = ["square", "two-sprite", "maze"]


def square_state(x, y):
    return np.array([[x, y, 0]])


def test_square_reset_deterministic_and_sum():
    a = Env(make_world(EnvConfig(kind="square", seed=4)))
    b = Env(make_world(EnvConfig(kind="square", seed=4)))
    (oa, ga), (ob, gb) = a.reset(), b.reset()
    np.testing.assert_array_equal(ga, gb)
    assert oa.shape == (1, 12, 12)
    assert oa.sum() == 4.0
    assert set(np.unique(oa)) == {0.0, 1.0}


def test_square_moves_and_clamp():
    w = SquareWorld(EnvConfig())
    right = w.actions.index("right")
    np.testing.assert_array_equal(w.move(square_state(3, 5), right)[0, :2], [4, 5])
    np.testing.assert_array_equal(w.move(square_state(10, 5), right)[0, :2], [10, 5])
    up = w.actions.index("up")
    np.testing.assert_array_equal(w.move(square_state(3, 0), up)[0, :2], [3, 0])


def test_invalid_action_rejected():
    w = SquareWorld(EnvConfig())
    with pytest.raises(ValueError, match="invalid action"):
        w.move(square_state(3, 5), 4)
    with pytest.raises(ValueError):
        make_world(EnvConfig(kind="maze")).transition(np.array([[0, 0, 0]]), -1, np.random.default_rng())


def test_config_validation():
    with pytest.raises(ConfigError):
        EnvConfig(slip=1.5)
    with pytest.raises(ConfigError):
        EnvConfig(kind="pong")
    with pytest.raises(ConfigError):
        MazeWorld(EnvConfig(kind="maze", maze_blocks=64))


@pytest.mark.parametrize("seed", range(10))
def test_maze_never_on_block_and_connected(seed):
    w = MazeWorld(EnvConfig(kind="maze", seed=seed))
    assert w.blocks.sum() == 4
    assert connected(~w.blocks)
    env = Env(w)
    for _ in range(20):
        env.reset()
        x, y = env.state[0, :2]
        assert not w.blocks[y, x]
    img = w.observe(env.state)
    assert img.shape == (3, 64, 64) and img.min() >= 0 and img.max() <= 1


def maze_oracle(blocks, x, y, action):
    """Hand-written single-step rule for the maze actions."""
    def free(cx, cy):
        return 0 <= cx < 8 and 0 <= cy < 8 and not blocks[cy, cx]

    def unit(cx, cy, dx, dy):
        return (cx + dx, cy + dy) if free(cx + dx, cy + dy) else (cx, cy)

    name = MazeWorld.actions[action]
    if name == "down":
        return unit(x, y, 0, 1)
    if name == "left":
        return unit(x, y, -1, 0)
    if name == "right":
        return unit(x, y, 1, 0)
    if name in ("up", "up2"):
        return unit(x, y, 0, -1)
    x, y = unit(x, y, 0, 1)
    return unit(x, y, -1, 0)


@pytest.mark.parametrize("seed", range(5))
def test_maze_matches_oracle_exhaustively(seed):
    w = MazeWorld(EnvConfig(kind="maze", seed=seed))
    states = w.all_states()
    for a in range(w.n_actions):
        out = w.move(states, np.full(len(states), a))
        for s, o in zip(states, out):
            assert tuple(o[0, :2]) == maze_oracle(w.blocks, s[0, 0], s[0, 1], a)


def test_maze_down_left_applies_both_when_free():
    w = MazeWorld(EnvConfig(kind="maze", seed=0))
    w.blocks[:] = False
    dl = w.actions.index("down+left")
    np.testing.assert_array_equal(w.move(np.array([[3, 3, 0]]), dl)[0, :2], [2, 4])


@pytest.mark.parametrize("seed", range(5))
def test_maze_up_duplicate_and_composite(seed):
    w = MazeWorld(EnvConfig(kind="maze", seed=seed))
    s = w.all_states()
    n = len(s)
    a = {name: np.full(n, i) for i, name in enumerate(w.actions)}
    np.testing.assert_array_equal(w.move(s, a["up2"]), w.move(s, a["up"]))
    np.testing.assert_array_equal(w.move(s, a["down+left"]), w.move(w.move(s, a["down"]), a["left"]))


def test_two_sprite_never_overlaps():
    w = TwoSpriteWorld(EnvConfig(kind="two-sprite"))
    rng = np.random.default_rng(0)
    s = w.sample(200, rng)
    for _ in range(50):
        s = w.transition(s, rng.integers(0, 8, size=len(s)), rng)
        assert w.legal(s).all()
    # blocked by the other sprite: sprite 1 at x=0, sprite 2 directly right at x=6
    s = np.array([[0, 0, 0], [6, 0, 0]])
    np.testing.assert_array_equal(w.move(s, w.actions.index("right1")), s)
    np.testing.assert_array_equal(w.move(s, w.actions.index("left2")), s)


@pytest.mark.parametrize("kind", KINDS)
def test_pixel_sum_conserved(kind):
    w = make_world(EnvConfig(kind=kind, slip=0.3))
    rng = np.random.default_rng(1)
    s = w.sample(64, rng)
    total = w.render(s).sum(axis=(1, 2, 3))
    for _ in range(30):
        s = w.transition(s, rng.integers(0, w.n_actions, size=len(s)), rng)
        np.testing.assert_allclose(w.render(s).sum(axis=(1, 2, 3)), total, rtol=1e-6)


@pytest.mark.parametrize("kind", KINDS)
def test_zero_slip_is_deterministic(kind):
    w = make_world(EnvConfig(kind=kind))
    rng = np.random.default_rng(2)
    s = w.sample(50, rng)
    a = rng.integers(0, w.n_actions, size=50)
    np.testing.assert_array_equal(w.transition(s, a, np.random.default_rng(0)),
                                  w.transition(s, a, np.random.default_rng(99)))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 9), st.integers(0, 10))
def test_square_right_then_left_reverses(x, y):
    w = SquareWorld(EnvConfig())
    s = square_state(x, y)
    back = w.move(w.move(s, w.actions.index("right")), w.actions.index("left"))
    np.testing.assert_array_equal(back, s)


def test_slip_split_is_half_noop_half_random():
    w = SquareWorld(EnvConfig(slip=1.0))
    rng = np.random.default_rng(3)
    n = 40_000
    s = np.repeat(square_state(5, 5)[None], n, axis=0)
    out = w.transition(s, np.zeros(n, dtype=int), rng)
    stayed = np.all(out == s, axis=(1, 2)).mean()
    # no-op half, plus none of the 4 random actions leaves the square in place at (5, 5)
    assert abs(stayed - 0.5) < 0.01
    moved_left = (out[:, 0, 0] == 4).mean()
    assert abs(moved_left - 0.125) < 0.01


def test_env_step_and_clone():
    env = Env(make_world(EnvConfig(kind="square", slip=0.5, seed=3)))
    env.reset(square_state(5, 5))
    twin = env.clone()
    for a in [0, 1, 2, 3, 0, 0]:
        o1, g1 = env.step(a)
        o2, g2 = twin.step(a)
        np.testing.assert_array_equal(g1, g2)
    with pytest.raises(RuntimeError):
        Env(make_world(EnvConfig())).step(0)


# ------------------------------------------------------------------- IDX

def idx_bytes(magic, dims, payload):
    return struct.pack(">I", magic) + struct.pack(f">{len(dims)}I", *dims) + bytes(payload)


def test_idx_images_parse_rank3(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.integers(0, 256, size=(3, 28, 28), dtype=np.uint8)
    path = tmp_path / "img.idx"
    path.write_bytes(idx_bytes(0x00000803, data.shape, data.tobytes()))
    raw = path.read_bytes()
    assert raw[:4] == b"\x00\x00\x08\x03"
    out = read_idx_images(path)
    assert out.dtype == np.uint8 and out.shape == (3, 28, 28)
    np.testing.assert_array_equal(out, data)


def test_idx_parity_routing(tmp_path):
    imgs = np.zeros((2, 28, 28), dtype=np.uint8)
    imgs[0, 5:20, 12:16] = 255  # "3"
    imgs[1, 4:24, 4:24] = 128   # "8"
    (tmp_path / "i").write_bytes(idx_bytes(0x00000803, imgs.shape, imgs.tobytes()))
    (tmp_path / "l").write_bytes(idx_bytes(0x00000801, (2,), [3, 8]))
    bank = load_idx(tmp_path / "i", tmp_path / "l")
    assert bank.odd.shape == (1, 6, 6) and bank.even.shape == (1, 6, 6)
    assert bank.odd.max() == pytest.approx(1.0) and bank.odd.min() >= 0
    # the "3" was a vertical bar; the "8" a filled box
    assert bank.even.sum() > bank.odd.sum()


def test_idx_missing_files_fall_back_to_builtin(tmp_path):
    bank = load_idx(tmp_path / "nope", tmp_path / "nope2")
    assert len(bank.odd) == 1 and len(bank.even) == 1
    assert not np.array_equal(bank.odd[0], bank.even[0])
    assert bank.odd.sum() != bank.even.sum()


def test_idx_bad_magic_and_truncation():
    with pytest.raises(IdxFormatError, match="offset 0") as err:
        parse_idx(idx_bytes(0x00000903, (1, 2, 2), [0] * 4), 0x00000803)
    assert err.value.offset == 0
    with pytest.raises(IdxFormatError, match="truncated data") as err:
        parse_idx(idx_bytes(0x00000803, (2, 2, 2), [0] * 5), 0x00000803)
    assert err.value.offset == 4 + 12 + 5
    with pytest.raises(IdxFormatError):
        parse_idx(b"\x00\x00", 0x00000801)


def test_two_sprite_world_with_idx_bank(tmp_path):
    rng = np.random.default_rng(1)
    imgs = rng.integers(0, 256, size=(6, 28, 28), dtype=np.uint8)
    labels = np.array([1, 2, 3, 4, 5, 6], dtype=np.uint8)
    (tmp_path / "i").write_bytes(idx_bytes(0x00000803, imgs.shape, imgs.tobytes()))
    (tmp_path / "l").write_bytes(idx_bytes(0x00000801, labels.shape, labels.tobytes()))
    cfg = EnvConfig(kind="two-sprite", sprite_source="idx", idx_images=str(tmp_path / "i"),
                    idx_labels=str(tmp_path / "l"))
    w = make_world(cfg)
    s = w.sample(20, rng)
    assert set(s[:, 0, 2]) <= {0, 1, 2} and set(s[:, 1, 2]) <= {0, 1, 2}
    img = w.render(s)
    assert img.shape == (20, 1, 16, 16) and 0 <= img.min() and img.max() <= 1


def test_split_by_parity_counts():
    imgs = np.zeros((5, 28, 28), np.uint8)
    bank = split_by_parity(imgs, np.array([0, 1, 2, 3, 9]))
    assert len(bank.odd) == 3 and len(bank.even) == 2
