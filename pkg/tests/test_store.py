import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from icf.discrete import DiscreteTrainer, TrainConfig
from icf.envs import EnvConfig, make_world
from icf.store import (Checkpoint, CheckpointError, ConfigError, MetricsWriter, capture, dump_image, from_bytes,
                       load_checkpoint, parse_config, read_image, restore, save_checkpoint, to_bytes,
                       truncate_after)


def trainer(seed=0, **kw):
    world = make_world(EnvConfig(kind="square"))
    return DiscreteTrainer(world, TrainConfig(**{"batch": 4, "lr_f": 1e-3, "lr_g": 1e-3, "lr_k": 1e-3, **kw}),
                           seed=seed)


# ---------------------------------------------------------------- checkpoint

def test_checkpoint_round_trip_is_byte_identical(tmp_path):
    tr = trainer()
    tr.train(3)
    blob = to_bytes(capture(tr, {"note": "x"}))
    assert blob[:8] == b"ICFCKPT1"
    save_checkpoint(tmp_path / "a.icf", from_bytes(blob))
    again = load_checkpoint(tmp_path / "a.icf")
    assert to_bytes(again) == blob
    for k, p in tr.params.items():
        np.testing.assert_array_equal(again.params[k], p.data)
        np.testing.assert_array_equal(again.adam_m[k], tr.opt.m[k])
    assert again.step == 3 and again.opt_step == 3 and again.kind == "discrete-icf"
    assert again.rng_algorithm.startswith("numpy.PCG64")


def test_restore_continues_bitwise():
    a = trainer()
    a.train(4)
    b = trainer(seed=99)  # different init and streams, all overwritten by restore
    restore(b, from_bytes(to_bytes(capture(a))))
    a.train(7)
    b.train(7)
    for k, p in a.params.items():
        np.testing.assert_array_equal(p.data, b.params[k].data, err_msg=k)


def test_bad_magic_names_offset_zero():
    blob = bytearray(to_bytes(capture(trainer())))
    blob[0] ^= 0xFF
    with pytest.raises(CheckpointError, match="offset 0"):
        from_bytes(bytes(blob))


def test_future_version_fails_closed():
    blob = to_bytes(capture(trainer()))
    with pytest.raises(CheckpointError, match="version 2"):
        from_bytes(b"ICFCKPT2" + blob[8:])


@pytest.mark.parametrize("cut", [3, 10, 40, -1, -1000])
def test_truncation_detected(cut):
    blob = to_bytes(capture(trainer()))
    with pytest.raises(CheckpointError, match="truncated"):
        from_bytes(blob[:cut])


def test_trailing_bytes_rejected():
    with pytest.raises(CheckpointError, match="trailing"):
        from_bytes(to_bytes(capture(trainer())) + b"\0")


def test_kind_and_shape_mismatch():
    ck = capture(trainer())
    with pytest.raises(CheckpointError, match="continuous-icf"):
        from_bytes(to_bytes(ck), expect_kind="continuous-icf")
    other = Checkpoint(**{**ck.__dict__, "kind": "continuous-icf"})
    with pytest.raises(CheckpointError, match="model"):
        restore(trainer(), other)
    bad = from_bytes(to_bytes(ck))
    bad.params["ae.enc_out.weight"] = np.zeros((3, 3), np.float32)
    with pytest.raises(CheckpointError, match="shape"):
        restore(trainer(), bad)


# ------------------------------------------------------------------- metrics

def parse_rfc4180(text):
    """Minimal independent RFC 4180 reader: quoted fields, doubled quotes, CRLF records."""
    rows, row, field, i, quoted = [], [], "", 0, False
    while i < len(text):
        c = text[i]
        if quoted:
            if c == '"' and text[i + 1:i + 2] == '"':
                field += '"'
                i += 1
            elif c == '"':
                quoted = False
            else:
                field += c
        elif c == '"':
            quoted = True
        elif c == ",":
            row.append(field)
            field = ""
        elif c == "\r" and text[i + 1:i + 2] == "\n":
            row.append(field)
            rows.append(row)
            row, field = [], ""
            i += 1
        else:
            field += c
        i += 1
    assert not quoted and field == "" and row == []
    return rows


def test_empty_stream_is_header_only(tmp_path):
    path = tmp_path / "m.csv"
    MetricsWriter(path, ["step", "recon_loss"]).close()
    assert path.read_bytes() == b"step,recon_loss\r\n"


def test_ten_records_eleven_lines(tmp_path):
    path = tmp_path / "m.csv"
    with MetricsWriter(path, ["step", "x"], flush_every=3) as w:
        for i in range(10):
            w.write({"step": i + 1, "x": 0.5 * i})
    lines = path.read_text().splitlines()
    assert len(lines) == 11 and lines[2] == "2,0.5"
    # reopening appends below the existing header
    with MetricsWriter(path, ["step", "x"]) as w:
        w.write({"step": 11, "x": 1.0})
    assert len(path.read_text().splitlines()) == 12
    assert truncate_after(path, 4) == 4
    assert path.read_text().splitlines()[-1] == "4,1.5"


def test_bad_record_leaves_no_partial_row(tmp_path):
    path = tmp_path / "m.csv"
    with MetricsWriter(path, ["step"]) as w:
        with pytest.raises(KeyError):
            w.write({"step": 1, "typo": 2})
    assert path.read_text().splitlines() == ["step"]
    with pytest.raises(ValueError, match="header"):
        MetricsWriter(path, ["episode"])


text_field = st.text(alphabet=st.characters(blacklist_categories=("Cs",), blacklist_characters="\x00"), max_size=12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(-10 ** 6, 10 ** 6), st.floats(allow_nan=False), text_field), max_size=8))
def test_fuzz_round_trip(tmp_path_factory, records):
    path = tmp_path_factory.mktemp("fuzz") / "m.csv"
    with MetricsWriter(path, ["step", "value", "note"]) as w:
        for s, v, n in records:
            w.write({"step": s, "value": v, "note": n})
    rows = parse_rfc4180(path.read_bytes().decode())
    assert rows[0] == ["step", "value", "note"]
    assert len(rows) == len(records) + 1
    for (s, v, n), row in zip(records, rows[1:]):
        assert int(row[0]) == s and float(row[1]) == v and row[2] == n


# -------------------------------------------------------------------- images

def test_zero_graymap_layout(tmp_path):
    path = tmp_path / "z.pgm"
    dump_image(np.zeros((1, 12, 12)), path)
    data = path.read_bytes()
    head = b"P5\n12 12\n255\n"
    assert data[:len(head)] == head and data[len(head):] == bytes(144)


def test_one_maps_to_255_and_clamps(tmp_path):
    path = tmp_path / "o.ppm"
    img = np.zeros((3, 2, 3))
    img[0] = 1.0
    img[1, 0, 0] = 7.0
    img[2, 1, 2] = -3.0
    dump_image(img, path)
    px = read_image(path)
    assert px[0].min() == 1.0 and px[1, 0, 0] == 1.0 and px[2, 1, 2] == 0.0


@pytest.mark.parametrize("channels", [1, 3])
def test_pixmap_round_trip_through_independent_reader(tmp_path, channels):
    from PIL import Image

    img = np.random.default_rng(channels).random((channels, 9, 13))
    path = tmp_path / "r.pnm"
    dump_image(img, path)
    with Image.open(path) as im:
        assert im.mode == ("L" if channels == 1 else "RGB")
        back = np.asarray(im, dtype=np.float64) / 255.0
    back = back[None] if channels == 1 else back.transpose(2, 0, 1)
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-12
    np.testing.assert_allclose(read_image(path), back, atol=1e-6)


def test_other_channel_counts_rejected(tmp_path):
    for shape in [(2, 4, 4), (4, 4), (3, 4, 4, 1)]:
        with pytest.raises(ValueError):
            dump_image(np.zeros(shape), tmp_path / "x.ppm")


# -------------------------------------------------------------------- config

def test_missing_required_key_named():
    with pytest.raises(ConfigError, match="env.kind"):
        parse_config("[run]\nseed = 3\n", "train-discrete")


def test_unknown_key_and_section_rejected_with_line():
    with pytest.raises(ConfigError, match=r"cfg:4: unknown key 'discrete.lamda'"):
        parse_config("[env]\nkind = square\n[discrete]\nlamda = 3\n", "train-discrete", "cfg")
    with pytest.raises(ConfigError, match=r"cfg:1: unknown section \[trian\]"):
        parse_config("[trian]\nsteps = 3\n", "train-discrete", "cfg")


def test_bad_value_names_line_and_key():
    with pytest.raises(ConfigError, match=r"cfg:4: run.steps: expected"):
        parse_config("[env]\nkind = maze\n[run]\nsteps = ten\n", "train-continuous", "cfg")


def test_defaults_and_seed_override():
    cfg = parse_config("[env]\nkind = square\n[discrete]\nlam = 2.5\n", "train-discrete", seed=11)
    assert cfg.seed == 11 and cfg.values["discrete"]["lam"] == 2.5
    assert cfg.given("discrete") == {"lam": 2.5, "selectivity": "directed", "log_numerator": "directed"}
    assert cfg.values["run"]["checkpoint_every"] == 5000
    again = parse_config(cfg.to_ini(), "train-discrete")
    assert again.values == cfg.values


def test_unknown_kind():
    with pytest.raises(ConfigError):
        parse_config("", "train-everything")


def test_duplicate_key():
    with pytest.raises(ConfigError, match=":3: duplicate key"):
        parse_config("[env]\nkind = square\nkind = maze\n", "train-discrete")


def test_atomic_save_leaves_no_temp(tmp_path):
    save_checkpoint(tmp_path / "c.icf", capture(trainer()))
    assert sorted(os.listdir(tmp_path)) == ["c.icf"]
