import os
import subprocess
import sys

import pytest

from icf.cli import main
from icf.store import load_checkpoint, read_metrics

SQUARE = """
[run]
steps = {steps}
checkpoint_every = 3
[env]
kind = square
[discrete]
batch = 4
lr_f = 1e-3
lr_g = 1e-3
lr_k = 1e-3
"""

MAZE = """
[run]
steps = {steps}
checkpoint_every = 2
[env]
kind = maze
[continuous]
batch = 2
n_phi = 4
sigma_every = 2
"""


def write(tmp_path, text, name="run.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_missing_env_kind_exits_2_naming_key(tmp_path, capsys):
    cfg = write(tmp_path, "[run]\nsteps = 1\n")
    assert main(["train-discrete", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "env.kind" in capsys.readouterr().err


def test_unknown_key_exits_2_with_line(tmp_path, capsys):
    cfg = write(tmp_path, "[env]\nkind = square\n[discrete]\nlamda = 1\n")
    assert main(["train-discrete", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "run.ini:4" in capsys.readouterr().err


def test_invalid_value_exits_2(tmp_path):
    cfg = write(tmp_path, "[env]\nkind = square\nslip = 1.5\n")
    assert main(["train-discrete", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_zero_budget_writes_initial_checkpoint_only(tmp_path):
    out = tmp_path / "o"
    assert main(["train-discrete", "--config", write(tmp_path, SQUARE.format(steps=0)), "--out", str(out)]) == 0
    assert sorted(f for f in os.listdir(out) if f.endswith(".icf")) == ["ckpt-0000000.icf"]
    assert (out / "metrics.csv").read_text().splitlines() == ["step,recon_loss,sel_mean,sel_0,sel_1,sel_2,sel_3"]
    assert load_checkpoint(out / "ckpt-0000000.icf").step == 0


def test_runtime_failure_exits_1(tmp_path, capsys):
    cfg = write(tmp_path, "[env]\nkind = square\n[eval]\ncheckpoint = missing.icf\n")
    assert main(["eval", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    assert main(["train-discrete", "--config", write(tmp_path, SQUARE.format(steps=2)), "--out",
                 str(tmp_path / "o"), "--resume", str(tmp_path / "nothing.icf")]) == 1


def test_frozen_transfer_needs_checkpoint(tmp_path, capsys):
    cfg = write(tmp_path, "[env]\nkind = square\n[q_transfer]\nmode = pretrained-frozen\n")
    assert main(["q-transfer", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "checkpoint" in capsys.readouterr().err


def test_icf_out_default_root(tmp_path, monkeypatch):
    monkeypatch.setenv("ICF_OUT", str(tmp_path / "root"))
    assert main(["train-discrete", "--config", write(tmp_path, SQUARE.format(steps=0)), "--seed", "4"]) == 0
    assert (tmp_path / "root" / "train-discrete-seed4" / "ckpt-0000000.icf").exists()


@pytest.mark.parametrize("text,kind", [(SQUARE, "train-discrete"), (MAZE, "train-continuous")])
def test_reruns_are_byte_identical(tmp_path, text, kind):
    cfg = write(tmp_path, text.format(steps=4))
    for d in ("a", "b"):
        assert main([kind, "--config", cfg, "--out", str(tmp_path / d), "--seed", "3"]) == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()
    assert len(read_metrics(tmp_path / "a" / "metrics.csv")) == 4


@pytest.mark.parametrize("text,kind,split,total", [(SQUARE, "train-discrete", 3, 6),
                                                   (MAZE, "train-continuous", 2, 4)])
def test_split_run_equals_straight_run(tmp_path, text, kind, split, total):
    straight, parts = tmp_path / "straight", tmp_path / "parts"
    assert main([kind, "--config", write(tmp_path, text.format(steps=total), "t.ini"), "--out", str(straight)]) == 0
    assert main([kind, "--config", write(tmp_path, text.format(steps=split), "s.ini"), "--out", str(parts)]) == 0
    # rows past the checkpoint (e.g. from a crash) are dropped on resume
    with open(parts / "metrics.csv", "a") as fh:
        fh.write("999,1,1\r\n")
    ck = str(parts / f"ckpt-{split:07d}.icf")
    assert main([kind, "--config", write(tmp_path, text.format(steps=total), "t.ini"), "--out", str(parts),
                 "--resume", ck]) == 0
    assert (parts / "metrics.csv").read_bytes() == (straight / "metrics.csv").read_bytes()
    name = f"ckpt-{total:07d}.icf"
    assert (parts / name).read_bytes() == (straight / name).read_bytes()


def test_eval_and_transfer_end_to_end(tmp_path):
    train = tmp_path / "train"
    assert main(["train-discrete", "--config", write(tmp_path, SQUARE.format(steps=3)), "--out", str(train)]) == 0
    ck = str(train / "ckpt-0000003.icf")
    ev = write(tmp_path, "[env]\nkind = square\n[eval]\nsamples = 50\nn_bases = 3\n", "e.ini")
    assert main(["eval", "--config", ev, "--checkpoint", ck, "--out", str(tmp_path / "ev")]) == 0
    assert (tmp_path / "ev" / "feature_curves.csv").exists() and (tmp_path / "ev" / "report.json").exists()
    q = write(tmp_path, f"[env]\nkind = square\n[q_transfer]\ncheckpoint = {ck}\nepisodes = 2\nstep_cap = 5\n",
              "q.ini")
    assert main(["q-transfer", "--config", q, "--out", str(tmp_path / "q")]) == 0
    rows = read_metrics(tmp_path / "q" / "metrics.csv")
    assert len(rows) == 2 and set(rows[0]) == {"episode", "success", "steps_to_goal"}


def test_continuous_eval_and_planning_run(tmp_path):
    train = tmp_path / "train"
    assert main(["train-continuous", "--config", write(tmp_path, MAZE.format(steps=2)), "--out", str(train)]) == 0
    ck = str(train / "ckpt-0000002.icf")
    ev = write(tmp_path, "[env]\nkind = maze\n[eval]\nsamples = 40\npairs = 3\n", "e.ini")
    assert main(["eval", "--config", ev, "--checkpoint", ck, "--out", str(tmp_path / "ev")]) == 0
    assert len(read_metrics(tmp_path / "ev" / "dh.csv")) == 40
    # an untrained model rarely has four direction prototypes; either outcome is a clean exit
    assert main(["plan", "--config", ev, "--checkpoint", ck, "--out", str(tmp_path / "pl")]) in (0, 1)


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "icf.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "train-continuous" in res.stdout
