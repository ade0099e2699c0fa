"""Command-line front end: ``icf <experiment> --config run.ini [--seed N] [--out DIR] [--resume CKPT]``.

Exit status: 0 on success, 2 on an invalid configuration, 1 on a runtime failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict
from typing import Optional

import numpy as np

from icf.envs import EnvConfig, make_world
from icf.gradcore import Tensor
from icf.store import checkpoint as ck
from icf.store.config import KINDS, ConfigError, RunConfig, load_config, parse_config
from icf.store.images import dump_grid, dump_image
from icf.store.metrics import CONTINUOUS_COLUMNS, Q_COLUMNS, MetricsWriter, discrete_columns, truncate_after, \
    write_rows

TRAIN_KINDS = ("train-discrete", "train-selectivity-only", "train-continuous")


class RunError(RuntimeError):
    """Failure while running a valid configuration (exit 1)."""


# ------------------------------------------------------------------ builders

def env_config(cfg: RunConfig) -> EnvConfig:
    return EnvConfig(**cfg.section("env"))


def build_trainer(kind: str, cfg: RunConfig, world, seed: int):
    """Trainer for a training kind; hyperparameters left at ``none`` keep the library defaults."""
    steps = cfg.values["run"]["steps"]
    if kind == "train-continuous":
        from icf.continuous import ContinuousTrainer, ContTrainConfig

        kw = cfg.given("continuous")
        if steps is not None:
            kw["steps"] = steps
        return ContinuousTrainer(world, ContTrainConfig(**kw), seed)
    from icf.discrete import DiscreteTrainer, SelectivityMode, TrainConfig

    kw = cfg.given("discrete")
    n_features = kw.pop("n_features", 8 if kind == "train-selectivity-only" else 4)
    kw["mode"] = SelectivityMode(kw.pop("selectivity"), log_numerator=kw.pop("log_numerator"))
    if steps is not None:
        kw["steps"] = steps
    if kind == "train-selectivity-only":
        kw["reconstruction"] = False
    return DiscreteTrainer(world, TrainConfig(**kw), seed, n_features)


def trainer_from_checkpoint(ckpt: ck.Checkpoint):
    """Rebuilds the trainer a checkpoint came from (world included) and loads it."""
    meta = ckpt.meta
    try:
        world = make_world(EnvConfig(**meta["env"]))
        train = dict(meta["train"])
        if ckpt.kind == "continuous-icf":
            from icf.continuous import ContinuousTrainer, ContTrainConfig
            trainer = ContinuousTrainer(world, ContTrainConfig(**train), meta["seed"])
        else:
            from icf.discrete import DiscreteTrainer, SelectivityMode, TrainConfig
            train["mode"] = SelectivityMode(**train["mode"])
            trainer = DiscreteTrainer(world, TrainConfig(**train), meta["seed"], meta["n_features"])
    except (KeyError, TypeError) as exc:
        raise RunError(f"checkpoint metadata incomplete: {exc}") from None
    ck.restore(trainer, ckpt)
    return trainer, world


def run_meta(kind: str, trainer) -> dict:
    """What a checkpoint needs to rebuild its trainer; the step budget is left out so
    that a split run and a straight run write identical checkpoints."""
    train = {k: v for k, v in trainer.config.to_dict().items() if k != "steps"}
    return {"run_kind": kind, "seed": trainer.seed, "env": asdict(trainer.world.config), "train": train,
            "n_features": trainer.config.n_features if kind == "train-continuous" else trainer.n_features}


def metric_columns(kind: str, trainer):
    if kind == "train-continuous":
        return list(CONTINUOUS_COLUMNS)
    return discrete_columns(trainer.n_features, trainer.config.reconstruction)


def out_dir(args, kind: str, seed: int) -> str:
    if args.out:
        return args.out
    root = os.environ.get("ICF_OUT", "runs")
    return os.path.join(root, f"{kind}-seed{seed}")


def ckpt_name(step: int) -> str:
    return f"ckpt-{step:07d}.icf"


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not serializable: {type(o)}")


# --------------------------------------------------------------- experiments

def run_training(kind: str, cfg: RunConfig, out: str, resume: Optional[str]) -> dict:
    try:
        world = make_world(env_config(cfg))
        trainer = build_trainer(kind, cfg, world, cfg.seed)
    except ValueError as exc:  # values rejected by the environment or training config
        raise ConfigError(f"{cfg.source}: {exc}") from None
    meta = run_meta(kind, trainer)
    metrics_path = os.path.join(out, "metrics.csv")
    if resume:
        ckpt = ck.load_checkpoint(resume)
        ck.restore(trainer, ckpt)
        truncate_after(metrics_path, ckpt.step)
    elif os.path.exists(metrics_path):
        os.remove(metrics_path)  # a fresh run owns its directory's metrics
    every = cfg.values["run"]["checkpoint_every"]
    target = trainer.config.steps
    t0 = time.perf_counter()
    last, start = {}, trainer.step
    with MetricsWriter(metrics_path, metric_columns(kind, trainer), cfg.values["run"]["flush_every"]) as mw:
        while trainer.step < target:
            last = trainer.train_step()
            mw.write(last)
            if every > 0 and trainer.step % every == 0:
                mw.flush()
                ck.save_checkpoint(os.path.join(out, ckpt_name(trainer.step)), ck.capture(trainer, meta))
    final = os.path.join(out, ckpt_name(trainer.step))
    if trainer.step == start or not (every > 0 and trainer.step % every == 0):
        ck.save_checkpoint(final, ck.capture(trainer, meta))
    return {"kind": kind, "seed": cfg.seed, "steps": trainer.step, "checkpoint": final,
            "seconds": time.perf_counter() - t0, "last_metrics": last}


def _eval_checkpoint(cfg: RunConfig, args) -> str:
    path = args.checkpoint or cfg.values["eval"]["checkpoint"]
    if not path:
        raise ConfigError(f"{cfg.source}: missing required key 'eval.checkpoint' (or pass --checkpoint)")
    return path


def run_eval(cfg: RunConfig, out: str, args) -> dict:
    from icf.evalplan import (factor_regression, feature_curves, latent_dataset, mode_report,
                              policy_action_matrix)

    trainer, world = trainer_from_checkpoint(ck.load_checkpoint(_eval_checkpoint(cfg, args)))
    model, ev = trainer.model, cfg.values["eval"]
    rng = np.random.default_rng(cfg.seed)
    report = {"kind": "eval", "model": model.kind, "step": trainer.step}
    if model.kind == "continuous-icf":
        rep = mode_report(model, world, ev["samples"], rng, ev["radius"])
        report.update(rep.summary())
        s = rep.samples
        K = s.dh.shape[1]
        write_rows(os.path.join(out, "dh.csv"),
                   [f"dh_{k}" for k in range(K)] + ["action"] + [f"phi_{k}" for k in range(K)],
                   [[*d, a, *p] for d, a, p in zip(s.dh.tolist(), s.actions.tolist(), s.phi.tolist())])
        return report
    gt, lat = latent_dataset(model, world, ev["samples"], rng)
    names = ["x", "y"] if gt.shape[1] == 2 else ["x1", "y1", "x2", "y2"]
    reg = factor_regression(gt, lat, names)
    report["r2"] = reg.r2
    report["slopes"] = reg.slopes
    report["policy_action_matrix"] = policy_action_matrix(model, world, ev["samples"], rng)
    fc = feature_curves(model.features, world, ev["n_bases"], rng)
    fc.to_csv(os.path.join(out, "feature_curves.csv"))
    report["spearman"] = fc.spearman()
    imgs = world.render(world.sample(8, rng))
    recon = model.decode(Tensor(model.features(imgs))).data
    dump_grid(np.concatenate([imgs, np.clip(recon, 0, 1)]), os.path.join(out, "reconstructions.pgm"))
    return report


def run_plan(cfg: RunConfig, out: str, args, decompose: bool) -> dict:
    from icf.evalplan import decomposition_accuracy, mode_report, prediction_accuracy

    trainer, world = trainer_from_checkpoint(ck.load_checkpoint(_eval_checkpoint(cfg, args)))
    if trainer.model.kind != "continuous-icf":
        raise RunError("planning needs a checkpoint from train-continuous")
    ev, rng = cfg.values["eval"], np.random.default_rng(cfg.seed)
    rep = mode_report(trainer.model, world, ev["samples"], rng, ev["radius"])
    protos = rep.direction_prototypes()
    report = {"kind": "decompose" if decompose else "plan", "modes": rep.summary()}
    if len(protos) < 4:
        raise RunError(f"only {sorted(protos)} of the four directions have a dh prototype")
    if decompose:
        report["decomposition_accuracy"] = decomposition_accuracy(trainer.model, world, protos, ev["pairs"],
                                                                  ev["max_distance"], rng)
    else:
        acc, shown = prediction_accuracy(trainer.model, world, protos, ev["pairs"], rng, keep=4)
        report["prediction_accuracy"] = acc
        for i, (true, pred) in enumerate(shown):
            dump_image(true, os.path.join(out, f"true-{i}.ppm"))
            dump_image(pred, os.path.join(out, f"predicted-{i}.ppm"))
    return report


def run_q_transfer(cfg: RunConfig, out: str) -> dict:
    from icf.evalplan import QTransferConfig, q_transfer

    qs = cfg.given("q_transfer")
    path = qs.pop("checkpoint", None)
    goal = (qs.pop("goal_x"), qs.pop("goal_y"))
    try:
        qc = QTransferConfig(goal=goal, **qs)
        world = make_world(env_config(cfg))
    except ValueError as exc:
        raise ConfigError(f"{cfg.source}: {exc}") from None
    model = None
    if qc.mode == "pretrained-frozen":
        if not path:
            raise ConfigError(f"{cfg.source}: pretrained-frozen mode needs q_transfer.checkpoint "
                              "(a discrete run trained with directed selectivity)")
        trainer, _ = trainer_from_checkpoint(ck.load_checkpoint(path, expect_kind="discrete-icf"))
        if trainer.config.mode.variant != "directed":
            raise ConfigError(f"{cfg.where('q_transfer.checkpoint')}: checkpoint was trained with "
                              f"{trainer.config.mode.variant!r} selectivity, directed is required")
        model = trainer.model
    cur = q_transfer(qc, world, model, cfg.seed)
    write_rows(os.path.join(out, "metrics.csv"), Q_COLUMNS,
               [[i, int(s), int(k)] for i, (s, k) in enumerate(zip(cur.success, cur.steps))],
               cfg.values["run"]["flush_every"])
    n = len(cur.success)
    return {"kind": "q-transfer", "mode": qc.mode, "episodes": n,
            "success_first_20pct": cur.success_rate(0.0, 0.2), "success_last_20pct": cur.success_rate(0.8, 1.0),
            "seconds_per_episode": float(cur.seconds.mean()), "seconds": float(cur.seconds.sum())}


# ----------------------------------------------------------------------- CLI

def parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="icf", description="Independently controllable factor experiments.")
    sub = p.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        s = sub.add_parser(kind)
        s.add_argument("--config", help="INI run configuration")
        s.add_argument("--seed", type=int, help="overrides run.seed")
        s.add_argument("--out", help="output directory (default $ICF_OUT/<kind>-seed<N>)")
        if kind in TRAIN_KINDS:
            s.add_argument("--resume", help="checkpoint to continue from")
        else:
            s.add_argument("--checkpoint", help="overrides eval.checkpoint")
    return p


def main(argv=None) -> int:
    args = parser().parse_args(argv)
    kind = args.kind
    try:
        if args.config:
            cfg = load_config(args.config, kind, args.seed)
        else:
            cfg = parse_config("", kind, "<no config>", args.seed)
        out = out_dir(args, kind, cfg.seed)
        os.makedirs(out, exist_ok=True)
        with open(os.path.join(out, "config.ini"), "w") as fh:
            fh.write(cfg.to_ini())
        if kind in TRAIN_KINDS:
            report = run_training(kind, cfg, out, args.resume)
        elif kind == "eval":
            report = run_eval(cfg, out, args)
        elif kind in ("plan", "decompose"):
            report = run_plan(cfg, out, args, kind == "decompose")
        else:
            report = run_q_transfer(cfg, out)
        write_json(os.path.join(out, "report.json"), report)
    except ConfigError as exc:
        print(f"icf: config error: {exc}", file=sys.stderr)
        return 2
    except (ck.CheckpointError, RunError, OSError) as exc:
        print(f"icf: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime failure
        print(f"icf: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"icf: {kind} done, artifacts in {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
