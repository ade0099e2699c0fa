"""Joint training of the autoencoder and the feature-policy pairs.

Each step samples a batch of states, takes one action per (state, policy)
and descends

    L_ae - lam * mean_b sum_k sel_k(s_b, a_kb)  +  REINFORCE surrogate

in a single Adam update.  Selectivity gradients reach the encoder through
both h = f(s) and h' = f(s'); the REINFORCE term reaches only the policy
heads (the heads read a detached copy of the hidden layer).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Optional

import numpy as np

from icf import rng as rngs
from icf.envs import GridWorld
from icf.gradcore import Adam, Tensor, backward, ops

from .model import DiscreteICF
from .selectivity import SelectivityMode, selectivity_graph

STREAMS = ("init", "states", "actions", "env")


@dataclass
class TrainConfig:
    lam: float = 10.0
    lr_f: float = 1e-4
    lr_g: float = 1e-4
    lr_k: float = 1e-4
    steps: int = 50_000
    batch: int = 32
    mode: SelectivityMode = field(default_factory=SelectivityMode)
    baseline_decay: float = 0.99
    reconstruction: bool = True
    # False gives a plain autoencoder (no policies acted out)
    selectivity: bool = True

    def __post_init__(self):
        if isinstance(self.mode, str):
            self.mode = SelectivityMode(self.mode)
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        for name in ("lr_f", "lr_g", "lr_k"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.batch < 1:
            raise ValueError("batch must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mode"] = asdict(self.mode)
        return d


def reinforce_loss(log_probs: Tensor, actions: np.ndarray, rewards: np.ndarray,
                   baseline) -> Tensor:
    """Surrogate whose gradient is ``-mean (r - b) * grad log pi(a|s)``.

    ``log_probs`` [N, A], ``actions`` and ``rewards`` [N], ``baseline``
    scalar or [N].  Raises if a taken action had zero probability.
    """
    taken = ops.pick(log_probs, actions)
    if not np.all(np.isfinite(taken.data)) or np.any(np.exp(taken.data) == 0):
        raise ValueError("REINFORCE: a sampled action has zero probability under its policy")
    adv = (np.asarray(rewards, dtype=np.float64) - baseline).astype(log_probs.dtype)
    return ops.mul(ops.sum(ops.mul(taken, Tensor(adv))), -1.0 / len(adv))


class DiscreteTrainer:
    def __init__(self, world: GridWorld, config: TrainConfig, seed: int = 0, n_features: int = 4,
                 dtype=np.float32):
        self.world, self.config, self.seed = world, config, seed
        self.rngs = rngs.make_streams(seed, STREAMS)
        self.model = DiscreteICF(self.rngs["init"], world.obs_shape, n_features, world.n_actions)
        if dtype != np.float32:
            for p in self.model.parameters().values():
                p.data = p.data.astype(dtype)
                p.grad = np.zeros_like(p.data)
        self.params = self.model.parameters()
        self.opt = Adam(self.params, lr=config.lr_f, lr_overrides={
            "ae.enc_": config.lr_f, "ae.dec_": config.lr_g, "policy.": config.lr_k})
        self.baseline = np.zeros(n_features)
        self.step = 0
        self._onehot = np.eye(n_features)[:, None, :]

    @property
    def n_features(self) -> int:
        return self.model.n_features

    def train_step(self) -> Dict[str, float]:
        cfg, world, model = self.config, self.world, self.model
        K, B = self.n_features, cfg.batch
        states = world.sample(B, self.rngs["states"])
        x = Tensor(world.render(states))
        h, hid = model.encode(x)
        terms = []
        metrics: Dict[str, float] = {"step": self.step + 1}
        if cfg.reconstruction:
            l_ae = ops.mse(model.decode(h), x)
            terms.append(l_ae)
            metrics["recon_loss"] = float(l_ae.data)
        if cfg.selectivity:
            log_probs = model.policy.log_probs(hid.detach())  # [B*K, A] batch-major
            actions = rngs.categorical(self.rngs["actions"], np.exp(log_probs.data))
            by_policy = actions.reshape(B, K).T  # [K, B]
            nxt = world.transition(np.tile(states, (K, 1, 1)), by_policy.ravel(), self.rngs["env"])
            x_next = Tensor(world.render(nxt))
            if cfg.lam > 0:
                h_next, _ = model.encode(x_next)
                delta = ops.sub(ops.reshape(h_next, (K, B, K)), ops.reshape(h, (1, B, K)))
            else:
                h_next = model.features(x_next.data)
                delta = Tensor((h_next.reshape(K, B, K) - h.data[None]).astype(h.dtype))
            sel = selectivity_graph(delta, self._onehot, cfg.mode)  # [K, B]
            if cfg.lam > 0:
                terms.append(ops.mul(ops.sum(sel), -cfg.lam / B))
            rewards = sel.data.T.ravel()  # batch-major like log_probs
            base = np.tile(self.baseline, B)
            terms.append(ops.mul(reinforce_loss(log_probs, actions, rewards, base), float(K)))
            per_k = sel.data.mean(axis=1)
            self.baseline = cfg.baseline_decay * self.baseline + (1 - cfg.baseline_decay) * per_k
            metrics["sel_mean"] = float(per_k.mean())
            for k in range(K):
                metrics[f"sel_{k}"] = float(per_k[k])
        for p in self.params.values():
            p.zero_grad()
        if terms:
            loss = terms[0]
            for t in terms[1:]:
                loss = ops.add(loss, t)
            backward(loss)
        self.opt.apply()
        self.step += 1
        return metrics

    def train(self, steps: Optional[int] = None,
              callback: Optional[Callable[[Dict[str, float]], None]] = None) -> "DiscreteTrainer":
        target = self.config.steps if steps is None else steps
        while self.step < target:
            m = self.train_step()
            if callback is not None:
                callback(m)
        return self

    # ---- persistence hooks (used by icf.store.checkpoint)
    def extra_state(self) -> dict:
        return {"baseline": self.baseline.tolist(),
                "rngs": {k: rngs.get_state(g) for k, g in self.rngs.items()}}

    def load_extra_state(self, state: dict) -> None:
        self.baseline = np.asarray(state["baseline"], dtype=np.float64)
        for k, s in state["rngs"].items():
            rngs.set_state(self.rngs[k], s)


def train_selectivity_only(world: GridWorld, config: TrainConfig, seed: int = 0,
                           n_features: int = 8, callback=None) -> DiscreteTrainer:
    """Feature-policy training with the reconstruction term removed; the decoder never moves."""
    config.reconstruction = False
    return DiscreteTrainer(world, config, seed, n_features).train(callback=callback)
