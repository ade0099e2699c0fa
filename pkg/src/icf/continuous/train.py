"""Joint training of the autoencoder, the factor generator and the phi-conditioned policy.

Per step, for each of ``batch`` sampled states:

* draw ``n_phi`` embeddings phi_i = Phi(h, z_i) and pick one uniformly as the
  behavior embedding;
* act a ~ pi(h, phi_behavior), observe s', h' = f(s');
* score every phi_i with r_i = A(h' - h, phi_i) / (mean_j |A(h' - h, phi_j)| + eps);
* update pi(.|h, phi_i) off-policy with w_i = pi_i(a|h) / pi_behavior(a|h)
  clipped to [0, w_max];
* push w_i * r_i back into the generator (through phi_i, the contrast
  mean held constant) and the encoder (through h' - h, everywhere in r_i).

The generator and the policy read a detached, eval-mode code of s; the
differentiable code is computed on s and s' stacked in one batchnorm batch.
"""
from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Optional

import numpy as np

from icf import rng as rngs
from icf.envs import GridWorld
from icf.gradcore import Adam, Tensor, backward, ops

from .model import NOISE_KINDS, ContinuousICF
from .selectors import AttributeSelector, attribute_graph, median_sigma

STREAMS = ("init", "states", "noise", "behavior", "actions", "env")


@dataclass
class ContTrainConfig:
    n_features: int = 2
    n_phi: int = 64
    batch: int = 16
    lam: float = 1.0
    lr: float = 3e-4
    steps: int = 20_000
    selector: str = "gaussian-kernel"
    # None: calibrate from recent dh every sigma_every steps until sigma_freeze
    sigma: Optional[float] = None
    sigma_every: int = 1000
    sigma_freeze: int = 5000
    sigma_scale: float = 0.5
    w_max: float = 10.0
    min_behavior_prob: float = 1e-6
    baseline_decay: float = 0.99
    # which parameters see the gradient of the contrast mean: "none", "encoder" or "all"
    denominator_grad: str = "encoder"
    # entropy bonus on pi(.|h, phi); keeps every action in play early on
    entropy: float = 0.02
    # share of uniformly random actions mixed into the acting distribution
    explore: float = 0.0
    noise: str = "gaussian"
    eps: float = 1e-8

    def __post_init__(self):
        if self.n_phi < 2:
            raise ValueError(f"n_phi must be >= 2 (the contrast set needs two factors), got {self.n_phi}")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError(f"sigma must be > 0, got {self.sigma}")
        if self.batch < 2:
            raise ValueError("batch must be >= 2 (batchnorm)")
        if self.lr < 0 or self.lam < 0 or self.w_max <= 0:
            raise ValueError("lr and lam must be >= 0 and w_max > 0")
        if self.noise not in NOISE_KINDS:
            raise ValueError(f"noise must be one of {NOISE_KINDS}")
        if not 0 <= self.explore <= 1:
            raise ValueError(f"explore must lie in [0, 1], got {self.explore}")
        if self.denominator_grad not in ("none", "encoder", "all"):
            raise ValueError(f"denominator_grad must be none, encoder or all, got {self.denominator_grad!r}")
        AttributeSelector(self.selector, self.sigma or 1.0)

    def to_dict(self) -> dict:
        return asdict(self)


def behavior_probs(probs: np.ndarray, behavior: np.ndarray, explore: float = 0.0) -> np.ndarray:
    """Acting distribution [B, A]: pi(.|h, phi_behavior) mixed with ``explore`` of uniform."""
    p = probs[np.arange(len(behavior)), behavior]
    return p if explore == 0 else (1 - explore) * p + explore / p.shape[-1]


def importance_weights(probs: np.ndarray, actions: np.ndarray, behavior: np.ndarray,
                       w_max: float = 10.0, explore: float = 0.0):
    """w[b, i] = pi_i(a_b) / mu(a_b), clipped to [0, w_max], mu the acting distribution.

    ``probs`` [B, n, A]; returns (weights [B, n], behavior probabilities mu(a_b) [B]).
    Without exploration mu = pi_behavior and its own weight is exactly 1.
    """
    B = len(actions)
    taken = probs[np.arange(B), :, actions]                      # [B, n]
    p_beh = behavior_probs(probs, behavior, explore)[np.arange(B), actions]
    w = np.clip(taken / np.maximum(p_beh, 1e-30)[:, None], 0.0, w_max)
    if explore == 0:
        w[np.arange(B), behavior] = 1.0
    return w, p_beh


class ContinuousTrainer:
    def __init__(self, world: GridWorld, config: ContTrainConfig, seed: int = 0):
        self.world, self.config, self.seed = world, config, seed
        self.rngs = rngs.make_streams(seed, STREAMS)
        self.model = ContinuousICF(self.rngs["init"], world.obs_shape, config.n_features,
                                   world.n_actions, noise=config.noise)
        self.params = self.model.parameters()
        self.opt = Adam(self.params, lr=config.lr)
        self.sigma = config.sigma if config.sigma is not None else 1.0
        self.baseline = 1.0
        self.skipped = 0
        self.step = 0
        self._recent = deque(maxlen=512)

    @property
    def selector(self) -> AttributeSelector:
        return AttributeSelector(self.config.selector, self.sigma)

    def _calibrate(self, dh: np.ndarray) -> None:
        cfg = self.config
        self._recent.extend(dh.astype(np.float64))
        if cfg.sigma is None and self.step <= cfg.sigma_freeze and self.step % cfg.sigma_every == 0:
            self.sigma = median_sigma(np.array(self._recent), cfg.sigma_scale)

    def train_step(self) -> Dict[str, float]:
        cfg, world, model = self.config, self.world, self.model
        B, n = cfg.batch, cfg.n_phi
        states = world.sample(B, self.rngs["states"])
        x = world.render(states)
        h_in = model.features(x)  # detached conditioning code for Phi and pi

        z = model.generator.draw_noise(self.rngs["noise"], (B, n))
        phi = model.generator(Tensor(h_in), z)                        # [B, n, K]
        log_probs = model.policy.log_probs(h_in, phi.data)            # [B*n, A]
        probs = np.exp(log_probs.data.astype(np.float64)).reshape(B, n, -1)
        behavior = self.rngs["behavior"].integers(0, n, size=B)
        actions = rngs.categorical(self.rngs["actions"], behavior_probs(probs, behavior, cfg.explore))
        w, p_beh = importance_weights(probs, actions, behavior, cfg.w_max, cfg.explore)
        valid = p_beh >= cfg.min_behavior_prob
        self.skipped += int((~valid).sum())

        nxt = world.transition(states, actions, self.rngs["env"])
        both = Tensor(np.concatenate([x, world.render(nxt)]))
        h2 = model.encode(both)
        l_ae = ops.mse(model.decode(h2), both)
        dh = ops.sub(ops.getitem(h2, slice(B, 2 * B)), ops.getitem(h2, slice(0, B)))
        self._calibrate(dh.data)

        dh3 = ops.reshape(dh, (B, 1, -1))
        attr = attribute_graph(dh3, phi, self.selector)  # [B, n]
        dmode = cfg.denominator_grad
        den_attr = attribute_graph(dh3 if dmode != "none" else dh3.detach(),
                                   phi if dmode == "all" else phi.detach(), self.selector)
        den = ops.add(ops.mean(ops.abs(den_attr), axis=1, keepdims=True), cfg.eps)
        r = attr.data / den.data
        coef = (w * valid[:, None]).astype(np.float32)
        norm = max(int(valid.sum()), 1) * n
        terms = [l_ae]
        if cfg.lam > 0:
            sel = ops.div(attr, den)
            terms.append(ops.mul(ops.sum(ops.mul(sel, Tensor(coef))), -cfg.lam / norm))
        taken = ops.pick(log_probs, np.repeat(actions, n))
        adv = (w * valid[:, None] * (r - self.baseline)).astype(np.float32).ravel()
        terms.append(ops.mul(ops.sum(ops.mul(taken, Tensor(adv))), -1.0 / norm))
        if cfg.entropy > 0:
            neg_h = ops.sum(ops.mul(Tensor(probs.reshape(B * n, -1).astype(np.float32)), log_probs))
            terms.append(ops.mul(neg_h, cfg.entropy / (B * n)))
        self.baseline = cfg.baseline_decay * self.baseline + (1 - cfg.baseline_decay) * float(r.mean())

        for p in self.params.values():
            p.zero_grad()
        loss = terms[0]
        for t in terms[1:]:
            loss = ops.add(loss, t)
        backward(loss)
        self.opt.apply()
        self.step += 1
        wr = (w * r).sum(axis=1) / w.sum(axis=1)
        return {"step": self.step, "recon_loss": float(l_ae.data),
                "reward_behavior": float(r[np.arange(B), behavior].mean()),
                "reward_contrast": float(wr.mean()), "sigma": float(self.sigma),
                "skipped": float(self.skipped)}

    def train(self, steps: Optional[int] = None,
              callback: Optional[Callable[[Dict[str, float]], None]] = None) -> "ContinuousTrainer":
        target = self.config.steps if steps is None else steps
        while self.step < target:
            m = self.train_step()
            if callback is not None:
                callback(m)
        return self

    def extra_state(self) -> dict:
        return {"baseline": self.baseline, "sigma": self.sigma, "skipped": self.skipped,
                "recent": np.array(self._recent).tolist(),
                "rngs": {k: rngs.get_state(g) for k, g in self.rngs.items()}}

    def load_extra_state(self, state: dict) -> None:
        self.baseline, self.sigma = float(state["baseline"]), float(state["sigma"])
        self.skipped = int(state["skipped"])
        self._recent = deque((np.asarray(v) for v in state["recent"]), maxlen=512)
        for k, s in state["rngs"].items():
            rngs.set_state(self.rngs[k], s)
