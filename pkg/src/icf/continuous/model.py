from __future__ import annotations

from typing import Tuple

import numpy as np

from icf.gradcore import BatchNorm, Conv2d, ConvTranspose2d, Linear, Module, Tensor, ops
from icf.gradcore.ops import conv_output_size

NOISE_KINDS = ("gaussian", "uniform")


class ConvAutoencoder(Module):
    """Four stride-2 conv + batchnorm + leaky ReLU layers down to an unsquashed K-dim code.

    The decoder is the transposed stack with ReLU activations and a linear
    output layer.
    """

    def __init__(self, rng: np.random.Generator, obs_shape: Tuple[int, int, int], n_features: int = 2,
                 filters: int = 16, hidden: int = 64):
        super().__init__()
        c, h, w = obs_shape
        sizes = [h]
        for _ in range(4):
            sizes.append(conv_output_size(sizes[-1], 3, 2, 1))
        if h != w or sizes[-1] < 1:
            raise ValueError(f"need a square observation of side >= 16, got {obs_shape}")
        self.obs_shape, self.n_features = obs_shape, n_features
        self.code_shape = (filters, sizes[-1], sizes[-1])
        flat = filters * sizes[-1] ** 2
        chans = [c, filters, filters, filters, filters]
        for i in range(4):
            setattr(self, f"enc_conv{i + 1}", Conv2d(rng, chans[i], chans[i + 1]))
            setattr(self, f"enc_bn{i + 1}", BatchNorm(chans[i + 1]))
        self.enc_fc = Linear(rng, flat, hidden)
        self.enc_out = Linear(rng, hidden, n_features)
        self.dec_fc = Linear(rng, n_features, hidden)
        self.dec_fc2 = Linear(rng, hidden, flat)
        for i in range(4):
            # output_padding restores the exact encoder sizes (odd sides lose a pixel otherwise)
            pad = sizes[3 - i] - (2 * sizes[4 - i] - 1)
            setattr(self, f"dec_deconv{i + 1}",
                    ConvTranspose2d(rng, chans[4 - i], chans[3 - i], output_padding=pad))

    def encode(self, x) -> Tensor:
        z = x
        for i in range(1, 5):
            z = getattr(self, f"enc_conv{i}")(z)
            z = ops.leaky_relu(getattr(self, f"enc_bn{i}")(z))
        z = ops.leaky_relu(self.enc_fc(ops.reshape(z, (z.shape[0], -1))))
        return self.enc_out(z)

    def decode(self, h) -> Tensor:
        z = ops.relu(self.dec_fc(h))
        z = ops.relu(self.dec_fc2(z))
        z = ops.reshape(z, (z.shape[0], *self.code_shape))
        for i in range(1, 4):
            z = ops.relu(getattr(self, f"dec_deconv{i}")(z))
        return self.dec_deconv4(z)


class FactorGenerator(Module):
    """phi = Phi(h, z): two fully-connected layers, tanh output in (-1, 1)^K."""

    def __init__(self, rng, n_features: int, noise_dim: int = 6, hidden: int = 64, noise: str = "gaussian"):
        super().__init__()
        if noise not in NOISE_KINDS:
            raise ValueError(f"unknown noise {noise!r}; expected one of {NOISE_KINDS}")
        self.n_features, self.noise_dim, self.noise = n_features, noise_dim, noise
        self.fc1 = Linear(rng, n_features + noise_dim, hidden)
        self.fc2 = Linear(rng, hidden, n_features)

    def draw_noise(self, rng: np.random.Generator, shape) -> np.ndarray:
        shape = tuple(shape) + (self.noise_dim,)
        if self.noise == "gaussian":
            return rng.standard_normal(shape).astype(np.float32)
        return rng.uniform(-1.0, 1.0, shape).astype(np.float32)

    def __call__(self, h, z) -> Tensor:
        """``h`` [B, K] and ``z`` [B, n, noise_dim] give phi [B, n, K]."""
        B, n = z.shape[0], z.shape[1]
        hb = np.broadcast_to(h.data[:, None, :], (B, n, self.n_features))
        inp = np.concatenate([hb, z.data if isinstance(z, Tensor) else z], axis=-1)
        out = ops.relu(self.fc1(Tensor(inp.reshape(B * n, -1))))
        return ops.reshape(ops.tanh(self.fc2(out)), (B, n, self.n_features))


class ConditionedPolicy(Module):
    """pi(a | h, phi): two fully-connected layers and a softmax over the actions."""

    def __init__(self, rng, n_features: int, n_actions: int, hidden: int = 64):
        super().__init__()
        self.n_features, self.n_actions = n_features, n_actions
        self.fc1 = Linear(rng, 2 * n_features, hidden)
        self.fc2 = Linear(rng, hidden, n_actions)

    def log_probs(self, h: np.ndarray, phi: np.ndarray) -> Tensor:
        """``h`` [B, K], ``phi`` [B, n, K] (both constants) -> [B * n, A]."""
        B, n, K = phi.shape
        inp = np.concatenate([np.broadcast_to(h[:, None, :], (B, n, K)), phi], axis=-1)
        out = ops.relu(self.fc1(Tensor(inp.reshape(B * n, 2 * K).astype(np.float32))))
        return ops.log_softmax(self.fc2(out))


class ContinuousICF(Module):
    """Autoencoder, factor generator and factor-conditioned policy."""

    kind = "continuous-icf"

    def __init__(self, rng: np.random.Generator, obs_shape, n_features: int = 2, n_actions: int = 6,
                 noise_dim: int = 6, filters: int = 16, hidden: int = 64, noise: str = "gaussian"):
        super().__init__()
        self.ae = ConvAutoencoder(rng, obs_shape, n_features, filters, hidden)
        self.generator = FactorGenerator(rng, n_features, noise_dim, hidden, noise)
        self.policy = ConditionedPolicy(rng, n_features, n_actions, hidden)
        self.n_features, self.n_actions = n_features, n_actions

    def encode(self, x) -> Tensor:
        return self.ae.encode(x)

    def decode(self, h) -> Tensor:
        return self.ae.decode(h)

    def features(self, images: np.ndarray, chunk: int = 256) -> np.ndarray:
        """Eval-mode codes (batchnorm running statistics), no graph."""
        was = self.training
        self.eval()
        try:
            out = [self.ae.encode(Tensor(images[i:i + chunk])).data for i in range(0, len(images), chunk)]
        finally:
            self.train(was)
        return np.concatenate(out) if out else np.zeros((0, self.n_features), np.float32)

    def decode_np(self, h: np.ndarray) -> np.ndarray:
        was = self.training
        self.eval()
        try:
            return self.ae.decode(Tensor(np.asarray(h, dtype=np.float32))).data
        finally:
            self.train(was)

    def sample_factors(self, h: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
        """``count`` draws phi_i = Phi(h, z_i) for each row of ``h`` [B, K] -> [B, count, K]."""
        h = np.atleast_2d(np.asarray(h, dtype=np.float32))
        z = self.generator.draw_noise(rng, (len(h), count))
        return self.generator(Tensor(h), z).data

    def action_probs(self, h: np.ndarray, phi: np.ndarray) -> np.ndarray:
        """[B, n, A] for ``h`` [B, K] and ``phi`` [B, n, K]."""
        lp = self.policy.log_probs(np.asarray(h, np.float32), np.asarray(phi, np.float32)).data
        return np.exp(lp).reshape(*phi.shape[:2], self.n_actions)
