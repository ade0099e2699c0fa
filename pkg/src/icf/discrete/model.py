from __future__ import annotations

from typing import Tuple

import numpy as np

from icf.gradcore import Conv2d, ConvTranspose2d, Linear, Module, Tensor, ops
from icf.gradcore.ops import conv_output_size, conv_transpose_output_size


class EncoderDecoder(Module):
    """Conv autoencoder with a tanh code.

    Encoder: two 3x3 stride-2 ReLU convolutions, a ReLU fully-connected layer
    and a tanh layer of ``n_features``.  The decoder mirrors it with a linear
    (unsquashed) output.
    """

    def __init__(self, rng: np.random.Generator, obs_shape: Tuple[int, int, int], n_features: int = 4,
                 filters: int = 16, hidden: int = 32):
        super().__init__()
        c, h, w = obs_shape
        h1, w1 = conv_output_size(h, 3, 2, 1), conv_output_size(w, 3, 2, 1)
        h2, w2 = conv_output_size(h1, 3, 2, 1), conv_output_size(w1, 3, 2, 1)
        self.obs_shape, self.n_features, self.hidden = obs_shape, n_features, hidden
        self.code_shape = (filters, h2, w2)
        self.enc_conv1 = Conv2d(rng, c, filters)
        self.enc_conv2 = Conv2d(rng, filters, filters)
        self.enc_fc = Linear(rng, filters * h2 * w2, hidden)
        self.enc_out = Linear(rng, hidden, n_features)
        self.dec_fc = Linear(rng, n_features, hidden)
        self.dec_fc2 = Linear(rng, hidden, filters * h2 * w2)
        pad1 = h1 - conv_transpose_output_size(h2, 3, 2, 1)
        pad2 = h - conv_transpose_output_size(h1, 3, 2, 1)
        self.dec_deconv1 = ConvTranspose2d(rng, filters, filters, output_padding=pad1)
        self.dec_deconv2 = ConvTranspose2d(rng, filters, c, output_padding=pad2)

    def encode(self, x) -> Tuple[Tensor, Tensor]:
        """Returns (features h, 32-unit ReLU hidden layer)."""
        z = ops.relu(self.enc_conv1(x))
        z = ops.relu(self.enc_conv2(z))
        hid = ops.relu(self.enc_fc(ops.reshape(z, (z.shape[0], -1))))
        return ops.tanh(self.enc_out(hid)), hid

    def decode(self, h) -> Tensor:
        z = ops.relu(self.dec_fc(h))
        z = ops.relu(self.dec_fc2(z))
        z = ops.reshape(z, (z.shape[0], *self.code_shape))
        z = ops.relu(self.dec_deconv1(z))
        return self.dec_deconv2(z)


class PolicyBank(Module):
    """K softmax policies over the action set, all read off the encoder's hidden layer.

    The heads are stored as one [hidden, K * A] weight; columns
    ``k*A:(k+1)*A`` are the parameters of policy ``k``.
    """

    def __init__(self, rng: np.random.Generator, hidden: int, n_policies: int, n_actions: int):
        super().__init__()
        self.n_policies, self.n_actions = n_policies, n_actions
        self.head = Linear(rng, hidden, n_policies * n_actions)

    def log_probs(self, hid) -> Tensor:
        """Log-probabilities [B * K, A], rows ordered batch-major."""
        logits = ops.reshape(self.head(hid), (-1, self.n_actions))
        return ops.log_softmax(logits)

    def probs(self, hid) -> np.ndarray:
        """[B, K, A] action distributions (no graph)."""
        lp = self.log_probs(Tensor(np.asarray(hid.data if isinstance(hid, Tensor) else hid))).data
        return np.exp(lp).reshape(-1, self.n_policies, self.n_actions)


class DiscreteICF(Module):
    """Autoencoder plus one policy per latent feature."""

    kind = "discrete-icf"

    def __init__(self, rng: np.random.Generator, obs_shape, n_features: int, n_actions: int,
                 filters: int = 16, hidden: int = 32):
        super().__init__()
        self.ae = EncoderDecoder(rng, obs_shape, n_features, filters, hidden)
        self.policy = PolicyBank(rng, hidden, n_features, n_actions)
        self.n_features, self.n_actions = n_features, n_actions

    def encode(self, x):
        return self.ae.encode(x)

    def decode(self, h):
        return self.ae.decode(h)

    def features(self, images: np.ndarray, chunk: int = 512) -> np.ndarray:
        """Latent codes for a stack of images, without building a graph for training."""
        out = [self.ae.encode(Tensor(images[i:i + chunk]))[0].data for i in range(0, len(images), chunk)]
        return np.concatenate(out) if out else np.zeros((0, self.n_features), np.float32)

    def reconstruction_loss(self, images) -> Tensor:
        """Half squared reconstruction error, summed per image and averaged over the batch."""
        x = images if isinstance(images, Tensor) else Tensor(np.asarray(images, dtype=np.float32))
        if tuple(x.shape[1:]) != tuple(self.ae.obs_shape):
            raise ValueError(f"observation shape {x.shape[1:]} does not match encoder input {self.ae.obs_shape}")
        return ops.mse(self.decode(self.encode(x)[0]), x)

    def action_probs(self, images: np.ndarray) -> np.ndarray:
        _, hid = self.ae.encode(Tensor(images))
        return self.policy.probs(hid)
