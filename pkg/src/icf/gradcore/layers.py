"""Parameterized layers built on :mod:`icf.gradcore.ops`."""
from __future__ import annotations

from typing import Dict, Iterator, List

import numpy as np

from . import ops
from .tensor import DEFAULT_DTYPE, Parameter, Tensor


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int,
                   dtype=DEFAULT_DTYPE) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Module:
    """Container that owns named parameters and non-trainable buffers.

    Submodules are registered through attribute assignment; parameter names
    are dotted paths (``encoder.conv1.weight``).
    """

    def __init__(self):
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Module):
            self._children[name] = value
        elif isinstance(value, Parameter):
            self._params[name] = value
        object.__setattr__(self, name, value)

    def add_param(self, name: str, data: np.ndarray) -> Parameter:
        p = Parameter(name, data)
        setattr(self, name, p)
        return p

    def add_buffer(self, name: str, data: np.ndarray) -> np.ndarray:
        self._buffers[name] = data
        object.__setattr__(self, name, data)
        return data

    def named_parameters(self, prefix: str = "") -> Iterator:
        for name, p in self._params.items():
            yield prefix + name, p
        for cname, child in self._children.items():
            yield from child.named_parameters(prefix + cname + ".")

    def named_buffers(self, prefix: str = "") -> Iterator:
        for name, b in self._buffers.items():
            yield prefix + name, b
        for cname, child in self._children.items():
            yield from child.named_buffers(prefix + cname + ".")

    def parameters(self) -> Dict[str, Parameter]:
        """Parameters keyed by dotted path; renames each Parameter to its path."""
        out = {}
        for name, p in self.named_parameters():
            p.name = name
            out[name] = p
        return out

    def buffers(self) -> Dict[str, np.ndarray]:
        return dict(self.named_buffers())

    def train(self, mode: bool = True) -> "Module":
        object.__setattr__(self, "training", mode)
        for child in self._children.values():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.zero_grad()


class Linear(Module):
    def __init__(self, rng, n_in: int, n_out: int, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.add_param("weight", glorot_uniform(rng, (n_in, n_out), n_in, n_out, dtype))
        self.add_param("bias", np.zeros(n_out, dtype=dtype))

    def __call__(self, x) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, rng, c_in: int, c_out: int, kernel: int = 3, stride: int = 2,
                 padding: int = 1, dtype=DEFAULT_DTYPE):
        super().__init__()
        fan_in, fan_out = c_in * kernel * kernel, c_out * kernel * kernel
        self.add_param("weight", glorot_uniform(rng, (c_out, c_in, kernel, kernel), fan_in, fan_out, dtype))
        self.add_param("bias", np.zeros(c_out, dtype=dtype))
        self.stride, self.padding = stride, padding

    def __call__(self, x) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose2d(Module):
    def __init__(self, rng, c_in: int, c_out: int, kernel: int = 3, stride: int = 2,
                 padding: int = 1, output_padding: int = 1, dtype=DEFAULT_DTYPE):
        super().__init__()
        fan_in, fan_out = c_in * kernel * kernel, c_out * kernel * kernel
        self.add_param("weight", glorot_uniform(rng, (c_in, c_out, kernel, kernel), fan_in, fan_out, dtype))
        self.add_param("bias", np.zeros(c_out, dtype=dtype))
        self.stride, self.padding, self.output_padding = stride, padding, output_padding

    def __call__(self, x) -> Tensor:
        return ops.conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding,
                                    self.output_padding)


class BatchNorm(Module):
    def __init__(self, channels: int, momentum: float = 0.99, dtype=DEFAULT_DTYPE):
        super().__init__()
        self.add_param("scale", np.ones(channels, dtype=dtype))
        self.add_param("shift", np.zeros(channels, dtype=dtype))
        self.add_buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.add_buffer("running_var", np.ones(channels, dtype=dtype))
        self.momentum = momentum

    def __call__(self, x) -> Tensor:
        return ops.batchnorm(x, self.scale, self.shift, self.running_mean, self.running_var,
                             train=self.training, momentum=self.momentum)


def flatten(x) -> Tensor:
    return ops.reshape(x, (x.shape[0], -1))


def sequential_shapes(layers: List, shape) -> List:
    """Shapes seen after each layer for a dummy input of ``shape``; handy for sizing decoders."""
    x = Tensor(np.zeros(shape, dtype=DEFAULT_DTYPE))
    shapes = []
    for layer in layers:
        x = layer(x)
        shapes.append(x.shape)
    return shapes
