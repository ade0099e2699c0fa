"""Minimal reverse-mode automatic differentiation on numpy arrays."""
from . import ops
from .adam import Adam
from .layers import BatchNorm, Conv2d, ConvTranspose2d, Linear, Module, flatten, glorot_uniform
from .ops import forward_op
from .tensor import DEFAULT_DTYPE, Parameter, ShapeError, Tensor, as_tensor, backward, zero_grads

__all__ = [
    "Adam", "BatchNorm", "Conv2d", "ConvTranspose2d", "DEFAULT_DTYPE", "Linear", "Module",
    "Parameter", "ShapeError", "Tensor", "as_tensor", "backward", "flatten", "forward_op",
    "glorot_uniform", "ops", "zero_grads",
]
