"""Differentiable operations.

Shapes follow the usual NCHW convention for images.  Every op checks its
operand shapes up front and raises :class:`ShapeError` with both shapes in
the message.
"""
from __future__ import annotations

from typing import Optional, Sequence, Tuple

import numpy as np

from .tensor import Parameter, ShapeError, Tensor, as_tensor

EPS = 1e-8


def _needs_grad(t: Tensor) -> bool:
    return t.grad_fn is not None or isinstance(t, Parameter)


def _make(data, parents, grad_fn, op) -> Tensor:
    if any(_needs_grad(p) for p in parents):
        return Tensor(data, parents, grad_fn, op)
    return Tensor(data, op=op)


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _binary_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape(a, b, "add")
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape(a, b, "sub")
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape(a, b, "mul")
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
                 "mul")


def div(a, b, eps: float = EPS) -> Tensor:
    """a / max(b, eps).  Only meant for non-negative denominators."""
    a, b = as_tensor(a), as_tensor(b)
    _binary_shape(a, b, "div")
    den = np.maximum(b.data, eps)
    out = a.data / den

    def grad_fn(g):
        gb = -g * out / den
        gb = np.where(b.data > eps, gb, 0)
        return _unbroadcast(g / den, a.shape), _unbroadcast(gb, b.shape)

    return _make(out, (a, b), grad_fn, "div")


def abs(x) -> Tensor:  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)
    return _make(np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),), "abs")


def relu(x) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    return _make(x.data * mask, (x,), lambda g: (g * mask,), "relu")


max0 = relu


def leaky_relu(x, slope: float = 0.01) -> Tensor:
    x = as_tensor(x)
    scale = np.where(x.data > 0, 1.0, slope).astype(x.dtype)
    return _make(x.data * scale, (x,), lambda g: (g * scale,), "leaky_relu")


def tanh(x) -> Tensor:
    x = as_tensor(x)
    out = np.tanh(x.data)
    return _make(out, (x,), lambda g: (g * (1 - out * out),), "tanh")


def exp(x) -> Tensor:
    x = as_tensor(x)
    out = np.exp(x.data)
    return _make(out, (x,), lambda g: (g * out,), "exp")


def log(x, eps: float = EPS) -> Tensor:
    """Natural log with inputs clamped below at ``eps``."""
    x = as_tensor(x)
    safe = np.maximum(x.data, eps)
    return _make(np.log(safe), (x,), lambda g: (np.where(x.data > eps, g / safe, 0),), "log")


def square(x) -> Tensor:
    x = as_tensor(x)
    return _make(x.data * x.data, (x,), lambda g: (2 * g * x.data,), "square")


# ------------------------------------------------------------------ reductions

def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def grad_fn(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(x.dtype, copy=True),)

    return _make(np.asarray(out, dtype=x.dtype), (x,), grad_fn, "sum")


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / float(n))


def square_norm(x, axis=None, keepdims: bool = False) -> Tensor:
    """Sum of squares along ``axis``."""
    return sum(square(x), axis=axis, keepdims=keepdims)


# ------------------------------------------------------------------- structure

def reshape(x, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view {x.shape} as {tuple(shape)}") from None
    return _make(out, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def concat(xs: Sequence, axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    try:
        out = np.concatenate([x.data for x in xs], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[x.shape for x in xs]}") from None
    splits = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def grad_fn(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(out, xs, grad_fn, "concat")


def pick(x, index: np.ndarray) -> Tensor:
    """``x[i, index[i]]`` for a 2-D ``x``; used to read log-probabilities of taken actions."""
    x = as_tensor(x)
    index = np.asarray(index)
    if x.data.ndim != 2 or index.shape != (x.shape[0],):
        raise ShapeError(f"pick: expected [B, A] and [B] indices, got {x.shape} and {index.shape}")
    rows = np.arange(x.shape[0])

    def grad_fn(g):
        full = np.zeros_like(x.data)
        full[rows, index] = g
        return (full,)

    return _make(x.data[rows, index], (x,), grad_fn, "pick")


def getitem(x, key) -> Tensor:
    x = as_tensor(x)
    keys = key if isinstance(key, tuple) else (key,)
    basic = all(isinstance(k, (slice, int)) or k is Ellipsis for k in keys)

    def grad_fn(g):
        full = np.zeros_like(x.data)
        if basic:
            full[key] = g
        else:
            np.add.at(full, key, g)
        return (full,)

    return _make(x.data[key], (x,), grad_fn, "getitem")


# ----------------------------------------------------------------- linear maps

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    return _make(a.data @ b.data, (a, b), lambda g: (g @ b.data.T, a.data.T @ g), "matmul")


def linear(x, weight, bias=None) -> Tensor:
    """Fully-connected layer ``x @ weight + bias`` with weight shaped [in, out]."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.data.ndim != 2 or weight.data.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"linear: input {x.shape} vs weight {weight.shape}")
    out = x.data @ weight.data
    gx = _needs_grad(x)
    if bias is None:
        return _make(out, (x, weight),
                     lambda g: (g @ weight.data.T if gx else None, x.data.T @ g), "linear")
    bias = as_tensor(bias)
    if bias.shape != (weight.shape[1],):
        raise ShapeError(f"linear: bias {bias.shape} vs weight {weight.shape}")
    return _make(out + bias.data, (x, weight, bias),
                 lambda g: (g @ weight.data.T if gx else None, x.data.T @ g, g.sum(axis=0)), "linear")


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def conv_transpose_output_size(size: int, kernel: int, stride: int, padding: int,
                               output_padding: int = 0) -> int:
    return (size - 1) * stride - 2 * padding + kernel + output_padding


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    # channel-major padded input [C, B, Hp, Wp] -> columns [C*kh*kw, B*ho*wo]
    c, b = xp.shape[:2]
    cols = np.empty((c, kh * kw, b, ho, wo), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, i * kw + j] = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
    return cols.reshape(c * kh * kw, b * ho * wo)


def _col2im(cols: np.ndarray, shape, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    # adjoint of _im2col: columns summed back into a channel-major [C, B, Hp, Wp] buffer
    c, b = shape[:2]
    out = np.zeros(shape, dtype=cols.dtype)
    cols = cols.reshape(c, kh * kw, b, ho, wo)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, i * kw + j]
    return out


def _to_cbhw(x: np.ndarray, padding: int = 0) -> np.ndarray:
    b, c, h, w = x.shape
    out = np.zeros((c, b, h + 2 * padding, w + 2 * padding), dtype=x.dtype)
    out[:, :, padding:padding + h, padding:padding + w] = x.transpose(1, 0, 2, 3)
    return out


def conv2d(x, weight, bias=None, stride: int = 2, padding: int = 1) -> Tensor:
    """2-D cross-correlation. ``x`` [B, C, H, W], ``weight`` [O, C, kh, kw]."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.data.ndim != 4 or weight.data.ndim != 4 or x.shape[1] != weight.shape[1]:
        raise ShapeError(f"conv2d: input {x.shape} vs weight {weight.shape}")
    bsz, c, h, w = x.shape
    o, _, kh, kw = weight.shape
    ho, wo = conv_output_size(h, kh, stride, padding), conv_output_size(w, kw, stride, padding)
    if ho <= 0 or wo <= 0:
        raise ShapeError(f"conv2d: input {x.shape} too small for kernel {weight.shape}")
    xp = _to_cbhw(x.data, padding)
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    wmat = weight.data.reshape(o, -1)
    out = wmat @ cols
    if bias is not None:
        out = out + bias.data[:, None]
    out = out.reshape(o, bsz, ho, wo).transpose(1, 0, 2, 3)

    def grad_fn(g):
        gflat = np.ascontiguousarray(g.transpose(1, 0, 2, 3)).reshape(o, -1)
        gw = (gflat @ cols.T).reshape(weight.shape)
        gx = None
        if _needs_grad(x):
            gxp = _col2im(wmat.T @ gflat, xp.shape, kh, kw, stride, ho, wo)
            gx = np.ascontiguousarray(gxp[:, :, padding:padding + h, padding:padding + w].transpose(1, 0, 2, 3))
        grads = (gx, gw)
        if bias is not None:
            grads += (gflat.sum(axis=1),)
        return grads

    parents = (x, weight) if bias is None else (x, weight, as_tensor(bias))
    return _make(np.ascontiguousarray(out), parents, grad_fn, "conv2d")


def conv_transpose2d(x, weight, bias=None, stride: int = 2, padding: int = 1,
                     output_padding: int = 1) -> Tensor:
    """Gradient-of-conv2d layer. ``x`` [B, C, H, W], ``weight`` [C, O, kh, kw]."""
    x, weight = as_tensor(x), as_tensor(weight)
    if x.data.ndim != 4 or weight.data.ndim != 4 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"conv_transpose2d: input {x.shape} vs weight {weight.shape}")
    bsz, c, h, w = x.shape
    _, o, kh, kw = weight.shape
    ho = conv_transpose_output_size(h, kh, stride, padding, output_padding)
    wo = conv_transpose_output_size(w, kw, stride, padding, output_padding)
    # full (uncropped) canvas large enough for every scatter plus output padding
    hf, wf = ho + 2 * padding, wo + 2 * padding
    xc = _to_cbhw(x.data).reshape(c, -1)
    wmat = weight.data.reshape(c, -1)   # rows c, columns (o, i, j)
    full = _col2im(wmat.T @ xc, (o, bsz, hf, wf), kh, kw, stride, h, w)
    out = full[:, :, padding:padding + ho, padding:padding + wo]
    if bias is not None:
        out = out + bias.data.reshape(-1, 1, 1, 1)
    out = out.transpose(1, 0, 2, 3)

    def grad_fn(g):
        gcols = _im2col(_to_cbhw(g, padding), kh, kw, stride, h, w)  # [O*kh*kw, B*h*w]
        gx = None
        if _needs_grad(x):
            gx = np.ascontiguousarray((wmat @ gcols).reshape(c, bsz, h, w).transpose(1, 0, 2, 3))
        gw = (xc @ gcols.T).reshape(weight.shape)
        grads = (gx, gw)
        if bias is not None:
            grads += (g.sum(axis=(0, 2, 3)),)
        return grads

    parents = (x, weight) if bias is None else (x, weight, as_tensor(bias))
    return _make(np.ascontiguousarray(out), parents, grad_fn, "conv_transpose2d")


# ---------------------------------------------------------------- distributions

def softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def grad_fn(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (x,), grad_fn, "softmax")


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))
    probs = np.exp(out)

    def grad_fn(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return _make(out, (x,), grad_fn, "log_softmax")


# ------------------------------------------------------------------ normalizers

def batchnorm(x, gamma, beta, running_mean: np.ndarray, running_var: np.ndarray,
              train: bool = True, momentum: float = 0.99, eps: float = 1e-5) -> Tensor:
    """Batch normalization over every axis but the channel axis (1).

    In train mode the batch statistics are used and the running buffers are
    updated in place as ``running = momentum * running + (1 - momentum) * batch``.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.data.ndim not in (2, 4) or gamma.shape != (x.shape[1],) or beta.shape != gamma.shape:
        raise ShapeError(f"batchnorm: input {x.shape}, scale {gamma.shape}, shift {beta.shape}")
    axes = (0,) if x.data.ndim == 2 else (0, 2, 3)
    bshape = (1, -1) if x.data.ndim == 2 else (1, -1, 1, 1)
    if train:
        m = x.data.size // x.shape[1]
        if x.shape[0] < 2:
            raise ShapeError(f"batchnorm: train mode needs batch >= 2, got {x.shape[0]}")
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        running_mean *= momentum
        running_mean += (1 - momentum) * mu
        running_var *= momentum
        running_var += (1 - momentum) * var * m / max(m - 1, 1)
    else:
        mu, var = running_mean, running_var
    inv = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = (x.data - mu.reshape(bshape)) * inv.reshape(bshape)
    out = xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape)

    def grad_fn(g):
        gg = (g * xhat).sum(axis=axes)
        gb = g.sum(axis=axes)
        gxhat = g * gamma.data.reshape(bshape)
        if train:
            m = x.data.size // x.shape[1]
            gx = (inv.reshape(bshape) / m) * (
                m * gxhat
                - gxhat.sum(axis=axes).reshape(bshape)
                - xhat * (gxhat * xhat).sum(axis=axes).reshape(bshape)
            )
        else:
            gx = gxhat * inv.reshape(bshape)
        return gx, gg, gb

    return _make(out.astype(x.dtype, copy=False), (x, gamma, beta), grad_fn, "batchnorm")


# ---------------------------------------------------------------------- losses

def mse(pred, target) -> Tensor:
    """Half squared error summed per sample, averaged over the leading batch axis."""
    pred, target = as_tensor(pred), as_tensor(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse: prediction {pred.shape} vs target {target.shape}")
    diff = pred.data - target.data
    n = pred.shape[0] if pred.data.ndim else 1
    out = np.asarray(0.5 * (diff * diff).sum() / n, dtype=pred.dtype)
    return _make(out, (pred, target), lambda g: (g * diff / n, -g * diff / n), "mse")


# ------------------------------------------------------------------ dispatch

OPS = {
    "matmul": matmul,
    "conv2d-stride2": conv2d,
    "transposed-conv2d": conv_transpose2d,
    "fully-connected": linear,
    "relu": relu,
    "leaky-relu": leaky_relu,
    "tanh": tanh,
    "softmax": softmax,
    "log-softmax": log_softmax,
    "batchnorm": batchnorm,
    "mse": mse,
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "abs": abs,
    "max0": max0,
    "exp": exp,
    "log": log,
    "square-norm": square_norm,
}


def forward_op(kind: str, *inputs, **attrs) -> Tensor:
    try:
        fn = OPS[kind]
    except KeyError:
        raise ValueError(f"unknown op kind {kind!r}; expected one of {sorted(OPS)}") from None
    return fn(*inputs, **attrs)
