"""Reverse-mode differentiation over numpy arrays.

Every operation returns a :class:`Tensor` that remembers its parents and a
closure mapping the upstream gradient to one gradient per parent.  Calling
:func:`backward` on a scalar walks that graph in reverse topological order and
accumulates gradients into the :class:`Parameter` leaves it reaches.
"""
from __future__ import annotations

from typing import Callable, Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

DEFAULT_DTYPE = np.float32


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible with an operation."""


class Tensor:
    __slots__ = ("data", "parents", "grad_fn", "op")

    def __init__(
        self,
        data,
        parents: Sequence["Tensor"] = (),
        grad_fn: Optional[Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]] = None,
        op: str = "leaf",
    ):
        if not isinstance(data, np.ndarray):
            data = np.asarray(data, dtype=DEFAULT_DTYPE)
        self.data = data
        self.parents = tuple(parents)
        self.grad_fn = grad_fn
        self.op = op

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def requires_grad(self) -> bool:
        return self.grad_fn is not None

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(op={self.op}, shape={self.shape})"

    # operator sugar, implemented in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)


class Parameter(Tensor):
    """Named trainable leaf with a persistent gradient accumulator."""

    __slots__ = ("name", "grad")

    def __init__(self, name: str, data: np.ndarray):
        super().__init__(np.ascontiguousarray(data), op="param")
        self.name = name
        self.grad = np.zeros_like(self.data)

    @property
    def requires_grad(self) -> bool:
        return True

    def zero_grad(self) -> None:
        self.grad[...] = 0

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape})"


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=DEFAULT_DTYPE))


def _topological(root: Tensor) -> list:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen and (p.grad_fn is not None or isinstance(p, Parameter)):
                stack.append((p, False))
    return order


def backward(loss: Tensor, seed: Optional[np.ndarray] = None) -> Dict[str, np.ndarray]:
    """Accumulate d(loss)/d(param) into every reachable :class:`Parameter`.

    Returns a map from parameter name to the gradient contributed by this
    call.  Gradients add onto ``param.grad``; call ``zero_grad`` to reset.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = _topological(loss)
    grads = {id(loss): np.ones_like(loss.data) if seed is None else seed}
    contributed: Dict[str, np.ndarray] = {}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if isinstance(node, Parameter):
            node.grad += g
            prev = contributed.get(node.name)
            contributed[node.name] = g if prev is None else prev + g
            continue
        if node.grad_fn is None:
            continue
        for parent, pg in zip(node.parents, node.grad_fn(g)):
            if pg is None or not (parent.grad_fn is not None or isinstance(parent, Parameter)):
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    return contributed


def zero_grads(params: Iterable[Parameter]) -> None:
    for p in params:
        p.zero_grad()
