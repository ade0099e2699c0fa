from __future__ import annotations

from typing import Dict, Mapping, Optional

import numpy as np

from .tensor import Parameter


class Adam:
    """Adam with bias correction and optional per-parameter learning rates.

    ``lr`` is the default step size; ``lr_overrides`` maps a parameter-name
    prefix to its own rate (longest matching prefix wins).
    """

    def __init__(self, params: Mapping[str, Parameter], lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8,
                 lr_overrides: Optional[Mapping[str, float]] = None):
        if lr < 0:
            raise ValueError(f"learning rate must be >= 0, got {lr}")
        self.params = dict(params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.lr_overrides = dict(lr_overrides or {})
        self.step_count = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def rate(self, name: str) -> float:
        best, rate = -1, self.lr
        for prefix, r in self.lr_overrides.items():
            if name.startswith(prefix) and len(prefix) > best:
                best, rate = len(prefix), r
        return rate

    def apply(self, grads: Optional[Mapping[str, np.ndarray]] = None) -> None:
        """One Adam step.  Uses ``param.grad`` when ``grads`` is omitted."""
        if grads is None:
            grads = {k: p.grad for k, p in self.params.items()}
        for name in self.params:
            if name not in grads:
                raise KeyError(f"Adam.apply: no gradient for parameter {name!r}")
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for name, p in self.params.items():
            g = grads[name]
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            lr = self.rate(name)
            if lr == 0.0:
                continue
            p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.data.dtype)

    def state(self) -> Dict[str, Dict[str, np.ndarray]]:
        return {"m": self.m, "v": self.v}

    def load_state(self, step_count: int, m: Mapping[str, np.ndarray], v: Mapping[str, np.ndarray]) -> None:
        self.step_count = int(step_count)
        for name in self.params:
            self.m[name][...] = m[name]
            self.v[name][...] = v[name]
