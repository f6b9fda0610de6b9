from __future__ import annotations

from collections import OrderedDict

import numpy as np

from ..errors import NumericalError
from .tensor import Parameter


class ParamStore:
    """Ordered, uniquely named collection of trainable parameters."""

    def __init__(self, params=()):
        self._params: OrderedDict[str, Parameter] = OrderedDict()
        for p in params:
            self.add(p)

    def add(self, p: Parameter) -> Parameter:
        if p.name in self._params:
            raise ValueError(f"duplicate parameter name {p.name!r}")
        self._params[p.name] = p
        return p

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self):
        return len(self._params)

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grad(self) -> None:
        for p in self:
            p.grad = None

    def count(self) -> int:
        return int(sum(p.data.size for p in self))

    def state(self) -> OrderedDict:
        return OrderedDict((n, p.data) for n, p in self._params.items())


class Adam:
    """Adam with bias correction. One instance per ParamStore."""

    def __init__(self, store: ParamStore, lr: float = 5e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if not (lr > 0 and 0 < beta1 < 1 and 0 < beta2 < 1 and eps > 0):
            raise ValueError("Adam hyperparameters must be positive (betas in (0, 1))")
        self.store = store
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {p.name: np.zeros_like(p.data) for p in store}
        self.v = {p.name: np.zeros_like(p.data) for p in store}

    def step(self) -> None:
        # validate first so a bad gradient leaves every parameter untouched
        for p in self.store:
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise NumericalError(f"non-finite gradient for {p.name}")
        t = self.t + 1
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        staged = []
        with np.errstate(over="ignore", invalid="ignore"):
            for p in self.store:
                g = p.grad if p.grad is not None else np.zeros_like(p.data)
                m = self.beta1 * self.m[p.name] + (1.0 - self.beta1) * g
                v = self.beta2 * self.v[p.name] + (1.0 - self.beta2) * (g * g)
                step = self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
                new = (p.data - step).astype(p.data.dtype)
                if not np.all(np.isfinite(new)):
                    raise NumericalError(f"update would make {p.name} non-finite")
                staged.append((p, m, v, new))
        # commit only once every parameter is known to stay finite
        self.t = t
        for p, m, v, new in staged:
            self.m[p.name], self.v[p.name] = m, v
            p.data[...] = new
            p.version += 1


def adam_step(optimizer: Adam) -> None:
    optimizer.step()
