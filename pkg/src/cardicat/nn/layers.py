from __future__ import annotations

import math

import numpy as np

from .random import Rng
from .tensor import Parameter, Tensor, linear


def glorot_uniform(rng: Rng, d_in: int, d_out: int, dtype=np.float32) -> np.ndarray:
    bound = math.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-bound, bound, (d_in, d_out), dtype)


class DenseLayer:
    """Affine map ``y = x @ weight + bias`` with fan-based uniform init."""

    def __init__(self, d_in: int, d_out: int, rng: Rng | None = None, *, name: str = "dense",
                 dtype=np.float32):
        self.d_in, self.d_out = d_in, d_out
        if rng is None:
            w = np.zeros((d_in, d_out), dtype=dtype)
        else:
            w = glorot_uniform(rng, d_in, d_out, dtype)
        self.weight = Parameter(w, f"{name}.weight")
        self.bias = Parameter(np.zeros(d_out, dtype=dtype), f"{name}.bias")

    def parameters(self) -> list[Parameter]:
        return [self.weight, self.bias]

    def __call__(self, x: Tensor) -> Tensor:
        return dense_forward(self, x)

    def __repr__(self):
        return f"DenseLayer({self.d_in}->{self.d_out})"


def dense_forward(layer: DenseLayer, x) -> Tensor:
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    if data.ndim != 2 or data.shape[1] != layer.d_in:
        raise ValueError(f"expected (batch, {layer.d_in}) input, got {data.shape}")
    return linear(x, layer.weight, layer.bias)
