"""Seeded sampling.

All randomness goes through :class:`Rng`, a thin wrapper over numpy's PCG64
bit generator. PCG64 is a documented permuted congruential generator whose
stream depends only on the seed, so the same seed reproduces the same
draws on every platform.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, as_tensor


class Rng:
    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def normal(self, shape, dtype=np.float64) -> np.ndarray:
        return self._gen.standard_normal(shape, dtype=dtype)

    def uniform(self, low: float, high: float, shape, dtype=np.float64) -> np.ndarray:
        return self._gen.uniform(low, high, shape).astype(dtype, copy=False)

    def random(self, shape=None) -> np.ndarray:
        return self._gen.random(shape)

    def integers(self, low, high=None, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def child(self, key: int) -> "Rng":
        """Independent stream derived from (seed, key); does not advance this one."""
        ss = np.random.SeedSequence(self.seed, spawn_key=(int(key),))
        return Rng(int(ss.generate_state(1, np.uint64)[0]))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen


def gauss_sample(rng: Rng, shape, dtype=np.float64) -> np.ndarray:
    return rng.normal(shape, dtype)


def reparameterize(mu, sigma, eps) -> Tensor:
    """z = mu + sigma * eps, with eps treated as a constant."""
    mu, sigma = as_tensor(mu), as_tensor(sigma)
    return mu + sigma * Tensor(np.asarray(eps, dtype=mu.dtype))
