"""Simulated mixed-type benchmark: 5 discrete + 6 numerical columns.

Columns and how they are drawn, in stream order:

====  ===========  ====================================================
C1    binary       Bernoulli(0.3) (``level_1`` is the success level)
C2    c=5          Zipf weights p_l ~ 1/l
C3    c=10         row of a fixed transition matrix selected by C2
C4    c=20         Zipf, independent
C5    c=50         Zipf, independent
N1,N2 numerical    bivariate normal, correlation 0.8
N3    numerical    standard normal
N4    numerical    normal(code of C2, 1)
N5    numerical    exponential(1)
N6    numerical    uniform(-1, 1)
====  ===========  ====================================================

Level ``level_i`` of a Zipf feature has weight proportional to 1/(i+1).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .schema import Table, format_number, write_csv

CARDINALITIES = (2, 5, 10, 20, 50)
N_NUMERICAL = 6
RHO = 0.8
P_C1 = 0.3


@dataclass(frozen=True)
class SimSpec:
    n_rows: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.n_rows < 1:
            raise ValueError("n_rows must be >= 1")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SimSpec":
        return cls(**json.loads(text))


def zipf_weights(c: int) -> np.ndarray:
    w = 1.0 / np.arange(1, c + 1)
    return w / w.sum()


def transition_matrix() -> np.ndarray:
    """Row-stochastic 5x10 matrix; row i concentrates near columns 2i and 2i+1."""
    i = np.arange(CARDINALITIES[1])[:, None]
    j = np.arange(CARDINALITIES[2])[None, :]
    w = 1.0 / (1.0 + np.abs(j - 2 * i - 0.5)) ** 2
    return w / w.sum(axis=1, keepdims=True)


def _inverse_cdf(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs, axis=-1)
    if cdf.ndim == 1:
        return np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1)
    return np.minimum((u[:, None] >= cdf).sum(axis=1), cdf.shape[1] - 1)


def header() -> tuple[str, ...]:
    return tuple(f"C{i}" for i in range(1, 6)) + tuple(f"N{i}" for i in range(1, 7))


def simulate_arrays(spec: SimSpec) -> dict[str, np.ndarray]:
    """Raw generated columns: integer level indices and float values."""
    n = spec.n_rows
    gen = np.random.Generator(np.random.PCG64(spec.seed))
    cols = {}
    cols["C1"] = (gen.random(n) < P_C1).astype(np.int64)
    c2 = _inverse_cdf(zipf_weights(5), gen.random(n))
    cols["C2"] = c2
    cols["C3"] = _inverse_cdf(transition_matrix()[c2], gen.random(n))
    cols["C4"] = _inverse_cdf(zipf_weights(20), gen.random(n))
    cols["C5"] = _inverse_cdf(zipf_weights(50), gen.random(n))
    g = gen.standard_normal((n, 2))
    cols["N1"] = g[:, 0]
    cols["N2"] = RHO * g[:, 0] + np.sqrt(1.0 - RHO**2) * g[:, 1]
    cols["N3"] = gen.standard_normal(n)
    cols["N4"] = c2 + gen.standard_normal(n)
    cols["N5"] = gen.exponential(1.0, n)
    cols["N6"] = gen.uniform(-1.0, 1.0, n)
    return cols


def simulate(spec: SimSpec | None = None) -> Table:
    cols = simulate_arrays(spec or SimSpec())
    names = header()
    rendered = []
    for name in names:
        if name.startswith("C"):
            rendered.append([f"level_{v}" for v in cols[name]])
        else:
            rendered.append([format_number(v) for v in cols[name]])
    return Table(names, tuple(zip(*rendered)))


def write_simulated(path: str | Path, spec: SimSpec | None = None) -> Table:
    table = simulate(spec)
    write_csv(path, table)
    return table
