"""Draw synthetic rows from a trained model.

Latent draws come from the standard-normal prior. Embedded categorical
outputs are mapped to the level whose embedding row is nearest (squared
Euclidean, ties to the lowest code, mask row never a candidate). Softmax
heads are sampled for binary features; for one-hot categorical heads in
baseline mode the most probable level is taken, mirroring the
nearest-row rule.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from . import nn
from .errors import SchemaError
from .model import CardiCat
from .schema import CATEGORICAL, NUMERICAL, Schema, Table, decode

# rows decoded per forward pass; bounds memory, does not affect results
CHUNK = 4096


@dataclass
class SynthesisRequest:
    n_rows: int
    seed: int = 0
    condition: dict = field(default_factory=dict)
    stochastic: bool = False

    def __post_init__(self):
        if self.n_rows < 1:
            raise ValueError("n_rows must be >= 1")


def nearest_rows(points: np.ndarray, table: np.ndarray) -> np.ndarray:
    """Index of the closest table row for each point (first index on ties)."""
    points = np.asarray(points, dtype=np.float64)
    table = np.asarray(table, dtype=np.float64)
    step = max(1, 2**22 // max(1, table.size))
    out = np.empty(len(points), dtype=np.int64)
    for lo in range(0, len(points), step):
        block = points[lo:lo + step]
        d2 = ((block[:, None, :] - table[None, :, :]) ** 2).sum(axis=2)
        out[lo:lo + step] = np.argmin(d2, axis=1)
    return out


def sample_categorical(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draw per row given uniforms ``u`` in [0, 1)."""
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = 1.0
    return (u[:, None] >= cdf).sum(axis=1).clip(max=probs.shape[1] - 1)


def _decode_codes(model: CardiCat, z: np.ndarray, cond, rng: nn.Rng,
                  stochastic: bool) -> list[np.ndarray]:
    out = model.decode(z.astype(model.dtype), cond)
    n = z.shape[0]
    cols = []
    for f in model.schema:
        if f.kind == NUMERICAL:
            cols.append(out.numeric[f.name].data[:, 0].astype(np.float64))
        elif f.kind == CATEGORICAL and model.embedded:
            table = model.embeddings[f.name].data[:model.real_cardinality(f.name)]
            if stochastic:
                d2 = ((out.embeddings[f.name].data[:, None, :].astype(np.float64)
                       - table[None].astype(np.float64)) ** 2).sum(axis=2)
                cols.append(sample_categorical(nn.softmax_np(-d2), rng.random(n)))
            else:
                cols.append(nearest_rows(out.embeddings[f.name].data, table))
        else:
            probs = out.probs(f.name).astype(np.float64)
            if f.kind == CATEGORICAL and not stochastic:
                cols.append(np.argmax(probs, axis=1))
            else:
                cols.append(sample_categorical(probs, rng.random(n)))
    return cols


def output_schema(model: CardiCat):
    """The schema rows are written in: mask levels stripped."""
    feats = []
    for f in model.schema:
        if f.kind == CATEGORICAL and model.mode == "conditional":
            f = replace(f, levels=f.levels[:-1])
        feats.append(f)
    return Schema(tuple(feats), model.schema.version)


def sample_codes(model: CardiCat, request: SynthesisRequest) -> list[np.ndarray]:
    """Generated columns in schema order (standardized numerics, label codes)."""
    if request.condition and model.mode != "conditional":
        raise SchemaError("conditioning requires a conditional-mode checkpoint")
    rng = nn.Rng(request.seed)
    pieces = []
    for start in range(0, request.n_rows, CHUNK):
        n = min(CHUNK, request.n_rows - start)
        z = rng.normal((n, model.config.latent_dim))
        cond = None
        if model.cond_width:
            cond = model.conditional_matrix(model.conditional_codes(request.condition, n))
        pieces.append(_decode_codes(model, z, cond, rng, request.stochastic))
    return [np.concatenate(parts) for parts in zip(*pieces)]


def sample(model: CardiCat, request: SynthesisRequest) -> Table:
    """Unconditional synthesis (all-mask side input for conditional models)."""
    if request.condition:
        raise SchemaError("use conditional_sample for a non-empty condition")
    return decode(output_schema(model), sample_codes(model, request))


def conditional_sample(model: CardiCat, request: SynthesisRequest) -> Table:
    if model.mode != "conditional":
        raise SchemaError("conditional sampling requires a conditional-mode checkpoint")
    return decode(output_schema(model), sample_codes(model, request))


def generate(model: CardiCat, n_rows: int, seed: int = 0,
             condition: Mapping[str, str] | None = None, stochastic: bool = False) -> Table:
    req = SynthesisRequest(n_rows, seed, dict(condition or {}), stochastic)
    return conditional_sample(model, req) if req.condition else sample(model, req)
