"""The CardiCat network: shared embedding tables, encoder, decoder, and loss.

Categorical features (three or more levels) are embedded through a table
that is read twice per step: once to build the encoder input and once to
build the decoder's reconstruction target. Both reads are differentiable,
so the table is trained from both ends. A penalty on the drift of each
table's mean coordinate variance keeps the rows from collapsing together.

``baseline_onehot`` mode swaps the tables for one-hot inputs and softmax
heads; ``conditional`` mode appends a frozen copy of the embeddings of a
partial assignment (mask rows elsewhere) to both network inputs.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Mapping

import numpy as np

from . import nn
from .errors import CheckpointError, NumericalError, SchemaError
from .nn import tensor as T
from .schema import (CATEGORICAL, MASK_LEVEL, NUMERICAL, EncodedDataset, Schema,
                     one_hot_matrix)

MODES = ("cardicat", "baseline_onehot", "conditional")
NUMERIC_HEADS = ("tanh", "linear")
PRECISIONS = {"float32": np.float32, "float64": np.float64}


@dataclass
class TrainConfig:
    mode: str = "cardicat"
    lambda_kl: float = 1.0
    lambda_reg: float = 1000.0
    loss_factor: float = 5.0
    lr: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int = 2000
    epochs: int = 150
    latent_dim: int = 15
    hidden_dim: int = 128
    max_embedding_dim: int = 16
    embedding_init: float = 1.0
    embedding_dims: dict = field(default_factory=dict)
    numeric_head: str = "tanh"
    seed: int = 0
    precision: str = "float32"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.numeric_head not in NUMERIC_HEADS:
            raise ValueError(f"numeric_head must be one of {NUMERIC_HEADS}")
        if self.precision not in PRECISIONS:
            raise ValueError(f"precision must be one of {tuple(PRECISIONS)}")
        for name in ("lambda_kl", "lambda_reg", "loss_factor"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be >= 0")
        if self.batch_size < 1 or self.epochs < 0 or self.latent_dim < 1 or self.hidden_dim < 1:
            raise ValueError("batch_size, latent_dim and hidden_dim must be >= 1, epochs >= 0")
        if not 0 < self.embedding_init <= 1:
            raise ValueError("embedding_init must lie in (0, 1]")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")

    @property
    def dtype(self):
        return PRECISIONS[self.precision]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown TrainConfig fields: {sorted(unknown)}")
        return cls(**dict(d))


def embedding_dim(cardinality: int, max_dim: int = 16) -> int:
    """Default rule k = min(max_dim, ceil(sqrt(c)))."""
    return min(max_dim, math.ceil(math.sqrt(cardinality)))


def conditional_prepare(schema: Schema) -> Schema:
    """Append a mask level to every categorical feature (code = old cardinality)."""
    feats = []
    for f in schema:
        if f.kind == CATEGORICAL:
            if MASK_LEVEL in f.levels:
                raise SchemaError(f"{f.name}: already carries a mask level")
            f = replace(f, levels=f.levels + (MASK_LEVEL,))
        feats.append(f)
    return Schema(tuple(feats), schema.version)


def coordinate_variance(table):
    """Mean over columns of the population variance over rows.

    Accepts a Tensor (differentiable) or an ndarray.
    """
    if isinstance(table, T.Tensor):
        centered = table - table.mean(axis=0, keepdims=True)
        return T.square(centered).mean(axis=0).mean()
    return float(np.mean(np.var(table, axis=0)))


@dataclass
class Batch:
    """Model-ready arrays for a block of rows, keyed by feature name."""

    codes: dict
    numeric: dict
    n: int

    def take(self, idx) -> "Batch":
        return Batch({k: v[idx] for k, v in self.codes.items()},
                     {k: v[idx] for k, v in self.numeric.items()}, len(idx))


@dataclass
class LossTerms:
    total: T.Tensor
    recon: T.Tensor
    kl: T.Tensor
    reg: T.Tensor

    def values(self) -> dict:
        return {k: getattr(self, k).item() for k in ("recon", "kl", "reg", "total")}


@dataclass
class Decoded:
    embeddings: dict   # categorical name -> (batch, k) in (-1, 1)
    numeric: dict      # numerical name -> (batch, 1)
    logits: dict       # softmax-headed name -> (batch, c)

    def probs(self, name: str) -> np.ndarray:
        return nn.softmax_np(self.logits[name].data)


class CardiCat:
    """One model instance; ``mode`` selects cardicat, baseline_onehot, or conditional.

    In conditional mode ``schema`` must already carry mask levels (see
    :func:`conditional_prepare`); :meth:`build` handles that.
    """

    def __init__(self, schema: Schema, config: TrainConfig, rng: nn.Rng | None):
        if not schema.has_moments:
            raise SchemaError("schema has numerical features without moments")
        self.schema = schema
        self.config = config
        self.mode = config.mode
        self.dtype = config.dtype
        dt = self.dtype
        self.store = nn.ParamStore()
        self.embedded = self.mode != "baseline_onehot"
        self.categorical = [f for f in schema if f.kind == CATEGORICAL]
        if self.mode == "conditional":
            for f in self.categorical:
                if f.levels[-1] != MASK_LEVEL:
                    raise SchemaError(f"{f.name}: conditional mode needs a prepared schema")

        self.emb_dims = {}
        self.embeddings = {}
        self.v0 = {}
        if self.embedded:
            for f in self.categorical:
                k = int(config.embedding_dims.get(f.name) or
                        embedding_dim(self.real_cardinality(f.name), config.max_embedding_dim))
                self.emb_dims[f.name] = k
                init = (rng.uniform(-config.embedding_init, config.embedding_init,
                                    (f.cardinality, k), dt) if rng is not None
                        else np.zeros((f.cardinality, k), dt))
                self.embeddings[f.name] = self.store.add(nn.Parameter(init, f"emb.{f.name}"))
                self.v0[f.name] = coordinate_variance(init.astype(np.float64))

        self.cond_width = sum(self.emb_dims.values()) if self.mode == "conditional" else 0
        width = 0
        for f in schema:
            width += self.input_width(f.name)
        self.input_dim = width + self.cond_width

        a, hdim = config.latent_dim, config.hidden_dim

        def dense(d_in, d_out, name):
            layer = nn.DenseLayer(d_in, d_out, rng, name=name, dtype=dt)
            for p in layer.parameters():
                self.store.add(p)
            return layer

        self.enc_in = dense(self.input_dim, hdim, "enc.in")
        self.enc_hidden = dense(hdim, hdim, "enc.hidden")
        self.enc_mu = dense(hdim, a, "enc.mu")
        self.enc_logvar = dense(hdim, a, "enc.logvar")
        self.dec_in = dense(a + self.cond_width, hdim, "dec.in")
        self.dec_hidden = dense(hdim, hdim, "dec.hidden")
        self.heads = {}
        for f in schema:
            if f.kind == NUMERICAL:
                out = 1
            elif f.kind == CATEGORICAL and self.embedded:
                out = self.emb_dims[f.name]
            else:
                out = f.cardinality
            self.heads[f.name] = dense(hdim, out, f"dec.head.{f.name}")

    @classmethod
    def build(cls, schema: Schema, config: TrainConfig, rng: nn.Rng | None) -> "CardiCat":
        if config.mode == "conditional" and not _is_prepared(schema):
            schema = conditional_prepare(schema)
        return cls(schema, config, rng)

    # ---- structure -------------------------------------------------------

    def real_cardinality(self, name: str) -> int:
        f = self.schema[name]
        if self.mode == "conditional" and f.kind == CATEGORICAL:
            return f.cardinality - 1
        return f.cardinality

    def mask_code(self, name: str) -> int:
        if self.mode != "conditional":
            raise SchemaError("mask levels exist only in conditional mode")
        return self.schema[name].cardinality - 1

    def input_width(self, name: str) -> int:
        f = self.schema[name]
        if f.kind == NUMERICAL:
            return 1
        if f.kind == CATEGORICAL and self.embedded:
            return self.emb_dims[f.name]
        return f.cardinality

    def parameter_count(self) -> int:
        return self.store.count()

    # ---- data ------------------------------------------------------------

    def batch_from(self, data: EncodedDataset) -> Batch:
        if data.schema.names != self.schema.names:
            raise SchemaError("dataset features do not match the model schema")
        codes, numeric = {}, {}
        for f, col in zip(self.schema, data.columns):
            if f.kind == NUMERICAL:
                numeric[f.name] = np.asarray(col, dtype=self.dtype)
            else:
                col = np.asarray(col, dtype=np.int64)
                if len(col) and (col.min() < 0 or col.max() >= self.real_cardinality(f.name)):
                    raise SchemaError(f"{f.name}: label code out of range")
                codes[f.name] = col
        return Batch(codes, numeric, len(data))

    def conditional_codes(self, condition: Mapping[str, str] | None, n: int = 1) -> dict:
        """Per-feature code arrays for a fixed partial assignment of categorical features."""
        condition = dict(condition or {})
        out = {}
        for f in self.categorical:
            if f.name in condition:
                level = condition.pop(f.name)
                try:
                    code = f.levels.index(level)
                except ValueError:
                    raise SchemaError(f"{f.name}: unknown level {level!r}") from None
                if code == self.mask_code(f.name):
                    raise SchemaError(f"{f.name}: cannot condition on the mask level")
            else:
                code = self.mask_code(f.name)
            out[f.name] = np.full(n, code, dtype=np.int64)
        for name in condition:
            if name not in self.schema.names:
                raise SchemaError(f"unknown feature {name!r} in condition")
            raise SchemaError(f"{name}: only categorical features can be conditioned on")
        return out

    def conditional_matrix(self, cond_codes: Mapping[str, np.ndarray]) -> np.ndarray:
        """Frozen concatenation of embedding rows; no gradient reaches the tables."""
        parts = [self.embeddings[f.name].data[cond_codes[f.name]] for f in self.categorical]
        return np.concatenate(parts, axis=1).astype(self.dtype, copy=True)

    # ---- forward ---------------------------------------------------------

    def _encoder_input(self, batch: Batch, cond: np.ndarray | None) -> T.Tensor:
        parts = []
        for f in self.schema:
            if f.kind == NUMERICAL:
                parts.append(T.Tensor(batch.numeric[f.name].reshape(-1, 1)))
            elif f.kind == CATEGORICAL and self.embedded:
                parts.append(T.gather_rows(self.embeddings[f.name], batch.codes[f.name]))
            else:
                parts.append(T.Tensor(one_hot_matrix(batch.codes[f.name], f.cardinality,
                                                     self.dtype)))
        if self.cond_width:
            parts.append(T.Tensor(self._cond_or_mask(cond, batch.n)))
        return T.concat(parts, axis=1)

    def _cond_or_mask(self, cond, n):
        if cond is None:
            return self.conditional_matrix(self.conditional_codes(None, n))
        cond = np.asarray(cond, dtype=self.dtype)
        if cond.shape != (n, self.cond_width):
            raise ValueError(f"conditional input must be ({n}, {self.cond_width})")
        return cond

    def encode_hidden(self, batch: Batch, cond=None) -> tuple[T.Tensor, T.Tensor]:
        """Return (mu, logvar) for a batch."""
        x = self._encoder_input(batch, cond)
        h = T.relu(self.enc_in(x))
        h = T.relu(self.enc_hidden(h))
        return self.enc_mu(h), self.enc_logvar(h)

    def decode(self, z, cond=None) -> Decoded:
        z = T.as_tensor(z)
        if self.cond_width:
            z = T.concat([z, T.Tensor(self._cond_or_mask(cond, z.shape[0]))], axis=1)
        h = T.relu(self.dec_in(z))
        h = T.relu(self.dec_hidden(h))
        embs, nums, logits = {}, {}, {}
        for f in self.schema:
            out = self.heads[f.name](h)
            if f.kind == NUMERICAL:
                nums[f.name] = T.tanh(out) if self.config.numeric_head == "tanh" else out
            elif f.kind == CATEGORICAL and self.embedded:
                embs[f.name] = T.tanh(out)
            else:
                logits[f.name] = out
        return Decoded(embs, nums, logits)

    def loss(self, batch: Batch, eps: np.ndarray, cond=None) -> LossTerms:
        if batch.n < 1:
            raise ValueError("empty batch")
        mu, logvar = self.encode_hidden(batch, cond)
        sigma = T.exp(logvar * 0.5)
        z = nn.reparameterize(mu, sigma, eps)
        out = self.decode(z, cond)

        per_row = None
        for f in self.schema:
            if f.kind == NUMERICAL:
                diff = T.Tensor(batch.numeric[f.name].reshape(-1, 1)) - out.numeric[f.name]
                term = T.square(diff).sum(axis=1)
            elif f.kind == CATEGORICAL and self.embedded:
                target = T.gather_rows(self.embeddings[f.name], batch.codes[f.name])
                term = T.square(target - out.embeddings[f.name]).sum(axis=1)
            else:
                onehot = one_hot_matrix(batch.codes[f.name], f.cardinality, self.dtype)
                term = -(T.log_softmax(out.logits[f.name]) * onehot).sum(axis=1)
            per_row = term if per_row is None else per_row + term
        recon = per_row.mean()
        kl = ((T.square(mu) + T.exp(logvar) - logvar - 1.0).sum(axis=1) * 0.5).mean()
        reg = self.regularizer()
        total = combine(recon, kl, reg, self.config)
        for name, t in (("recon", recon), ("kl", kl), ("reg", reg), ("total", total)):
            if not np.isfinite(t.data):
                raise NumericalError(f"non-finite {name} loss ({t.item()})")
        return LossTerms(total, recon, kl, reg)

    def regularizer(self) -> T.Tensor:
        if not self.embeddings:
            return T.Tensor(np.zeros((), dtype=self.dtype))
        acc = None
        for name, table in self.embeddings.items():
            drift = T.square(coordinate_variance(table) - self.v0[name])
            acc = drift if acc is None else acc + drift
        return acc * (1.0 / len(self.embeddings))

    def variance_drift(self) -> dict:
        """|V_j - V_j^0| per embedded feature, for diagnostics."""
        return {n: abs(coordinate_variance(t.data.astype(np.float64)) - self.v0[n])
                for n, t in self.embeddings.items()}

    # ---- persistence -----------------------------------------------------

    def header(self) -> dict:
        return {
            "kind": "cardicat-checkpoint",
            "schema": self.schema.to_dict(),
            "schema_hash": self.schema.hash(),
            "config": self.config.to_dict(),
            "v0": {k: float(v) for k, v in self.v0.items()},
        }

    def save(self, path, extra: Mapping | None = None) -> None:
        head = self.header()
        if extra:
            head["extra"] = dict(extra)
        nn.write_params(path, self.store.state(), head)

    @classmethod
    def load(cls, path) -> tuple["CardiCat", dict]:
        head, arrays = nn.read_params(path)
        if head.get("kind") != "cardicat-checkpoint":
            raise CheckpointError(f"{path}: not a CardiCat checkpoint")
        schema = Schema.from_dict(head["schema"])
        if schema.hash() != head.get("schema_hash"):
            raise CheckpointError(f"{path}: embedded schema does not match its hash")
        config = TrainConfig.from_dict(head["config"])
        model = cls(schema, config, None)
        if list(arrays) != model.store.names():
            raise CheckpointError(f"{path}: parameter layout does not match the schema")
        for name, arr in arrays.items():
            p = model.store[name]
            if p.data.shape != arr.shape:
                raise CheckpointError(f"{path}: shape mismatch for {name}")
            p.data[...] = arr
        model.v0 = {k: float(v) for k, v in head["v0"].items()}
        return model, head.get("extra", {})


def _is_prepared(schema: Schema) -> bool:
    cats = schema.of_kind(CATEGORICAL)
    return bool(cats) and all(f.levels[-1] == MASK_LEVEL for f in cats)


def combine(recon, kl, reg, config: TrainConfig):
    return recon * config.loss_factor + kl * config.lambda_kl + reg * config.lambda_reg


def init_model(schema: Schema, config: TrainConfig, rng: nn.Rng) -> CardiCat:
    return CardiCat.build(schema, config, rng)


def encode_batch(model: CardiCat, data: EncodedDataset | Batch, cond=None):
    """(mu, sigma) as arrays of shape (batch, latent_dim)."""
    batch = data if isinstance(data, Batch) else model.batch_from(data)
    mu, logvar = model.encode_hidden(batch, cond)
    return mu.data, np.exp(0.5 * logvar.data)


def decode_batch(model: CardiCat, z: np.ndarray, cond=None) -> Decoded:
    return model.decode(np.asarray(z, dtype=model.dtype), cond)


def conditional_vector(model: CardiCat, condition: Mapping[str, str] | None) -> np.ndarray:
    return model.conditional_matrix(model.conditional_codes(condition, 1))[0]


__all__ = [
    "Batch", "CardiCat", "Decoded", "LossTerms", "MODES", "TrainConfig", "combine",
    "conditional_prepare", "conditional_vector", "coordinate_variance", "decode_batch",
    "embedding_dim", "encode_batch", "init_model",
]
