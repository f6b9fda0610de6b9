"""Minibatch training loop."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .model import Batch, CardiCat, TrainConfig
from .schema import EncodedDataset

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "recon", "kl", "reg", "total")


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)

    def append(self, epoch: int, terms: dict) -> None:
        self.rows.append({"epoch": epoch, **terms})

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LOG_COLUMNS)
            for r in self.rows:
                w.writerow([r["epoch"]] + [repr(float(r[k])) for k in LOG_COLUMNS[1:]])


def sample_self_conditions(model: CardiCat, batch: Batch, rng: nn.Rng) -> dict:
    """Per row, condition on one categorical feature's own value, or on nothing.

    The choice is uniform over the categorical features plus the empty
    condition, so the all-mask input is seen during training too.
    """
    feats = model.categorical
    choice = rng.integers(0, len(feats) + 1, size=batch.n)
    codes = {}
    for j, f in enumerate(feats):
        mask = np.full(batch.n, model.mask_code(f.name), dtype=np.int64)
        hit = choice == j
        mask[hit] = batch.codes[f.name][hit]
        codes[f.name] = mask
    return codes


def train(model: CardiCat, data: EncodedDataset | Batch, config: TrainConfig | None = None,
          rng: nn.Rng | None = None, *, epochs: int | None = None, callback=None) -> TrainLog:
    """Train ``model`` in place and return per-epoch mean loss components.

    Each epoch reshuffles the rows; the final short batch is kept. Every step
    draws fresh reparameterization noise (and, in conditional mode, fresh
    self-conditions) from ``rng``.
    """
    config = config or model.config
    rng = rng or nn.Rng(config.seed)
    batch_all = data if isinstance(data, Batch) else model.batch_from(data)
    n = batch_all.n
    if n < 1:
        raise ValueError("no training rows")
    opt = nn.Adam(model.store, lr=config.lr, beta1=config.beta1, beta2=config.beta2,
                  eps=config.adam_eps)
    history = TrainLog()
    a = config.latent_dim
    for epoch in range(1, (config.epochs if epochs is None else epochs) + 1):
        perm = rng.permutation(n)
        sums = dict.fromkeys(("recon", "kl", "reg", "total"), 0.0)
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            batch = batch_all.take(idx)
            cond = None
            if model.cond_width:
                cond = model.conditional_matrix(sample_self_conditions(model, batch, rng))
            eps = rng.normal((batch.n, a), model.dtype)
            model.store.zero_grad()
            terms = model.loss(batch, eps, cond)
            terms.total.backward()
            opt.step()
            for k, v in terms.values().items():
                sums[k] += v * batch.n
        means = {k: v / n for k, v in sums.items()}
        history.append(epoch, means)
        log.info("epoch %d recon=%.4f kl=%.4f reg=%.6f total=%.4f", epoch,
                 means["recon"], means["kl"], means["reg"], means["total"])
        if callback is not None:
            callback(epoch, model, means)
    return history
