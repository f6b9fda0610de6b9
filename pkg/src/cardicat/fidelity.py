"""Marginal and pairwise fidelity scores between a real and a synthetic table.

All scores are complements of a distance, so 1.0 means a perfect match:

* numerical marginals: 1 - two-sample KS statistic
* discrete marginals: 1 - total variation distance of the level frequencies
* discrete pairs: 1 - TVD of the joint contingency table
* numerical pairs: 1 - |corr_real - corr_synth| / 2 (Pearson)
* mixed pairs: 1 - sum over levels of real frequency times the KS statistic of
  the numerical column restricted to that level (1 when the synthetic data
  never produces the level)
"""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SchemaError
from .schema import NUMERICAL, EncodedDataset, Schema, Table, encode

AGGREGATES = ("marginal_categorical", "marginal_numerical", "pairs_categorical",
              "pairs_mixed", "pairs_correlation")


def _nonempty(*cols):
    for c in cols:
        if len(c) == 0:
            raise ValueError("empty sample")


def ks_statistic(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=np.float64))
    b = np.sort(np.asarray(b, dtype=np.float64))
    _nonempty(a, b)
    support = np.concatenate([a, b])
    fa = np.searchsorted(a, support, side="right") / len(a)
    fb = np.searchsorted(b, support, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


def ks_score(real_col, synth_col) -> float:
    return 1.0 - ks_statistic(real_col, synth_col)


def _frequencies(values: np.ndarray, support: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(support, values)
    return np.bincount(idx, minlength=len(support)) / len(values)


def tvd_score(real_col, synth_col, levels=None) -> float:
    """``levels`` may restrict/extend the support; absent levels get probability 0."""
    real, synth = np.asarray(real_col), np.asarray(synth_col)
    _nonempty(real, synth)
    support = np.unique(np.concatenate([real, synth]))
    if levels is not None:
        extra = np.setdiff1d(support, np.asarray(levels))
        if len(extra):
            raise ValueError(f"values outside the declared levels: {extra[:5]}")
    tvd = 0.5 * np.abs(_frequencies(real, support) - _frequencies(synth, support)).sum()
    return float(1.0 - tvd)


def _joint_codes(a, b):
    a, b = np.asarray(a), np.asarray(b)
    if len(a) != len(b):
        raise ValueError("pair columns differ in length")
    return a, b


def pair_tvd_score(real_pair, synth_pair) -> float:
    ra, rb = _joint_codes(*real_pair)
    sa, sb = _joint_codes(*synth_pair)
    _nonempty(ra, sa)
    ua = np.unique(np.concatenate([ra, sa]))
    ub = np.unique(np.concatenate([rb, sb]))
    width = len(ub)

    def joint(x, y):
        cell = np.searchsorted(ua, x) * width + np.searchsorted(ub, y)
        return np.bincount(cell, minlength=len(ua) * width) / len(x)

    return float(1.0 - 0.5 * np.abs(joint(ra, rb) - joint(sa, sb)).sum())


def pearson(x, y) -> float | None:
    """Pearson correlation, or None when either column is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return None
    return float(np.clip((dx @ dy) / np.sqrt(sxx * syy), -1.0, 1.0))


def corr_score(real_pair, synth_pair) -> float | None:
    """None when a correlation is undefined (constant column)."""
    _nonempty(real_pair[0], synth_pair[0])
    r = pearson(*real_pair)
    s = pearson(*synth_pair)
    if r is None or s is None:
        return None
    return 1.0 - abs(r - s) / 2.0


def mixed_score(real_cat, real_num, synth_cat, synth_num) -> float:
    real_cat, synth_cat = np.asarray(real_cat), np.asarray(synth_cat)
    real_num = np.asarray(real_num, dtype=np.float64)
    synth_num = np.asarray(synth_num, dtype=np.float64)
    if len(real_cat) == 0:
        raise ValueError("empty real sample")
    levels, counts = np.unique(real_cat, return_counts=True)
    weights = counts / len(real_cat)
    penalty = 0.0
    for level, w in zip(levels, weights):
        synth_vals = synth_num[synth_cat == level]
        if len(synth_vals) == 0:
            ks = 1.0
        else:
            ks = ks_statistic(real_num[real_cat == level], synth_vals)
        penalty += w * ks
    return float(1.0 - penalty)


@dataclass
class FidelityReport:
    marginals: dict = field(default_factory=dict)   # name -> {"metric", "score"}
    pairs: list = field(default_factory=list)       # {"a", "b", "kind", "score"}
    aggregates: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"marginals": self.marginals, "pairs": self.pairs, "aggregates": self.aggregates}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    def write_summary_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(AGGREGATES)
            w.writerow(["" if self.aggregates[k] is None else repr(self.aggregates[k])
                        for k in AGGREGATES])

    def scores(self) -> list[float]:
        """Every defined score, marginal and pairwise."""
        out = [m["score"] for m in self.marginals.values()]
        out += [p["score"] for p in self.pairs if p["score"] is not None]
        return out


def _mean(xs):
    xs = [x for x in xs if x is not None]
    return float(np.mean(xs)) if xs else None


def _as_encoded(schema: Schema, data) -> EncodedDataset:
    if isinstance(data, EncodedDataset):
        if data.schema.names != schema.names:
            raise SchemaError("dataset features do not match the schema")
        return data
    if isinstance(data, Table):
        return encode(schema, data)
    raise TypeError("expected a Table or EncodedDataset")


def evaluate(schema: Schema, real, synth) -> FidelityReport:
    """Score ``synth`` against ``real`` feature-by-feature and pair-by-pair.

    Binary and categorical features are both scored as discrete. Pairs are
    every unordered feature pair in schema order.
    """
    real = _as_encoded(schema, real)
    synth = _as_encoded(schema, synth)
    report = FidelityReport()
    by_kind = {"categorical": [], "numerical": [], "cat-cat": [], "cat-num": [], "num-num": []}
    for f, r, s in zip(schema, real.columns, synth.columns):
        if f.kind == NUMERICAL:
            score, metric, key = ks_score(r, s), "ks", "numerical"
        else:
            score, metric, key = tvd_score(r, s), "tvd", "categorical"
        report.marginals[f.name] = {"metric": metric, "score": score}
        by_kind[key].append(score)

    feats = list(zip(schema, real.columns, synth.columns))
    for (fa, ra, sa), (fb, rb, sb) in itertools.combinations(feats, 2):
        na, nb = fa.kind == NUMERICAL, fb.kind == NUMERICAL
        if not na and not nb:
            kind, score = "cat-cat", pair_tvd_score((ra, rb), (sa, sb))
        elif na and nb:
            kind, score = "num-num", corr_score((ra, rb), (sa, sb))
        elif nb:
            kind, score = "cat-num", mixed_score(ra, rb, sa, sb)
        else:
            kind, score = "cat-num", mixed_score(rb, ra, sb, sa)
        report.pairs.append({"a": fa.name, "b": fb.name, "kind": kind, "score": score})
        by_kind[kind].append(score)

    report.aggregates = {
        "marginal_categorical": _mean(by_kind["categorical"]),
        "marginal_numerical": _mean(by_kind["numerical"]),
        "pairs_categorical": _mean(by_kind["cat-cat"]),
        "pairs_mixed": _mean(by_kind["cat-num"]),
        "pairs_correlation": _mean(by_kind["num-num"]),
    }
    return report
