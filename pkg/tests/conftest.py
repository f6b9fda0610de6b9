import numpy as np
import pytest

from cardicat import nn
from cardicat.model import TrainConfig, init_model
from cardicat.schema import BINARY, CATEGORICAL, NUMERICAL, EncodedDataset, FeatureSpec, Schema


def toy_schema() -> Schema:
    """1 categorical (c=4), 1 binary, 1 numerical."""
    return Schema((
        FeatureSpec("cat", CATEGORICAL, ("a", "b", "c", "d")),
        FeatureSpec("bin", BINARY, ("no", "yes")),
        FeatureSpec("num", NUMERICAL, mean=0.0, sd=1.0),
    ))


def toy_data(schema: Schema, n: int, seed: int = 0) -> EncodedDataset:
    rng = np.random.default_rng(seed)
    cols = []
    for f in schema:
        if f.kind == NUMERICAL:
            cols.append(rng.normal(size=n))
        else:
            cols.append(rng.integers(0, f.cardinality, size=n))
    return EncodedDataset(schema, tuple(cols))


def toy_config(**kw) -> TrainConfig:
    base = dict(latent_dim=3, hidden_dim=6, embedding_dims={"cat": 2}, precision="float64",
                batch_size=5, epochs=1, seed=0)
    base.update(kw)
    return TrainConfig(**base)


@pytest.fixture
def toy():
    schema = toy_schema()
    cfg = toy_config()
    model = init_model(schema, cfg, nn.Rng(3))
    return model, toy_data(schema, 5, seed=1)


def numeric_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. array ``x`` (perturbed in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Tensor-wise relative error ||a - b|| / max(||a||, ||b||)."""
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)
    return float(np.linalg.norm(a - b) / denom)
