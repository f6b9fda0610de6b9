"""Embedding-based variational autoencoder for mixed-type tabular data."""

from .errors import CardiCatError, CheckpointError, DataError, NumericalError, SchemaError
from .fidelity import FidelityReport, evaluate
from .model import CardiCat, TrainConfig, conditional_prepare, init_model
from .schema import Schema, encode, infer_schema, read_csv, split, write_csv
from .simgen import SimSpec, simulate
from .synthesis import conditional_sample, generate, sample
from .train import train

__version__ = "0.1.0"

__all__ = [
    "CardiCat", "CardiCatError", "CheckpointError", "DataError", "FidelityReport",
    "NumericalError", "Schema", "SchemaError", "SimSpec", "TrainConfig", "conditional_prepare",
    "conditional_sample", "encode", "evaluate", "generate", "infer_schema", "init_model",
    "read_csv", "sample", "simulate", "split", "train", "write_csv",
]
