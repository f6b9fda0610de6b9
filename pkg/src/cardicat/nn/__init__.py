"""Dense-network numerical core: autodiff tensors, layers, Adam, sampling."""

from .io import read_params, write_params
from .layers import DenseLayer, dense_forward
from .optim import Adam, ParamStore, adam_step
from .random import Rng, gauss_sample, reparameterize
from .tensor import (Parameter, Tensor, concat, exp, gather_rows, linear, log, log_softmax,
                     relu, softmax, softmax_np, square, tanh)

__all__ = [
    "Adam", "DenseLayer", "ParamStore", "Parameter", "Rng", "Tensor", "adam_step", "concat",
    "dense_forward", "exp", "gather_rows", "gauss_sample", "linear", "log", "log_softmax",
    "read_params", "relu", "reparameterize", "softmax", "softmax_np", "square", "tanh",
    "write_params",
]
