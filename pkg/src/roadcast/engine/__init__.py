"""A small dense-tensor engine: ops, reverse-mode gradients, Adam."""
from roadcast.engine.ops import (
    BatchNormState, add, batchnorm, concat, conv2d, dense, flatten, l2_penalty, lstm,
    maxpool2, mean_all, mul, relu, sigmoid, sum_all, take_rows, weighted_bce,
)
from roadcast.engine.optim import Adam, EarlyStopping, PlateauSchedule
from roadcast.engine.tensor import (
    NonFiniteError, Parameter, Tensor, backward, get_dtype, no_grad, precision,
)

__all__ = [
    "Adam", "BatchNormState", "EarlyStopping", "NonFiniteError", "Parameter", "PlateauSchedule",
    "Tensor", "add", "backward", "batchnorm", "concat", "conv2d", "dense", "flatten",
    "get_dtype", "l2_penalty", "lstm", "maxpool2", "mean_all", "mul", "no_grad", "precision",
    "relu", "sigmoid", "sum_all", "take_rows", "weighted_bce",
]
