from .tensor import Tape, Tensor, backward, parameter, recording
from .ops import (
    concat,
    conv3d,
    fully_connected,
    max_pool3d,
    mse_loss,
    relu,
    reshape,
    sigmoid,
    take,
    upsample_nearest3d,
)
from .optim import SGD, Adam, OptimizerState
from .module import Module

__all__ = [
    "Tape", "Tensor", "backward", "parameter", "recording",
    "concat", "conv3d", "fully_connected", "max_pool3d", "mse_loss", "relu",
    "reshape", "sigmoid", "take", "upsample_nearest3d",
    "SGD", "Adam", "OptimizerState", "Module",
]
