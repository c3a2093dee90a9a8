"""A small reverse-mode tensor engine with the layers FerretNet needs."""
from . import functional
from .checkpoint import CheckpointError, load_checkpoint, read_checkpoint, save_checkpoint
from .gradcheck import finite_diff_gradcheck
from .layers import (
    BatchNorm2d,
    Conv2d,
    Dropout,
    GlobalAvgPool,
    Linear,
    Module,
    ReLU,
    Sequential,
    flops_count,
    param_count,
)
from .optim import Adam
from .tensor import Parameter, Tensor, default_dtype, no_grad

__all__ = [
    "Adam",
    "BatchNorm2d",
    "CheckpointError",
    "Conv2d",
    "Dropout",
    "GlobalAvgPool",
    "Linear",
    "Module",
    "Parameter",
    "ReLU",
    "Sequential",
    "Tensor",
    "default_dtype",
    "finite_diff_gradcheck",
    "flops_count",
    "functional",
    "load_checkpoint",
    "no_grad",
    "param_count",
    "read_checkpoint",
    "save_checkpoint",
]
