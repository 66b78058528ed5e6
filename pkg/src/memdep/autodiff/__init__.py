"""Dense float64 tensors with reverse-mode gradients, Adam and checkpoints."""

from .checkpoint import load_parameters, save_parameters
from .gradcheck import check_gradients, numeric_gradient, relative_error
from .optim import Adam
from .tensor import (
    ShapeError,
    Tensor,
    add,
    as_tensor,
    bce_with_logits,
    concat,
    cross_entropy,
    dropout,
    embedding,
    exp,
    getitem,
    layer_norm,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    no_grad,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax,
    squared_error,
    sub,
    tabs,
    tanh,
    tmax,
    transpose,
    tsum,
)

__all__ = [
    "Adam",
    "ShapeError",
    "Tensor",
    "add",
    "as_tensor",
    "bce_with_logits",
    "check_gradients",
    "concat",
    "cross_entropy",
    "dropout",
    "embedding",
    "exp",
    "getitem",
    "layer_norm",
    "load_parameters",
    "log",
    "log_softmax",
    "matmul",
    "mean",
    "mul",
    "no_grad",
    "numeric_gradient",
    "relative_error",
    "relu",
    "reshape",
    "save_parameters",
    "scale",
    "sigmoid",
    "softmax",
    "squared_error",
    "sub",
    "tabs",
    "tanh",
    "tmax",
    "transpose",
    "tsum",
]
