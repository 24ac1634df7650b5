from .gradcheck import GradCheckReport, NondeterministicBuilderError, grad_check, numerical_gradient
from .optim import Adam, AdamState, adam_step, clip_grad_norm
from .tensor import (
    ShapeError,
    Tape,
    Tensor,
    abs_,
    add,
    backward,
    layer_norm,
    map_elementwise,
    matmul,
    maxpool1d,
    mean,
    mse_loss,
    mul,
    relu,
    reshape,
    scale,
    softmax_rows,
    sub,
    sum_,
    tensor,
    transpose,
)

__all__ = [
    "Adam",
    "AdamState",
    "GradCheckReport",
    "NondeterministicBuilderError",
    "ShapeError",
    "Tape",
    "Tensor",
    "abs_",
    "adam_step",
    "add",
    "backward",
    "clip_grad_norm",
    "grad_check",
    "layer_norm",
    "map_elementwise",
    "matmul",
    "maxpool1d",
    "mean",
    "mse_loss",
    "mul",
    "numerical_gradient",
    "relu",
    "reshape",
    "scale",
    "softmax_rows",
    "sub",
    "sum_",
    "tensor",
    "transpose",
]
