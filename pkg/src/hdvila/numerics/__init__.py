"""Minimal dense-tensor library: float32 arrays, tape autodiff, NN kernels."""

from .tensor import (
    NumericError,
    ShapeError,
    Tape,
    Tensor,
    active_tape,
    add,
    as_tensor,
    assert_finite,
    backward,
    concat,
    div,
    exp,
    gather_index,
    log,
    matmul,
    mul,
    neg,
    reshape,
    sqrt,
    sub,
    take,
    tensor_mean,
    tensor_sum,
    transpose,
)
from .kernels import (
    conv2d,
    embedding,
    gelu,
    interpolate_bilinear,
    l2_normalize,
    layer_norm,
    linear,
    log_softmax,
    max_pool2d,
    softmax,
)
from .gradcheck import finite_diff_check

__all__ = [
    "NumericError",
    "ShapeError",
    "Tape",
    "Tensor",
    "active_tape",
    "add",
    "as_tensor",
    "assert_finite",
    "backward",
    "concat",
    "conv2d",
    "div",
    "embedding",
    "exp",
    "finite_diff_check",
    "gather_index",
    "gelu",
    "interpolate_bilinear",
    "l2_normalize",
    "layer_norm",
    "linear",
    "log",
    "log_softmax",
    "matmul",
    "max_pool2d",
    "mul",
    "neg",
    "reshape",
    "softmax",
    "sqrt",
    "sub",
    "take",
    "tensor_mean",
    "tensor_sum",
    "transpose",
]
