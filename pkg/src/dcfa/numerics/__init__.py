from .fused import sampled_attention, sampled_dot
from .gradcheck import GradCheckEntry, GradCheckReport, grad_check, relative_error
from .tensor import (
    DimensionError,
    Tape,
    Tensor,
    add,
    concat,
    constant,
    elementwise,
    layer_norm,
    matmul,
    mean,
    mul,
    parameter,
    relu,
    reshape,
    row_norm,
    row_softmax,
    scale,
    sigmoid,
    slice_axis,
    softplus,
    sub,
    sum_axis,
    take,
    tanh,
    total,
    transpose,
)

__all__ = [
    "DimensionError", "GradCheckEntry", "GradCheckReport", "Tape", "Tensor",
    "add", "concat", "constant", "elementwise", "grad_check", "layer_norm",
    "matmul", "mean", "mul", "parameter", "relative_error", "relu", "reshape",
    "row_norm", "row_softmax", "sampled_attention", "sampled_dot", "scale", "sigmoid", "slice_axis", "softplus", "sub",
    "sum_axis", "take", "tanh", "total", "transpose",
]
