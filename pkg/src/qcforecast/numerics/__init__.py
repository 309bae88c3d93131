"""Deterministic RNG, normal special functions, triangular linear algebra,
and the minimal reverse-mode autodiff core."""

from .autodiff import (
    Tape,
    Tensor,
    add,
    assemble_lower_tri,
    broadcast_to,
    clip_min,
    concat_last,
    div,
    exp,
    grad_check,
    log,
    log_det_lower_tri,
    lower_tri_solve,
    matmul,
    mul,
    neg,
    normal_cdf,
    reduce_mean,
    reduce_sum,
    relu,
    reshape,
    slice_last,
    sqrt,
    sub,
    tanh,
    tri_diagonal,
    value_of,
)
from .rng import RngState, sample_std_normal
from .special import (
    normal_cdf as normal_cdf_array,
    normal_pdf,
    normal_quantile as normal_quantile_array,
    std_normal_cdf,
    std_normal_quantile,
)

__all__ = [
    "Tape",
    "Tensor",
    "RngState",
    "sample_std_normal",
    "std_normal_cdf",
    "std_normal_quantile",
    "normal_cdf_array",
    "normal_quantile_array",
    "normal_pdf",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "tanh",
    "exp",
    "log",
    "sqrt",
    "relu",
    "clip_min",
    "normal_cdf",
    "reduce_sum",
    "reduce_mean",
    "reshape",
    "broadcast_to",
    "concat_last",
    "slice_last",
    "lower_tri_solve",
    "tri_diagonal",
    "log_det_lower_tri",
    "assemble_lower_tri",
    "grad_check",
    "value_of",
]
