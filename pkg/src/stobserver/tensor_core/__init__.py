"""Tensor type, differentiable operators and numerical verification tools."""

from .gradcheck import finite_diff_check
from .ops import (
    center_pad_kernel,
    clamp,
    conv2d,
    conv_transpose2d,
    group_norm,
    hadamard,
    leaky_relu,
    sigmoid,
)
from .params import Module, Parameter, initialize
from .spectral import SpectralEstimate, spectral_norm
from .tensor import Tape, Tensor, backward, concat, no_grad, square, stack, tabs

__all__ = [
    "Module",
    "Parameter",
    "SpectralEstimate",
    "Tape",
    "Tensor",
    "backward",
    "center_pad_kernel",
    "clamp",
    "concat",
    "conv2d",
    "conv_transpose2d",
    "finite_diff_check",
    "group_norm",
    "hadamard",
    "initialize",
    "leaky_relu",
    "no_grad",
    "sigmoid",
    "spectral_norm",
    "square",
    "stack",
    "tabs",
]
