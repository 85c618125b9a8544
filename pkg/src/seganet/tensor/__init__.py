"""Minimal tensor engine with reverse-mode autodiff."""
from .gradcheck import grad_check
from .ops import (
    add,
    as_tensor,
    concat_channels,
    conv2d,
    conv_transpose2d,
    crop2d,
    instance_norm,
    make_result,
    prelu,
    sigmoid,
    slice_channels,
)
from .tensor import Node, Tensor

__all__ = [
    "Node",
    "Tensor",
    "add",
    "as_tensor",
    "concat_channels",
    "conv2d",
    "conv_transpose2d",
    "crop2d",
    "grad_check",
    "instance_norm",
    "make_result",
    "prelu",
    "sigmoid",
    "slice_channels",
]
