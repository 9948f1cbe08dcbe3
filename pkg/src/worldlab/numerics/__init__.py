"""Differentiable array computation on numpy: tensors, ops, Adam, grad checking.

32-bit floats are the training dtype; verification runs the same code on
64-bit data (ops are dtype-agnostic). Operations never mutate their inputs,
and summation orders are fixed so identical inputs give bit-identical outputs.
"""

from .tensor import (
    Tensor,
    as_tensor,
    parameter,
    concat,
    narrow,
    split,
    softmax,
    layer_norm,
    gelu,
    relu,
    sigmoid,
    elu_plus_one,
    softplus,
    exp,
    log,
    sqrt,
    embedding_lookup,
    masked_fill,
)
from .conv import conv2d
from .optim import Adam
from .gradcheck import grad_check, with_dtype

__all__ = [
    "Tensor",
    "as_tensor",
    "parameter",
    "concat",
    "narrow",
    "split",
    "softmax",
    "layer_norm",
    "gelu",
    "relu",
    "sigmoid",
    "elu_plus_one",
    "softplus",
    "exp",
    "log",
    "sqrt",
    "embedding_lookup",
    "masked_fill",
    "conv2d",
    "Adam",
    "grad_check",
    "with_dtype",
]
