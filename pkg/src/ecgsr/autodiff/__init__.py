"""Small reverse-mode differentiation core for 1-D signal networks (float64 only)."""

from .gradcheck import grad_check
from .ops import (
    add,
    cce_loss,
    concat,
    conv1d,
    dense,
    flip,
    log,
    maxpool1d,
    mean,
    mse_loss,
    mul,
    prelu,
    relu,
    reshape,
    sigmoid,
    softmax,
    sub,
    subpixel_shuffle,
    sum_,
    tanh_,
    transpose,
    unshuffle_array,
)
from .optim import Adam, AdamState, adam_step
from .recurrent import GruParams, attention_pool, bidirectional_gru, gru_cell, gru_layer
from .tensor import Tape, TapeError, Tensor, as_tensor, backward

__all__ = [
    "Adam", "AdamState", "GruParams", "Tape", "TapeError", "Tensor",
    "adam_step", "add", "as_tensor", "attention_pool", "backward", "bidirectional_gru",
    "cce_loss", "concat", "conv1d", "dense", "flip", "grad_check", "gru_cell", "gru_layer",
    "log", "maxpool1d", "mean", "mse_loss", "mul", "prelu", "relu", "reshape", "sigmoid",
    "softmax", "sub", "subpixel_shuffle", "sum_", "tanh_", "transpose", "unshuffle_array",
]
