"""Minimal dense-tensor library with reverse-mode autodiff (float64)."""

from avsep.ndgrad._kernels import BACKEND as kernel_backend
from avsep.ndgrad.checkpoint import load_checkpoint, save_checkpoint
from avsep.ndgrad.optim import Adam, OptimizerState, adam_step
from avsep.ndgrad.ops import (
    add,
    batch_norm,
    concat_channels,
    concat_rows,
    conv2d,
    conv_transpose2d,
    cosine_rows,
    cosine_similarity,
    global_avg_pool,
    l1_loss,
    leaky_relu,
    linear,
    mean_all,
    mul,
    relu,
    scale,
    sigmoid,
    slice_rows,
    sub,
    sum_channels,
    tile_spatial,
)
from avsep.ndgrad.tensor import Tape, Tensor

__all__ = [
    "Adam",
    "OptimizerState",
    "Tape",
    "Tensor",
    "adam_step",
    "add",
    "batch_norm",
    "concat_channels",
    "concat_rows",
    "conv2d",
    "conv_transpose2d",
    "cosine_rows",
    "cosine_similarity",
    "global_avg_pool",
    "kernel_backend",
    "l1_loss",
    "leaky_relu",
    "linear",
    "load_checkpoint",
    "mean_all",
    "mul",
    "relu",
    "save_checkpoint",
    "scale",
    "sigmoid",
    "slice_rows",
    "sub",
    "sum_channels",
    "tile_spatial",
]
