"""Minimal reverse-mode autodiff: just the ops the s-rep network needs."""
from . import kernels
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import check_gradients, numerical_gradient, relative_error
from .optim import Adam, AdamState, adam_step
from .tensor import (
    Parameter,
    Tensor,
    add,
    as_tensor,
    concat,
    conv3d,
    exp,
    gaussian_sample,
    getitem,
    layer_norm,
    linear,
    log,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    sparse_dense_matmul,
    square,
    sub,
    sum,
    transpose,
)

BACKEND = kernels.BACKEND
