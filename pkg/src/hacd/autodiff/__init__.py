"""Reverse-mode differentiation over dense float64 tensors."""

from .tensor import (
    Tensor,
    add,
    as_tensor,
    concat,
    cosine_similarity,
    detach,
    div,
    exp,
    getitem,
    l2_normalize,
    matmul,
    max_over,
    mean_over,
    mul,
    neg,
    no_grad,
    power,
    relu,
    reshape,
    sigmoid,
    sqrt,
    stop_gradient,
    sum_over,
    transpose,
)
from .conv import conv3d, conv3d_output_shape
from .nn import BatchNormState, batchnorm, batchnorm3d, linear, parameter
from .optim import OptimizerState, cosine_lr, sgd_step
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import max_relative_error, numerical_grad
