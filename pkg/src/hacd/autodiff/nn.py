"""Layer-level building blocks: batch normalization and parameter helpers."""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateError, ShapeError
from .tensor import Tensor, _result, as_tensor, is_grad_enabled

BN_MOMENTUM = 0.1


class BatchNormState:
    """Running mean/variance for one batch-norm layer (not trainable)."""

    def __init__(self, channels: int):
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)


def batchnorm(x, gamma, beta, state: BatchNormState | None = None, training: bool = True, eps: float = 1e-5) -> Tensor:
    """Normalize ``x`` [N, C, ...] per channel over every other axis.

    In training mode batch statistics are used and ``state`` (if given) is
    updated by an exponential moving average with momentum 0.1, storing the
    unbiased variance. In eval mode the running statistics are used.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    if x.ndim < 2:
        raise ShapeError(f"batchnorm expects [N, C, ...], got {x.shape}")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"batchnorm: gamma/beta must have shape ({c},)")
    axes = (0,) + tuple(range(2, x.ndim))
    bshape = (1, c) + (1,) * (x.ndim - 2)
    count = x.size // c

    if training:
        if count < 2:
            raise DegenerateError(f"batchnorm in train mode needs >= 2 values per channel, got {count}")
        mean = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        if state is not None and is_grad_enabled():
            state.running_mean = (1 - BN_MOMENTUM) * state.running_mean + BN_MOMENTUM * mean
            state.running_var = (1 - BN_MOMENTUM) * state.running_var + BN_MOMENTUM * var * count / (count - 1)
    else:
        if state is None:
            raise ValueError("eval-mode batchnorm needs running statistics")
        mean, var = state.running_mean, state.running_var

    invstd = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean.reshape(bshape)) * invstd.reshape(bshape)
    out = gamma.data.reshape(bshape) * xhat + beta.data.reshape(bshape)

    def vjp(g):
        dgamma = (g * xhat).sum(axis=axes)
        dbeta = g.sum(axis=axes)
        gh = g * gamma.data.reshape(bshape)
        if training:
            s1 = gh.sum(axis=axes, keepdims=True)
            s2 = (gh * xhat).sum(axis=axes, keepdims=True)
            dx = invstd.reshape(bshape) / count * (count * gh - s1 - xhat * s2)
        else:
            dx = gh * invstd.reshape(bshape)
        return dx, dgamma, dbeta

    return _result(out, (x, gamma, beta), vjp)


def batchnorm3d(x, gamma, beta, state=None, training=True, eps=1e-5) -> Tensor:
    if as_tensor(x).ndim != 5:
        raise ShapeError(f"batchnorm3d expects [N, C, D, H, W], got {as_tensor(x).shape}")
    return batchnorm(x, gamma, beta, state, training, eps)


def linear(x, weight, bias=None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored as [in, out]."""
    out = as_tensor(x) @ weight
    return out + bias if bias is not None else out


def parameter(data, name: str) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)
