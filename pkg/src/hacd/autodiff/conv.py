"""3-D cross-correlation with zero padding.

Two interchangeable kernels are provided. ``direct`` (the default) applies
the filter one tap at a time, contracting each strided window of the padded
input with the ``[Cout, Cin]`` weight slice; memory stays at output size.
``im2col`` gathers all taps into a column matrix, processed in batch chunks
of bounded size, and does a single matrix product per chunk; when one
sample alone would exceed that bound it falls back to ``direct``.
"""

from __future__ import annotations

import itertools

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError
from .tensor import Tensor, _result, as_tensor

# upper bound on im2col column-matrix elements per chunk (~128 MB of float64)
COLUMN_BUDGET = 1 << 24


def _triple(v):
    if isinstance(v, (int, np.integer)):
        return (int(v),) * 3
    v = tuple(int(x) for x in v)
    if len(v) != 3:
        raise ShapeError(f"expected 3 values, got {v}")
    return v


def conv3d_output_shape(in_shape, kernel_shape, stride=1, padding=0):
    """Output shape of :func:`conv3d`, raising ShapeError when it would be empty."""
    stride, padding = _triple(stride), _triple(padding)
    if len(in_shape) != 5 or len(kernel_shape) != 5:
        raise ShapeError(f"conv3d expects 5-D input and kernel, got {tuple(in_shape)} and {tuple(kernel_shape)}")
    n, cin, *spatial = in_shape
    cout, kcin, *ks = kernel_shape
    if kcin != cin:
        raise ShapeError(
            f"conv3d: input {tuple(in_shape)} has {cin} channels, kernel {tuple(kernel_shape)} expects {kcin}"
        )
    if min(stride) < 1 or min(padding) < 0:
        raise ShapeError(f"conv3d: invalid stride {stride} or padding {padding}")
    out = []
    for size, k, s, p in zip(spatial, ks, stride, padding):
        if size + 2 * p < k:
            raise ShapeError(
                f"conv3d: kernel {tuple(kernel_shape)} does not fit input {tuple(in_shape)} with padding {padding}"
            )
        out.append((size + 2 * p - k) // s + 1)
    return (n, cout, *out)


def _pad(x, padding):
    pd, ph, pw = padding
    if not any(padding):
        return x
    return np.pad(x, ((0, 0), (0, 0), (pd, pd), (ph, ph), (pw, pw)))


def _tap_slices(tap, stride, out_sp):
    return tuple(slice(t, t + s * (o - 1) + 1, s) for t, s, o in zip(tap, stride, out_sp))


def _taps(ks):
    return itertools.product(range(ks[0]), range(ks[1]), range(ks[2]))


def _chunks(n, per_sample):
    step = max(1, COLUMN_BUDGET // max(per_sample, 1))
    return [(i, min(i + step, n)) for i in range(0, n, step)]


def _columns(xp, ks, stride):
    """Column matrix [n*od*oh*ow, cin*kd*kh*kw] for padded input ``xp``."""
    v = sliding_window_view(xp, ks, axis=(2, 3, 4))[:, :, :: stride[0], :: stride[1], :: stride[2]]
    n, c, od, oh, ow = v.shape[:5]
    return np.ascontiguousarray(v.transpose(0, 2, 3, 4, 1, 5, 6, 7)).reshape(n * od * oh * ow, -1)


def conv3d_forward(x: np.ndarray, w: np.ndarray, stride=1, padding=0, method: str = "direct") -> np.ndarray:
    stride, padding = _triple(stride), _triple(padding)
    out_shape = conv3d_output_shape(x.shape, w.shape, stride, padding)
    n, cout, od, oh, ow = out_shape
    ks = w.shape[2:]
    xp = _pad(x, padding)
    if method == "im2col" and od * oh * ow * w[0].size > COLUMN_BUDGET:
        # one sample alone would exceed the column budget
        method = "direct"
    if method == "direct":
        # accumulate channel-major, [Cout, N, D', H', W']
        acc = np.zeros((cout, n, od, oh, ow))
        for tap in _taps(ks):
            win = xp[(slice(None), slice(None)) + _tap_slices(tap, stride, out_shape[2:])]
            acc += np.tensordot(w[:, :, tap[0], tap[1], tap[2]], win, axes=([1], [1]))
        return acc.transpose(1, 0, 2, 3, 4).copy()
    if method != "im2col":
        raise ValueError(f"unknown conv method {method!r}")
    wmat = w.reshape(cout, -1).T
    out = np.empty((n, od, oh, ow, cout))
    for lo, hi in _chunks(n, od * oh * ow * wmat.shape[0]):
        cols = _columns(xp[lo:hi], ks, stride)
        out[lo:hi] = (cols @ wmat).reshape(hi - lo, od, oh, ow, cout)
    return out.transpose(0, 4, 1, 2, 3).copy()


def conv3d_backward(g, x, w, stride, padding, need_x=True, need_w=True, method="direct"):
    """Gradients of the loss w.r.t. input and kernel given output gradient ``g``."""
    stride, padding = _triple(stride), _triple(padding)
    xp = _pad(x, padding)
    ks = w.shape[2:]
    out_sp = g.shape[2:]
    gxp = None
    gw = np.zeros_like(w) if need_w else None
    if method == "im2col" and int(np.prod(out_sp)) * w[0].size > COLUMN_BUDGET:
        method = "direct"
    if method == "direct":
        cin = w.shape[1]
        # channel-major scratch, [Cin, N, D, H, W] padded
        gxp_t = np.zeros((cin, x.shape[0]) + xp.shape[2:]) if need_x else None
        red = (0, 2, 3, 4)
        for tap in _taps(ks):
            sp = _tap_slices(tap, stride, out_sp)
            if need_w:
                win = xp[(slice(None), slice(None)) + sp]
                gw[:, :, tap[0], tap[1], tap[2]] = np.tensordot(g, win, axes=(red, red))
            if need_x:
                gxp_t[(slice(None), slice(None)) + sp] += np.tensordot(w[:, :, tap[0], tap[1], tap[2]], g, axes=([0], [1]))
        if need_x:
            gxp = gxp_t.transpose(1, 0, 2, 3, 4)
    else:
        n, cout = g.shape[:2]
        cin = w.shape[1]
        wmat = w.reshape(cout, -1)
        rows_per = int(np.prod(out_sp))
        # channel-major scratch so every tap scatters a contiguous block
        gxp_t = np.zeros((cin, n) + xp.shape[2:]) if need_x else None
        for lo, hi in _chunks(n, rows_per * wmat.shape[1]):
            gT = g[lo:hi].transpose(1, 0, 2, 3, 4).reshape(cout, -1)
            if need_w:
                gw += (gT @ _columns(xp[lo:hi], ks, stride)).reshape(w.shape)
            if need_x:
                gc = (wmat.T @ gT).reshape((cin,) + tuple(ks) + (hi - lo,) + tuple(out_sp))
                for tap in _taps(ks):
                    sl = (slice(None), slice(lo, hi)) + _tap_slices(tap, stride, out_sp)
                    gxp_t[sl] += gc[:, tap[0], tap[1], tap[2]]
        if need_x:
            gxp = gxp_t.transpose(1, 0, 2, 3, 4)
    gx = None
    if need_x:
        pd, ph, pw = padding
        d, h, wd = x.shape[2:]
        gx = gxp[:, :, pd : pd + d, ph : ph + h, pw : pw + wd]
    return gx, gw


def conv3d(x, w, stride=1, padding=0, method: str = "direct") -> Tensor:
    """Cross-correlate ``x`` [N, Cin, D, H, W] with ``w`` [Cout, Cin, kd, kh, kw].

    No kernel flip; zero padding; output extents
    ``floor((D + 2 * pd - kd) / sd) + 1`` (likewise for H, W).
    """
    x, w = as_tensor(x), as_tensor(w)
    stride, padding = _triple(stride), _triple(padding)
    out = conv3d_forward(x.data, w.data, stride, padding, method)

    def vjp(g):
        return conv3d_backward(g, x.data, w.data, stride, padding, x.requires_grad, w.requires_grad, method)

    return _result(out, (x, w), vjp)
