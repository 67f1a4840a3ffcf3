"""Central finite-difference gradients for checking reverse-mode results."""

from __future__ import annotations

import numpy as np

from .tensor import record_branches


def numerical_grad(f, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central difference of the scalar function ``f`` at ``x``.

    ``x`` is perturbed in place and restored, so ``f`` may close over it.
    """
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f())
        flat[i] = orig - h
        fm = float(f())
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-7) -> float:
    """Largest ``|a - n| / max(|a|, |n|)``, ignoring entries where both are below ``floor``
    in absolute difference."""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    diff = np.abs(a - n)
    scale = np.maximum(np.abs(a), np.abs(n))
    rel = np.where(diff <= floor, 0.0, diff / np.where(scale > 0, scale, 1.0))
    return float(rel.max()) if rel.size else 0.0


def same_branches(a: list, b: list) -> bool:
    return len(a) == len(b) and all(x.shape == y.shape and np.array_equal(x, y) for x, y in zip(a, b))


def smooth_central_difference(f, x: np.ndarray, index: int, h: float = 1e-4, min_h: float = 1e-7):
    """Central difference of ``f`` in entry ``index`` of ``x`` over an interval
    on which every piecewise op (relu, max) keeps its branch.

    Starting from ``h`` the step shrinks tenfold while ``x +/- h`` lands on a
    different piece than ``x``; a difference across a kink does not estimate
    the derivative. Returns ``(derivative, step)``, or None if even ``min_h``
    straddles a kink.
    """
    flat = x.reshape(-1)
    orig = flat[index]
    with record_branches() as base:
        f()
    while h >= min_h:
        flat[index] = orig + h
        with record_branches() as up:
            fp = float(f())
        flat[index] = orig - h
        with record_branches() as down:
            fm = float(f())
        flat[index] = orig
        if same_branches(base, up) and same_branches(base, down):
            return (fp - fm) / (2 * h), h
        h /= 10
    return None
