"""Closed-form anomalous change detectors built on global second-order statistics.

All detectors score each pixel independently given statistics pooled over
the whole image. Covariances use the 1/N estimator. Before any
factorization a ridge of ``reg_eps * trace(M) / C`` is added to the
diagonal of ``M``; a tiny jitter relative to the data scale keeps exactly
singular matrices (identical images, exact linear relations) factorizable.
Inverses are never formed: everything goes through Cholesky solves.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import ConditioningError, ShapeError
from .hsio import HsiCube, radiometric_align

JITTER = 1e-13
DEFAULT_REG = 1e-6
METHODS = ("cc", "ce", "usfa", "diff_rx", "sacd", "sdhacd")


def _as_values(X) -> np.ndarray:
    v = X.values if isinstance(X, HsiCube) else np.asarray(X, dtype=np.float64)
    if v.ndim != 3:
        raise ShapeError(f"expected an (H, W, C) cube, got shape {v.shape}")
    return v


def _pair(X1, X2):
    a, b = _as_values(X1), _as_values(X2)
    if a.shape != b.shape:
        raise ShapeError(f"cube shapes differ: {a.shape} vs {b.shape}")
    return a, b


def _cov(a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """1/N cross-covariance of row-sample matrices (two-pass, mean removed)."""
    a = a - a.mean(axis=0)
    b = a if b is None else b - b.mean(axis=0)
    return a.T @ b / a.shape[0]


def _sym(m):
    return 0.5 * (m + m.T)


@dataclass
class StatModel:
    mu1: np.ndarray
    mu2: np.ndarray
    C11: np.ndarray
    C22: np.ndarray
    C12: np.ndarray
    Cd: np.ndarray
    mud: np.ndarray
    reg_eps: float
    pixel_count: int

    @property
    def bands(self) -> int:
        return self.mu1.shape[0]

    @property
    def C21(self) -> np.ndarray:
        return self.C12.T

    @property
    def Cz(self) -> np.ndarray:
        """Joint 2C x 2C covariance of stacked [x1; x2]."""
        return np.block([[self.C11, self.C12], [self.C21, self.C22]])

    @property
    def data_scale(self) -> float:
        s = (np.trace(self.C11) + np.trace(self.C22)) / (2 * self.bands)
        return float(s) if s > 0 else 1.0

    def ridge(self, m: np.ndarray) -> float:
        """Diagonal load for the C x C matrix ``m``."""
        tr = float(np.trace(m)) / m.shape[0]
        scale = tr if tr > 0 else self.data_scale
        return max(self.reg_eps * scale, JITTER * self.data_scale)

    def cz_ridge(self) -> np.ndarray:
        """Per-diagonal load for Cz: each block keeps its own marginal ridge."""
        c = self.bands
        return np.r_[np.full(c, self.ridge(self.C11)), np.full(c, self.ridge(self.C22))]


def fit_statistics(X1, X2, reg_eps: float = DEFAULT_REG) -> StatModel:
    """Pooled means, covariances and cross-covariance of two co-registered cubes."""
    a, b = _pair(X1, X2)
    c = a.shape[-1]
    p1 = a.reshape(-1, c)
    p2 = b.reshape(-1, c)
    n = p1.shape[0]
    if n <= c:
        warnings.warn(f"only {n} pixels for {c} bands; raising reg_eps to 1e-3", RuntimeWarning, stacklevel=2)
        reg_eps = max(reg_eps, 1e-3)
    d = p2 - p1
    stats = StatModel(
        mu1=p1.mean(axis=0),
        mu2=p2.mean(axis=0),
        C11=_sym(_cov(p1)),
        C22=_sym(_cov(p2)),
        C12=_cov(p1, p2),
        Cd=_sym(_cov(d)),
        mud=d.mean(axis=0),
        reg_eps=float(reg_eps),
        pixel_count=n,
    )
    _cholesky(stats.C11, stats.ridge(stats.C11), "C11")
    _cholesky(stats.C22, stats.ridge(stats.C22), "C22")
    return stats


def _cholesky(m: np.ndarray, ridge, what: str) -> np.ndarray:
    """Lower Cholesky factor of ``m + diag(ridge)``."""
    loaded = m + np.diag(np.broadcast_to(ridge, (m.shape[0],)))
    try:
        return linalg.cholesky(loaded, lower=True)
    except linalg.LinAlgError:
        smallest = float(np.linalg.eigvalsh(_sym(loaded))[0])
        raise ConditioningError(
            f"{what} is not positive definite after regularization (smallest eigenvalue {smallest:.3e}); "
            "increase reg_eps"
        ) from None


def mahalanobis(dev: np.ndarray, cov: np.ndarray, ridge, what: str = "covariance") -> np.ndarray:
    """``dev_i^T (cov + ridge I)^-1 dev_i`` for each row of ``dev``."""
    L = _cholesky(cov, ridge, what)
    y = linalg.solve_triangular(L, dev.T, lower=True)
    return (y * y).sum(axis=0)


def _deviations(stats, a, b):
    c = a.shape[-1]
    return a.reshape(-1, c) - stats.mu1, b.reshape(-1, c) - stats.mu2


def cc_residuals(stats: StatModel, X1, X2) -> np.ndarray:
    """Chronochrome prediction residuals ``x2 - (C21 C11^-1 (x1 - mu1) + mu2)``, shape (N, C)."""
    a, b = _pair(X1, X2)
    e1, e2 = _deviations(stats, a, b)
    L = _cholesky(stats.C11, stats.ridge(stats.C11), "C11")
    # gain = C21 C11^-1, applied as (C11^-1 C12)^T
    k = linalg.cho_solve((L, True), stats.C12)
    return e2 - e1 @ k


def detect_cc(stats: StatModel, X1, X2) -> np.ndarray:
    """Chronochrome: Mahalanobis norm of the linear-prediction residual."""
    a, b = _pair(X1, X2)
    e = cc_residuals(stats, a, b)
    L = _cholesky(stats.C11, stats.ridge(stats.C11), "C11")
    ce = _sym(stats.C22 - stats.C21 @ linalg.cho_solve((L, True), stats.C12))
    return mahalanobis(e, ce, stats.ridge(ce), "residual covariance").reshape(a.shape[:2])


def _sqrt_pair(m: np.ndarray, floor: float):
    """Symmetric square root and inverse square root via eigendecomposition."""
    w, v = np.linalg.eigh(_sym(m))
    w = np.maximum(w, floor)
    return (v * np.sqrt(w)) @ v.T, (v / np.sqrt(w)) @ v.T


def ce_transform(stats: StatModel) -> np.ndarray:
    """Equalizing map ``L = C22^(1/2) C11^(-1/2)`` so that ``L C11 L^T = C22``."""
    s22, _ = _sqrt_pair(stats.C22, stats.ridge(stats.C22))
    _, s11_inv = _sqrt_pair(stats.C11, stats.ridge(stats.C11))
    return s22 @ s11_inv


def detect_ce(stats: StatModel, X1, X2) -> np.ndarray:
    """Covariance equalization: recolor time 1 to time 2's covariance, then score
    the residual against its own covariance."""
    a, b = _pair(X1, X2)
    e1, e2 = _deviations(stats, a, b)
    e = e2 - e1 @ ce_transform(stats).T
    dev = e - e.mean(axis=0)
    cov = _sym(dev.T @ dev / dev.shape[0])
    return mahalanobis(dev, cov, stats.ridge(cov), "residual covariance").reshape(a.shape[:2])


def detect_diff_rx(stats: StatModel, X1, X2) -> np.ndarray:
    """RX on the difference image."""
    a, b = _pair(X1, X2)
    c = a.shape[-1]
    d = (b - a).reshape(-1, c) - stats.mud
    return mahalanobis(d, stats.Cd, stats.ridge(stats.Cd), "difference covariance").reshape(a.shape[:2])


def detect_sacd(stats: StatModel, X1, X2) -> np.ndarray:
    """Straight detector: Mahalanobis norm of the stacked pixel [x1; x2]."""
    a, b = _pair(X1, X2)
    z = np.hstack(_deviations(stats, a, b))
    return mahalanobis(z, stats.Cz, stats.cz_ridge(), "joint covariance").reshape(a.shape[:2])


def hyperbolic_scores(stats: StatModel, X1, X2) -> np.ndarray:
    """Stacked Mahalanobis minus both marginal Mahalanobis terms (can be negative)."""
    a, b = _pair(X1, X2)
    e1, e2 = _deviations(stats, a, b)
    joint = mahalanobis(np.hstack([e1, e2]), stats.Cz, stats.cz_ridge(), "joint covariance")
    m1 = mahalanobis(e1, stats.C11, stats.ridge(stats.C11), "C11")
    m2 = mahalanobis(e2, stats.C22, stats.ridge(stats.C22), "C22")
    return (joint - m1 - m2).reshape(a.shape[:2])


def detect_sdhacd(stats: StatModel, X1, X2) -> np.ndarray:
    """Hyperbolic detector after band-wise mean/std matching of time 2 onto time 1.

    Statistics are refitted on the matched pair with ``stats.reg_eps``.
    """
    a, b = _pair(X1, X2)
    b = radiometric_align(HsiCube(a), HsiCube(b)).values
    return hyperbolic_scores(fit_statistics(a, b, stats.reg_eps), a, b)


def _standardize(p: np.ndarray) -> np.ndarray:
    sd = p.std(axis=0)
    return (p - p.mean(axis=0)) / np.where(sd > 0, sd, 1.0)


def _wcov(p: np.ndarray, w: np.ndarray) -> np.ndarray:
    m = (w[:, None] * p).sum(axis=0) / w.sum()
    dev = p - m
    return _sym((w[:, None] * dev).T @ dev / w.sum())


@dataclass
class UsfaResult:
    scores: np.ndarray
    eigenvalues: np.ndarray
    vectors: np.ndarray  # columns are projection directions
    B: np.ndarray  # regularized average covariance of the last round
    weights: np.ndarray


def usfa(X1, X2, iterations: int = 5, reg_eps: float = DEFAULT_REG, adjustment: float = 1.0) -> UsfaResult:
    """Iteratively reweighted slow feature analysis.

    Each round solves ``A w = lambda B w`` with A the weighted covariance of
    the standardized difference and B the mean of the two weighted
    covariances, scores ``sum_j (w_j^T d)^2 / lambda_j``, then reweights
    pixels by ``exp(-score / (2 * median(score) * adjustment))`` so likely
    changes stop shaping the next round.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    a, b = _pair(X1, X2)
    c = a.shape[-1]
    x1 = _standardize(a.reshape(-1, c))
    x2 = _standardize(b.reshape(-1, c))
    d = x2 - x1
    weights = np.ones(d.shape[0])
    for _ in range(iterations):
        A = _wcov(d, weights)
        B = 0.5 * (_wcov(x1, weights) + _wcov(x2, weights))
        B = B + np.eye(c) * max(reg_eps * np.trace(B) / c, JITTER)
        _cholesky(B, 0.0, "average covariance")
        lam, W = linalg.eigh(A, B)
        lam = np.maximum(lam, 0.0)
        floor = max(JITTER * lam.max(), JITTER)
        md = (weights[:, None] * d).sum(axis=0) / weights.sum()
        proj = (d - md) @ W
        scores = (proj**2 / np.maximum(lam, floor)).sum(axis=1)
        med = float(np.median(scores))
        weights = np.exp(-scores / (2.0 * med * adjustment)) if med > 0 else np.ones_like(scores)
    return UsfaResult(scores.reshape(a.shape[:2]), lam, W, B, weights)


def detect_usfa(X1, X2, iterations: int = 5, reg_eps: float = DEFAULT_REG) -> np.ndarray:
    return usfa(X1, X2, iterations, reg_eps).scores


def run_detector(name: str, X1, X2, reg_eps: float = DEFAULT_REG, usfa_iterations: int = 5) -> np.ndarray:
    """Score map of the named classical detector."""
    if name not in METHODS:
        raise ValueError(f"unknown detector {name!r}; choose from {', '.join(METHODS)}")
    if name == "usfa":
        return detect_usfa(X1, X2, usfa_iterations, reg_eps)
    stats = fit_statistics(X1, X2, reg_eps)
    fn = {"cc": detect_cc, "ce": detect_ce, "diff_rx": detect_diff_rx, "sacd": detect_sacd, "sdhacd": detect_sdhacd}
    return fn[name](stats, X1, X2)
