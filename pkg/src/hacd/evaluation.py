"""Exact ROC curves, trapezoidal AUC and display normalization for score maps."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError, ShapeError


@dataclass(frozen=True)
class RocCurve:
    """Operating points ordered by decreasing threshold.

    ``thresholds[0]`` is +inf and gives the (0, 0) point; a pixel is declared
    changed when its score is >= the threshold.
    """

    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    n_pos: int
    n_neg: int

    def __len__(self):
        return len(self.fpr)

    def points(self) -> list:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def compute_roc(scores, mask) -> RocCurve:
    """ROC over every distinct score value; tied scores form a single point."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(mask)
    if s.shape != y.shape:
        raise ShapeError(f"score map {s.shape} and mask {y.shape} differ in shape")
    s = s.reshape(-1)
    y = y.reshape(-1) != 0
    if not np.all(np.isfinite(s)):
        raise ValueError("score map contains non-finite values")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateError("mask must contain at least one positive and one negative pixel")

    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    tp = np.cumsum(y_sorted)
    fp = np.cumsum(~y_sorted)
    # last index of each tie group
    last = np.flatnonzero(np.r_[s_sorted[1:] != s_sorted[:-1], True])
    thresholds = np.r_[np.inf, s_sorted[last]]
    tpr = np.r_[0, tp[last]] / n_pos
    fpr = np.r_[0, fp[last]] / n_neg
    return RocCurve(thresholds, fpr.astype(np.float64), tpr.astype(np.float64), n_pos, n_neg)


def compute_auc(curve: RocCurve) -> float:
    """Trapezoidal area under ``curve`` (FPR on the x axis)."""
    fpr, tpr = curve.fpr, curve.tpr
    if fpr.shape != tpr.shape or fpr.size < 2:
        raise ValueError("malformed ROC curve")
    if np.any(np.diff(fpr) < 0) or np.any(np.diff(tpr) < 0):
        raise ValueError("ROC coordinates must be non-decreasing")
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def auc_score(scores, mask) -> float:
    return compute_auc(compute_roc(scores, mask))


def normalize_scores(scores) -> np.ndarray:
    """Min-max scale to [0, 1]; a constant map becomes all zeros."""
    s = np.asarray(scores, dtype=np.float64)
    lo, hi = s.min(), s.max()
    if hi == lo:
        return np.zeros_like(s)
    return (s - lo) / (hi - lo)


def write_roc_csv(curve: RocCurve, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["threshold", "fpr", "tpr"])
        for t, x, y in zip(curve.thresholds, curve.fpr, curve.tpr):
            w.writerow([repr(float(t)), repr(float(x)), repr(float(y))])


def write_metrics_json(path, method: str, auc: float, n_pos: int, n_neg: int) -> None:
    with open(path, "w") as f:
        json.dump({"method": method, "auc": auc, "n_pos": n_pos, "n_neg": n_neg}, f, indent=2)
        f.write("\n")
