"""Scoring utilities: RMSPE, Gaussian KL divergence, and interval coverage."""

from __future__ import annotations

import numpy as np

from . import linalg
from .errors import LengthMismatch


def _paired(truth, other, name):
    truth = np.asarray(truth, dtype=float).ravel()
    other = np.asarray(other, dtype=float).ravel()
    if truth.shape != other.shape or truth.size < 1:
        raise LengthMismatch(f"{name}: got lengths {truth.size} and {other.size}")
    return truth, other


def rmspe(truth, predicted) -> float:
    """Root mean squared predictive error."""
    truth, predicted = _paired(truth, predicted, "rmspe")
    diff = truth - predicted
    return float(np.sqrt(np.mean(diff * diff)))


def kl_gaussians(mean0, cov0, mean1, cov1) -> float:
    """KL(N(mean0, cov0) || N(mean1, cov1)) for SPD covariances.

    1/2 [tr(S1^-1 S0) - n + (m1-m0)' S1^-1 (m1-m0) + ln det S1 - ln det S0].
    """
    mean0 = np.asarray(mean0, dtype=float).ravel()
    mean1 = np.asarray(mean1, dtype=float).ravel()
    n = mean0.size
    l0 = linalg.cholesky(cov0)
    l1 = linalg.cholesky(cov1)
    half = linalg.trsolve(l1, l0)
    trace = float(np.sum(half * half))
    wdiff = linalg.trsolve(l1, mean1 - mean0)
    quad = float(wdiff @ wdiff)
    value = 0.5 * (
        trace - n + quad + linalg.logdet_from_chol(l1) - linalg.logdet_from_chol(l0)
    )
    if -1e-10 < value < 0.0:
        return 0.0
    return value


def interval_coverage(truth, lo, hi) -> float:
    """Fraction of truth values inside [lo, hi] elementwise."""
    truth, lo = _paired(truth, lo, "interval_coverage")
    truth, hi = _paired(truth, hi, "interval_coverage")
    if np.any(lo > hi):
        raise ValueError("interval bounds must satisfy lo <= hi")
    return float(np.mean((truth >= lo) & (truth <= hi)))
