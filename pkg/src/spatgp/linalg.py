"""Dense SPD linear-algebra primitives shared by every model backend.

Matrices are plain float64 numpy arrays in row-major (C) order. Lower-triangular
factors returned by :func:`cholesky` have strictly positive diagonals.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import NotPositiveDefinite, ZeroDiagonal

# Pivot floor relative to max diagonal, and the single jitter added (relative to the
# mean diagonal) before the one retry allowed by the factorization policy.
PIVOT_REL_FLOOR = 1e-12
JITTER_REL = 1e-10


def _chol_attempt(mat, floor):
    try:
        lower = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        return None
    if np.min(np.diagonal(lower)) ** 2 <= floor:
        return None
    return lower


def cholesky(mat):
    """Lower Cholesky factor of a symmetric positive-definite matrix.

    If any pivot falls at or below ``PIVOT_REL_FLOOR * max(diag)``, the
    factorization is retried once with ``JITTER_REL * mean(diag)`` added to the
    diagonal; a second failure raises :class:`NotPositiveDefinite`.
    """
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"cholesky needs a square matrix, got shape {mat.shape}")
    scale = np.max(np.abs(mat))
    if scale > 0 and np.max(np.abs(mat - mat.T)) > 1e-10 * scale:
        raise ValueError("cholesky needs a symmetric matrix")
    diag = np.diagonal(mat)
    floor = PIVOT_REL_FLOOR * max(np.max(diag), 0.0)
    lower = _chol_attempt(mat, floor)
    if lower is not None:
        return lower
    jitter = JITTER_REL * np.mean(diag)
    lower = _chol_attempt(mat + jitter * np.eye(mat.shape[0]), floor)
    if lower is None:
        raise NotPositiveDefinite(
            f"matrix of order {mat.shape[0]} has a Cholesky pivot below "
            f"{floor:.3e} even after jitter {jitter:.3e}"
        )
    return lower


def trsolve(tri, rhs, lower=True, transpose=False):
    """Solve ``T x = b`` (or ``T^T x = b`` with ``transpose=True``) for triangular T."""
    tri = np.asarray(tri, dtype=float)
    if np.min(np.abs(np.diagonal(tri))) < 1e-300:
        raise ZeroDiagonal("triangular factor has a zero diagonal entry")
    return scipy.linalg.solve_triangular(
        tri, rhs, lower=lower, trans="T" if transpose else "N", check_finite=False
    )


def chol_solve(lower, rhs):
    """Solve ``(L L^T) x = b`` given the lower Cholesky factor ``L``."""
    return trsolve(lower, trsolve(lower, rhs), transpose=True)


def logdet_from_chol(lower):
    """log det(M) = 2 * sum(log L_ii) for M = L L^T; essentially free post-Cholesky."""
    return 2.0 * float(np.sum(np.log(np.diagonal(lower))))


def sample_mvn(mean, chol_of_cov, rng):
    """One draw mean + L z with z ~ N(0, I); deterministic under a fixed rng state."""
    mean = np.asarray(mean, dtype=float)
    z = rng.standard_normal(mean.shape[0])
    return mean + np.asarray(chol_of_cov) @ z
