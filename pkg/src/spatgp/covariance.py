"""Covariance kernels, covariance-matrix assembly, and effective-range utilities.

Point sets are float64 arrays of shape (n, d); a single location may be passed as a
1-d array of length d. Distances are Euclidean on raw coordinates. The nugget tau2
never enters :func:`kernel` or :func:`cross_cov`; it is added on the diagonal only by
:func:`marginal_cov`.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.spatial.distance
import scipy.special

from .errors import DuplicateLocation, InvalidParams

EXPONENTIAL = "exponential"
MATERN = "matern"


@dataclass(frozen=True)
class CovarianceParams:
    """Isotropic covariance parameters: partial sill, decay rate, nugget, smoothness.

    ``sigma2`` is the marginal variance of the smooth process, ``phi`` the decay rate
    per distance unit (correlation exp(-phi*d) for the exponential family), ``tau2``
    the nugget variance, and ``nu`` the Matérn smoothness (ignored for exponential).
    """

    sigma2: float
    phi: float
    tau2: float = 0.0
    nu: float | None = None
    family: str = EXPONENTIAL

    def __post_init__(self):
        if self.family not in (EXPONENTIAL, MATERN):
            raise InvalidParams(f"unknown covariance family {self.family!r}")
        if not (self.sigma2 > 0 and np.isfinite(self.sigma2)):
            raise InvalidParams(f"sigma2 must be positive, got {self.sigma2}")
        if not (self.phi > 0 and np.isfinite(self.phi)):
            raise InvalidParams(f"phi must be positive, got {self.phi}")
        if not (self.tau2 >= 0 and np.isfinite(self.tau2)):
            raise InvalidParams(f"tau2 must be nonnegative, got {self.tau2}")
        if self.family == MATERN and not (self.nu is not None and self.nu > 0):
            raise InvalidParams("matern family needs smoothness nu > 0")

    def replace(self, **kwargs) -> "CovarianceParams":
        return replace(self, **kwargs)


def as_points(points):
    """Coerce to an (n, d) float array; a bare length-d vector becomes one row."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] < 1:
        raise ValueError(f"point set must be (n, d), got shape {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("point coordinates must be finite")
    return pts


def pairwise_distances(u, v=None):
    """Euclidean distance matrix between two point sets (|U| x |V|)."""
    u = as_points(u)
    v = u if v is None else as_points(v)
    return scipy.spatial.distance.cdist(u, v)


def correlation(dist, params: CovarianceParams):
    """Correlation rho(d) for an array of distances; rho(0) = 1 exactly."""
    dist = np.asarray(dist, dtype=float)
    if params.family == EXPONENTIAL:
        return np.exp(-params.phi * dist)
    nu = params.nu
    scaled = params.phi * dist
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        rho = (
            (2.0 ** (1.0 - nu) / scipy.special.gamma(nu))
            * scaled**nu
            * scipy.special.kv(nu, scaled)
        )
    return np.where(dist > 0, rho, 1.0)


def kernel(a, b, params: CovarianceParams):
    """Covariance sigma2 * rho(||a - b||) between two single locations (no nugget)."""
    a = as_points(a)
    b = as_points(b)
    if a.shape != (1, a.shape[1]) or b.shape != (1, a.shape[1]):
        raise ValueError("kernel expects two single locations of equal dimension")
    dist = float(np.linalg.norm(a[0] - b[0]))
    return params.sigma2 * float(correlation(dist, params))


def cross_cov(u, v, params: CovarianceParams):
    """Cross-covariance matrix sigma2 * rho(dist(U, V)); duplicates are permitted."""
    return params.sigma2 * correlation(pairwise_distances(u, v), params)


def marginal_cov(u, params: CovarianceParams):
    """Marginal covariance sigma2 * R + tau2 * I over one set of distinct points."""
    u = as_points(u)
    dist = pairwise_distances(u)
    if u.shape[0] > 1:
        off = dist + np.diag(np.full(u.shape[0], np.inf))
        if np.min(off) == 0.0:
            raise DuplicateLocation("marginal covariance needs distinct locations")
    return params.sigma2 * correlation(dist, params) + params.tau2 * np.eye(u.shape[0])


def effective_range(params: CovarianceParams, threshold: float):
    """Distance at which the correlation falls to ``threshold``.

    Closed form -ln(t)/phi for the exponential family; bisection to 1e-8 relative
    width for Matérn.
    """
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    if params.family == EXPONENTIAL:
        return -np.log(threshold) / params.phi
    lo, hi = 0.0, 1.0 / params.phi
    for _ in range(200):
        if correlation(hi, params) < threshold:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise InvalidParams("correlation never falls below threshold")
    while (hi - lo) > 1e-8 * hi:
        mid = 0.5 * (lo + hi)
        if correlation(mid, params) > threshold:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def phi_for_effective_range(distance: float, threshold: float = 0.05):
    """Exponential decay rate giving correlation ``threshold`` at ``distance``."""
    if distance <= 0:
        raise ValueError("effective range must be positive")
    return -np.log(threshold) / distance
