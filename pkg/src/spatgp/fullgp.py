"""Dense full-GP likelihood and kriging.

This is the exact O(n^3) backend: it is both a usable model at desk scale and the
oracle the low-rank and nearest-neighbor backends are validated against. All Gaussian
log densities in the package drop the -(n/2) ln 2*pi constant, identically across
backends, so cross-backend comparisons and Metropolis ratios are unaffected.
"""

from __future__ import annotations

import numpy as np

from . import linalg
from .covariance import CovarianceParams, as_points, correlation, cross_cov, marginal_cov, pairwise_distances
from .datasets import Dataset


def dense_loglik(data: Dataset, beta, params: CovarianceParams) -> float:
    """Marginalized Gaussian log likelihood ln N(y | X beta, sigma2 R + tau2 I).

    The 2*pi constant is omitted.
    """
    sigma = marginal_cov(data.locations, params)
    lower = linalg.cholesky(sigma)
    resid = data.y - data.X @ np.asarray(beta, dtype=float)
    white = linalg.trsolve(lower, resid)
    return -0.5 * linalg.logdet_from_chol(lower) - 0.5 * float(white @ white)


def krige(data: Dataset, beta, params: CovarianceParams, targets, x_targets=None):
    """Conditional mean and variance of y at each target given the observed data.

    Mean x0' beta + k0' Sigma^-1 (y - X beta); variance (sigma2 + tau2) -
    k0' Sigma^-1 k0, with k0 the nugget-free cross covariance to the data.
    """
    targets = as_points(targets)
    beta = np.asarray(beta, dtype=float)
    x_t = _target_regressors(x_targets, targets.shape[0], data.p)
    sigma = marginal_cov(data.locations, params)
    lower = linalg.cholesky(sigma)
    k0 = cross_cov(targets, data.locations, params)
    alpha = linalg.chol_solve(lower, data.y - data.X @ beta)
    mean = x_t @ beta + k0 @ alpha
    half = linalg.trsolve(lower, k0.T)
    var = (params.sigma2 + params.tau2) - np.sum(half * half, axis=0)
    return mean, np.maximum(var, 0.0)


def _target_regressors(x_targets, n_targets, p):
    if x_targets is None:
        if p != 1:
            raise ValueError("targets need regressors when the model has p > 1")
        return np.ones((n_targets, 1))
    x_t = np.atleast_2d(np.asarray(x_targets, dtype=float))
    if x_t.shape != (n_targets, p):
        raise ValueError(f"target regressors must be ({n_targets}, {p}), got {x_t.shape}")
    return x_t


class FullGPBackend:
    """Dense-GP model backend for the MCMC engine.

    Caches the pairwise distance matrix once and memoizes the Cholesky factor for the
    current parameter point, so the beta-conditional re-evaluation after each Gibbs
    update costs only a triangular solve.
    """

    model_tag = "fullgp"
    param_names = ("sigma2", "tau2", "phi")

    def __init__(self, data: Dataset, priors, family="exponential", nu=None):
        self.data = data
        self.priors = priors
        self.family = family
        self.nu = nu
        self._dist = pairwise_distances(data.locations)
        self._memo = {}

    def _params(self, theta) -> CovarianceParams:
        sigma2, tau2, phi = theta
        return CovarianceParams(sigma2=sigma2, phi=phi, tau2=tau2, nu=self.nu, family=self.family)

    def _chol(self, theta):
        # keep the current and the proposed point alive so a rejected proposal does
        # not evict the factorization the next beta refresh needs
        key = tuple(theta)
        if key not in self._memo:
            if len(self._memo) > 3:
                self._memo.clear()
            params = self._params(theta)
            sigma = params.sigma2 * correlation(self._dist, params)
            sigma[np.diag_indices_from(sigma)] += params.tau2
            self._memo[key] = linalg.cholesky(sigma)
        return self._memo[key]

    def log_target(self, theta, beta) -> float:
        logp = self.priors.log_theta(*theta)
        if not np.isfinite(logp):
            return -np.inf
        lower = self._chol(theta)
        resid = self.data.y - self.data.X @ beta
        white = linalg.trsolve(lower, resid)
        return logp - 0.5 * linalg.logdet_from_chol(lower) - 0.5 * float(white @ white)

    def gibbs_beta(self, theta, rng):
        lower = self._chol(theta)
        xs = linalg.trsolve(lower, self.data.X)
        ys = linalg.trsolve(lower, self.data.y)
        prec = xs.T @ xs
        shift = xs.T @ ys
        prec, shift = self.priors.add_beta_prior(prec, shift)
        return _draw_from_precision(prec, shift, rng)

    def initial_beta(self):
        return np.linalg.lstsq(self.data.X, self.data.y, rcond=None)[0]

    def predict_draws(self, theta_draws, beta_draws, targets, x_targets, rng,
                      include_noise=True):
        """Posterior predictive draws, one row per retained draw, column per target."""
        targets = as_points(targets)
        out = np.empty((len(theta_draws), targets.shape[0]))
        for k, (theta, beta) in enumerate(zip(theta_draws, beta_draws)):
            mean, var = krige(self.data, beta, self._params(theta), targets, x_targets)
            if include_noise:
                mean = mean + np.sqrt(var) * rng.standard_normal(targets.shape[0])
            out[k] = mean
        return out


def _draw_from_precision(prec, shift, rng):
    """Draw from N(A a, A) with A^-1 = prec, a = shift: mean + trsolve(L^T, z)."""
    lower = linalg.cholesky(prec)
    mean = linalg.chol_solve(lower, shift)
    z = rng.standard_normal(mean.shape[0])
    return mean + linalg.trsolve(lower, z, transpose=True)
