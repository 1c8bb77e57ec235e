"""Low-rank Gaussian-process backends: predictive process (pp), bias-adjusted /
modified predictive process (mpp), and the radial-basis variant.

All three share the structure y = X beta + B z + noise with an r x r latent z:

* pp:     row i of B is K(l_i, U*) K(U*, U*)^-1, V_z = K(U*, U*), noise tau2 I.
* mpp:    pp plus the heteroskedastic remainder delta2(l) added to the noise diagonal,
          which restores the parent marginal variance exactly.
* radial: row i of B is the whitened cross covariance L*^-1 K(U*, l_i), V_z = I,
          noise tau2 I (L* the lower Cholesky factor of K(U*, U*)).

The likelihood, beta update, and latent recovery run in O(n r^2) via the
Sherman-Woodbury-Morrison structure; nothing n x n is ever formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg
from .covariance import CovarianceParams, as_points, correlation, pairwise_distances
from .datasets import Dataset
from .errors import DuplicateLocation, NotPositiveDefinite
from .fullgp import _draw_from_precision, _target_regressors

VARIANTS = ("pp", "mpp", "radial")
MIN_KNOT_SEPARATION = 1e-9


@dataclass(frozen=True)
class KnotSet:
    """r anchor locations for the low-rank basis, with their placement tag."""

    knots: np.ndarray
    placement: str = "user"

    def __post_init__(self):
        object.__setattr__(self, "knots", as_points(self.knots))
        if self.r < 1:
            raise ValueError("need at least one knot")
        if self.r > 1:
            dist = pairwise_distances(self.knots)
            off = dist + np.diag(np.full(self.r, np.inf))
            if np.min(off) < MIN_KNOT_SEPARATION:
                raise DuplicateLocation(
                    f"knots closer than {MIN_KNOT_SEPARATION} distance units"
                )

    @property
    def r(self) -> int:
        return self.knots.shape[0]


def grid_knots(bounds, r: int) -> KnotSet:
    """Regular lattice of r knots over a bounding box; r must be a perfect square in 2-d."""
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    d = bounds.shape[0]
    if d == 1:
        axes = [np.linspace(bounds[0, 0], bounds[0, 1], r)]
        pts = axes[0][:, None]
    elif d == 2:
        side = round(np.sqrt(r))
        if side * side != r:
            raise ValueError(f"grid placement needs a perfect-square knot count, got {r}")
        gx = np.linspace(bounds[0, 0], bounds[0, 1], side)
        gy = np.linspace(bounds[1, 0], bounds[1, 1], side)
        xx, yy = np.meshgrid(gx, gy, indexing="ij")
        pts = np.column_stack([xx.ravel(), yy.ravel()])
    else:
        raise ValueError("grid knot placement supports 1-d and 2-d domains")
    return KnotSet(pts, placement="grid")


def subset_knots(points, r: int) -> KnotSet:
    """First r points of the maxmin ordering of the data locations (space filling)."""
    from .nngp import order_locations

    points = as_points(points)
    if r > points.shape[0]:
        raise ValueError(f"cannot pick {r} knots from {points.shape[0]} points")
    order = order_locations(points, "maxmin")
    return KnotSet(points[order[:r]], placement="subset")


@dataclass(frozen=True)
class LowRankSpec:
    """Variant tag + knots + covariance parameters defining one low-rank model."""

    variant: str
    knot_set: KnotSet
    params: CovarianceParams

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")

    def with_params(self, params: CovarianceParams) -> "LowRankSpec":
        return LowRankSpec(self.variant, self.knot_set, params)


class _Structures:
    """Per-parameter-point factorizations shared by the likelihood, beta, and z steps."""

    def __init__(self, spec: LowRankSpec, dist_uk, dist_kk):
        params = spec.params
        r = spec.knot_set.r
        self.spec = spec
        self.k_star = params.sigma2 * correlation(dist_kk, params)
        self.l_star = linalg.cholesky(self.k_star)
        self.k_u = params.sigma2 * correlation(dist_uk, params)
        if spec.variant == "radial":
            self.B = linalg.trsolve(self.l_star, self.k_u.T).T
            self.v_inv = np.eye(r)
            self.delta2 = _clamp_delta2(
                params.sigma2 - np.sum(self.B * self.B, axis=1), params.sigma2
            )
        else:
            self.B = linalg.chol_solve(self.l_star, self.k_u.T).T
            self.v_inv = linalg.chol_solve(self.l_star, np.eye(r))
            self.delta2 = _clamp_delta2(
                params.sigma2 - np.sum(self.k_u * self.B, axis=1), params.sigma2
            )
        if spec.variant == "mpp":
            self.d_diag = params.tau2 + self.delta2
        else:
            self.d_diag = np.full(self.B.shape[0], params.tau2)
        if np.min(self.d_diag) <= 0:
            raise NotPositiveDefinite("noise diagonal must be strictly positive")
        self.sqrt_d = np.sqrt(self.d_diag)
        w = self.B / self.sqrt_d[:, None]
        self.chol_inner = linalg.cholesky(self.v_inv + w.T @ w)
        self.H = linalg.trsolve(self.chol_inner, w.T)
        t_fac = linalg.cholesky(np.eye(r) - self.H @ self.H.T)
        self.half_logdet = -0.5 * float(np.sum(np.log(self.d_diag))) + float(
            np.sum(np.log(np.diagonal(t_fac)))
        )

    @property
    def v_z(self):
        if self.spec.variant == "radial":
            return np.eye(self.spec.knot_set.r)
        return self.k_star

    def marginal_quad(self, resid):
        m1 = resid / self.sqrt_d
        m2 = self.H @ m1
        return float(m1 @ m1) - float(m2 @ m2)


def _clamp_delta2(delta2, sigma2):
    tol = 1e-12 * sigma2
    if np.min(delta2) < -tol:
        raise NotPositiveDefinite(
            f"residual variance fell below round-off floor: min {np.min(delta2):.3e}"
        )
    return np.maximum(delta2, 0.0)


def _structures(spec: LowRankSpec, points) -> _Structures:
    points = as_points(points)
    dist_uk = pairwise_distances(points, spec.knot_set.knots)
    dist_kk = pairwise_distances(spec.knot_set.knots)
    return _Structures(spec, dist_uk, dist_kk)


def pp_basis(target, spec: LowRankSpec) -> np.ndarray:
    """Basis vector b(l) for one target location (kriging weights for pp, whitened
    cross covariance for radial)."""
    return _structures(spec, target).B[0]


def build_B(points, spec: LowRankSpec) -> np.ndarray:
    """n x r basis matrix; row i is pp_basis(l_i, spec)."""
    return _structures(spec, points).B


def residual_var(target, spec: LowRankSpec):
    """delta2(l) = K(l,l) - K(l,U*) K(U*,U*)^-1 K(U*,l), clamped at zero round-off."""
    delta2 = _structures(spec, target).delta2
    return float(delta2[0]) if delta2.shape[0] == 1 else delta2


def noise_diag(points, spec: LowRankSpec) -> np.ndarray:
    """Diagonal of the noise covariance D: tau2 (pp/radial) or tau2 + delta2 (mpp)."""
    return _structures(spec, points).d_diag


def woodbury_inverse(d_diag, b_mat, v_mat) -> np.ndarray:
    """(D + B V B^T)^-1 via the low-rank structure; returns the dense n x n inverse."""
    d_diag = np.asarray(d_diag, dtype=float)
    sqrt_d = np.sqrt(d_diag)
    w = b_mat / sqrt_d[:, None]
    v_inv = linalg.chol_solve(linalg.cholesky(v_mat), np.eye(v_mat.shape[0]))
    h = linalg.trsolve(linalg.cholesky(v_inv + w.T @ w), w.T)
    inner = np.eye(b_mat.shape[0]) - h.T @ h
    return inner / sqrt_d[None, :] / sqrt_d[:, None]


def woodbury_logdet(d_diag, b_mat, v_mat) -> float:
    """ln det(D + B V B^T) = ln det V + ln det D + ln det(V^-1 + B^T D^-1 B)."""
    d_diag = np.asarray(d_diag, dtype=float)
    l_v = linalg.cholesky(v_mat)
    v_inv = linalg.chol_solve(l_v, np.eye(v_mat.shape[0]))
    w = b_mat / np.sqrt(d_diag)[:, None]
    l_inner = linalg.cholesky(v_inv + w.T @ w)
    return (
        linalg.logdet_from_chol(l_v)
        + float(np.sum(np.log(d_diag)))
        + linalg.logdet_from_chol(l_inner)
    )


def lowrank_log_target(data: Dataset, beta, spec: LowRankSpec, priors) -> float:
    """Log target for the covariance block: priors plus ln N(y | X beta, B V B^T + D).

    Computed without forming anything n x n: with W = D^-1/2 B, L = chol(V^-1 + W'W),
    H = L^-1 W', T = chol(I - H H'), the value is
    log p(theta) + log p(tau) - 1/2 sum ln d_ii + sum ln t_ii - 1/2 (m1'm1 - m2'm2).
    """
    params = spec.params
    logp = priors.log_theta(params.sigma2, params.tau2, params.phi)
    if not np.isfinite(logp):
        return -np.inf
    structs = _structures(spec, data.locations)
    resid = data.y - data.X @ np.asarray(beta, dtype=float)
    return logp + structs.half_logdet - 0.5 * structs.marginal_quad(resid)


def gibbs_beta(data: Dataset, spec: LowRankSpec, priors, rng) -> np.ndarray:
    """One draw of beta from its full conditional N(A a, A)."""
    return _gibbs_beta(data, _structures(spec, data.locations), priors, rng)


def _gibbs_beta(data, structs, priors, rng):
    f_y = data.y / structs.sqrt_d
    f_x = data.X / structs.sqrt_d[:, None]
    hf_y = structs.H @ f_y
    hf_x = structs.H @ f_x
    prec = f_x.T @ f_x - hf_x.T @ hf_x
    shift = f_x.T @ f_y - hf_x.T @ hf_y
    prec, shift = priors.add_beta_prior(prec, shift)
    return _draw_from_precision(prec, shift, rng)


def recover_z(data: Dataset, spec: LowRankSpec, beta, rng) -> np.ndarray:
    """Draw the latent z ~ N(A a, A), A = (V^-1 + B'D^-1 B)^-1, a = B'D^-1(y - X beta).

    Uses the stable route A = Q - Q (V + Q)^-1 Q with Q = (B'D^-1 B)^-1, which avoids
    inverting V directly; falls back to the direct precision form (with the usual
    Cholesky jitter) if the stable route fails.
    """
    structs = _structures(spec, data.locations)
    return _recover_z(data, structs, beta, rng)


def _recover_z(data, structs, beta, rng):
    r = structs.spec.knot_set.r
    resid = data.y - data.X @ np.asarray(beta, dtype=float)
    shift = (structs.B / structs.d_diag[:, None]).T @ resid
    gram = (structs.B / structs.sqrt_d[:, None]).T @ (structs.B / structs.sqrt_d[:, None])
    z_std = rng.standard_normal(r)
    try:
        q_mat = linalg.chol_solve(linalg.cholesky(gram), np.eye(r))
        w_q = linalg.trsolve(linalg.cholesky(structs.v_z + q_mat), q_mat)
        a_mat = q_mat - w_q.T @ w_q
        s_fac = linalg.cholesky(a_mat)
        return s_fac @ (z_std + s_fac.T @ shift)
    except NotPositiveDefinite:
        l_prec = linalg.cholesky(structs.v_inv + gram)
        mean = linalg.chol_solve(l_prec, shift)
        return mean + linalg.trsolve(l_prec, z_std, transpose=True)


def predict_y(targets, spec: LowRankSpec, theta_draws, beta_draws, z_draws, rng,
              x_targets=None, include_noise=True):
    """Posterior predictive draws y(l0) ~ N(x0'beta + b(l0)'z, tau2 [+ delta2(l0)]).

    One row per posterior draw, one column per target; theta_draws rows are
    (sigma2, tau2, phi). ``include_noise=False`` returns the per-draw conditional
    means instead (for scoring).
    """
    targets = as_points(targets)
    theta_draws = np.atleast_2d(np.asarray(theta_draws, dtype=float))
    beta_draws = np.atleast_2d(np.asarray(beta_draws, dtype=float))
    z_draws = np.atleast_2d(np.asarray(z_draws, dtype=float))
    x_t = _target_regressors(x_targets, targets.shape[0], beta_draws.shape[1])
    dist_tk = pairwise_distances(targets, spec.knot_set.knots)
    dist_kk = pairwise_distances(spec.knot_set.knots)
    out = np.empty((theta_draws.shape[0], targets.shape[0]))
    for k in range(theta_draws.shape[0]):
        sigma2, tau2, phi = theta_draws[k]
        params = spec.params.replace(sigma2=sigma2, tau2=tau2, phi=phi)
        structs = _Structures(spec.with_params(params), dist_tk, dist_kk)
        mean = x_t @ beta_draws[k] + structs.B @ z_draws[k]
        if include_noise:
            var = structs.d_diag if spec.variant == "mpp" else np.full(targets.shape[0], tau2)
            mean = mean + np.sqrt(var) * rng.standard_normal(targets.shape[0])
        out[k] = mean
    return out


class LowRankBackend:
    """pp / mpp / radial model backend for the MCMC engine.

    Distance matrices to and among the knots are cached once; the factorizations for
    the current parameter point are memoized so the beta-conditional re-evaluation is
    O(n r).
    """

    param_names = ("sigma2", "tau2", "phi")

    def __init__(self, data: Dataset, spec: LowRankSpec, priors):
        self.data = data
        self.spec = spec
        self.priors = priors
        self.model_tag = spec.variant
        self._dist_uk = pairwise_distances(data.locations, spec.knot_set.knots)
        self._dist_kk = pairwise_distances(spec.knot_set.knots)
        self._memo = {}

    def _structs(self, theta) -> _Structures:
        key = tuple(theta)
        if key not in self._memo:
            if len(self._memo) > 3:
                self._memo.clear()
            sigma2, tau2, phi = theta
            params = self.spec.params.replace(sigma2=sigma2, tau2=tau2, phi=phi)
            self._memo[key] = _Structures(self.spec.with_params(params), self._dist_uk, self._dist_kk)
        return self._memo[key]

    def log_target(self, theta, beta) -> float:
        logp = self.priors.log_theta(*theta)
        if not np.isfinite(logp):
            return -np.inf
        structs = self._structs(theta)
        resid = self.data.y - self.data.X @ beta
        return logp + structs.half_logdet - 0.5 * structs.marginal_quad(resid)

    def gibbs_beta(self, theta, rng):
        return _gibbs_beta(self.data, self._structs(theta), self.priors, rng)

    def initial_beta(self):
        return np.linalg.lstsq(self.data.X, self.data.y, rcond=None)[0]

    def recover_z_draws(self, theta_draws, beta_draws, rng):
        """Latent z draw for each retained (theta, beta) posterior draw."""
        out = np.empty((len(theta_draws), self.spec.knot_set.r))
        for k in range(len(theta_draws)):
            out[k] = _recover_z(self.data, self._structs(theta_draws[k]), beta_draws[k], rng)
        return out

    def predict_draws(self, theta_draws, beta_draws, targets, x_targets, rng,
                      z_draws=None, include_noise=True):
        if z_draws is None:
            z_draws = self.recover_z_draws(theta_draws, beta_draws, rng)
        return predict_y(targets, self.spec, theta_draws, beta_draws, z_draws, rng,
                         x_targets, include_noise=include_noise)
