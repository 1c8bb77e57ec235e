"""Nearest-neighbor Gaussian-process backend.

A topological ordering of the reference points plus per-node parent sets of size at
most m define a DAG; writing each Gaussian conditional against its parents only gives
a sparse-precision covariance K~ with K~^-1 = (I - A)' D^-1 (I - A), A strictly lower
triangular with at most m nonzeros per row. Building (A, D) costs O(n m^3) batched
small solves, the likelihood O(n m), and det K~ = prod(d_i) falls out for free.

The response model absorbs the nugget into the covariance (K = sigma2 R + tau2 I) and
models y directly; the latent model keeps a nugget-free NNGP prior on w and adds
independent N(0, tau2) measurement error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse

from .covariance import CovarianceParams, as_points, correlation, pairwise_distances
from .datasets import Dataset
from .errors import NotPositiveDefinite, TargetInReference, UnsupportedFamily
from .fullgp import _draw_from_precision, _target_regressors

ORDERINGS = ("coord_sum", "sorted_x", "sorted_y", "maxmin")


def order_locations(points, strategy: str) -> np.ndarray:
    """Permutation of the point set under one of the four ordering strategies.

    coord_sum / sorted_x / sorted_y sort ascending on the coordinate sum or the named
    coordinate; maxmin starts nearest the centroid and greedily appends the point with
    the largest minimum distance to everything already ordered. All ties break toward
    the smaller original index.
    """
    points = as_points(points)
    n = points.shape[0]
    if strategy == "coord_sum":
        return np.argsort(points.sum(axis=1), kind="stable")
    if strategy == "sorted_x":
        return np.argsort(points[:, 0], kind="stable")
    if strategy == "sorted_y":
        if points.shape[1] < 2:
            raise ValueError("sorted_y needs at least 2-d coordinates")
        return np.argsort(points[:, 1], kind="stable")
    if strategy != "maxmin":
        raise ValueError(f"ordering must be one of {ORDERINGS}, got {strategy!r}")
    centroid = points.mean(axis=0)
    first = int(np.argmin(np.linalg.norm(points - centroid, axis=1)))
    order = [first]
    min_dist = np.linalg.norm(points - points[first], axis=1)
    min_dist[first] = -np.inf
    for _ in range(n - 1):
        nxt = int(np.argmax(min_dist))
        order.append(nxt)
        np.minimum(min_dist, np.linalg.norm(points - points[nxt], axis=1), out=min_dist)
        min_dist[nxt] = -np.inf
    return np.asarray(order)


@dataclass
class NeighborGraph:
    """Ordered reference coordinates with per-node parent sets (a DAG).

    ``permutation`` maps ordered position -> original index of the point set the
    ordering was built from; ``parents[i]`` lists ordered indices < i, sorted
    ascending, with len == min(i, m).
    """

    coords: np.ndarray
    parents: list
    m: int
    permutation: np.ndarray

    _workspace: object = field(default=None, repr=False, compare=False)

    @property
    def r(self) -> int:
        return self.coords.shape[0]

    def workspace(self) -> "_GraphWorkspace":
        if self._workspace is None:
            self._workspace = _GraphWorkspace(self)
        return self._workspace


def build_neighbor_sets(ordered_points, m: int) -> NeighborGraph:
    """Parent sets over an already-ordered point set: full history while the history
    holds at most m points, then the m nearest predecessors (ties to smaller index)."""
    pts = as_points(ordered_points)
    if m < 1:
        raise ValueError("need m >= 1")
    n = pts.shape[0]
    parents = [np.empty(0, dtype=int)]
    for i in range(1, n):
        if i <= m:
            parents.append(np.arange(i))
            continue
        dist = np.linalg.norm(pts[:i] - pts[i], axis=1)
        nearest = np.argsort(dist, kind="stable")[:m]
        parents.append(np.sort(nearest))
    return NeighborGraph(pts, parents, m, np.arange(n))


def build_graph(points, m: int, ordering: str = "coord_sum") -> NeighborGraph:
    """Order the points, then build parent sets; the permutation is kept on the graph."""
    points = as_points(points)
    perm = order_locations(points, ordering)
    graph = build_neighbor_sets(points[perm], m)
    graph.permutation = perm
    return graph


def dump_neighbor_graph(graph: NeighborGraph, path) -> None:
    """Diagnostic CSV of the DAG edges, ordered indexing: child_index,parent_index."""
    lines = ["child_index,parent_index"]
    for child, pars in enumerate(graph.parents):
        lines += [f"{child},{par}" for par in pars]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


class _GraphWorkspace:
    """Padded parent arrays and parent-distance blocks; geometry only, no parameters."""

    def __init__(self, graph: NeighborGraph):
        coords = graph.coords
        r, m = graph.r, min(graph.m, max(graph.r - 1, 1))
        pad = np.full((r, m), -1, dtype=int)
        counts = np.zeros(r, dtype=int)
        for i, pars in enumerate(graph.parents):
            pad[i, : len(pars)] = pars
            counts[i] = len(pars)
        safe = np.where(pad >= 0, pad, 0)
        parent_coords = coords[safe]  # (r, m, d)
        self.pad = pad
        self.counts = counts
        self.m = m
        # distances among each node's parents and from parents to the node
        diff = parent_coords[:, :, None, :] - parent_coords[:, None, :, :]
        self.dist_pp = np.sqrt(np.sum(diff * diff, axis=-1))
        diff_i = parent_coords - coords[:, None, :]
        self.dist_pi = np.sqrt(np.sum(diff_i * diff_i, axis=-1))
        self.full_rows = np.nonzero(counts == m)[0] if r > 1 else np.empty(0, dtype=int)
        self.ragged_rows = [i for i in range(1, r) if counts[i] < m]


@dataclass
class SparseFactors:
    """Strictly-lower-triangular coefficient rows A and conditional variances D.

    ``a_pad[i, k]`` multiplies the k-th parent of node i (padding zeros beyond the
    parent count); ``d_diag`` holds the conditional variances, all strictly positive.
    """

    a_pad: np.ndarray
    d_diag: np.ndarray
    graph: NeighborGraph

    def a_rows(self) -> list:
        return [
            self.a_pad[i, : len(self.graph.parents[i])].copy()
            for i in range(self.graph.r)
        ]

    def dense_matrices(self):
        """Dense (A, D); test and diagnostic use only."""
        r = self.graph.r
        a_mat = np.zeros((r, r))
        for i, pars in enumerate(self.graph.parents):
            a_mat[i, pars] = self.a_pad[i, : len(pars)]
        return a_mat, np.diag(self.d_diag)

    def implied_cov(self) -> np.ndarray:
        """K~ = (I - A)^-1 D (I - A)^-T, dense; test and diagnostic use only."""
        a_mat, d_mat = self.dense_matrices()
        eye_a = np.eye(self.graph.r) - a_mat
        inv = np.linalg.solve(eye_a, np.eye(self.graph.r))
        return inv @ d_mat @ inv.T


def build_sparse_factors(graph: NeighborGraph, params: CovarianceParams, nugget=True) -> SparseFactors:
    """Per-node regression coefficients on parents and conditional variances.

    Node i > 0: a_i = K[Pa,Pa]^-1 K[Pa,i], d_i = K[i,i] - K[i,Pa] a_i; d_0 = K[0,0].
    K includes the nugget on its diagonal when ``nugget`` is True (response model).
    """
    ws = graph.workspace()
    sigma2 = params.sigma2
    tau2 = params.tau2 if nugget else 0.0
    marginal = sigma2 + tau2
    r = graph.r
    a_pad = np.zeros((r, ws.m if r > 1 else 1))
    d_diag = np.empty(r)
    d_diag[0] = marginal
    try:
        for i in ws.ragged_rows:
            c = ws.counts[i]
            k_pp = sigma2 * correlation(ws.dist_pp[i, :c, :c], params)
            k_pp[np.diag_indices(c)] += tau2
            k_pi = sigma2 * correlation(ws.dist_pi[i, :c], params)
            coef = np.linalg.solve(k_pp, k_pi)
            a_pad[i, :c] = coef
            d_diag[i] = marginal - float(k_pi @ coef)
        rows = ws.full_rows
        if rows.size:
            k_pp = sigma2 * correlation(ws.dist_pp[rows], params)
            k_pp[:, np.arange(ws.m), np.arange(ws.m)] += tau2
            k_pi = sigma2 * correlation(ws.dist_pi[rows], params)
            coef = np.linalg.solve(k_pp, k_pi[..., None])[..., 0]
            a_pad[rows] = coef
            d_diag[rows] = marginal - np.einsum("ij,ij->i", k_pi, coef)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"singular local system in factor build: {exc}") from exc
    if np.min(d_diag) <= 0:
        raise NotPositiveDefinite("nonpositive conditional variance (duplicate points?)")
    return SparseFactors(a_pad, d_diag, graph)


def _whiten(factors: SparseFactors, vec_ordered):
    """Residuals e_i - a_i' e_{N(i)} for a vector already in ordered indexing."""
    ws = factors.graph.workspace()
    gathered = np.where(ws.pad >= 0, vec_ordered[np.where(ws.pad >= 0, ws.pad, 0)], 0.0)
    return vec_ordered - np.einsum("ij,ij->i", factors.a_pad, gathered)


def nngp_loglik(data: Dataset, beta, params: CovarianceParams, graph: NeighborGraph,
                factors: SparseFactors | None = None) -> float:
    """Vecchia log likelihood sum_i ln N(e_i | a_i' e_N(i), d_i), e = y - X beta.

    2*pi constants omitted, matching the dense backend. The graph must be built on the
    data locations; the nugget is absorbed into the covariance.
    """
    if factors is None:
        factors = build_sparse_factors(graph, params, nugget=True)
    resid = (data.y - data.X @ np.asarray(beta, dtype=float))[graph.permutation]
    white = _whiten(factors, resid)
    return -0.5 * float(np.sum(np.log(factors.d_diag))) - 0.5 * float(
        np.sum(white * white / factors.d_diag)
    )


def sparse_precision(factors: SparseFactors) -> scipy.sparse.csr_matrix:
    """K~^-1 = (I - A)' D^-1 (I - A) as CSR, in ordered indexing."""
    graph = factors.graph
    r = graph.r
    rows, cols, vals = [], [], []
    for i, pars in enumerate(graph.parents):
        rows.append(i)
        cols.append(i)
        vals.append(1.0)
        for k, par in enumerate(pars):
            rows.append(i)
            cols.append(int(par))
            vals.append(-float(factors.a_pad[i, k]))
    eye_a = scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(r, r))
    d_inv = scipy.sparse.diags(1.0 / factors.d_diag)
    return (eye_a.T @ d_inv @ eye_a).tocsr()


def gibbs_w_latent(data: Dataset, w, beta, params: CovarianceParams, graph: NeighborGraph,
                   factors: SparseFactors, rng, precision=None) -> np.ndarray:
    """One sequential sweep of single-site updates for the latent field w.

    ``factors`` must come from the nugget-free prior (K = sigma2 R). Each site's full
    conditional is N(mu_i, 1/q_i) with q_i = Q_ii + 1/tau2 and
    mu_i = (-sum_{j != i} Q_ij w_j + (y_i - x_i'beta)/tau2) / q_i, touching only the
    sparse row support of Q. Input and output w are in original data order.
    """
    if precision is None:
        precision = sparse_precision(factors)
    perm = graph.permutation
    resid = (data.y - data.X @ np.asarray(beta, dtype=float))[perm]
    w_ord = np.asarray(w, dtype=float)[perm].copy()
    inv_tau2 = 1.0 / params.tau2
    indptr, indices, values = precision.indptr, precision.indices, precision.data
    noise = rng.standard_normal(graph.r)
    for i in range(graph.r):
        lo, hi = indptr[i], indptr[i + 1]
        cols = indices[lo:hi]
        vals = values[lo:hi]
        diag_pos = np.searchsorted(cols, i)
        q_ii = vals[diag_pos]
        cross = float(vals @ w_ord[cols]) - q_ii * w_ord[i]
        q_i = q_ii + inv_tau2
        mu_i = (-cross + resid[i] * inv_tau2) / q_i
        w_ord[i] = mu_i + noise[i] / np.sqrt(q_i)
    out = np.empty_like(w_ord)
    out[perm] = w_ord
    return out


class _PredictionGeometry:
    """Per-target nearest reference points and the associated distance blocks."""

    def __init__(self, targets, reference, m: int):
        targets = as_points(targets)
        reference = as_points(reference)
        n_ref = reference.shape[0]
        m_eff = min(m, n_ref)
        dist = pairwise_distances(targets, reference)
        nbr = np.argsort(dist, axis=1, kind="stable")[:, :m_eff]
        nbr = np.sort(nbr, axis=1)
        nbr_coords = reference[nbr]
        diff = nbr_coords[:, :, None, :] - nbr_coords[:, None, :, :]
        self.nbr = nbr
        self.dist_nn = np.sqrt(np.sum(diff * diff, axis=-1))
        self.dist_ni = np.take_along_axis(dist, nbr, axis=1)
        self.m_eff = m_eff
        self.coincident = np.min(dist, axis=1) == 0.0


def _conditional_weights(geom: _PredictionGeometry, params: CovarianceParams, nugget: bool):
    sigma2 = params.sigma2
    tau2 = params.tau2 if nugget else 0.0
    k_nn = sigma2 * correlation(geom.dist_nn, params)
    k_nn[:, np.arange(geom.m_eff), np.arange(geom.m_eff)] += tau2
    k_ni = sigma2 * correlation(geom.dist_ni, params)
    try:
        weights = np.linalg.solve(k_nn, k_ni[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"singular neighbor system in prediction: {exc}") from exc
    delta2 = (sigma2 + tau2) - np.einsum("ij,ij->i", k_ni, weights)
    return weights, np.maximum(delta2, 0.0)


def nngp_predict(targets, data: Dataset, theta_draws, beta_draws, m: int, rng,
                 model: str = "response", w_draws=None, x_targets=None,
                 family: str = "exponential", nu=None, include_noise=True) -> np.ndarray:
    """Posterior predictive draws at arbitrary targets; one row per draw.

    Each target conditions on its m nearest reference (observed) locations. The
    response model draws y(l) ~ N(x'beta + a'(y_N - X_N beta), delta2) with the nugget
    absorbed; the latent model draws w(l) ~ N(a' w_N, delta2) from the nugget-free
    prior and pushes it through the measurement model. With ``include_noise=False``
    the per-draw conditional means are returned instead of noisy draws (for scoring).
    """
    targets = as_points(targets)
    theta_draws = np.atleast_2d(np.asarray(theta_draws, dtype=float))
    beta_draws = np.atleast_2d(np.asarray(beta_draws, dtype=float))
    x_t = _target_regressors(x_targets, targets.shape[0], beta_draws.shape[1])
    geom = _PredictionGeometry(targets, data.locations, m)
    n_draws, n_targets = theta_draws.shape[0], targets.shape[0]
    out = np.empty((n_draws, n_targets))
    for k in range(n_draws):
        sigma2, tau2, phi = theta_draws[k]
        params = CovarianceParams(sigma2=sigma2, phi=phi, tau2=tau2, nu=nu, family=family)
        beta = beta_draws[k]
        if model == "response":
            weights, delta2 = _conditional_weights(geom, params, nugget=True)
            resid = (data.y - data.X @ beta)[geom.nbr]
            mean = x_t @ beta + np.einsum("ij,ij->i", weights, resid)
            if include_noise:
                mean = mean + np.sqrt(delta2) * rng.standard_normal(n_targets)
            out[k] = mean
        elif model == "latent":
            if tau2 == 0.0 and bool(np.any(geom.coincident)):
                raise TargetInReference(
                    "latent-model target coincides with a reference point at tau2 = 0"
                )
            if w_draws is None:
                raise ValueError("latent-model prediction needs w draws")
            weights, delta2 = _conditional_weights(geom, params, nugget=False)
            w_nbr = np.asarray(w_draws)[k][geom.nbr]
            w_t = np.einsum("ij,ij->i", weights, w_nbr)
            if include_noise:
                w_t = w_t + np.sqrt(delta2) * rng.standard_normal(n_targets)
                out[k] = x_t @ beta + w_t + np.sqrt(tau2) * rng.standard_normal(n_targets)
            else:
                out[k] = x_t @ beta + w_t
        else:
            raise ValueError(f"model must be 'response' or 'latent', got {model!r}")
    return out


class NNGPResponseBackend:
    """Response-model NNGP backend: y ~ N(X beta, K~) with the nugget absorbed."""

    model_tag = "nngp_response"
    param_names = ("sigma2", "tau2", "phi")

    def __init__(self, data: Dataset, priors, m: int, ordering: str = "coord_sum",
                 family: str = "exponential", nu=None):
        self.data = data
        self.priors = priors
        self.m = m
        self.family = family
        self.nu = nu
        self.graph = build_graph(data.locations, m, ordering)
        self._x_ord = data.X[self.graph.permutation]
        self._y_ord = data.y[self.graph.permutation]
        self._memo = {}

    def _params(self, theta) -> CovarianceParams:
        sigma2, tau2, phi = theta
        return CovarianceParams(sigma2=sigma2, phi=phi, tau2=tau2, nu=self.nu, family=self.family)

    def _factors(self, theta) -> SparseFactors:
        key = tuple(theta)
        if key not in self._memo:
            if len(self._memo) > 3:
                self._memo.clear()
            self._memo[key] = build_sparse_factors(self.graph, self._params(theta), nugget=True)
        return self._memo[key]

    def log_target(self, theta, beta) -> float:
        logp = self.priors.log_theta(*theta)
        if not np.isfinite(logp):
            return -np.inf
        factors = self._factors(theta)
        white = _whiten(factors, self._y_ord - self._x_ord @ beta)
        return logp - 0.5 * float(np.sum(np.log(factors.d_diag))) - 0.5 * float(
            np.sum(white * white / factors.d_diag)
        )

    def gibbs_beta(self, theta, rng):
        factors = self._factors(theta)
        sqrt_d = np.sqrt(factors.d_diag)
        wx = np.column_stack(
            [_whiten(factors, self._x_ord[:, j]) for j in range(self.data.p)]
        ) / sqrt_d[:, None]
        wy = _whiten(factors, self._y_ord) / sqrt_d
        prec, shift = self.priors.add_beta_prior(wx.T @ wx, wx.T @ wy)
        return _draw_from_precision(prec, shift, rng)

    def initial_beta(self):
        return np.linalg.lstsq(self.data.X, self.data.y, rcond=None)[0]

    def predict_draws(self, theta_draws, beta_draws, targets, x_targets, rng,
                      include_noise=True):
        return nngp_predict(targets, self.data, theta_draws, beta_draws, self.m, rng,
                            model="response", x_targets=x_targets,
                            family=self.family, nu=self.nu, include_noise=include_noise)


class NNGPLatentBackend:
    """Latent-model NNGP backend: nugget-free NNGP prior on w plus iid N(0, tau2) error.

    Holds the current latent field as chain state; ``gibbs_latent`` runs one
    sequential sweep of exact sparse-precision single-site updates.
    """

    model_tag = "nngp_latent"
    param_names = ("sigma2", "tau2", "phi")
    latent_name = "w"

    def __init__(self, data: Dataset, priors, m: int, ordering: str = "coord_sum",
                 family: str = "exponential", nu=None, response_family: str = "gaussian"):
        if response_family != "gaussian":
            raise UnsupportedFamily(
                f"only the identity-Gaussian first stage is supported, got "
                f"{response_family!r}")
        self.data = data
        self.priors = priors
        self.m = m
        self.family = family
        self.nu = nu
        self.graph = build_graph(data.locations, m, ordering)
        self.w = np.zeros(data.n)
        self._memo = {}

    def _params(self, theta) -> CovarianceParams:
        sigma2, tau2, phi = theta
        return CovarianceParams(sigma2=sigma2, phi=phi, tau2=tau2, nu=self.nu, family=self.family)

    def _prior_pieces(self, sigma2, phi):
        key = (sigma2, phi)
        if key not in self._memo:
            if len(self._memo) > 3:
                self._memo.clear()
            params = CovarianceParams(sigma2=sigma2, phi=phi, tau2=0.0, nu=self.nu, family=self.family)
            factors = build_sparse_factors(self.graph, params, nugget=False)
            self._memo[key] = (factors, sparse_precision(factors))
        return self._memo[key]

    def log_target(self, theta, beta) -> float:
        sigma2, tau2, phi = theta
        logp = self.priors.log_theta(*theta)
        if not np.isfinite(logp):
            return -np.inf
        factors, _ = self._prior_pieces(sigma2, phi)
        w_ord = self.w[self.graph.permutation]
        white = _whiten(factors, w_ord)
        prior_ll = -0.5 * float(np.sum(np.log(factors.d_diag))) - 0.5 * float(
            np.sum(white * white / factors.d_diag)
        )
        resid = self.data.y - self.data.X @ beta - self.w
        data_ll = -0.5 * self.data.n * np.log(tau2) - 0.5 * float(resid @ resid) / tau2
        return logp + prior_ll + data_ll

    def gibbs_beta(self, theta, rng):
        tau2 = theta[1]
        prec = self.data.X.T @ self.data.X / tau2
        shift = self.data.X.T @ (self.data.y - self.w) / tau2
        prec, shift = self.priors.add_beta_prior(prec, shift)
        return _draw_from_precision(prec, shift, rng)

    def gibbs_latent(self, theta, beta, rng):
        sigma2, tau2, phi = theta
        factors, precision = self._prior_pieces(sigma2, phi)
        self.w = gibbs_w_latent(self.data, self.w, beta, self._params(theta), self.graph,
                                factors, rng, precision=precision)
        return self.w.copy()

    def initial_beta(self):
        return np.linalg.lstsq(self.data.X, self.data.y, rcond=None)[0]

    def predict_draws(self, theta_draws, beta_draws, targets, x_targets, rng,
                      w_draws=None, include_noise=True):
        if w_draws is None:
            raise ValueError("latent-model prediction needs the recorded w draws")
        return nngp_predict(targets, self.data, theta_draws, beta_draws, self.m, rng,
                            model="latent", w_draws=w_draws, x_targets=x_targets,
                            family=self.family, nu=self.nu, include_noise=include_noise)
