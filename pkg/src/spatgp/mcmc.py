"""Adaptive random-walk Metropolis over log-transformed covariance parameters with
Gibbs blocks for beta (and a latent field where the backend has one).

A model backend supplies ``log_target(theta, beta)`` (priors included, 2*pi constants
omitted), ``gibbs_beta(theta, rng)``, ``initial_beta()``, and optionally
``gibbs_latent(theta, beta, rng)``. One chain is strictly sequential; separate chains
take independent seeds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ChainError, InsufficientDraws, SpatGPError

ADAPT_STEP = 0.05


@dataclass(frozen=True)
class InverseGamma:
    """Inverse-gamma(shape, scale): mean scale/(shape-1) for shape > 1."""

    shape: float
    scale: float

    def logpdf(self, x: float) -> float:
        if x <= 0:
            return -np.inf
        return (
            self.shape * math.log(self.scale)
            - math.lgamma(self.shape)
            - (self.shape + 1.0) * math.log(x)
            - self.scale / x
        )


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def logpdf(self, x: float) -> float:
        if self.lo <= x <= self.hi:
            return -math.log(self.hi - self.lo)
        return -np.inf


class PriorSpec:
    """Priors for (sigma2, tau2, phi) and optionally a Gaussian prior on beta.

    ``beta_mean``/``beta_cov`` of None means a flat prior on beta.
    """

    def __init__(self, sigma2: InverseGamma, tau2: InverseGamma, phi: Uniform,
                 beta_mean=None, beta_cov=None):
        self.sigma2 = sigma2
        self.tau2 = tau2
        self.phi = phi
        if (beta_mean is None) != (beta_cov is None):
            raise ValueError("beta prior needs both mean and covariance (or neither)")
        if beta_mean is None:
            self.beta_mean = None
            self._beta_prec = None
        else:
            self.beta_mean = np.asarray(beta_mean, dtype=float).ravel()
            self._beta_prec = np.linalg.inv(np.atleast_2d(np.asarray(beta_cov, dtype=float)))

    def log_theta(self, sigma2: float, tau2: float, phi: float) -> float:
        return self.sigma2.logpdf(sigma2) + self.tau2.logpdf(tau2) + self.phi.logpdf(phi)

    def add_beta_prior(self, prec, shift):
        if self._beta_prec is None:
            return prec, shift
        return prec + self._beta_prec, shift + self._beta_prec @ self.beta_mean

    @staticmethod
    def default_for(sigma2: float, tau2: float, phi: float) -> "PriorSpec":
        """Weakly informative defaults: IG(2, value) variances (prior mean = value),
        decay rate uniform covering the given value by a factor of 10 each way, flat
        beta."""
        return PriorSpec(
            sigma2=InverseGamma(2.0, sigma2),
            tau2=InverseGamma(2.0, tau2),
            phi=Uniform(phi / 10.0, phi * 10.0),
        )


@dataclass
class ChainConfig:
    """MCMC run settings; defaults match the experiment reproductions."""

    iterations: int = 5000
    burn_in: int = 2500
    thin: int = 1
    seed: int = 0
    initial_theta: tuple = (1.0, 1.0, 1.0)
    initial_beta: object = None
    adapt_window: int = 50
    target_accept: float = 0.35
    initial_scale: float = 0.1

    def __post_init__(self):
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("need 0 <= burn_in < iterations")
        if self.thin < 1:
            raise ValueError("need thin >= 1")


@dataclass
class PosteriorSamples:
    """Retained draws plus the per-iteration chain trace needed for diagnostics."""

    names: list
    draws: np.ndarray  # (k, 3 + p): sigma2, tau2, phi, beta_0, ...
    accepted: np.ndarray  # (iterations,) bool
    scales: np.ndarray  # (iterations, 3) proposal scales in force at each iteration
    log_targets: np.ndarray  # (iterations,) value after the iteration's updates
    retained_iters: np.ndarray  # iteration index of each retained draw
    seed: int
    model_tag: str
    burn_in: int
    thin: int
    latent: np.ndarray | None = None  # (k, n) latent draws when the backend has them
    latent_name: str | None = None

    @property
    def theta_draws(self) -> np.ndarray:
        return self.draws[:, :3]

    @property
    def beta_draws(self) -> np.ndarray:
        return self.draws[:, 3:]

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]


def log_transform_target(target_fn, u):
    """Log target in u = ln(params) space: target(exp(u)) + sum(u) (Jacobian)."""
    u = np.asarray(u, dtype=float)
    value = target_fn(np.exp(u))
    if not np.isfinite(value):
        return -np.inf
    return value + float(np.sum(u))


def rw_step(u, scale, target_fn, rng, current=None):
    """One Gaussian random-walk Metropolis step; returns (u_new, accepted, value).

    Proposes u' = u + scale * z and accepts with probability
    min(1, exp(target(u') - target(u))). The rng is consumed identically whether or
    not the proposal is accepted.
    """
    u = np.asarray(u, dtype=float)
    step = np.asarray(scale, dtype=float) * rng.standard_normal(u.shape)
    proposal = u + step
    if current is None:
        current = target_fn(u)
    prop_value = target_fn(proposal)
    log_unif = np.log(rng.random())
    if np.isfinite(prop_value) and log_unif < prop_value - current:
        return proposal, True, prop_value
    return u, False, current


def adapt_scale(window_accept_rate: float, scale, target_rate: float = 0.35):
    """Nudge the proposal scale by exp(+/-0.05) toward the target acceptance rate."""
    if window_accept_rate > target_rate:
        return scale * math.exp(ADAPT_STEP)
    if window_accept_rate < target_rate:
        return scale * math.exp(-ADAPT_STEP)
    return scale


def run_chain(backend, config: ChainConfig) -> PosteriorSamples:
    """Run one chain: (theta, tau) Metropolis block, then beta Gibbs, then the latent
    block if the backend has one. Deterministic under a fixed seed."""
    rng = np.random.default_rng(config.seed)
    u = np.log(np.asarray(config.initial_theta, dtype=float))
    if u.shape != (3,):
        raise ValueError("initial_theta must be (sigma2, tau2, phi)")
    beta = (np.asarray(config.initial_beta, dtype=float)
            if config.initial_beta is not None else np.asarray(backend.initial_beta(), dtype=float))
    has_latent = hasattr(backend, "gibbs_latent")
    scales = np.full(3, config.initial_scale, dtype=float)

    def u_target(u_vec, beta_vec):
        return log_transform_target(lambda th: backend.log_target(th, beta_vec), u_vec)

    try:
        current = u_target(u, beta)
    except SpatGPError as exc:
        raise ChainError(f"iteration 0: {exc}") from exc
    if not np.isfinite(current):
        raise ChainError("iteration 0: log target not finite at the initial values")

    n_iter = config.iterations
    accepted = np.zeros(n_iter, dtype=bool)
    scale_trace = np.empty((n_iter, 3))
    target_trace = np.empty(n_iter)
    retained, retained_iters, latent_draws = [], [], []
    window_hits = 0

    for it in range(n_iter):
        scale_trace[it] = scales
        try:
            u, acc, current = rw_step(u, scales, lambda v: u_target(v, beta), rng, current=current)
            theta = np.exp(u)
            beta = backend.gibbs_beta(theta, rng)
            if has_latent:
                latent = backend.gibbs_latent(theta, beta, rng)
            current = u_target(u, beta)
        except SpatGPError as exc:
            raise ChainError(f"iteration {it}: {exc}") from exc
        accepted[it] = acc
        target_trace[it] = current
        window_hits += int(acc)
        in_burn = it < config.burn_in
        if in_burn and (it + 1) % config.adapt_window == 0:
            rate = window_hits / config.adapt_window
            scales = np.array([adapt_scale(rate, s, config.target_accept) for s in scales])
            window_hits = 0
        if not in_burn and (it - config.burn_in) % config.thin == 0:
            retained.append(np.concatenate([theta, beta]))
            retained_iters.append(it)
            if has_latent:
                latent_draws.append(latent)

    names = list(backend.param_names) + [f"beta_{j}" for j in range(beta.shape[0])]
    return PosteriorSamples(
        names=names,
        draws=np.asarray(retained),
        accepted=accepted,
        scales=scale_trace,
        log_targets=target_trace,
        retained_iters=np.asarray(retained_iters),
        seed=config.seed,
        model_tag=backend.model_tag,
        burn_in=config.burn_in,
        thin=config.thin,
        latent=np.asarray(latent_draws) if latent_draws else None,
        latent_name=getattr(backend, "latent_name", None),
    )


def summarize(samples) -> dict:
    """Per-parameter mean, sd, and equal-tail 2.5/50/97.5% quantiles.

    Quantiles use linear interpolation of the order statistics. Accepts a
    PosteriorSamples or a mapping of name -> draw array.
    """
    if isinstance(samples, PosteriorSamples):
        columns = {name: samples.draws[:, j] for j, name in enumerate(samples.names)}
    else:
        columns = {name: np.asarray(vals, dtype=float) for name, vals in samples.items()}
    out = {}
    for name, vals in columns.items():
        if vals.size < 2:
            raise InsufficientDraws(f"{name}: need at least 2 draws, got {vals.size}")
        lo, med, hi = np.percentile(vals, [2.5, 50.0, 97.5])
        out[name] = {
            "mean": float(np.mean(vals)),
            "sd": float(np.std(vals, ddof=1)),
            "q2.5": float(lo),
            "q50": float(med),
            "q97.5": float(hi),
        }
    return out


def write_samples_csv(path, samples: PosteriorSamples) -> None:
    lines = [",".join(samples.names)]
    for row in samples.draws:
        lines.append(",".join(repr(float(v)) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_samples_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        names = fh.readline().strip().split(",")
        rows = [[float(v) for v in line.strip().split(",")] for line in fh if line.strip()]
    return names, np.asarray(rows)


def write_chain_log(path, samples: PosteriorSamples, config: ChainConfig) -> None:
    """JSON-lines chain log: a metadata record, then one record per iteration."""
    meta = {
        "model": samples.model_tag,
        "seed": config.seed,
        "iterations": config.iterations,
        "burn_in": config.burn_in,
        "thin": config.thin,
        "target_accept": config.target_accept,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(meta, sort_keys=True) + "\n")
        for it in range(samples.accepted.shape[0]):
            rec = {
                "iteration": it,
                "accepted": bool(samples.accepted[it]),
                "scales": [float(s) for s in samples.scales[it]],
                "log_target": float(samples.log_targets[it]),
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
