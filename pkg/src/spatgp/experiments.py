"""End-to-end experiment harness for the four simulation studies.

Each experiment simulates its design at a requested scale, fits the relevant
backends by MCMC, and writes a ``report.json`` plus a plot-ready ``report.csv``
(and per-configuration samples/chain-log/summary files in subdirectories). All
outputs are deterministic functions of (configuration, seed): no timestamps,
hostnames, or absolute paths ever enter the files.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from threadpoolctl import threadpool_limits

from .covariance import CovarianceParams, marginal_cov, phi_for_effective_range
from .datasets import Dataset
from .fullgp import FullGPBackend
from .lowrank import LowRankBackend, LowRankSpec, grid_knots, subset_knots
from .mcmc import ChainConfig, PosteriorSamples, PriorSpec, run_chain, summarize, write_chain_log, write_samples_csv
from .metrics import kl_gaussians, rmspe
from .nngp import NNGPResponseBackend, build_sparse_factors
from .simulate import paper_design, simulate

EXPERIMENT_TAGS = ("fig2", "table1", "fig5", "table2")

FIG2_KNOTS = (5, 25, 50, 100, 175)
TABLE1_KNOTS = (49,)
FIG5_RANGES = (0.2, 0.5, 0.8)
TABLE2_ORDERINGS = ("coord_sum", "maxmin", "sorted_x", "sorted_y")
RANGE_THRESHOLD = 0.05


def derive_seed(*parts) -> int:
    """Stable derived seed for replicate/config streams (platform independent)."""
    digest = hashlib.sha256(repr(parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def default_priors(params: CovarianceParams) -> PriorSpec:
    return PriorSpec.default_for(params.sigma2, params.tau2, params.phi)


def _chain_config(params: CovarianceParams, seed: int, iterations: int, burn_in: int) -> ChainConfig:
    return ChainConfig(
        iterations=iterations,
        burn_in=burn_in,
        thin=1,
        seed=seed,
        initial_theta=(params.sigma2, params.tau2, params.phi),
    )


def _fit(backend, config, out_dir=None) -> PosteriorSamples:
    samples = run_chain(backend, config)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_samples_csv(os.path.join(out_dir, "samples.csv"), samples)
        write_chain_log(os.path.join(out_dir, "chain_log.jsonl"), samples, config)
        with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
            json.dump(summarize(samples), fh, sort_keys=True, indent=2)
            fh.write("\n")
    return samples


def _predictive_means(backend, samples: PosteriorSamples, targets, rng) -> np.ndarray:
    """Posterior predictive mean per target: conditional means averaged over draws."""
    draws = backend.predict_draws(
        samples.theta_draws, samples.beta_draws, targets, None, rng, include_noise=False
    )
    return draws.mean(axis=0)


# ---------------------------------------------------------------------------
# fig2 study: nugget overestimation of the radial-basis low-rank model
# ---------------------------------------------------------------------------

def _fig2_unit(args):
    scale, knots_r, replicate, base_seed, iterations, burn_in, out_dir = args
    design = paper_design("fig2", scale, seed=derive_seed(base_seed, replicate, 0))
    sim = simulate(design)
    spec = LowRankSpec("radial", subset_knots(sim.dataset.locations, knots_r), design.params)
    backend = LowRankBackend(sim.dataset, spec, default_priors(design.params))
    config = _chain_config(design.params, derive_seed(base_seed, replicate, knots_r, 1),
                           iterations, burn_in)
    samples = _fit(backend, config, out_dir)
    stats = summarize(samples)["tau2"]
    return {
        "knots": knots_r,
        "replicate": replicate,
        "tau2_mean": stats["mean"],
        "tau2_q2.5": stats["q2.5"],
        "tau2_q97.5": stats["q97.5"],
        "true_tau2": design.params.tau2,
    }


def run_fig2(scale=1.0, seed=0, out_dir=None, knot_counts=FIG2_KNOTS, replicates=3,
             iterations=5000, burn_in=2500, threads=1) -> dict:
    jobs = [
        (scale, r, j, seed, iterations, burn_in,
         _subdir(out_dir, f"knots{r:03d}_rep{j}"))
        for r in knot_counts
        for j in range(replicates)
    ]
    rows = _run_jobs(_fig2_unit, jobs, threads)
    report = {"tag": "fig2", "scale": scale, "seed": seed, "rows": rows}
    _write_report(out_dir, report,
                  ["knots", "replicate", "tau2_mean", "tau2_q2.5", "tau2_q97.5", "true_tau2"])
    return report


# ---------------------------------------------------------------------------
# table1 study: predictive process vs modified predictive process
# ---------------------------------------------------------------------------

def _table1_unit(args):
    scale, knots_r, variant, replicate, base_seed, iterations, burn_in, out_dir = args
    design = paper_design("table1", scale, seed=derive_seed(base_seed, replicate, 0))
    sim = simulate(design)
    train, test = sim.train_test()
    bbox = tuple((train.locations[:, k].min(), train.locations[:, k].max())
                 for k in range(train.locations.shape[1]))
    spec = LowRankSpec(variant, grid_knots(bbox, knots_r), design.params)
    backend = LowRankBackend(train, spec, default_priors(design.params))
    config = _chain_config(design.params,
                           derive_seed(base_seed, replicate, knots_r, variant), iterations, burn_in)
    samples = _fit(backend, config, out_dir)
    stats = summarize(samples)
    rng = np.random.default_rng(derive_seed(base_seed, replicate, knots_r, variant, "predict"))
    pred_mean = _predictive_means(backend, samples, test.locations, rng)
    row = {"knots": knots_r, "variant": variant, "replicate": replicate,
           "rmspe": rmspe(test.y, pred_mean)}
    for name, out_name in (("beta_0", "mu"), ("sigma2", "sigma2"), ("tau2", "tau2")):
        row[f"{out_name}_q50"] = stats[name]["q50"]
        row[f"{out_name}_q2.5"] = stats[name]["q2.5"]
        row[f"{out_name}_q97.5"] = stats[name]["q97.5"]
    return row


def run_table1(scale=0.25, seed=0, out_dir=None, knot_counts=TABLE1_KNOTS, replicates=3,
               iterations=5000, burn_in=2500, threads=1) -> dict:
    jobs = [
        (scale, r, variant, j, seed, iterations, burn_in,
         _subdir(out_dir, f"knots{r:03d}_{variant}_rep{j}"))
        for r in knot_counts
        for j in range(replicates)
        for variant in ("pp", "mpp")
    ]
    rows = _run_jobs(_table1_unit, jobs, threads)
    report = {"tag": "table1", "scale": scale, "seed": seed,
              "true": {"mu": 1.0, "sigma2": 1.0, "tau2": 1.0}, "rows": rows}
    _write_report(out_dir, report,
                  ["knots", "variant", "replicate", "mu_q50", "mu_q2.5", "mu_q97.5",
                   "sigma2_q50", "sigma2_q2.5", "sigma2_q97.5",
                   "tau2_q50", "tau2_q2.5", "tau2_q97.5", "rmspe"])
    return report


# ---------------------------------------------------------------------------
# fig5 study: effective-range intervals, NNGP vs full GP
# ---------------------------------------------------------------------------

def _fig5_unit(args):
    scale, true_range, model, replicate, base_seed, m, iterations, burn_in, out_dir = args
    params = paper_design("fig5", scale).params.replace(
        phi=phi_for_effective_range(true_range, RANGE_THRESHOLD))
    design = paper_design("fig5", scale, seed=derive_seed(base_seed, replicate, true_range)) \
        .replace(params=params)
    sim = simulate(design)
    priors = default_priors(design.params)
    if model == "fullgp":
        backend = FullGPBackend(sim.dataset, priors)
    else:
        backend = NNGPResponseBackend(sim.dataset, priors, m=m)
    config = _chain_config(design.params,
                           derive_seed(base_seed, replicate, true_range, model),
                           iterations, burn_in)
    samples = _fit(backend, config, out_dir)
    phi_draws = samples.theta_draws[:, 2]
    range_draws = -np.log(RANGE_THRESHOLD) / phi_draws
    lo, med, hi = np.percentile(range_draws, [2.5, 50.0, 97.5])
    return {
        "true_range": true_range, "model": model, "replicate": replicate,
        "range_q2.5": float(lo), "range_q50": float(med), "range_q97.5": float(hi),
        "covers_truth": bool(lo <= true_range <= hi),
    }


def run_fig5(scale=0.2, seed=0, out_dir=None, ranges=FIG5_RANGES, replicates=3, m=10,
             iterations=5000, burn_in=2500, threads=1) -> dict:
    jobs = [
        (scale, rg, model, j, seed, m, iterations, burn_in,
         _subdir(out_dir, f"range{int(round(rg * 100)):03d}_{model}_rep{j}"))
        for rg in ranges
        for j in range(replicates)
        for model in ("nngp_response", "fullgp")
    ]
    rows = _run_jobs(_fig5_unit, jobs, threads)
    report = {"tag": "fig5", "scale": scale, "seed": seed, "m": m, "rows": rows}
    _write_report(out_dir, report,
                  ["true_range", "model", "replicate", "range_q2.5", "range_q50",
                   "range_q97.5", "covers_truth"])
    return report


# ---------------------------------------------------------------------------
# table2 study: NNGP topological orderings, KL divergence, RMSPE
# ---------------------------------------------------------------------------

def _table2_unit(args):
    scale, ordering, base_seed, m, iterations, burn_in, kl_average_draws, out_dir = args
    # shared data seed across orderings: only the ordering differs
    design = paper_design("table2", scale, seed=derive_seed(base_seed, "data"))
    sim = simulate(design)
    train, test = sim.train_test()
    backend = NNGPResponseBackend(train, default_priors(design.params), m=m, ordering=ordering)
    config = _chain_config(design.params, derive_seed(base_seed, "chain"), iterations, burn_in)
    samples = _fit(backend, config, out_dir)
    stats = summarize(samples)
    rng = np.random.default_rng(derive_seed(base_seed, ordering, "predict"))
    pred_mean = _predictive_means(backend, samples, test.locations, rng)
    sigma_draws = np.sqrt(samples.theta_draws[:, 0])
    tau_draws = np.sqrt(samples.theta_draws[:, 1])
    theta_hat = samples.theta_draws.mean(axis=0)
    kl_fwd, kl_rev = _table2_kl(train, design.params, backend, theta_hat)
    row = {"ordering": ordering, "rmspe": rmspe(test.y, pred_mean),
           "kl_true_vs_fit": kl_fwd, "kl_fit_vs_true": kl_rev}
    if kl_average_draws:
        # slower variant: KL averaged over evenly spaced posterior draws instead of
        # evaluated once at the posterior mean
        step = max(1, samples.n_draws // kl_average_draws)
        pairs = [_table2_kl(train, design.params, backend, theta)
                 for theta in samples.theta_draws[::step]]
        row["kl_true_vs_fit_draw_avg"] = float(np.mean([p[0] for p in pairs]))
        row["kl_fit_vs_true_draw_avg"] = float(np.mean([p[1] for p in pairs]))
    for name, draws in (("sigma", sigma_draws), ("tau", tau_draws)):
        lo, med, hi = np.percentile(draws, [2.5, 50.0, 97.5])
        row.update({f"{name}_q50": float(med), f"{name}_q2.5": float(lo),
                    f"{name}_q97.5": float(hi)})
    row.update({f"phi_{k}": stats["phi"][k] for k in ("q50", "q2.5", "q97.5")})
    return row


def _table2_kl(train: Dataset, true_params: CovarianceParams, backend, theta_hat):
    """KL between the true marginal and the fitted NNGP covariance, both directions,
    over the observed (training) locations in the backend's ordering."""
    perm = backend.graph.permutation
    cov_true = marginal_cov(train.locations, true_params)[np.ix_(perm, perm)]
    fitted = CovarianceParams(sigma2=theta_hat[0], phi=theta_hat[2], tau2=theta_hat[1],
                              nu=backend.nu, family=backend.family)
    cov_fit = build_sparse_factors(backend.graph, fitted, nugget=True).implied_cov()
    zero = np.zeros(cov_true.shape[0])
    return (kl_gaussians(zero, cov_true, zero, cov_fit),
            kl_gaussians(zero, cov_fit, zero, cov_true))


def run_table2(scale=900 / 6400, seed=0, out_dir=None, orderings=TABLE2_ORDERINGS, m=10,
               iterations=5000, burn_in=2500, threads=1, kl_average_draws=0) -> dict:
    jobs = [
        (scale, ordering, seed, m, iterations, burn_in, kl_average_draws,
         _subdir(out_dir, ordering))
        for ordering in orderings
    ]
    rows = _run_jobs(_table2_unit, jobs, threads)
    report = {"tag": "table2", "scale": scale, "seed": seed, "m": m,
              "true": {"sigma": 1.0, "tau": 0.45, "phi": 5.0}, "rows": rows,
              "min_kl_ordering": min(rows, key=lambda r: r["kl_true_vs_fit"])["ordering"]}
    columns = ["ordering", "sigma_q50", "sigma_q2.5", "sigma_q97.5",
               "tau_q50", "tau_q2.5", "tau_q97.5", "phi_q50", "phi_q2.5",
               "phi_q97.5", "kl_true_vs_fit", "kl_fit_vs_true", "rmspe"]
    if kl_average_draws:
        columns += ["kl_true_vs_fit_draw_avg", "kl_fit_vs_true_draw_avg"]
    _write_report(out_dir, report, columns)
    return report


# ---------------------------------------------------------------------------
# dispatcher and shared plumbing
# ---------------------------------------------------------------------------

def run_experiment(tag: str, scale=None, seed=0, out_dir=None, iterations=5000,
                   burn_in=None, threads=1) -> dict:
    if burn_in is None:
        burn_in = iterations // 2
    common = dict(seed=seed, out_dir=out_dir, iterations=iterations, burn_in=burn_in,
                  threads=threads)
    if tag == "fig2":
        return run_fig2(scale=1.0 if scale is None else scale, **common)
    if tag == "table1":
        return run_table1(scale=0.25 if scale is None else scale, **common)
    if tag == "fig5":
        return run_fig5(scale=0.2 if scale is None else scale, **common)
    if tag == "table2":
        return run_table2(scale=900 / 6400 if scale is None else scale, **common)
    raise ValueError(f"unknown experiment tag {tag!r}; expected one of {EXPERIMENT_TAGS}")


def parity_run(data: Dataset, priors: PriorSpec, config: ChainConfig):
    """Shared-seed oracle parity: the same chain through the dense backend and the
    saturated (m = n - 1) NNGP backend; returns the two PosteriorSamples."""
    dense = run_chain(FullGPBackend(data, priors), config)
    sparse = run_chain(NNGPResponseBackend(data, priors, m=data.n - 1), config)
    return dense, sparse


def _subdir(out_dir, name):
    return None if out_dir is None else os.path.join(out_dir, name)


def _limited(unit_and_job):
    # single-threaded BLAS inside each unit: these matrix sizes gain nothing from
    # threading and oversubscription makes wall times erratic
    unit, job = unit_and_job
    with threadpool_limits(limits=1):
        return unit(job)


def _run_jobs(unit, jobs, threads):
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_limited, [(unit, job) for job in jobs]))
    return [_limited((unit, job)) for job in jobs]


def _write_report(out_dir, report: dict, columns) -> None:
    if out_dir is None:
        return
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    lines = [",".join(columns)]
    for row in report["rows"]:
        lines.append(",".join(_csv_cell(row[c]) for c in columns))
    with open(os.path.join(out_dir, "report.csv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _csv_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)
