"""Command-line interface: simulate / fit / predict / experiment / summarize.

Exit codes: 0 success, 2 invalid arguments or unreadable inputs, 3 numerical failure
inside a model run (the message carries the failing iteration).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .covariance import CovarianceParams, phi_for_effective_range
from .datasets import read_dataset_csv, read_points_csv, write_dataset_csv
from .errors import ChainError, ConfigError, NotPositiveDefinite, SpatGPError, ZeroDiagonal
from .experiments import EXPERIMENT_TAGS, run_experiment
from .fullgp import FullGPBackend
from .lowrank import KnotSet, LowRankBackend, LowRankSpec, grid_knots, subset_knots
from .mcmc import (ChainConfig, InverseGamma, PriorSpec, Uniform, read_samples_csv,
                   run_chain, summarize, write_chain_log, write_samples_csv)
from .nngp import NNGPLatentBackend, NNGPResponseBackend, ORDERINGS
from .simulate import PAPER_TAGS, SimDesign, paper_design, simulate

MODELS = ("fullgp", "pp", "mpp", "radial", "nngp_response", "nngp_latent")


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ChainError, NotPositiveDefinite, ZeroDiagonal) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, SpatGPError, ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the run seed")
    common.add_argument("--threads", type=int, default=1, help="parallel experiment configs")
    common.add_argument("--out", default=None, help="output directory")

    parser = argparse.ArgumentParser(prog="spatgp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", parents=[common], help="write a synthetic dataset")
    sim.add_argument("--paper", choices=PAPER_TAGS, help="use a built-in study design")
    sim.add_argument("--scale", type=float, default=1.0)
    sim.add_argument("--n", type=int, help="number of locations (custom design)")
    sim.add_argument("--bounds", default="0,1,0,1",
                     help="domain box lo1,hi1,lo2,hi2 (custom design)")
    sim.add_argument("--layout", choices=("uniform", "grid"), default="uniform")
    sim.add_argument("--sigma2", type=float, default=1.0)
    sim.add_argument("--tau2", type=float, default=0.1)
    sim.add_argument("--phi", type=float, default=1.0)
    sim.add_argument("--beta", type=float, default=0.0)
    sim.add_argument("--holdout", type=float, default=0.0)
    sim.set_defaults(func=_cmd_simulate)

    fit = sub.add_parser("fit", parents=[common], help="run one MCMC fit from a JSON config")
    fit.add_argument("--config", required=True)
    fit.set_defaults(func=_cmd_fit)

    pred = sub.add_parser("predict", parents=[common], help="posterior predictive at targets")
    pred.add_argument("--config", required=True)
    pred.add_argument("--samples", required=True, help="samples.csv from fit")
    pred.add_argument("--targets", required=True, help="target coordinates CSV")
    pred.add_argument("--dump-draws", action="store_true",
                      help="also write every predictive draw")
    pred.set_defaults(func=_cmd_predict)

    exp = sub.add_parser("experiment", parents=[common], help="run a full study reproduction")
    exp.add_argument("--tag", required=True, choices=EXPERIMENT_TAGS)
    exp.add_argument("--scale", type=float, default=None)
    exp.add_argument("--iterations", type=int, default=5000)
    exp.add_argument("--burn-in", type=int, default=None)
    exp.set_defaults(func=_cmd_experiment)

    summ = sub.add_parser("summarize", parents=[common], help="summarize a samples CSV")
    summ.add_argument("--samples", required=True)
    summ.set_defaults(func=_cmd_summarize)
    return parser


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _cmd_simulate(args) -> int:
    seed = 0 if args.seed is None else args.seed
    if args.paper:
        design = paper_design(args.paper, args.scale, seed=seed)
    else:
        if args.n is None:
            raise ConfigError("need --paper or --n")
        vals = [float(v) for v in args.bounds.split(",")]
        if len(vals) % 2:
            raise ConfigError("--bounds needs an even number of values")
        bounds = tuple((vals[i], vals[i + 1]) for i in range(0, len(vals), 2))
        design = SimDesign(
            n=args.n, bounds=bounds, layout=args.layout, beta=(args.beta,),
            params=CovarianceParams(sigma2=args.sigma2, phi=args.phi, tau2=args.tau2),
            holdout_fraction=args.holdout, seed=seed,
        )
    sim = simulate(design)
    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    write_dataset_csv(os.path.join(out, "data.csv"), sim.dataset)
    truth = {
        "tag": design.tag,
        "seed": design.seed,
        "n": design.n,
        "layout": design.layout,
        "bounds": [list(b) for b in design.bounds],
        "beta": list(design.beta),
        "params": {
            "family": design.params.family,
            "sigma2": design.params.sigma2,
            "phi": design.params.phi,
            "tau2": design.params.tau2,
            "nu": design.params.nu,
        },
        "holdout_idx": [int(i) for i in sim.holdout_idx],
        "w": [float(v) for v in sim.w],
    }
    with open(os.path.join(out, "truth.json"), "w", encoding="utf-8") as fh:
        json.dump(truth, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return 0


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

_SCHEMA = {
    "model": None,
    "data": None,
    "knots": {"grid": None, "subset": None, "file": None},
    "m": None,
    "ordering": None,
    "family": None,
    "nu": None,
    "init": {"sigma2": None, "tau2": None, "phi": None},
    "priors": {"sigma2": None, "tau2": None, "phi": None, "beta": {"mean": None, "cov": None}},
    "chain": {"iterations": None, "burn_in": None, "thin": None, "seed": None,
              "adapt_window": None, "target_accept": None, "initial_scale": None},
    "out": None,
}


def _check_keys(obj, schema, path="config"):
    if not isinstance(obj, dict) or schema is None:
        return
    unknown = set(obj) - set(schema)
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    for key, val in obj.items():
        if isinstance(schema.get(key), dict) and val is not None:
            _check_keys(val, schema[key], f"{path}.{key}")


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    _check_keys(cfg, _SCHEMA)
    if "model" not in cfg or cfg["model"] not in MODELS:
        raise ConfigError(f"config needs a model from {MODELS}")
    if "data" not in cfg:
        raise ConfigError("config needs a data path")
    return cfg


def _default_init(data):
    var_y = float(np.var(data.y))
    span = np.linalg.norm(data.locations.max(axis=0) - data.locations.min(axis=0))
    return {
        "sigma2": max(var_y / 2.0, 1e-6),
        "tau2": max(var_y / 2.0, 1e-6),
        "phi": phi_for_effective_range(max(span / 4.0, 1e-6)),
    }


def _build_pieces(cfg, data, seed_override=None):
    init = dict(_default_init(data))
    init.update(cfg.get("init") or {})
    pcfg = cfg.get("priors") or {}
    sig = pcfg.get("sigma2") or [2.0, init["sigma2"]]
    tau = pcfg.get("tau2") or [2.0, init["tau2"]]
    phi = pcfg.get("phi") or [init["phi"] / 10.0, init["phi"] * 10.0]
    beta_cfg = pcfg.get("beta")
    priors = PriorSpec(
        sigma2=InverseGamma(*[float(v) for v in sig]),
        tau2=InverseGamma(*[float(v) for v in tau]),
        phi=Uniform(*[float(v) for v in phi]),
        beta_mean=None if beta_cfg is None else beta_cfg["mean"],
        beta_cov=None if beta_cfg is None else beta_cfg["cov"],
    )
    ccfg = dict(cfg.get("chain") or {})
    if seed_override is not None:
        ccfg["seed"] = seed_override
    config = ChainConfig(
        iterations=int(ccfg.get("iterations", 5000)),
        burn_in=int(ccfg.get("burn_in", 2500)),
        thin=int(ccfg.get("thin", 1)),
        seed=int(ccfg.get("seed", 0)),
        initial_theta=(init["sigma2"], init["tau2"], init["phi"]),
        adapt_window=int(ccfg.get("adapt_window", 50)),
        target_accept=float(ccfg.get("target_accept", 0.35)),
        initial_scale=float(ccfg.get("initial_scale", 0.1)),
    )
    return priors, config, init


def _build_backend(cfg, data, priors):
    model = cfg["model"]
    family = cfg.get("family", "exponential")
    nu = cfg.get("nu")
    if model == "fullgp":
        return FullGPBackend(data, priors, family=family, nu=nu)
    if model in ("pp", "mpp", "radial"):
        kcfg = cfg.get("knots")
        if not kcfg:
            raise ConfigError(f"model {model} needs a knots section")
        if "file" in kcfg and kcfg["file"] is not None:
            pts, _ = read_points_csv(kcfg["file"])
            knots = KnotSet(pts, placement="user")
        elif "grid" in kcfg and kcfg["grid"] is not None:
            bbox = tuple((data.locations[:, k].min(), data.locations[:, k].max())
                         for k in range(data.locations.shape[1]))
            knots = grid_knots(bbox, int(kcfg["grid"]))
        elif "subset" in kcfg and kcfg["subset"] is not None:
            knots = subset_knots(data.locations, int(kcfg["subset"]))
        else:
            raise ConfigError("knots section needs one of: grid, subset, file")
        params0 = CovarianceParams(sigma2=1.0, phi=1.0, tau2=0.0, nu=nu, family=family)
        return LowRankBackend(data, LowRankSpec(model, knots, params0), priors)
    if model in ("nngp_response", "nngp_latent"):
        if "m" not in cfg:
            raise ConfigError(f"model {model} needs a neighbor count m")
        ordering = cfg.get("ordering", "coord_sum")
        if ordering not in ORDERINGS:
            raise ConfigError(f"ordering must be one of {ORDERINGS}")
        cls = NNGPResponseBackend if model == "nngp_response" else NNGPLatentBackend
        return cls(data, priors, m=int(cfg["m"]), ordering=ordering, family=family, nu=nu)
    raise ConfigError(f"unknown model {model!r}")


# ---------------------------------------------------------------------------
# fit / predict / experiment / summarize
# ---------------------------------------------------------------------------

def _cmd_fit(args) -> int:
    cfg = load_config(args.config)
    data = read_dataset_csv(cfg["data"])
    priors, config, _ = _build_pieces(cfg, data, seed_override=args.seed)
    backend = _build_backend(cfg, data, priors)
    out = args.out or cfg.get("out") or "."
    os.makedirs(out, exist_ok=True)
    samples = run_chain(backend, config)
    write_samples_csv(os.path.join(out, "samples.csv"), samples)
    write_chain_log(os.path.join(out, "chain_log.jsonl"), samples, config)
    if samples.latent is not None:
        _write_latent_csv(os.path.join(out, "latent_draws.csv"), samples)
    if hasattr(backend, "graph"):
        from .nngp import dump_neighbor_graph
        dump_neighbor_graph(backend.graph, os.path.join(out, "neighbor_graph.csv"))
    summary = {"model": backend.model_tag, "seed": config.seed,
               "parameters": summarize(samples)}
    with open(os.path.join(out, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return 0


def _write_latent_csv(path, samples) -> None:
    n = samples.latent.shape[1]
    header = ",".join(f"{samples.latent_name}_{i}" for i in range(n))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in samples.latent:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _cmd_predict(args) -> int:
    cfg = load_config(args.config)
    data = read_dataset_csv(cfg["data"])
    priors, config, _ = _build_pieces(cfg, data, seed_override=None)
    backend = _build_backend(cfg, data, priors)
    names, draws = read_samples_csv(args.samples)
    if names[:3] != ["sigma2", "tau2", "phi"]:
        raise ConfigError(f"samples file has unexpected header {names[:3]}")
    theta_draws, beta_draws = draws[:, :3], draws[:, 3:]
    targets, x_extra = read_points_csv(args.targets)
    x_targets = None
    if x_extra is not None:
        x_targets = np.hstack([np.ones((targets.shape[0], 1)), x_extra])
    seed = 0 if args.seed is None else args.seed
    rng = np.random.default_rng(seed)
    kwargs = {}
    if cfg["model"] == "nngp_latent":
        latent_path = os.path.join(os.path.dirname(args.samples), "latent_draws.csv")
        kwargs["w_draws"] = _read_latent_csv(latent_path, draws.shape[0])
    pred = backend.predict_draws(theta_draws, beta_draws, targets, x_targets, rng, **kwargs)
    out = args.out or cfg.get("out") or "."
    os.makedirs(out, exist_ok=True)
    _write_predictions_csv(os.path.join(out, "predictions.csv"), targets, pred)
    if args.dump_draws:
        _write_draws_csv(os.path.join(out, "predictive_draws.csv"), pred)
    return 0


def _read_latent_csv(path, expected_rows):
    with open(path, "r", encoding="utf-8") as fh:
        fh.readline()
        rows = [[float(v) for v in line.strip().split(",")] for line in fh if line.strip()]
    latent = np.asarray(rows)
    if latent.shape[0] != expected_rows:
        raise ConfigError(
            f"latent draws ({latent.shape[0]}) do not match samples ({expected_rows})")
    return latent


def _write_predictions_csv(path, targets, pred_draws) -> None:
    d = targets.shape[1]
    header = [f"x{i + 1}" for i in range(d)] + ["mean", "sd", "q2.5", "q97.5"]
    lo, hi = np.percentile(pred_draws, [2.5, 97.5], axis=0)
    mean = pred_draws.mean(axis=0)
    sd = pred_draws.std(axis=0, ddof=1)
    lines = [",".join(header)]
    for j in range(targets.shape[0]):
        row = [repr(float(v)) for v in targets[j]]
        row += [repr(float(mean[j])), repr(float(sd[j])), repr(float(lo[j])), repr(float(hi[j]))]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_draws_csv(path, pred_draws) -> None:
    header = ",".join(f"target_{j}" for j in range(pred_draws.shape[1]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for row in pred_draws:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def _cmd_experiment(args) -> int:
    out = args.out or f"experiment_{args.tag}"
    seed = 0 if args.seed is None else args.seed
    run_experiment(args.tag, scale=args.scale, seed=seed, out_dir=out,
                   iterations=args.iterations, burn_in=args.burn_in, threads=args.threads)
    return 0


def _cmd_summarize(args) -> int:
    names, draws = read_samples_csv(args.samples)
    summary = summarize({name: draws[:, j] for j, name in enumerate(names)})
    text = json.dumps(summary, sort_keys=True, indent=2)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "summary.json"), "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
