"""Command-line front end: ``llngm <subcommand> [flags]``.

Results go to stdout as JSON; files (CSV tables, JSON sidecars) go to
``--out`` or the directory named by the LLNGM_OUTPUT environment variable.
Failures print a JSON object with an ``error`` key and exit nonzero.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import errors
from .bessel_gig import GigParams, property_suite
from .diagnostics import DEFAULT_IACT_FLOOR, iact, split_rhat
from .ergodicity import REGIME_TABLE, classify_regime, null_smallness, regime_of
from .estimation import PARAMETER_GROUPS, SgdConfig, sgd_fit
from .experiments import (OUTPUT_ENV, ExperimentConfig, load_config, run_s1, run_s2, s2_rank_correlation,
                          version_string, write_chain_csv)
from .gibbs import SUMMARY_NAMES, GibbsConfig, run_chains
from .model import AR1Kernel, ModelSpec, Parameterization, build_rank_deficient_A, simulate

EXIT_FAILURE = 1
EXIT_USAGE = 2

_MODEL_DEFAULTS = {"n": 10, "phi": 0.5, "k_form": "precision", "A": "identity", "p": -0.5, "a": 1.0, "b": 1.0,
                   "mu": 1.0, "sigma": 1.0, "sigma_eps": 1.0}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _clean(value):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def _emit(payload):
    print(json.dumps(_clean(payload)))


def _out_dir(args) -> Path | None:
    import os

    root = args.out or os.environ.get(OUTPUT_ENV)
    if root is None:
        return None
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_report(args, name: str, payload: dict):
    out = _out_dir(args)
    if out is not None:
        echo = {k: v for k, v in vars(args).items() if k != "func"}
        report = {"version": version_string(), "config": echo, **payload}
        (out / name).write_text(json.dumps(_clean(report), indent=2))


# -- model flags ---------------------------------------------------------------

def _add_model_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI file whose [model] section supplies defaults")
    p.add_argument("--n", type=int)
    p.add_argument("--phi", type=float)
    p.add_argument("--k-form", dest="k_form", choices=("precision", "correlation"))
    p.add_argument("--A", dest="A", choices=("identity", "rank-deficient"))
    for name in ("p", "a", "b", "mu", "sigma"):
        p.add_argument(f"--{name}", type=float)
    p.add_argument("--sigma-eps", dest="sigma_eps", type=float)


def _model_settings(args) -> dict:
    settings = dict(_MODEL_DEFAULTS)
    if getattr(args, "config", None):
        parser = configparser.ConfigParser()
        parser.optionxform = str
        try:
            with open(args.config) as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise errors.ConfigError(f"cannot parse {args.config}: {exc}") from exc
        if parser.has_section("model"):
            for key, raw in parser["model"].items():
                if key not in settings:
                    raise errors.ConfigError(f"unknown key {key!r}", "model", key)
                kind = type(settings[key])
                try:
                    settings[key] = kind(raw)
                except ValueError as exc:
                    raise errors.ConfigError(f"bad value {raw!r}", "model", key) from exc
    for key in settings:
        value = getattr(args, key, None)
        if value is not None:
            settings[key] = value
    return settings


def _build_spec(settings: dict) -> ModelSpec:
    n = settings["n"]
    A = np.eye(n) if settings["A"] == "identity" else build_rank_deficient_A(n)
    return ModelSpec(gig=GigParams(settings["p"], settings["a"], settings["b"]), mu=settings["mu"],
                     sigma=settings["sigma"], sigma_eps=settings["sigma_eps"],
                     kernel=AR1Kernel(n, settings["phi"], settings["k_form"]), A=A)


# -- subcommands ---------------------------------------------------------------

def cmd_regime(args):
    regime = regime_of(args.p, args.a, args.b, args.mu)
    tc, ge = REGIME_TABLE[regime]
    payload = {"regime": regime.value, "trace_class": tc, "geo_ergodic": ge}
    _write_report(args, "regime.json", payload)
    _emit(payload)


def cmd_nullsmall(args):
    settings = _model_settings(args)
    spec = _build_spec(settings)
    payload = {**null_smallness(spec).as_dict(), "regime": classify_regime(spec).regime.value}
    _write_report(args, "nullsmall.json", {"model": settings, **payload})
    _emit(payload)


def cmd_sample(args):
    settings = _model_settings(args)
    spec = _build_spec(settings)
    y = np.zeros(spec.m)
    cfg = GibbsConfig(T=args.T, burn=args.burn, thin=args.thin, n_chains=args.chains, seed=args.seed, q=args.q)
    traces = run_chains(spec, Parameterization(args.param), cfg, y)
    out = _out_dir(args)
    if out is not None:
        for c, t in enumerate(traces):
            write_chain_csv(out / f"sample_chain{c}.csv", t)
    summary = _summaries({s: [t.track(s) for t in traces] for s in SUMMARY_NAMES}, args.floor)
    payload = {"regime": classify_regime(spec).regime.value, "wall_times": [t.wall_time for t in traces],
               "clamps": sum(t.clamps for t in traces), "summaries": summary}
    _write_report(args, "sample_run.json", {"model": settings, **payload})
    _emit(payload)


def _summaries(tracks: dict, floor: float) -> dict:
    out = {}
    for name, chains in tracks.items():
        per_chain = [iact(c, floor) for c in chains]
        mean_iact = float(np.mean(per_chain))
        out[name] = {"mean": float(np.mean([np.mean(c) for c in chains])), "iact": mean_iact,
                     "ess": float(len(chains[0]) / mean_iact),
                     "rhat": split_rhat(chains) if len(chains) > 1 else None}
    return out


def _read_chain_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise errors.ConfigError(f"{path} is empty")
    header, body = rows[0], rows[1:]
    try:
        data = np.array(body, dtype=float)
    except ValueError as exc:
        raise errors.ConfigError(f"{path}: non-numeric entry ({exc})") from exc
    return {name: data[:, j] for j, name in enumerate(header) if name != "iter"}


def cmd_diagnose(args):
    chains = [_read_chain_csv(p) for p in args.files]
    names = args.stats or [k for k in chains[0]]
    for c, path in zip(chains, args.files):
        missing = [s for s in names if s not in c]
        if missing:
            raise errors.ConfigError(f"{path} lacks columns {missing}")
    payload = {"files": args.files, "summaries": _summaries({s: [c[s] for c in chains] for s in names}, args.floor)}
    _write_report(args, "diagnose.json", payload)
    _emit(payload)


def cmd_estimate(args):
    settings = _model_settings(args)
    truth = _build_spec(settings)
    if args.y:
        y = np.loadtxt(args.y, delimiter=",", ndmin=1, comments="#")
        if y.shape != (truth.m,):
            raise errors.ParameterError(f"y has {y.size} entries, model expects {truth.m}")
    else:
        y = simulate(truth, np.random.default_rng(args.data_seed))[0]
    free = set(args.free.split(","))
    start = {}
    for item in args.start or []:
        key, _, raw = item.partition("=")
        if key not in ("mu", "sigma", "sigma_eps"):
            raise errors.ParameterError(f"--start supports mu, sigma, sigma_eps; got {key!r}")
        start[key] = float(raw)
    spec0 = truth.replace(**start) if start else truth
    sgd = SgdConfig(iterations=args.iterations, k_gibbs=args.k_gibbs, step_c=args.step_c, step_t0=args.step_t0,
                    mask=free, warm_start=not args.cold_start, param=Parameterization(args.param))
    result = sgd_fit(spec0, y, sgd, np.random.default_rng(args.seed))
    out = _out_dir(args)
    if out is not None:
        with open(out / "estimate_trajectory.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", *result.names, "grad_norm"])
            norms = np.concatenate([[np.nan], result.grad_norms])
            for t, (row, g) in enumerate(zip(result.trajectory, norms)):
                w.writerow([t, *map(repr, map(float, row)), repr(float(g))])
    payload = {"final": result.final, "iterations": args.iterations, "free": sorted(free)}
    _write_report(args, "estimate_fit.json", {"model": settings, **payload})
    _emit(payload)


def _experiment_config(args, name: str) -> ExperimentConfig:
    config = load_config(args.config, name) if args.config else (
        ExperimentConfig.s1() if name == "S1" else ExperimentConfig.s2())
    overrides = {k: getattr(args, k) for k in ("seed", "T", "burn", "workers") if getattr(args, k) is not None}
    if args.chains is not None:
        overrides["n_chains"] = args.chains
    if args.out:
        overrides["output_dir"] = args.out
    if args.write_chains:
        overrides["write_chains"] = True
    if name == "S1" and args.points:
        overrides["points"] = tuple(p.strip().upper() for p in args.points.split(","))
    from dataclasses import replace

    try:
        return replace(config, **overrides)
    except TypeError as exc:
        raise errors.ConfigError(str(exc)) from exc


def cmd_s1(args):
    config = _experiment_config(args, "S1")
    result = run_s1(config)
    rhat = {pt: max(r["rhat"] for r in result.rows if r["point"] == pt) for pt in config.points}
    _emit({"rows": result.rows, "max_rhat": rhat})


def cmd_s2(args):
    config = _experiment_config(args, "S2")
    result = run_s2(config)
    _emit({"rows": result.rows, "spearman_T_null": s2_rank_correlation(result),
           "max_rhat": max(r["rhat"] for r in result.rows)})


def cmd_gigcheck(args):
    report = property_suite(seed=args.seed, n_sets=args.sets, n_draws=args.draws)
    _write_report(args, "gigcheck.json", report)
    _emit({"ok": report["ok"], "n_sets": len(report["sets"]),
           "max_z": max(m["z"] for s in report["sets"] for m in s["moments"]),
           "max_mass_error": max(abs(s["mass"] - 1.0) for s in report["sets"])})
    return 0 if report["ok"] else EXIT_FAILURE


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="llngm", description="Gibbs sampling and ergodicity tools for GIG-mixture latent models.")
    parser.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--out", help=f"output directory (default: ${OUTPUT_ENV})")
        p.set_defaults(func=func)
        return p

    p = add("regime", cmd_regime, "ergodicity regime of a GIG/drift point")
    for name in ("p", "a", "b", "mu"):
        p.add_argument(f"--{name}", type=float, required=True)

    p = add("nullsmall", cmd_nullsmall, "null-space report for a model")
    _add_model_flags(p)

    p = add("sample", cmd_sample, "run Gibbs chains and summarize them")
    _add_model_flags(p)
    p.add_argument("--param", choices=[m.value for m in Parameterization], default="noncentered")
    p.add_argument("--T", type=int, default=5000)
    p.add_argument("--burn", type=int, default=500)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--chains", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--q", type=float, default=0.25)
    p.add_argument("--floor", type=float, default=DEFAULT_IACT_FLOOR)

    p = add("diagnose", cmd_diagnose, "IACT, ESS and split R-hat of chain CSV files")
    p.add_argument("files", nargs="+")
    p.add_argument("--stats", nargs="*")
    p.add_argument("--floor", type=float, default=DEFAULT_IACT_FLOOR)

    p = add("estimate", cmd_estimate, "stochastic-gradient maximum likelihood")
    _add_model_flags(p)
    p.add_argument("--y", help="CSV with one observation per line; simulated from the model when omitted")
    p.add_argument("--data-seed", dest="data_seed", type=int, default=0)
    p.add_argument("--free", default="mu", help=f"comma-separated groups from {','.join(PARAMETER_GROUPS)}")
    p.add_argument("--start", nargs="*", help="starting values such as mu=0")
    p.add_argument("--param", choices=[m.value for m in Parameterization], default="noncentered")
    p.add_argument("--iterations", type=int, default=2000)
    p.add_argument("--k-gibbs", dest="k_gibbs", type=int, default=1)
    p.add_argument("--step-c", dest="step_c", type=float, default=5.0)
    p.add_argument("--step-t0", dest="step_t0", type=float, default=10.0)
    p.add_argument("--cold-start", dest="cold_start", action="store_true")
    p.add_argument("--seed", type=int, default=0)

    for name, func, help_ in (("s1", cmd_s1, "regime-grid study"), ("s2", cmd_s2, "null-smallness scan")):
        p = add(name, func, help_)
        p.add_argument("--config")
        p.add_argument("--seed", type=int)
        p.add_argument("--T", type=int)
        p.add_argument("--burn", type=int)
        p.add_argument("--chains", type=int)
        p.add_argument("--workers", type=int)
        p.add_argument("--write-chains", dest="write_chains", action="store_true")
        if name == "s1":
            p.add_argument("--points", help="comma-separated subset of A-F")

    p = add("gigcheck", cmd_gigcheck, "GIG sampler and density self-check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sets", type=int, default=20)
    p.add_argument("--draws", type=int, default=10**6)
    return parser


_HANDLED = (ValueError, ArithmeticError, OSError, KeyError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        _emit({"error": "UsageError", "message": str(exc)})
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        code = args.func(args)
    except errors.ConfigError as exc:
        _emit({"error": "ConfigError", "message": str(exc), "section": exc.section, "key": exc.key})
        return EXIT_USAGE
    except _HANDLED as exc:
        _emit({"error": type(exc).__name__, "message": str(exc)})
        return EXIT_FAILURE
    return code or 0


if __name__ == "__main__":
    sys.exit(main())
