"""Simulation studies S1 (regime grid) and S2 (null-smallness scan).

Both use n = m = 300, h = 1, X beta = 0, sigma = sigma_eps = 1, Y = 0 and an
AR(1) operator with phi = 0.5 in its precision form, so that B = A R with R
the AR(1) correlation matrix. S1 takes A = I; S2 takes A = I - u u^T.
"""

from __future__ import annotations

import configparser
import csv
import json
import logging
import os
import subprocess
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats

from .bessel_gig import GigParams
from .diagnostics import DEFAULT_IACT_FLOOR, summarize_run
from .ergodicity import classify_regime, gamma_ns_scan
from .errors import ConfigError
from .gaussian import latent_structure
from .gibbs import SUMMARY_NAMES, GibbsConfig, overdispersed_inits, run_chain
from .model import AR1Kernel, ModelSpec, Parameterization, build_rank_deficient_A

log = logging.getLogger(__name__)

OUTPUT_ENV = "LLNGM_OUTPUT"

# point -> (p, a, b, mu, regime label)
S1_POINTS = {
    "A": (-0.5, 1.0, 1.0, 1.0, "TC-1"),
    "B": (1.0, 1.0, 1.0, 1.0, "TC-1"),
    "C": (0.6, 1.0, 0.0, 1.0, "TC-2"),
    "D": (0.3, 1.0, 0.0, 1.0, "DM-III"),
    "E": (-1.5, 0.0, 2.0, 0.0, "DM-I"),
    "F": (-1.5, 0.0, 2.0, 1.0, "DM-II"),
}

# reference IACT per point for (S_plus, S_minus, S_log)
S1_REFERENCE_IACT = {
    "A": (1.31, 1.33, 1.34),
    "B": (1.13, 1.15, 1.15),
    "C": (1.48, 1.80, 2.28),
    "D": (1.97, 4.71, 6.75),
    "E": (1.02, 1.17, 1.17),
    "F": (1.27, 1.26, 1.27),
}

S2_MU_GRID = (0.0, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0)
S2_GIG = (0.5, 1.0, 0.0)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "S1"
    n: int = 300
    phi: float = 0.5
    k_form: str = "precision"
    sigma: float = 1.0
    sigma_eps: float = 1.0
    T: int = 50_000
    burn: int = 5_000
    thin: int = 1
    n_chains: int = 4
    seed: int = 0
    q: float = 0.25
    iact_floor: float = DEFAULT_IACT_FLOOR
    points: tuple = tuple(S1_POINTS)
    mu_grid: tuple = S2_MU_GRID
    gig: tuple = S2_GIG
    workers: int = 1
    output_dir: str | None = None
    write_chains: bool = False

    @classmethod
    def s1(cls, **overrides) -> ExperimentConfig:
        return replace(cls(experiment="S1", burn=5_000), **overrides)

    @classmethod
    def s2(cls, **overrides) -> ExperimentConfig:
        return replace(cls(experiment="S2", burn=10_000), **overrides)

    def gibbs(self) -> GibbsConfig:
        return GibbsConfig(T=self.T, burn=self.burn, thin=self.thin, n_chains=self.n_chains,
                           seed=self.seed, q=self.q)

    def as_dict(self) -> dict:
        return asdict(self)


_INT_KEYS = {"n", "T", "burn", "thin", "n_chains", "seed", "workers"}
_FLOAT_KEYS = {"phi", "sigma", "sigma_eps", "q", "iact_floor"}
_BOOL_KEYS = {"write_chains"}


def load_config(path, experiment: str | None = None) -> ExperimentConfig:
    """Read an INI file with an [experiment] section and optional [s1] / [s2] sections.

    Keys in [experiment] override the per-study defaults; [s1] may set
    ``points = A,B,...`` and [s2] may set ``mu_grid`` and ``gig = p,a,b``.
    """
    parser = configparser.ConfigParser()
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    section = "experiment"
    values = dict(parser[section]) if parser.has_section(section) else {}
    name = (experiment or values.pop("experiment", "S1")).upper()
    values.pop("experiment", None)
    base = ExperimentConfig.s2() if name == "S2" else ExperimentConfig.s1()
    if name not in ("S1", "S2", "CUSTOM"):
        raise ConfigError(f"unknown experiment {name!r}", section, "experiment")
    changes = {"experiment": name}
    for key, raw in values.items():
        try:
            if key in _INT_KEYS:
                changes[key] = int(raw)
            elif key in _FLOAT_KEYS:
                changes[key] = float(raw)
            elif key in _BOOL_KEYS:
                changes[key] = parser.getboolean(section, key)
            elif key in ("k_form", "output_dir"):
                changes[key] = raw
            else:
                raise ConfigError(f"unknown key {key!r}", section, key)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {raw!r}", section, key) from exc
    if parser.has_section("s1") and "points" in parser["s1"]:
        pts = tuple(p.strip().upper() for p in parser["s1"]["points"].split(",") if p.strip())
        bad = [p for p in pts if p not in S1_POINTS]
        if bad:
            raise ConfigError(f"unknown points {bad}", "s1", "points")
        changes["points"] = pts
    if parser.has_section("s2"):
        for key, target, size in (("mu_grid", "mu_grid", None), ("gig", "gig", 3)):
            if key in parser["s2"]:
                try:
                    vals = tuple(float(v) for v in parser["s2"][key].split(","))
                except ValueError as exc:
                    raise ConfigError(f"bad list for {key}", "s2", key) from exc
                if size is not None and len(vals) != size:
                    raise ConfigError(f"{key} needs {size} values", "s2", key)
                changes[target] = vals
    try:
        return replace(base, **changes)
    except Exception as exc:  # dataclass validation
        raise ConfigError(str(exc), section) from exc


def version_string() -> str:
    from . import __version__

    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def output_root(config: ExperimentConfig) -> Path | None:
    root = config.output_dir or os.environ.get(OUTPUT_ENV)
    if root is None:
        return None
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def study_spec(config: ExperimentConfig, p: float, a: float, b: float, mu: float, A=None) -> ModelSpec:
    n = config.n
    return ModelSpec(gig=GigParams(p, a, b), mu=mu, sigma=config.sigma, sigma_eps=config.sigma_eps,
                     kernel=AR1Kernel(n, config.phi, config.k_form), A=np.eye(n) if A is None else A)


def _run_one(args):
    spec, config, init, index = args
    y = np.zeros(spec.m)
    gcfg = config.gibbs()
    structure = latent_structure(spec, y)
    return run_chain(spec, Parameterization.NONCENTERED, gcfg, y, init, gcfg.chain_rng(index), structure)


def run_point(spec: ModelSpec, config: ExperimentConfig, pool=None):
    """All chains for one parameter point, from the four overdispersed starts."""
    gcfg = config.gibbs()
    base = overdispersed_inits(spec.n, np.random.default_rng(np.random.SeedSequence(gcfg.seed, spawn_key=(10**6,))))
    jobs = [(spec, config, base[c % len(base)], c) for c in range(config.n_chains)]
    if pool is None:
        return [_run_one(j) for j in jobs]
    return list(pool.map(_run_one, jobs))


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def write_chain_csv(path: Path, trace):
    rows = [[int(i), *map(repr, map(float, r))] for i, r in zip(trace.iters, trace.summaries)]
    _write_csv(path, ["iter", *SUMMARY_NAMES], rows)


def write_sidecar(path: Path, config: ExperimentConfig, extra: dict):
    payload = {"version": version_string(), "config": config.as_dict(), **extra}
    path.write_text(json.dumps(payload, indent=2, default=str))


@dataclass
class StudyResult:
    rows: list
    wall_times: dict = field(default_factory=dict)
    clamps: int = 0

    def value(self, key_name, key, stat, column="iact"):
        for r in self.rows:
            if r[key_name] == key and r["stat"] == stat:
                return r[column]
        raise KeyError((key, stat))


def _pool(config):
    return ProcessPoolExecutor(max_workers=config.workers) if config.workers > 1 else None


def run_s1(config: ExperimentConfig | None = None) -> StudyResult:
    """IACT, ESS/sec and split R-hat of S_plus, S_minus, S_log at each regime point."""
    config = config or ExperimentConfig.s1()
    out = output_root(config)
    rows, walls, clamps = [], {}, 0
    pool = _pool(config)
    try:
        for point in config.points:
            p, a, b, mu, label = S1_POINTS[point]
            spec = study_spec(config, p, a, b, mu)
            traces = run_point(spec, config, pool)
            clamps += sum(t.clamps for t in traces)
            walls[point] = [t.wall_time for t in traces]
            tracks = {s: [t.track(s) for t in traces] for s in SUMMARY_NAMES[:3]}
            for d in summarize_run(tracks, walls[point], config.iact_floor):
                rows.append({"point": point, "regime": label, "stat": d.stat, "iact": d.iact,
                             "ess_per_sec": d.ess_per_sec, "rhat": d.split_rhat})
            log.info("S1 point %s done", point)
            if out is not None and config.write_chains:
                for c, t in enumerate(traces):
                    write_chain_csv(out / f"s1_{point}_chain{c}.csv", t)
    finally:
        if pool is not None:
            pool.shutdown()
    result = StudyResult(rows, walls, clamps)
    if out is not None:
        cols = ["point", "regime", "stat", "iact", "ess_per_sec", "rhat"]
        _write_csv(out / "s1_table.csv", cols, [[r[c] for c in cols] for r in rows])
        plot = [[pt] + [result.value("point", pt, s) for s in SUMMARY_NAMES[:3]] for pt in config.points]
        _write_csv(out / "s1_plot.csv", ["point", *(f"iact_{s}" for s in SUMMARY_NAMES[:3])], plot)
        write_sidecar(out / "s1_run.json", config, {"wall_times": walls, "clamps": clamps})
    return result


def s2_spec(config: ExperimentConfig, mu: float) -> ModelSpec:
    return study_spec(config, *config.gig, mu, A=build_rank_deficient_A(config.n))


def run_s2(config: ExperimentConfig | None = None) -> StudyResult:
    """gamma_ns(mu) and IACT / split R-hat of all four summaries along the mu grid."""
    config = config or ExperimentConfig.s2()
    out = output_root(config)
    y = np.zeros(config.n)
    gammas = gamma_ns_scan(s2_spec(config, 0.0), config.mu_grid, y)
    rows, walls, clamps = [], {}, 0
    pool = _pool(config)
    try:
        for mu, g in zip(config.mu_grid, gammas):
            spec = s2_spec(config, mu)
            traces = run_point(spec, config, pool)
            clamps += sum(t.clamps for t in traces)
            walls[mu] = [t.wall_time for t in traces]
            tracks = {s: [t.track(s) for t in traces] for s in SUMMARY_NAMES}
            for d in summarize_run(tracks, walls[mu], config.iact_floor):
                rows.append({"mu": mu, "gamma_ns": float(g), "stat": d.stat, "iact": d.iact, "rhat": d.split_rhat})
            log.info("S2 mu=%g done", mu)
            if out is not None and config.write_chains:
                for c, t in enumerate(traces):
                    write_chain_csv(out / f"s2_mu{mu:g}_chain{c}.csv", t)
    finally:
        if pool is not None:
            pool.shutdown()
    result = StudyResult(rows, walls, clamps)
    if out is not None:
        cols = ["mu", "gamma_ns", "stat", "iact", "rhat"]
        _write_csv(out / "s2_table.csv", cols, [[r[c] for c in cols] for r in rows])
        plot = [[mu, g] + [result.value("mu", mu, s) for s in SUMMARY_NAMES] for mu, g in zip(config.mu_grid, gammas)]
        _write_csv(out / "s2_plot.csv", ["mu", "gamma_ns", *(f"iact_{s}" for s in SUMMARY_NAMES)], plot)
        write_sidecar(out / "s2_run.json", config, {"wall_times": {str(k): v for k, v in walls.items()},
                                                    "clamps": clamps})
    return result


def spearman(x, y) -> float:
    return float(stats.spearmanr(x, y).statistic)


def s2_rank_correlation(result: StudyResult, stat: str = "T_null") -> float:
    rows = [r for r in result.rows if r["stat"] == stat]
    return spearman([r["gamma_ns"] for r in rows], [r["iact"] for r in rows])


def regime_label(spec: ModelSpec) -> str:
    return classify_regime(spec).regime.value
