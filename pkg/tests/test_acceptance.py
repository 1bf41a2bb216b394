"""Acceptance criteria, one test per criterion.

Each test prints a single ``[PASS]`` or ``[FAIL]`` line with the measured
quantity next to its tolerance. Criteria 7 and 8 run the full n = 300 studies
and carry the ``slow`` marker.
"""

import math

import numpy as np
import pytest
from scipy import linalg

from llngm.bessel_gig import MOMENT_ORDERS, gig_moment, gig_sample, gig_total_mass, has_finite_variance, \
    random_gig_params
from llngm.bessel_gig import GigParams
from llngm.diagnostics import mcse
from llngm.ergodicity import baseline_contraction, drift_constants, null_smallness, trace_diagonal_increments
from llngm.estimation import (ScoreVector, complete_loglik_centered, complete_loglik_noncentered,
                              demo_centered_integrability, integrability_spec, log_joint_y_v, parameter_vector,
                              rb_score, score_centered, score_noncentered, with_parameters)
from llngm.experiments import (S1_REFERENCE_IACT, ExperimentConfig, run_s1, run_s2, s2_rank_correlation)
from llngm.gaussian import conditional_M, conditional_W
from llngm.gibbs import ChainState, GibbsConfig, gibbs_step, run_chain
from llngm.model import AR1Kernel, ModelSpec, to_noncentered

from oracles import joint_conditional_M, joint_conditional_W, log_marginal_n2, scalar_posterior_moments

STATS3 = ("S_plus", "S_minus", "S_log")


@pytest.fixture
def verdict(capsys):
    def emit(label, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
        assert ok, detail
    return emit


def test_c1_gig_moments_and_normalization(verdict):
    rng = np.random.default_rng(2024)
    worst_z, worst_mass, failures = 0.0, 0.0, []
    for g in random_gig_params(rng, 20):
        worst_mass = max(worst_mass, abs(gig_total_mass(g) - 1.0))
        x = gig_sample(g, rng, size=10**6)
        for r in MOMENT_ORDERS:
            if not has_finite_variance(g, r):
                continue
            draws = x**r
            z = abs(draws.mean() - gig_moment(g, r)) / (draws.std(ddof=1) / math.sqrt(x.size))
            worst_z = max(worst_z, z)
            if z > 4:
                failures.append((g.as_tuple(), r, z))
    ok = worst_z <= 4 and worst_mass <= 1e-6
    verdict("C1 GIG moments / mass", ok,
            f"max |z| = {worst_z:.2f} (tol 4), max |mass - 1| = {worst_mass:.1e} (tol 1e-6), failures = {failures}")


def test_c2_conditionals_and_scalar_posterior(verdict):
    rng = np.random.default_rng(7)
    worst = 0.0
    for n in (1, 2):
        for m in (1, 3):
            spec = ModelSpec(gig=GigParams(-0.5, 1.0, 1.0), mu=0.7, sigma=1.1, sigma_eps=0.6,
                             K=rng.normal(size=(n, n)) + 2 * np.eye(n), A=rng.normal(size=(m, n)),
                             h=rng.uniform(0.5, 2.0, n))
            V, y = rng.gamma(2.0, 1.0, n), rng.normal(size=m)
            for ours, oracle in ((conditional_M(spec, V, y), joint_conditional_M(spec, V, y)),
                                 (conditional_W(spec, V, y), joint_conditional_W(spec, V, y))):
                worst = max(worst, np.abs(ours.mean - oracle[0]).max(), np.abs(ours.covariance() - oracle[1]).max())
    spec = ModelSpec(gig=GigParams(-0.5, 1.0, 1.0), mu=1.0, sigma=1.0, sigma_eps=0.8, K=[[1.3]], A=[[1.0]])
    y = np.array([0.7])
    cfg = GibbsConfig(T=10**5, burn=1000, n_chains=1, record_states=True)
    V = run_chain(spec, "noncentered", cfg, y, np.ones(1), np.random.default_rng(3)).V[:, 0]
    m1, m2 = scalar_posterior_moments(spec, y)
    z_mean = abs(V.mean() - m1) / mcse(V)
    z_var = abs(V.var() - (m2 - m1**2)) / mcse((V - V.mean())**2)
    ok = worst <= 1e-10 and z_mean <= 3 and z_var <= 3
    verdict("C2 conditionals / n=1 posterior", ok,
            f"max oracle gap = {worst:.1e} (tol 1e-10), mean z = {z_mean:.2f}, variance z = {z_var:.2f} (tol 3)")


def test_c3_centered_and_noncentered_agree(verdict):
    n = 10
    spec = ModelSpec(gig=GigParams(-0.5, 1.0, 1.0), mu=1.0, sigma=1.0, sigma_eps=1.0,
                     kernel=AR1Kernel(n, 0.5, "precision"), A=np.eye(n))
    y = np.linspace(-1.0, 1.0, n)
    cfg = GibbsConfig(T=200_000, burn=2000, n_chains=1)
    a = run_chain(spec, "centered", cfg, y, np.ones(n), np.random.default_rng(11)).track("S_plus")
    b = run_chain(spec, "noncentered", cfg, y, np.ones(n), np.random.default_rng(12)).track("S_plus")
    joint = math.hypot(mcse(a), mcse(b))
    z = abs(a.mean() - b.mean()) / joint
    verdict("C3 kernel equivalence", z <= 4,
            f"S_plus means {a.mean():.5f} vs {b.mean():.5f}, gap = {z:.2f} joint MCSE (tol 4)")


def test_c4_projector_identity(verdict):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 21))
        r = int(rng.integers(1, n))
        A = rng.normal(size=(n, n - r)) @ rng.normal(size=(n - r, n))
        K = rng.normal(size=(n, n)) + 3 * np.eye(n)
        spec = ModelSpec(gig=GigParams(0.3, 1.0, 0.0), mu=0.5, sigma=1.0, sigma_eps=1.0, K=K, A=A)
        N = linalg.null_space(A @ np.linalg.inv(K))
        one = np.ones(n)
        mass = float(one @ N @ N.T @ one)
        worst = max(worst, abs(null_smallness(spec).proj_norm**2 - mass))
    verdict("C4 projector identity", worst <= 1e-8, f"max |z'G^-1 z - 1'P1| = {worst:.1e} (tol 1e-8)")


def test_c5_drift_constants(verdict):
    spec = ModelSpec(gig=GigParams(-1.0, 0.0, 2.0), mu=0.0, sigma=1.0, sigma_eps=1.0,
                     kernel=AR1Kernel(6, 0.5, "precision"), A=np.eye(6))
    gap = abs(drift_constants(spec, "I").gamma - 2 / math.pi)
    grid_max = max(baseline_contraction(alpha, frac * alpha)
                   for alpha in np.linspace(0.05, 10, 80) for frac in np.linspace(0.01, 0.99, 40))
    c1k = []
    for p in (0.5, 0.75, 1.0, 2.0, 5.0):
        rep = drift_constants(spec.replace(gig=GigParams(p, 1.0, 0.0), mu=1.0), "III")
        c1k.append(rep.extras["C1"] * rep.extras["kappa"])
    c1k_gap = max(abs(v - 0.5) for v in c1k)
    ok = gap <= 1e-12 and grid_max < 1 and c1k_gap <= 1e-14
    verdict("C5 drift constants", ok,
            f"|gamma_I - 2/pi| = {gap:.1e} (tol 1e-12), max baseline gamma = {grid_max:.6f} (< 1), "
            f"max |C1 kappa - 1/2| = {c1k_gap:.1e}")


def _fd(f, spec, i, h):
    theta = parameter_vector(spec)
    up, down = theta.flat().copy(), theta.flat().copy()
    up[i] += h
    down[i] -= h
    return (f(with_parameters(spec, ScoreVector.from_flat(theta, up)))
            - f(with_parameters(spec, ScoreVector.from_flat(theta, down)))) / (2 * h)


def test_c6_scores_and_fisher_identity(verdict):
    rng = np.random.default_rng(6)
    worst = 0.0
    for trial in range(10):
        n, m = int(rng.integers(2, 6)), int(rng.integers(1, 6))
        family = ("nig", "gal")[trial % 2]
        form = ("correlation", "precision")[(trial // 2) % 2]
        spec = ModelSpec(family=family, nu=rng.uniform(0.8, 2.5), mu=rng.normal(), sigma=rng.uniform(0.5, 1.5),
                         sigma_eps=rng.uniform(0.5, 1.5), kernel=AR1Kernel(n, rng.uniform(-0.6, 0.6), form),
                         A=rng.normal(size=(m, n)), X=rng.normal(size=(m, 2)), beta=rng.normal(size=2),
                         h=rng.uniform(0.5, 2.0, n))
        y, V, W = rng.normal(size=m), rng.gamma(2.0, 1.0, n), rng.normal(size=n)
        M = to_noncentered(spec, W)
        for score, f in ((score_centered(spec, y, W, V), lambda s: complete_loglik_centered(s, y, W, V)),
                         (score_noncentered(spec, y, M, V), lambda s: complete_loglik_noncentered(s, y, M, V)),
                         (rb_score(spec, y, V), lambda s: log_joint_y_v(s, y, V))):
            a = score.flat()
            num = np.array([_fd(f, spec, i, 1e-6) for i in range(a.size)])
            worst = max(worst, float(np.max(np.abs(a - num) / np.maximum(np.abs(num), 1e-3))))

    # Fisher identity: chain average of the Rao-Blackwellized score vs the gradient of log p(Y)
    frng = np.random.default_rng(0)
    spec = ModelSpec(family="nig", nu=1.5, mu=0.5, sigma=0.8, sigma_eps=0.6, kernel=AR1Kernel(2, 0.4, "precision"),
                     A=frng.normal(size=(3, 2)), X=frng.normal(size=(3, 1)), beta=np.array([0.3]))
    y = frng.normal(size=3)
    state, crng = ChainState(np.ones(2)), np.random.default_rng(1)
    for _ in range(500):
        state = gibbs_step(spec, "noncentered", state, y, crng)
    draws = []
    for _ in range(30_000):
        state = gibbs_step(spec, "noncentered", state, y, crng)
        draws.append(rb_score(spec, y, state.V).flat())
    draws = np.array(draws)
    grad = np.array([_fd(lambda s: log_marginal_n2(s, y), spec, i, 1e-4) for i in range(draws.shape[1])])
    se = np.array([mcse(draws[:, j]) for j in range(draws.shape[1])])
    z = np.abs(draws.mean(axis=0) - grad) / se
    ok = worst <= 1e-5 and np.all(z <= 3)
    verdict("C6 gradients", ok, f"max FD relative error = {worst:.1e} (tol 1e-5), "
                                f"Fisher identity max z = {z.max():.2f} (tol 3)")


@pytest.mark.slow
def test_c7_regime_study(verdict):
    blocks = [run_s1(ExperimentConfig.s1(seed=seed)) for seed in (1, 2, 3)]
    misses, rhat_max = [], max(r["rhat"] for b in blocks for r in b.rows)
    mean_iact = {}
    for point, refs in S1_REFERENCE_IACT.items():
        for stat, ref in zip(STATS3, refs):
            vals = np.array([b.value("point", point, stat) for b in blocks])
            mean, half = vals.mean(), 4.303 * vals.std(ddof=1) / math.sqrt(vals.size)
            mean_iact[point, stat] = mean
            if abs(mean - ref) > 0.3 * ref and abs(mean - ref) > half:
                misses.append(f"{point}/{stat}: {mean:.2f} vs {ref}")
    order_ok = mean_iact["D", "S_log"] > mean_iact["C", "S_log"] > mean_iact["A", "S_log"]
    ess = {pt: np.mean([b.value("point", pt, "S_log", "ess_per_sec") for b in blocks]) for pt in S1_REFERENCE_IACT}
    d_min = min(ess, key=ess.get) == "D"
    ok = not misses and order_ok and d_min and rhat_max <= 1.01
    detail = (f"value misses = {misses or 'none'} (tol 30% or 95% interval), "
              f"S_log IACT D/C/A = {mean_iact['D', 'S_log']:.2f}/{mean_iact['C', 'S_log']:.2f}/"
              f"{mean_iact['A', 'S_log']:.2f}, min ESS/sec at {min(ess, key=ess.get)}, max R-hat = {rhat_max:.4f}")
    verdict("C7 regime study", ok, detail)


@pytest.mark.slow
def test_c8_null_smallness_scan(verdict):
    result = run_s2(ExperimentConfig.s2(seed=1))
    g0 = result.value("mu", 0.0, "T_null", "gamma_ns")
    rho = s2_rank_correlation(result)
    rhat_max = max(r["rhat"] for r in result.rows)
    ok = g0 == 0.0 and rho > 0.8 and rhat_max <= 1.01
    verdict("C8 null-smallness scan", ok,
            f"gamma_ns(0) = {g0}, Spearman = {rho:.3f} (> 0.8), max R-hat = {rhat_max:.4f} (tol 1.01)")


def test_c9_integrability(verdict):
    y = np.zeros(1)
    low = demo_centered_integrability(integrability_spec(0.25), y, 10**6, seed=0)
    high = demo_centered_integrability(integrability_spec(0.75), y, 10**6, seed=0)
    ok = (not low.centered_stabilizes) and high.centered_stabilizes
    verdict("C9 integrability", ok,
            f"log running-mean slope alpha=0.25: {low.slope_centered:.4f}, alpha=0.75: {high.slope_centered:.4f} "
            f"(threshold {high.threshold})")


def test_c10_trace_witness(verdict):
    radii = 2.0 ** np.arange(1, 13)
    witness = ModelSpec(gig=GigParams(-1.5, 0.0, 2.0), mu=0.0, sigma=1.0, sigma_eps=1.0, K=[[1.0]], A=[[0.0]])
    tc1 = ModelSpec(gig=GigParams(-0.5, 1.0, 1.0), mu=1.0, sigma=1.0, sigma_eps=1.0, K=[[1.0]], A=[[1.0]])
    inc_w = trace_diagonal_increments(witness, np.zeros(1), radii)[1:, 2]
    inc_t = trace_diagonal_increments(tc1, np.zeros(1), radii)[1:, 2]
    # the witness diagonal behaves like c / V at both ends, so each doubling adds a fixed amount
    tail = inc_w[len(inc_w) // 2:]
    ok = tail.min() > 0.05 and tail.max() / tail.min() < 1.05 and inc_t[-1] < 1e-10
    verdict("C10 trace witness", ok,
            f"witness increments tail min = {tail.min():.4f} (> 0.05), TC1 last increment = {inc_t[-1]:.1e}")
