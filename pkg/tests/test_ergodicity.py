import math

import numpy as np
import pytest
from scipy import integrate, linalg

from llngm.bessel_gig import GigParams
from llngm.ergodicity import (CONDITIONAL, REGIME_TABLE, Regime, baseline_contraction, bessel_crossover,
                              c1_of_p, classify_regime, delta_of_p, drift_constants, gamma_ns_scan, kappa,
                              kernel_density, kernel_symmetry_defect, null_direction, null_smallness, regime_of,
                              rosenthal_bound, rosenthal_ingredients, trace_diagonal_increments)
from llngm.errors import CaseMismatchError, DomainError, ParameterError
from llngm.model import AR1Kernel, ModelSpec, build_rank_deficient_A


def spec_of(p, a, b, mu, n=8, A=None, form="precision", sigma=1.0):
    return ModelSpec(gig=GigParams(p, a, b), mu=mu, sigma=sigma, sigma_eps=1.0, kernel=AR1Kernel(n, 0.5, form),
                     A=np.eye(n) if A is None else A)


@pytest.mark.parametrize("p,a,b,mu,expected", [
    (-0.5, 1, 1, 1, Regime.TC1), (3.0, 2, 0.1, 0, Regime.TC1),
    (0.6, 1, 0, 1, Regime.TC2), (0.5, 1, 0, 1, Regime.DM_III), (0.3, 1, 0, 0, Regime.DM_III),
    (-1.5, 0, 2, 0, Regime.DM_I), (-1.5, 0, 2, 1, Regime.DM_II), (-1.5, 0, 2, -0.1, Regime.DM_II),
    (0.5, 0, 1, 1, Regime.OUTSIDE),
])
def test_regime_rows(p, a, b, mu, expected):
    assert regime_of(p, a, b, mu) is expected


def test_table_verdicts():
    assert REGIME_TABLE[Regime.TC1] == ("Yes", "Yes")
    assert REGIME_TABLE[Regime.DM_I] == ("No", "Yes")
    assert REGIME_TABLE[Regime.DM_II][1] == CONDITIONAL


def test_classify_attaches_null_report_only_when_conditional():
    assert classify_regime(spec_of(-0.5, 1, 1, 1)).ns is None
    rep = classify_regime(spec_of(0.3, 1, 0, 1, A=build_rank_deficient_A(8)))
    assert rep.ns is not None and rep.ns.r == 1
    assert rep.as_dict()["null_smallness"]["r"] == 1


def test_null_smallness_full_rank():
    rep = null_smallness(spec_of(0.3, 1, 0, 1))
    assert rep.r == 0 and rep.satisfied and rep.ns_ratio == 0.0 and rep.projector_mass == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_projector_identity_against_scipy_null_space(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 12))
    r = int(rng.integers(1, n))
    A = rng.normal(size=(n + 2, n - r)) @ rng.normal(size=(n - r, n))
    K = rng.normal(size=(n, n)) + 2 * np.eye(n)
    spec = ModelSpec(gig=GigParams(0.3, 1, 0), mu=0.4, sigma=1, sigma_eps=1, K=K, A=A)
    rep = null_smallness(spec)
    N = linalg.null_space(A @ np.linalg.inv(K))
    one = np.ones(n)
    assert rep.r == N.shape[1] == r
    assert rep.proj_norm**2 == pytest.approx(float(one @ N @ N.T @ one), rel=1e-8, abs=1e-8)
    assert rep.identity_gap < 1e-8


def test_null_smallness_ratio_formula():
    spec = spec_of(0.3, 1.5, 0, 0.2, A=build_rank_deficient_A(8), sigma=0.7)
    rep = null_smallness(spec)
    expected = 0.2 / math.sqrt(0.49 * 1.5 + 0.04) * rep.proj_norm
    assert rep.ns_ratio == pytest.approx(expected, rel=1e-14)


def test_gamma_ns_scan():
    n = 10
    spec = spec_of(0.5, 1, 0, 0.0, n=n, A=build_rank_deficient_A(n))
    y = np.zeros(n)
    grid = [0.0, 0.1, 0.5, 2.0]
    g = gamma_ns_scan(spec, grid, y)
    assert g[0] == 0.0
    assert np.all(np.diff(g) > 0)
    # direct evaluation: u0 = K 1 / |K 1| and mbar = rho B^T (y + mu B 1) + mu 1
    u0 = spec.K @ np.ones(n)
    u0 /= np.linalg.norm(u0)
    B = spec.A @ np.linalg.inv(spec.K)
    for mu, val in zip(grid, g):
        mbar = B.T @ (y + mu * B @ np.ones(n)) + mu * np.ones(n)
        assert val == pytest.approx(abs(u0 @ mbar) / math.sqrt(1 + mu**2), abs=1e-12)
    np.testing.assert_allclose(abs(null_direction(spec) @ u0), 1.0)
    with pytest.raises(ParameterError):
        null_direction(spec_of(0.5, 1, 0, 1))


def test_case_I_rate_at_p_minus_one():
    rep = drift_constants(spec_of(-1.0, 0, 2, 0), "I")
    assert rep.gamma == pytest.approx(2 / math.pi, abs=1e-12)
    assert rep.L is None and "C_eta" in rep.L_note
    with_offset = drift_constants(spec_of(-1.0, 0, 2, 0), "I", y=np.linspace(-1, 1, 8))
    assert with_offset.L > 0 and with_offset.c_eta > 0
    assert with_offset.rosenthal(d=2 * with_offset.L / (1 - with_offset.gamma) + 1, epsilon=0.5).alpha_inv < 1


@pytest.mark.parametrize("p", [0.5, 0.6, 1.0, 2.0, 7.5])
def test_case_III_constant_is_one_half(p):
    rep = drift_constants(spec_of(p, 1, 0, 1), "III")
    assert rep.extras["C1"] * rep.extras["kappa"] == pytest.approx(0.5, abs=1e-14)


def test_case_III_small_p():
    rep = drift_constants(spec_of(0.3, 1, 0, 1), "III")
    assert 0 < rep.gamma_minus < 1
    assert rep.extras["bessel_crossover"] > 0


def test_case_mismatch():
    with pytest.raises(CaseMismatchError):
        drift_constants(spec_of(-0.5, 1, 1, 1), "I")
    with pytest.raises(CaseMismatchError):
        drift_constants(spec_of(-1.5, 0, 2, 0), "II")
    big_mu = spec_of(0.3, 0.01, 0, 50.0, A=build_rank_deficient_A(8))
    with pytest.raises(CaseMismatchError):
        drift_constants(big_mu, "III")
    with pytest.raises(ParameterError):
        drift_constants(spec_of(-1.5, 0, 2, 0), "IV")


def test_baseline_contraction_below_one_on_grid():
    for alpha in np.linspace(0.05, 10, 60):
        for delta in np.linspace(0.01, 0.999, 25) * alpha:
            assert baseline_contraction(alpha, delta) < 1.0
    with pytest.raises(DomainError):
        baseline_contraction(0.1, 0.1)


def test_delta_and_kappa():
    assert delta_of_p(0.3) == 0.3
    assert delta_of_p(0.6) == pytest.approx(0.2)
    assert delta_of_p(3.0) == 0.5
    with pytest.raises(DomainError):
        delta_of_p(0.0)
    # kappa(delta) = E|Z|^{-delta} for Z standard normal
    d = 0.3
    moment = 2 * integrate.quad(lambda z: z**-d * math.exp(-z * z / 2) / math.sqrt(2 * math.pi), 0, np.inf)[0]
    assert kappa(d) == pytest.approx(moment, rel=1e-9)
    assert c1_of_p(0.5) * kappa(0.5) == pytest.approx(2**0.25 * math.sqrt(math.pi) / (2 * math.gamma(0.25))
                                                       * kappa(0.5))


def test_bessel_crossover():
    x = bessel_crossover(0.3)
    assert 0 < x < 50
    with pytest.raises(DomainError):
        bessel_crossover(0.6)


def test_rosenthal_bound_decays():
    ing = rosenthal_ingredients(0.5, 1.0, 10.0, 0.3)
    assert ing.alpha_inv == pytest.approx(8.0 / 11.0)
    vals = [rosenthal_bound(0.5, 1.0, 10.0, 0.3, 0.05, k, 1.0) for k in (0, 50, 500)]
    assert vals[0] > vals[1] > vals[2]
    with pytest.raises(ParameterError):
        rosenthal_ingredients(0.5, 1.0, 1.0)
    with pytest.raises(ParameterError):
        rosenthal_bound(0.5, 1.0, 10.0, 0.3, 1.5, 5, 1.0)


def scalar_spec(p, a, b, mu, A=1.0):
    return ModelSpec(gig=GigParams(p, a, b), mu=mu, sigma=1.0, sigma_eps=1.0, K=[[1.0]], A=[[A]])


def test_kernel_is_a_transition_density():
    spec = scalar_spec(-0.5, 1, 1, 1)
    y = np.zeros(1)
    for v in (0.1, 1.0, 5.0):
        total = integrate.quad(lambda t: float(kernel_density(spec, y, v, math.exp(t))) * math.exp(t),
                               -30, 10, limit=200)[0]
        assert total == pytest.approx(1.0, abs=1e-7)


def test_kernel_is_reversible():
    spec = scalar_spec(0.6, 1, 0, 0.8)
    assert kernel_symmetry_defect(spec, np.array([0.3]), np.geomspace(0.05, 10, 25)) < 1e-8


def test_trace_increments_columns():
    rows = trace_diagonal_increments(scalar_spec(-0.5, 1, 1, 1), np.zeros(1), [4, 2, 8])
    np.testing.assert_array_equal(rows[:, 0], [2, 4, 8])
    assert math.isnan(rows[0, 2])
    np.testing.assert_allclose(rows[1:, 1] - rows[:-1, 1], rows[1:, 2])
