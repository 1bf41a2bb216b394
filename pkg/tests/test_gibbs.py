import numpy as np
import pytest

from llngm.bessel_gig import GigParams
from llngm.diagnostics import mcse
from llngm.errors import ParameterError
from llngm.gaussian import latent_structure
from llngm.gibbs import (SUMMARY_NAMES, ChainState, GibbsConfig, gibbs_step, null_direction_weights,
                         overdispersed_inits, run_chain, run_chains, summarize_state)
from llngm.model import AR1Kernel, ModelSpec, Parameterization, build_rank_deficient_A, to_noncentered

from oracles import scalar_posterior_moments


def spec_n(n, form="precision", A=None, gig=(0.5, 1.0, 0.0), mu=0.5):
    return ModelSpec(gig=GigParams(*gig), mu=mu, sigma=1.0, sigma_eps=1.0, kernel=AR1Kernel(n, 0.5, form),
                     A=np.eye(n) if A is None else A)


def test_config_validation_and_retained_indices():
    cfg = GibbsConfig(T=10, burn=4, thin=3)
    np.testing.assert_array_equal(cfg.retained(), [4, 7])
    for bad in (dict(T=5, burn=5), dict(T=5, burn=-1), dict(T=5, thin=0), dict(T=5, n_chains=0)):
        with pytest.raises(ParameterError):
            GibbsConfig(**bad)


def test_chains_are_reproducible_per_seed():
    spec = spec_n(12)
    y = np.zeros(12)
    cfg = GibbsConfig(T=300, burn=50, thin=2, n_chains=2, seed=7)
    a = run_chains(spec, "noncentered", cfg, y)
    b = run_chains(spec, "noncentered", cfg, y)
    for ta, tb in zip(a, b):
        np.testing.assert_array_equal(ta.summaries, tb.summaries)
    np.testing.assert_array_equal(a[0].iters, np.arange(51, 301, 2))
    c = run_chains(spec, "noncentered", GibbsConfig(T=300, burn=50, thin=2, n_chains=2, seed=8), y)
    assert not np.array_equal(a[0].summaries, c[0].summaries)
    assert not np.array_equal(a[0].summaries, a[1].summaries)


def test_init_validation():
    spec = spec_n(3)
    cfg = GibbsConfig(T=10)
    with pytest.raises(ParameterError):
        run_chain(spec, "noncentered", cfg, np.zeros(3), np.array([1.0, 0.0, 1.0]), np.random.default_rng(0))
    with pytest.raises(ParameterError):
        run_chains(spec, "noncentered", GibbsConfig(T=10, n_chains=2), np.zeros(3), inits=[np.ones(3)])


def test_overdispersed_inits():
    inits = overdispersed_inits(5, np.random.default_rng(0))
    assert len(inits) == 4
    assert inits[1][0] == 0.1 and inits[2][0] == 10.0
    assert np.all(inits[3] > 0)


@pytest.mark.parametrize("param", ["noncentered", "centered"])
def test_recorded_states_reproduce_summaries(param):
    spec = spec_n(6, form="correlation", A=build_rank_deficient_A(6))
    cfg = GibbsConfig(T=40, burn=10, record_states=True, q=0.3)
    tr = run_chain(spec, param, cfg, np.zeros(6), np.ones(6), np.random.default_rng(1))
    w = null_direction_weights(spec)
    for V, latent, s in zip(tr.V, tr.latent, tr.summaries):
        M = latent if param == "noncentered" else to_noncentered(spec, latent)
        np.testing.assert_allclose(summarize_state(V, M, spec, 0.3, w), s, rtol=1e-10, atol=1e-12)
    assert tr.track("S_log").shape == (30,)
    assert tr.names == SUMMARY_NAMES


def test_gibbs_step_advances_iteration():
    spec = spec_n(3)
    s = gibbs_step(spec, Parameterization.CENTERED, ChainState(np.ones(3)), np.zeros(3), np.random.default_rng(0))
    assert s.iter == 1 and s.V.shape == (3,) and np.all(s.V > 0)


def test_dense_and_structured_paths_agree_in_law():
    spec = spec_n(25, A=build_rank_deficient_A(25))
    y = np.zeros(25)
    cfg = GibbsConfig(T=20_000, burn=1000, n_chains=1)
    fast = run_chain(spec, "noncentered", cfg, y, np.ones(25), np.random.default_rng(1), latent_structure(spec, y))
    dense = run_chain(spec, "noncentered", cfg, y, np.ones(25), np.random.default_rng(2),
                      latent_structure(spec, y, allow_banded=False))
    for name in ("S_plus", "S_log"):
        a, b = fast.track(name), dense.track(name)
        assert abs(a.mean() - b.mean()) < 4 * np.hypot(mcse(a), mcse(b))


def test_scalar_chain_matches_quadrature_posterior():
    spec = ModelSpec(gig=GigParams(-0.5, 1.0, 1.0), mu=1.0, sigma=1.0, sigma_eps=0.8, K=[[1.3]], A=[[1.0]])
    y = np.array([0.7])
    cfg = GibbsConfig(T=30_000, burn=500, n_chains=1, record_states=True)
    tr = run_chain(spec, "noncentered", cfg, y, np.ones(1), np.random.default_rng(3))
    V = tr.V[:, 0]
    m1, m2 = scalar_posterior_moments(spec, y)
    assert abs(V.mean() - m1) < 4 * mcse(V)


def test_centered_step_survives_tiny_mixing_variables():
    n = 6
    spec = ModelSpec(gig=GigParams(0.3, 1.0, 0.0), mu=1.0, sigma=1.0, sigma_eps=1.0,
                     kernel=AR1Kernel(n, 0.5, "precision"), A=np.eye(n))
    V = np.ones(n)
    V[2] = 1e-17
    from llngm.errors import FactorizationError
    from llngm.gaussian import conditional_W
    with pytest.raises(FactorizationError):
        conditional_W(spec, V, np.zeros(n)).chol
    state = gibbs_step(spec, "centered", ChainState(V), np.zeros(n), np.random.default_rng(0))
    assert np.all(np.isfinite(state.latent)) and np.all(state.V > 0)
