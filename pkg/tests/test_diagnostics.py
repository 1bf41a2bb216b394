import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal

from llngm.diagnostics import autocorrelation, ess, iact, max_rhat, mcse, split_rhat, summarize_run
from llngm.errors import DegenerateSeriesError, ParameterError


def ar1_series(phi, n, seed):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n)
    x = signal.lfilter([1.0], [1.0, -phi], e)
    return x[1000:]


@pytest.mark.parametrize("phi", [0.0, 0.5, 0.8, -0.3])
def test_iact_of_ar1_matches_closed_form(phi):
    # tau = (1 + phi) / (1 - phi) for a stationary AR(1)
    x = ar1_series(phi, 400_000, seed=1)
    tau = (1 + phi) / (1 - phi)
    assert iact(x) == pytest.approx(tau, rel=0.06)
    assert ess(x) == pytest.approx(x.size / iact(x))


def test_autocorrelation_against_direct_sum():
    x = ar1_series(0.6, 3000, seed=2)
    xc = x - x.mean()
    direct = np.array([xc[: x.size - k] @ xc[k:] for k in range(6)]) / (xc @ xc)
    np.testing.assert_allclose(autocorrelation(x, 5), direct, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 50), st.floats(-100, 100), st.integers(0, 10_000))
def test_iact_and_rhat_are_affine_invariant(scale, shift, seed):
    x = ar1_series(0.7, 3000, seed)
    assert iact(scale * x + shift) == pytest.approx(iact(x), rel=1e-8)
    chains = [x[:1000], x[1000:2000]]
    assert split_rhat([scale * c + shift for c in chains]) == pytest.approx(split_rhat(chains), rel=1e-8)


def test_mcse_of_white_noise():
    x = np.random.default_rng(0).standard_normal(100_000)
    assert mcse(x) == pytest.approx(1 / np.sqrt(x.size), rel=0.05)


def test_iact_floor_and_errors():
    # strongly alternating series have IACT below one; the floor bounds it away from zero
    x = np.tile([1.0, -1.0], 500) + 1e-3 * np.random.default_rng(0).standard_normal(1000)
    assert iact(x, floor=0.25) >= 0.25
    with pytest.raises(DegenerateSeriesError):
        iact(np.ones(500))
    with pytest.raises(ParameterError):
        iact(np.ones(50))
    with pytest.raises(ParameterError):
        iact(np.r_[np.ones(200), np.nan])


def test_split_rhat_detects_disagreement():
    rng = np.random.default_rng(4)
    same = [rng.standard_normal(5000) for _ in range(4)]
    assert split_rhat(same) < 1.005
    shifted = same[:3] + [same[3] + 1.0]
    assert split_rhat(shifted) > 1.05
    trending = [np.linspace(0, 3, 5000) + rng.standard_normal(5000) for _ in range(2)]
    assert split_rhat(trending) > 1.1


def test_split_rhat_errors():
    with pytest.raises(ParameterError):
        split_rhat([np.ones(10)])
    with pytest.raises(ParameterError):
        split_rhat([np.ones(10), np.ones(11)])
    assert split_rhat([np.ones(10), np.ones(10)]) == 1.0


def test_summarize_run_rows():
    rng = np.random.default_rng(5)
    tracks = {"a": [rng.standard_normal(2000) for _ in range(3)], "b": [rng.standard_normal(2000) for _ in range(3)]}
    rows = summarize_run(tracks, [1.0, 2.0, 4.0])
    assert [r.stat for r in rows] == ["a", "b"]
    r = rows[0]
    assert r.ess == pytest.approx(2000 / r.iact)
    assert r.ess_per_sec < r.ess
    assert max_rhat(rows) < 1.01
    with pytest.raises(ParameterError):
        summarize_run(tracks, [1.0])
