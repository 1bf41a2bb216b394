"""Likelihood scores and stochastic-gradient maximum likelihood.

Complete-data log-likelihoods::

    centered:     log N(Y; X beta + A W, s_e^2 I) + log|det K|
                  + sum_i log N((K W)_i; mu (V_i - h_i), sigma^2 V_i) + log p(V)
    non-centered: log N(Y; X beta + B (M - mu h), s_e^2 I)
                  + sum_i log N(M_i; mu V_i, sigma^2 V_i) + log p(V)

The non-centered scores for mu and zeta carry a minus sign in front of the
observation term; both signs follow from d r / d mu = B h and
d r / d zeta = A K^{-1} dK K^{-1} (M - mu h) for r = Y - X beta - B (M - mu h).

``rb_score`` integrates the latent field out analytically given (Y, V). Both
parameterizations then give the same vector, the gradient of log p(Y, V).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .bessel_gig import digamma, gig_log_density_arrays, log_gamma
from .errors import DomainError, ParameterError, SgdDivergenceError
from .gaussian import conditional_M, conditional_W
from .gibbs import ChainState, GibbsConfig, gibbs_step, run_chain
from .model import AR1Kernel, ModelSpec, Parameterization, marginal_y_given_v

log = logging.getLogger(__name__)

PARAMETER_GROUPS = ("beta", "sigma_eps", "sigma", "mu", "zeta", "nu")


@dataclass(frozen=True)
class ScoreVector:
    d_beta: np.ndarray
    d_sigma_eps: float
    d_sigma: float
    d_mu: float
    d_zeta: np.ndarray
    d_nu: float | None = None

    def names(self) -> list[str]:
        out = [f"beta[{j}]" for j in range(self.d_beta.size)]
        out += ["sigma_eps", "sigma", "mu"]
        out += [f"zeta[{j}]" for j in range(self.d_zeta.size)]
        if self.d_nu is not None:
            out.append("nu")
        return out

    def flat(self) -> np.ndarray:
        parts = [self.d_beta, [self.d_sigma_eps, self.d_sigma, self.d_mu], self.d_zeta]
        if self.d_nu is not None:
            parts.append([self.d_nu])
        return np.concatenate([np.asarray(p, dtype=float).ravel() for p in parts])

    @classmethod
    def from_flat(cls, template: ScoreVector, values) -> ScoreVector:
        v = np.asarray(values, dtype=float)
        q, z = template.d_beta.size, template.d_zeta.size
        nu = None if template.d_nu is None else float(v[q + 3 + z])
        return cls(v[:q].copy(), float(v[q]), float(v[q + 1]), float(v[q + 2]), v[q + 3:q + 3 + z].copy(), nu)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.flat())))


def _positive(V):
    V = np.asarray(V, dtype=float)
    if np.any(~(V > 0)):
        raise DomainError("mixing variables must be positive")
    return V


def _log_prior_v(spec: ModelSpec, V) -> float:
    p, a, b = spec.prior_arrays()
    return float(np.sum(gig_log_density_arrays(p, a, b, V)))


def _d_nu(spec: ModelSpec, V) -> float | None:
    if spec.family == "gig":
        return None
    nu, h = float(spec.nu), spec.h
    if spec.family == "nig":
        return float(np.sum(0.5 / nu + h - 0.5 * V - 0.5 * h**2 / V))
    return float(np.sum(h * math.log(nu) + h - h * digamma(h * nu) + h * np.log(V) - V))


def _kernel_derivatives(spec: ModelSpec):
    return spec.dK


def complete_loglik_centered(spec: ModelSpec, y, W, V) -> float:
    V = _positive(V)
    y, W = np.asarray(y, dtype=float), np.asarray(W, dtype=float)
    r = y - spec.offset - spec.A @ W
    e = spec.K @ W - spec.mu * (V - spec.h)
    s2, se2 = spec.sigma**2, spec.sigma_eps**2
    ll_y = -0.5 * spec.m * math.log(2 * math.pi * se2) - 0.5 * (r @ r) / se2
    ll_w = (spec.log_abs_det_K - 0.5 * np.sum(np.log(2 * math.pi * s2 * V)) - 0.5 * np.sum(e**2 / V) / s2)
    return float(ll_y + ll_w + _log_prior_v(spec, V))


def complete_loglik_noncentered(spec: ModelSpec, y, M, V) -> float:
    V = _positive(V)
    y, M = np.asarray(y, dtype=float), np.asarray(M, dtype=float)
    r = y - spec.offset - spec.B @ (M - spec.mu * spec.h)
    e = M - spec.mu * V
    s2, se2 = spec.sigma**2, spec.sigma_eps**2
    ll_y = -0.5 * spec.m * math.log(2 * math.pi * se2) - 0.5 * (r @ r) / se2
    ll_m = -0.5 * np.sum(np.log(2 * math.pi * s2 * V)) - 0.5 * np.sum(e**2 / V) / s2
    return float(ll_y + ll_m + _log_prior_v(spec, V))


def log_joint_y_v(spec: ModelSpec, y, V) -> float:
    """log p(Y, V) with the latent field integrated out."""
    V = _positive(V)
    mean, cov = marginal_y_given_v(spec, V)
    resid = np.asarray(y, dtype=float) - mean
    c = sla.cho_factor(cov, lower=True)
    logdet = 2.0 * np.sum(np.log(np.diag(c[0])))
    ll = -0.5 * (spec.m * math.log(2 * math.pi) + logdet + resid @ sla.cho_solve(c, resid))
    return float(ll + _log_prior_v(spec, V))


def score_centered(spec: ModelSpec, y, W, V) -> ScoreVector:
    """Complete-data score of the centered parameterization."""
    V = _positive(V)
    y, W = np.asarray(y, dtype=float), np.asarray(W, dtype=float)
    s, se = spec.sigma, spec.sigma_eps
    r = y - spec.offset - spec.A @ W
    e = spec.K @ W - spec.mu * (V - spec.h)
    d_zeta = np.array([np.trace(spec.solve_K(dK)) - (e / V) @ (dK @ W) / s**2
                       for dK in _kernel_derivatives(spec)])
    return ScoreVector(
        d_beta=spec.X.T @ r / se**2,
        d_sigma_eps=float(-spec.m / se + (r @ r) / se**3),
        d_sigma=float(-spec.n / s + np.sum(e**2 / V) / s**3),
        d_mu=float(np.sum(e * (V - spec.h) / V) / s**2),
        d_zeta=d_zeta,
        d_nu=_d_nu(spec, V),
    )


def score_noncentered(spec: ModelSpec, y, M, V) -> ScoreVector:
    """Complete-data score of the non-centered parameterization."""
    V = _positive(V)
    y, M = np.asarray(y, dtype=float), np.asarray(M, dtype=float)
    s, se = spec.sigma, spec.sigma_eps
    u = M - spec.mu * spec.h
    r = y - spec.offset - spec.B @ u
    e = M - spec.mu * V
    Kinv_u = spec.solve_K(u)
    d_zeta = np.array([-(r @ (spec.B @ (dK @ Kinv_u))) / se**2 for dK in _kernel_derivatives(spec)])
    return ScoreVector(
        d_beta=spec.X.T @ r / se**2,
        d_sigma_eps=float(-spec.m / se + (r @ r) / se**3),
        d_sigma=float(-spec.n / s + np.sum(e**2 / V) / s**3),
        d_mu=float(np.sum(e) / s**2 - (spec.B @ spec.h) @ r / se**2),
        d_zeta=d_zeta,
        d_nu=_d_nu(spec, V),
    )


def rb_score(spec: ModelSpec, y, V, param=Parameterization.NONCENTERED) -> ScoreVector:
    """E[score | Y, V] using the Gaussian conditional of the latent field."""
    V = _positive(V)
    y = np.asarray(y, dtype=float)
    s, se = spec.sigma, spec.sigma_eps
    c0 = y - spec.offset
    if Parameterization(param) is Parameterization.NONCENTERED:
        g = conditional_M(spec, V, y)
        m, S = g.mean, g.covariance()
        u = m - spec.mu * spec.h
        B = spec.B
        r_mean = c0 - B @ u
        r_sq = r_mean @ r_mean + np.sum((B @ S) * B)
        e_mean = m - spec.mu * V
        d_zeta = []
        for dK in _kernel_derivatives(spec):
            C = B @ dK @ spec.solve_K(np.eye(spec.n))
            val = c0 @ (C @ u) - u @ (B.T @ (C @ u)) - np.sum((B.T @ C) * S.T)
            d_zeta.append(-val / se**2)
        return ScoreVector(
            d_beta=spec.X.T @ r_mean / se**2,
            d_sigma_eps=float(-spec.m / se + r_sq / se**3),
            d_sigma=float(-spec.n / s + np.sum((e_mean**2 + np.diag(S)) / V) / s**3),
            d_mu=float(np.sum(e_mean) / s**2 - (B @ spec.h) @ r_mean / se**2),
            d_zeta=np.array(d_zeta),
            d_nu=_d_nu(spec, V),
        )
    g = conditional_W(spec, V, y)
    w, S = g.mean, g.covariance()
    K, A = spec.K, spec.A
    r_mean = c0 - A @ w
    r_sq = r_mean @ r_mean + np.sum((A @ S) * A)
    e_mean = K @ w - spec.mu * (V - spec.h)
    e_sq = e_mean**2 + np.sum((K @ S) * K, axis=1)
    d_zeta = []
    for dK in _kernel_derivatives(spec):
        quad = (e_mean / V) @ (dK @ w) + np.sum(((K.T / V) @ dK) * S.T)
        d_zeta.append(np.trace(spec.solve_K(dK)) - quad / s**2)
    return ScoreVector(
        d_beta=spec.X.T @ r_mean / se**2,
        d_sigma_eps=float(-spec.m / se + r_sq / se**3),
        d_sigma=float(-spec.n / s + np.sum(e_sq / V) / s**3),
        d_mu=float(np.sum(e_mean * (V - spec.h) / V) / s**2),
        d_zeta=np.array(d_zeta),
        d_nu=_d_nu(spec, V),
    )


# ---------------------------------------------------------------------------
# Parameter vector handling.

def parameter_vector(spec: ModelSpec) -> ScoreVector:
    """Current parameters laid out like a score (for finite differences and SGD)."""
    nu = None if spec.family == "gig" else float(spec.nu)
    return ScoreVector(np.array(spec.beta, dtype=float), spec.sigma_eps, spec.sigma, spec.mu,
                       np.array(spec.zeta, dtype=float), nu)


def with_parameters(spec: ModelSpec, theta: ScoreVector) -> ModelSpec:
    changes = dict(beta=theta.d_beta, sigma_eps=theta.d_sigma_eps, sigma=theta.d_sigma, mu=theta.d_mu)
    if theta.d_zeta.size:
        changes["zeta"] = theta.d_zeta
    if theta.d_nu is not None:
        changes["nu"] = theta.d_nu
    return spec.replace(**changes)


def _group_of(name: str) -> str:
    return name.split("[")[0]


@dataclass(frozen=True)
class _Transform:
    """Unconstrained coordinates: log for scales and nu, atanh for an AR(1) phi."""

    names: tuple
    ar1: bool = False

    def to_free(self, theta: np.ndarray) -> np.ndarray:
        out = theta.copy()
        for i, name in enumerate(self.names):
            g = _group_of(name)
            if g in ("sigma", "sigma_eps", "nu"):
                out[i] = math.log(theta[i])
            elif g == "zeta" and self.ar1:
                out[i] = math.atanh(theta[i])
        return out

    def from_free(self, free: np.ndarray) -> np.ndarray:
        out = free.copy()
        for i, name in enumerate(self.names):
            g = _group_of(name)
            if g in ("sigma", "sigma_eps", "nu"):
                out[i] = math.exp(free[i])
            elif g == "zeta" and self.ar1:
                out[i] = math.tanh(free[i])
        return out

    def jacobian(self, theta: np.ndarray) -> np.ndarray:
        """d theta / d free, elementwise."""
        out = np.ones_like(theta)
        for i, name in enumerate(self.names):
            g = _group_of(name)
            if g in ("sigma", "sigma_eps", "nu"):
                out[i] = theta[i]
            elif g == "zeta" and self.ar1:
                out[i] = 1.0 - theta[i] ** 2
        return out


# ---------------------------------------------------------------------------
# Gradient estimation and SGD.

@dataclass(frozen=True)
class SgdConfig:
    """Settings for the stochastic-gradient ascent on the log-likelihood.

    The default step is ``step_c / (step_t0 + t)``; ``schedule`` overrides it.
    Gradients are divided by n (per-coordinate scaling) before the step.
    """

    iterations: int
    k_gibbs: int = 1
    step_c: float = 1.0
    step_t0: float = 10.0
    mask: frozenset = frozenset(PARAMETER_GROUPS)
    warm_start: bool = True
    param: Parameterization = Parameterization.NONCENTERED
    burn_in: int = 50
    max_abs_free: float = 50.0
    schedule: Callable[[int], float] | None = None

    def __post_init__(self):
        if self.iterations < 0 or self.k_gibbs < 1:
            raise ParameterError("need iterations >= 0 and k_gibbs >= 1")
        unknown = set(self.mask) - set(PARAMETER_GROUPS)
        if unknown:
            raise ParameterError(f"unknown parameter groups {sorted(unknown)}")
        object.__setattr__(self, "mask", frozenset(self.mask))
        object.__setattr__(self, "param", Parameterization(self.param))

    def step(self, t: int) -> float:
        if self.schedule is not None:
            return float(self.schedule(t))
        return self.step_c / (self.step_t0 + t)


def grad_estimate(spec: ModelSpec, y, k: int, state: ChainState, rng: np.random.Generator,
                  param=Parameterization.NONCENTERED):
    """Average of rb_score over k Gibbs sweeps started from ``state``.

    Returns (mean score, per-draw flat scores, final chain state).
    """
    if k < 1:
        raise ParameterError("k must be at least 1")
    draws = []
    for _ in range(k):
        state = gibbs_step(spec, param, state, y, rng)
        draws.append(rb_score(spec, y, state.V, param))
    flat = np.array([d.flat() for d in draws])
    return ScoreVector.from_flat(draws[0], flat.mean(axis=0)), flat, state


@dataclass
class SgdResult:
    names: list
    trajectory: np.ndarray
    grad_norms: np.ndarray
    spec: ModelSpec
    state: ChainState = field(repr=False, default=None)

    @property
    def final(self) -> dict:
        return dict(zip(self.names, self.trajectory[-1]))


def sgd_fit(spec0: ModelSpec, y, sgd: SgdConfig, rng: np.random.Generator, init_V=None) -> SgdResult:
    """Stochastic-gradient ascent with Rao-Blackwellized gradients.

    Only the groups in ``sgd.mask`` move. The chain is warm-started across
    iterations unless ``sgd.warm_start`` is False, in which case every
    iteration restarts from ``init_V`` and runs ``burn_in`` sweeps first.
    """
    spec = spec0
    theta0 = parameter_vector(spec)
    names = theta0.names()
    free_mask = np.array([_group_of(nm) in sgd.mask for nm in names])
    tr = _Transform(tuple(names), ar1=isinstance(spec.kernel, AR1Kernel))
    theta = theta0.flat()
    free = tr.to_free(theta)
    V0 = np.ones(spec.n) if init_V is None else np.asarray(init_V, dtype=float)
    state = ChainState(V0.copy())
    for _ in range(sgd.burn_in):
        state = gibbs_step(spec, sgd.param, state, y, rng)
    traj = [theta.copy()]
    norms = []
    for t in range(sgd.iterations):
        if not sgd.warm_start:
            state = ChainState(V0.copy())
            for _ in range(sgd.burn_in):
                state = gibbs_step(spec, sgd.param, state, y, rng)
        score, _, state = grad_estimate(spec, y, sgd.k_gibbs, state, rng, sgd.param)
        grad = score.flat() * tr.jacobian(theta) / spec.n
        grad[~free_mask] = 0.0
        norms.append(float(np.linalg.norm(grad)))
        free = free + sgd.step(t) * grad
        if not np.all(np.isfinite(free)) or np.abs(free).max() > sgd.max_abs_free:
            raise SgdDivergenceError(f"iterate left the admissible region at iteration {t}",
                                     iteration=t, trajectory=np.array(traj))
        # fixed coordinates keep their exact values rather than a log/exp round trip
        theta = np.where(free_mask, tr.from_free(free), theta)
        spec = with_parameters(spec, ScoreVector.from_flat(theta0, theta))
        traj.append(theta.copy())
    return SgdResult(names, np.array(traj), np.array(norms), spec, state)


# ---------------------------------------------------------------------------
# Integrability of the centered mu-score.

@dataclass(frozen=True)
class IntegrabilityReport:
    alpha: float
    checkpoints: np.ndarray
    running_mean_centered: np.ndarray
    running_mean_noncentered: np.ndarray
    slope_centered: float
    slope_noncentered: float
    threshold: float

    @property
    def centered_stabilizes(self) -> bool:
        return abs(self.slope_centered) < self.threshold

    @property
    def noncentered_stabilizes(self) -> bool:
        return abs(self.slope_noncentered) < self.threshold


def running_mean_slope(values, n_checkpoints: int = 50, start_fraction: float = 0.01):
    """Least-squares slope of log(running mean) against log t over late checkpoints."""
    values = np.asarray(values, dtype=float)
    T = values.size
    cums = np.cumsum(values)
    ts = np.unique(np.geomspace(max(1, int(start_fraction * T)), T, n_checkpoints).astype(int))
    means = cums[ts - 1] / ts
    slope = np.polyfit(np.log(ts), np.log(means), 1)[0]
    return float(slope), ts, means


def integrability_spec(alpha: float, mu: float = 1.0) -> ModelSpec:
    """n = 1 GAL model with shape alpha = h nu (h = 1), K = A = 1, sigma = sigma_eps = 1."""
    return ModelSpec(family="gal", nu=alpha, mu=mu, sigma=1.0, sigma_eps=1.0,
                     K=np.eye(1), A=np.eye(1))


def demo_centered_integrability(spec: ModelSpec, y, chain_length: int, seed: int = 0,
                                threshold: float = 0.02) -> IntegrabilityReport:
    """Running means of |h (KW + mu h) / V| and of |M - mu V| along one chain.

    The first functional drives the centered mu-score; the second is its
    non-centered counterpart. An absolute slope of log(running mean) against
    log t above ``threshold`` over the last two decades marks a running mean
    that has not settled.
    """
    if spec.n != 1:
        raise ParameterError("the demonstration runs at n = 1")
    cfg = GibbsConfig(T=chain_length, burn=0, n_chains=1, seed=seed, record_states=True)
    trace = run_chain(spec, Parameterization.NONCENTERED, cfg, y, np.ones(1), cfg.chain_rng(0))
    V, M = trace.V[:, 0], trace.latent[:, 0]
    h = spec.h[0]
    centered = np.abs(h * M / V)
    noncentered = np.abs(M - spec.mu * V)
    s_c, ts, rm_c = running_mean_slope(centered)
    s_n, _, rm_n = running_mean_slope(noncentered)
    alpha = float(spec.nu * h) if spec.family == "gal" else float(spec.gig.p)
    return IntegrabilityReport(alpha, ts, rm_c, rm_n, s_c, s_n, threshold)
