"""Two-block Gibbs sampler over (latent field, mixing variables).

Each sweep draws the latent field from its Gaussian conditional and then every
mixing variable independently from

    V_i | M ~ GIG(p_i - 1/2, a_i + mu^2 / sigma^2, b_i + M_i^2 / sigma^2).

``gibbs_step`` is a plain numpy implementation of one sweep in either
parameterization. ``run_chain`` drives long non-centered chains through a
compiled kernel that consumes the random stream in the same order.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .bessel_gig import V_FLOOR, GigParams, gig_draw, gig_sample, sample_gig_arrays
from .errors import FactorizationError, ParameterError
from .gaussian import (LatentStructure, clamp_v, conditional_M, conditional_W, draw_latent,
                       latent_structure, sample_gaussian)
from .model import ModelSpec, Parameterization, to_centered, to_noncentered

log = logging.getLogger(__name__)

SUMMARY_NAMES = ("S_plus", "S_minus", "S_log", "T_null")


@dataclass
class ChainState:
    V: np.ndarray
    latent: np.ndarray | None = None
    iter: int = 0


@dataclass(frozen=True)
class GibbsConfig:
    T: int
    burn: int = 0
    thin: int = 1
    n_chains: int = 4
    seed: int = 0
    q: float = 0.25
    record_states: bool = False

    def __post_init__(self):
        if not (0 <= self.burn < self.T):
            raise ParameterError("need 0 <= burn < T")
        if self.thin < 1 or self.n_chains < 1:
            raise ParameterError("thin and n_chains must be at least 1")

    def chain_rng(self, index: int) -> np.random.Generator:
        """Independent stream for chain ``index``, fixed by (seed, index)."""
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=(index,)))

    def retained(self) -> np.ndarray:
        """0-based sweep indices kept after burn-in and thinning."""
        return np.arange(self.burn, self.T, self.thin)


@dataclass
class ChainTrace:
    summaries: np.ndarray
    iters: np.ndarray
    wall_time: float
    final_state: ChainState
    clamps: int = 0
    V: np.ndarray | None = None
    latent: np.ndarray | None = None
    names: tuple = field(default=SUMMARY_NAMES)

    def track(self, name: str) -> np.ndarray:
        return self.summaries[:, self.names.index(name)]


def overdispersed_inits(n: int, rng: np.random.Generator) -> list[np.ndarray]:
    """V = 1, V = 0.1, V = 10 and one GIG(1, 1, 1) draw per coordinate."""
    return [np.ones(n), np.full(n, 0.1), np.full(n, 10.0), gig_sample(GigParams(1.0, 1.0, 1.0), rng, size=n)]


def null_direction_weights(spec: ModelSpec) -> np.ndarray:
    """w with T_null = <w, M - mu h>, i.e. K^{-1} u0 for u0 = K u / |K u|, u = 1 / sqrt(n)."""
    u = np.full(spec.n, 1.0 / math.sqrt(spec.n))
    return u / np.linalg.norm(spec.K @ u)


def posterior_mixing_arrays(spec: ModelSpec):
    """(lam_i, psi_i, b_i) so that V_i | M ~ GIG(lam_i, psi_i, b_i + M_i^2 / sigma^2)."""
    p, a, b = spec.prior_arrays()
    return p - 0.5, a + spec.mu**2 / spec.sigma**2, b


def update_mixing(spec: ModelSpec, M, rng: np.random.Generator) -> np.ndarray:
    lam, psi, b = posterior_mixing_arrays(spec)
    V = sample_gig_arrays(rng, lam, psi, b + np.asarray(M) ** 2 / spec.sigma**2)
    return clamp_v(V)


def summarize_state(V, M, spec: ModelSpec, q: float = 0.25, weights=None) -> np.ndarray:
    w = null_direction_weights(spec) if weights is None else weights
    return np.array([V.mean(), np.mean(V ** (-q)), np.mean(np.log(V)), w @ (M - spec.mu * spec.h)])


def gibbs_step(spec: ModelSpec, param, state: ChainState, y, rng: np.random.Generator) -> ChainState:
    """One full sweep: latent field given V, then V given the latent field."""
    param = Parameterization(param)
    if param is Parameterization.NONCENTERED:
        latent = sample_gaussian(conditional_M(spec, state.V, y), rng)
        M = latent
    else:
        try:
            latent = sample_gaussian(conditional_W(spec, state.V, y), rng)
        except FactorizationError:
            # tiny V_i make K^T D^-1 K numerically indefinite; W = K^-1 (M - mu h) has the same law
            log.info("W-precision factorization failed at iteration %d; drawing through M", state.iter)
            latent = to_centered(spec, sample_gaussian(conditional_M(spec, state.V, y), rng))
        M = to_noncentered(spec, latent)
    V = update_mixing(spec, M, rng)
    return ChainState(V, latent, state.iter + 1)


@njit(cache=True)
def _chain_kernel(rng, n_sweeps, V0, mode, dense, band, kband, Z, lam, mbar, sigma, rho,
                  p_post, a_post, b_prior, weights, mu, h, q, record):
    n = V0.shape[0]
    r = lam.shape[0]
    V = V0.copy()
    M = np.empty(n)
    xi = np.empty(2 * n if mode == 2 else n)
    eta = np.empty(r)
    summ = np.empty((n_sweeps, 4))
    n_rec = n_sweeps if record else 0
    Vs = np.empty((n_rec, n))
    Ms = np.empty((n_rec, n))
    inv_s2 = 1.0 / (sigma * sigma)
    clamps = 0
    for t in range(n_sweeps):
        for i in range(xi.shape[0]):
            xi[i] = rng.standard_normal()
        for j in range(r):
            eta[j] = rng.standard_normal()
        if not draw_latent(mode, dense, band, kband, Z, lam, mbar, sigma, rho, V, xi, eta, M):
            return summ, Vs, Ms, V, M, clamps, t
        s_plus = 0.0
        s_minus = 0.0
        s_log = 0.0
        t_null = 0.0
        for i in range(n):
            v = gig_draw(rng, p_post[i], a_post[i], b_prior[i] + M[i] * M[i] * inv_s2)
            if v < V_FLOOR:
                v = V_FLOOR
                clamps += 1
            V[i] = v
            s_plus += v
            s_minus += v ** (-q)
            s_log += math.log(v)
            t_null += weights[i] * (M[i] - mu * h[i])
        summ[t, 0] = s_plus / n
        summ[t, 1] = s_minus / n
        summ[t, 2] = s_log / n
        summ[t, 3] = t_null
        if record:
            Vs[t] = V
            Ms[t] = M
    return summ, Vs, Ms, V, M, clamps, n_sweeps


def run_chain(spec: ModelSpec, param, config: GibbsConfig, y, init, rng: np.random.Generator,
              structure: LatentStructure | None = None) -> ChainTrace:
    """Run one chain for ``config.T`` sweeps from V = ``init``.

    Summaries (S_plus, S_minus, S_log, T_null) are recorded after every sweep;
    burn-in and thinning are applied afterwards. Wall time covers the sampling
    loop only.
    """
    param = Parameterization(param)
    V0 = np.asarray(init, dtype=float).copy()
    if V0.shape != (spec.n,) or np.any(~(V0 > 0)):
        raise ParameterError("init must be a positive n-vector")
    weights = null_direction_weights(spec)
    keep = config.retained()
    if param is Parameterization.NONCENTERED:
        st = structure if structure is not None else latent_structure(spec, y)
        lam, psi, b = posterior_mixing_arrays(spec)
        start = time.perf_counter()
        summ, Vs, Ms, V, M, clamps, done = _chain_kernel(
            rng, config.T, V0, st.mode, st.dense, st.band, st.kband, st.Z, st.lam, st.mbar, st.sigma, st.rho,
            lam, psi, b, weights, spec.mu, spec.h, config.q, config.record_states)
        wall = time.perf_counter() - start
        if done < config.T:
            raise FactorizationError(f"conditional precision lost definiteness at sweep {done}")
        if clamps:
            log.warning("clamped %d mixing variable(s) to %g", clamps, V_FLOOR)
        final = ChainState(V, M, config.T)
    else:
        state = ChainState(V0)
        summ = np.empty((config.T, 4))
        Vs = np.empty((config.T if config.record_states else 0, spec.n))
        Ms = np.empty_like(Vs)
        start = time.perf_counter()
        for t in range(config.T):
            state = gibbs_step(spec, param, state, y, rng)
            M = to_noncentered(spec, state.latent)
            summ[t] = summarize_state(state.V, M, spec, config.q, weights)
            if config.record_states:
                Vs[t] = state.V
                Ms[t] = state.latent
        wall = time.perf_counter() - start
        clamps = 0
        final = state
    trace = ChainTrace(summ[keep], keep + 1, wall, final, clamps)
    if config.record_states:
        trace.V, trace.latent = Vs[keep], Ms[keep]
    return trace


def run_chains(spec: ModelSpec, param, config: GibbsConfig, y, inits=None) -> list[ChainTrace]:
    """``config.n_chains`` chains, by default from the four overdispersed starts."""
    if inits is None:
        base = overdispersed_inits(spec.n, np.random.default_rng(np.random.SeedSequence(config.seed, spawn_key=(10**6,))))
        inits = [base[c % len(base)] for c in range(config.n_chains)]
    if len(inits) != config.n_chains:
        raise ParameterError("need one init per chain")
    param = Parameterization(param)
    structure = latent_structure(spec, y) if param is Parameterization.NONCENTERED else None
    return [run_chain(spec, param, config, y, inits[c], config.chain_rng(c), structure)
            for c in range(config.n_chains)]
