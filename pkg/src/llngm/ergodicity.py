"""Computable side of the ergodicity analysis.

* regime classification over the GIG parameter space and the drift mu
* the null-smallness constant (|mu| / sqrt(sigma^2 a + mu^2)) sqrt(z^T G^{-1} z)
  together with an independent projector check of z^T G^{-1} z = 1^T P 1,
  where P projects onto Null(B)
* the scan constant gamma_ns(mu) for a one-dimensional Null(B)
* drift exponents and contraction rates for the three drift cases
* the Rosenthal total-variation bound
* quadrature probes of the V-marginal kernel at n = 1
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy import integrate

from .bessel_gig import bessel_k_ratio, gig_log_density_arrays, log_bessel_k_scalar, log_gamma
from .errors import CaseMismatchError, DomainError, ParameterError
from .gaussian import noncentered_mbar
from .model import ModelSpec

RANK_RTOL = 1e-10
FLAG_BAND = (1e-12, 1e-8)


class Regime(str, enum.Enum):
    TC1 = "TC1"
    TC2 = "TC2"
    DM_III = "DM_III"
    DM_I = "DM_I"
    DM_II = "DM_II"
    OUTSIDE = "Outside"


YES, NO, UNKNOWN, CONDITIONAL = "Yes", "No", "Unknown", "ConditionalOnNullSmallness"

# regime -> (trace class, geometric ergodicity)
REGIME_TABLE = {
    Regime.TC1: (YES, YES),
    Regime.TC2: (YES, YES),
    Regime.DM_III: (UNKNOWN, CONDITIONAL),
    Regime.DM_I: (NO, YES),
    Regime.DM_II: (UNKNOWN, CONDITIONAL),
    Regime.OUTSIDE: (UNKNOWN, UNKNOWN),
}


@dataclass(frozen=True, eq=False)
class NullSpaceReport:
    r: int
    U_A: np.ndarray
    G: np.ndarray
    z: np.ndarray
    proj_norm: float
    ns_ratio: float
    satisfied: bool
    projector_mass: float
    rank_flagged: bool = False

    @property
    def identity_gap(self) -> float:
        """|z^T G^{-1} z - 1^T P_Null(B) 1|."""
        return abs(self.proj_norm**2 - self.projector_mass)

    def as_dict(self) -> dict:
        return {"r": self.r, "proj_norm": self.proj_norm, "ns_ratio": self.ns_ratio,
                "satisfied": self.satisfied, "projector_mass": self.projector_mass,
                "identity_gap": self.identity_gap, "rank_flagged": self.rank_flagged}


@dataclass(frozen=True, eq=False)
class RegimeReport:
    regime: Regime
    trace_class: str
    geo_ergodic: str
    ns: NullSpaceReport | None = None

    def as_dict(self) -> dict:
        out = {"regime": self.regime.value, "trace_class": self.trace_class, "geo_ergodic": self.geo_ergodic}
        if self.ns is not None:
            out["null_smallness"] = self.ns.as_dict()
        return out


def regime_of(p: float, a: float, b: float, mu: float) -> Regime:
    """Row of the ergodicity table containing (p, a, b, mu)."""
    if a > 0 and b > 0:
        return Regime.TC1
    if a > 0 and b == 0 and p > 0:
        return Regime.TC2 if p > 0.5 else Regime.DM_III
    if a == 0 and b > 0 and p < 0:
        return Regime.DM_I if mu == 0 else Regime.DM_II
    return Regime.OUTSIDE


def classify_regime(spec: ModelSpec) -> RegimeReport:
    """Regime, trace-class verdict and ergodicity verdict for ``spec``.

    The null-smallness report is attached only for the conditional rows.
    """
    g = spec.gig
    regime = regime_of(g.p, g.a, g.b, spec.mu)
    trace_class, geo = REGIME_TABLE[regime]
    ns = null_smallness(spec) if geo == CONDITIONAL else None
    return RegimeReport(regime, trace_class, geo, ns)


def null_basis(A, rtol: float = RANK_RTOL):
    """Orthonormal basis of Null(A) from the SVD and a flag for borderline singular values."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[1]
    _, s, Vt = np.linalg.svd(A, full_matrices=True)
    smax = s.max() if s.size else 0.0
    if smax == 0.0:
        return np.eye(n), False
    rank = int(np.sum(s > rtol * smax))
    lo, hi = FLAG_BAND
    flagged = bool(np.any((s >= lo * smax) & (s <= hi * smax)))
    return Vt[rank:].T.copy(), flagged


def null_projector_mass(B, rtol: float = RANK_RTOL) -> float:
    """1^T P_Null(B) 1 with P built from the right singular vectors of B."""
    U, _ = null_basis(B, rtol)
    if U.shape[1] == 0:
        return 0.0
    P = U @ U.T
    one = np.ones(P.shape[0])
    return float(one @ P @ one)


def null_smallness(spec: ModelSpec, rtol: float = RANK_RTOL) -> NullSpaceReport:
    """Null-smallness constant with the projector identity cross-check."""
    U_A, flagged = null_basis(spec.A, rtol)
    r = U_A.shape[1]
    mass = null_projector_mass(spec.B, rtol)
    if r == 0:
        return NullSpaceReport(0, U_A, np.zeros((0, 0)), np.zeros(0), 0.0, 0.0, True, mass, flagged)
    KU = spec.K @ U_A
    G = KU.T @ KU
    z = KU.T @ np.ones(spec.n)
    proj_norm = math.sqrt(max(float(z @ sla.cho_solve(sla.cho_factor(G), z)), 0.0))
    denom = math.sqrt(spec.sigma**2 * spec.gig.a + spec.mu**2)
    ratio = 0.0 if spec.mu == 0 else abs(spec.mu) / denom * proj_norm
    return NullSpaceReport(r, U_A, G, z, proj_norm, ratio, ratio < 1.0, mass, flagged)


def null_direction(spec: ModelSpec) -> np.ndarray:
    """Unit vector u0 spanning a one-dimensional Null(B)."""
    U_A, _ = null_basis(spec.A)
    if U_A.shape[1] != 1:
        raise ParameterError(f"the scan needs dim Null(B) = 1, got {U_A.shape[1]}")
    u0 = spec.K @ U_A[:, 0]
    return u0 / np.linalg.norm(u0)


def gamma_ns_scan(spec: ModelSpec, mu_grid, y) -> np.ndarray:
    """gamma_ns(mu) = |<u0, mbar(mu)>| / (sigma sqrt(a + mu^2 / sigma^2)) for each mu."""
    u0 = null_direction(spec)
    out = []
    for mu in np.asarray(mu_grid, dtype=float).ravel():
        s = spec.replace(mu=float(mu))
        num = abs(float(u0 @ noncentered_mbar(s, y)))
        a_tilde = s.a_tilde
        if a_tilde == 0:
            out.append(0.0 if num == 0 else math.inf)
        else:
            out.append(num / (s.sigma * math.sqrt(a_tilde)))
    return np.array(out)


# ---------------------------------------------------------------------------
# Drift constants.

def delta_of_p(p: float) -> float:
    """Negative-moment exponent: p on (0, 1/2], min(1/2, 2p - 1) above."""
    if not p > 0:
        raise DomainError(f"delta(p) needs p > 0, got {p}")
    return float(p) if p <= 0.5 else min(0.5, 2.0 * p - 1.0)


def kappa(delta: float) -> float:
    """kappa(delta) = 2^{-delta/2} Gamma((1 - delta)/2) / sqrt(pi)."""
    if not 0 < delta < 1:
        raise DomainError("kappa needs 0 < delta < 1")
    return math.exp(-0.5 * delta * math.log(2.0) + log_gamma(0.5 * (1.0 - delta)) - 0.5 * math.log(math.pi))


def default_eps_star(p: float) -> float:
    """Midpoint choice 0.5 * p^2 / (2 (1 - 2p)) below the admissible bound."""
    return 0.5 * p**2 / (2.0 * (1.0 - 2.0 * p))


def c1_of_p(p: float, eps_star: float | None = None) -> float:
    """Coefficient C1(p) of |M/sigma|^{-delta} in the negative-moment bound."""
    delta = delta_of_p(p)
    if p < 0.5:
        eps_star = default_eps_star(p) if eps_star is None else eps_star
        return (1.0 + eps_star) * math.exp(log_gamma(0.5 + 0.5 * delta - p) + 0.5 * delta * math.log(2.0)
                                           - log_gamma(0.5 - p))
    if p == 0.5:
        return 2.0**0.25 * math.sqrt(math.pi) / (2.0 * math.gamma(0.25))
    return 1.0 / (2.0 * kappa(delta))


def baseline_contraction(alpha: float, delta: float) -> float:
    """Gamma(alpha + 1/2 - delta) / Gamma(alpha + 1/2) * Gamma(delta + 1/2) / sqrt(pi)."""
    if not (alpha > 0 and 0 < delta < alpha):
        raise DomainError("need alpha > 0 and 0 < delta < alpha")
    return math.exp(log_gamma(alpha + 0.5 - delta) - log_gamma(alpha + 0.5)
                    + log_gamma(delta + 0.5) - 0.5 * math.log(math.pi))


def bessel_crossover(p: float, eps_star: float | None = None, x_max: float = 50.0) -> float:
    """Largest x below which the small-argument Bessel-ratio bound holds (p < 1/2).

    Checks K_{nu+delta/2}(x) / K_nu(x) <= (1 + eps*) Gamma(nu + delta/2) 2^{delta/2}
    / (Gamma(nu) x^{delta/2}) with nu = 1/2 - p on a log grid, then refines the
    first violation by bisection.
    """
    if not 0 < p < 0.5:
        raise DomainError("the crossover is defined for 0 < p < 1/2")
    delta = delta_of_p(p)
    eps_star = default_eps_star(p) if eps_star is None else eps_star
    nu = 0.5 - p
    const = (1.0 + eps_star) * math.exp(log_gamma(nu + 0.5 * delta) - log_gamma(nu) + 0.5 * delta * math.log(2.0))

    def holds(x):
        return bessel_k_ratio(nu, 0.5 * delta, x) <= const * x ** (-0.5 * delta)

    grid = np.geomspace(1e-10, x_max, 400)
    ok = np.array([holds(x) for x in grid])
    if ok.all():
        return x_max
    first = int(np.argmin(ok))
    if first == 0:
        return 0.0
    lo, hi = grid[first - 1], grid[first]
    for _ in range(60):
        mid = math.sqrt(lo * hi)
        lo, hi = (mid, hi) if holds(mid) else (lo, mid)
    return float(lo)


@dataclass(frozen=True)
class RosenthalIngredients:
    lam: float
    b_const: float
    d: float
    epsilon: float
    alpha_inv: float
    A_const: float


def rosenthal_ingredients(lam: float, b_const: float, d: float, epsilon: float = 1.0) -> RosenthalIngredients:
    """alpha^{-1} = (1 + 2b + lam d) / (1 + d) and A = 1 + 2 (lam d + b)."""
    if not 0 < lam < 1:
        raise ParameterError("lambda must lie in (0, 1)")
    if not b_const >= 0:
        raise ParameterError("b must be nonnegative")
    if not d > 2.0 * b_const / (1.0 - lam):
        raise ParameterError("need d > 2 b / (1 - lambda)")
    if not 0 < epsilon <= 1:
        raise ParameterError("epsilon must lie in (0, 1]")
    alpha_inv = (1.0 + 2.0 * b_const + lam * d) / (1.0 + d)
    return RosenthalIngredients(lam, b_const, d, epsilon, alpha_inv, 1.0 + 2.0 * (lam * d + b_const))


def rosenthal_bound(lam: float, b_const: float, d: float, epsilon: float, r: float, k: int,
                    init_expect: float) -> float:
    """Total-variation bound after k steps from a start with E[G(X0)] = init_expect."""
    ing = rosenthal_ingredients(lam, b_const, d, epsilon)
    if not 0 < r < 1:
        raise ParameterError("r must lie in (0, 1)")
    if k < 0:
        raise ParameterError("k must be nonnegative")
    if not init_expect >= 0:
        raise ParameterError("initial expectation must be nonnegative")
    rate = ing.alpha_inv ** (1.0 - r) * ing.A_const**r
    return (1.0 - epsilon) ** (r * k) + rate**k * (1.0 + b_const / (1.0 - lam) + init_expect)


@dataclass(frozen=True)
class DriftReport:
    """Contraction rates and offsets of one drift case.

    ``L`` is None when the offset involves constants that have no closed form;
    ``L_note`` says which. ``c_eta`` is a numerically probed supremum, not a
    certified bound.
    """

    case: str
    delta: float | None
    gamma_minus: float | None
    gamma_plus: float | None
    gamma: float
    L: float | None = None
    L_note: str = ""
    c_eta: float | None = None
    extras: dict = field(default_factory=dict)

    def rosenthal(self, d: float, epsilon: float) -> RosenthalIngredients:
        if self.L is None:
            raise ParameterError("the drift offset is not available in closed form")
        return rosenthal_ingredients(self.gamma, self.L, d, epsilon)

    def as_dict(self) -> dict:
        return {"case": self.case, "delta": self.delta, "gamma_minus": self.gamma_minus,
                "gamma_plus": self.gamma_plus, "gamma": self.gamma, "L": self.L, "L_note": self.L_note,
                "c_eta": self.c_eta, **self.extras}


def probe_c_eta(spec: ModelSpec, y, n_random: int = 200, seed: int = 0) -> float:
    """Largest |Qbar(V)^{-1} mbar| over a V design spanning 1e-6 .. 1e6 (non-rigorous)."""
    mbar = noncentered_mbar(spec, y)
    rng = np.random.default_rng(seed)
    designs = [np.full(spec.n, v) for v in np.geomspace(1e-6, 1e6, 25)]
    designs += [np.exp(rng.uniform(math.log(1e-6), math.log(1e6), spec.n)) for _ in range(n_random)]
    rB = spec.rho * np.asarray(spec.BtB)
    best = 0.0
    for V in designs:
        Q = rB + np.diag(1.0 / V)
        eta = sla.solve(Q, mbar, assume_a="pos")
        best = max(best, float(np.linalg.norm(eta)))
    return best


def _default_eps(ratio: float) -> float:
    return 0.5 * (1.0 - ratio)


def drift_constants(spec: ModelSpec, case: str, y=None, eps: float | None = None,
                    eps_star: float | None = None) -> DriftReport:
    """Drift constants for case "I" (a = mu = 0), "II" (a = 0, mu != 0) or "III" (b = 0).

    Raises CaseMismatchError when the case hypotheses, including null
    smallness for II and III, do not hold.
    """
    g = spec.gig
    p, a, b = g.p, g.a, g.b
    case = str(case).upper()
    if case == "I":
        if not (a == 0 and b > 0 and p < 0 and spec.mu == 0):
            raise CaseMismatchError("case I needs a = 0, b > 0, p < 0 and mu = 0")
        alpha = -p
        delta = min(alpha / 2.0, 0.5)
        c_delta = math.exp(log_gamma(alpha + 0.5 - delta) - log_gamma(alpha + 0.5))
        k_delta = math.exp(log_gamma(delta + 0.5) - 0.5 * math.log(math.pi))
        gamma = c_delta * k_delta
        n = spec.n
        phi_ig = (1.0 + n * c_delta * (b / 2.0) ** delta
                  + n * math.exp(log_gamma(alpha + 0.75) - log_gamma(alpha + 0.5)) * (b / 2.0) ** -0.25)
        extras = {"C_delta": c_delta, "K_delta": k_delta, "phi_IG": phi_ig}
        if y is None:
            return DriftReport("I", delta, None, None, gamma, None,
                               "offset needs C_eta; pass y to probe it", None, extras)
        c_eta = probe_c_eta(spec, y)
        psi = c_delta / (2.0 * spec.sigma**2) ** delta * n ** (1.0 - delta) * c_eta ** (2.0 * delta)
        extras["psi"] = psi
        return DriftReport("I", delta, None, None, gamma, phi_ig + psi,
                           "psi uses a numerically probed C_eta", c_eta, extras)
    if case == "II":
        if not (a == 0 and b > 0 and p < 0 and spec.mu != 0):
            raise CaseMismatchError("case II needs a = 0, b > 0, p < 0 and mu != 0")
        ns = null_smallness(spec)
        if not ns.satisfied:
            raise CaseMismatchError(f"null smallness fails: ratio {ns.ns_ratio:.6g} >= 1")
        e = _default_eps(ns.proj_norm) if eps is None else eps
        gamma_plus = ns.proj_norm + e
        if not gamma_plus < 1:
            raise CaseMismatchError("epsilon too large: gamma_plus >= 1")
        return DriftReport("II", None, None, gamma_plus, gamma_plus, None,
                           "offset involves constants without a closed form", None,
                           {"epsilon": e, "ns_ratio": ns.ns_ratio})
    if case == "III":
        if not (a > 0 and b == 0 and p > 0):
            raise CaseMismatchError("case III needs a > 0, b = 0 and p > 0")
        ns = null_smallness(spec)
        if not ns.satisfied:
            raise CaseMismatchError(f"null smallness fails: ratio {ns.ns_ratio:.6g} >= 1")
        delta = delta_of_p(p)
        c1 = c1_of_p(p, eps_star)
        gamma_minus = c1 * kappa(delta)
        e = _default_eps(ns.ns_ratio) if eps is None else eps
        gamma_plus = ns.ns_ratio + e
        if not gamma_plus < 1:
            raise CaseMismatchError("epsilon too large: gamma_plus >= 1")
        extras = {"C1": c1, "kappa": kappa(delta), "epsilon": e, "ns_ratio": ns.ns_ratio}
        if p < 0.5:
            es = default_eps_star(p) if eps_star is None else eps_star
            x_eps = bessel_crossover(p, es)
            extras["eps_star"] = es
            extras["bessel_crossover"] = x_eps
            if x_eps > 0:
                a_tilde = spec.a_tilde
                extras["C2"] = (a_tilde / x_eps) ** (delta / 2) * ((2 - 2 * p) ** (delta / 2) / x_eps ** (delta / 2) + 1)
        return DriftReport("III", delta, gamma_minus, gamma_plus, max(gamma_minus, gamma_plus), None,
                           "offset involves constants without a closed form", None, extras)
    raise ParameterError(f"unknown drift case {case!r}")


# ---------------------------------------------------------------------------
# Quadrature probes of the V-marginal kernel at n = 1.

_HERMITE = np.polynomial.hermite.hermgauss(80)


def _scalar_model(spec: ModelSpec, y):
    if spec.n != 1:
        raise ParameterError("kernel probes need n = 1")
    B = float(spec.B[0, 0]) if spec.m else 0.0
    BtB = float(spec.BtB[0, 0])
    mbar = float(noncentered_mbar(spec, np.asarray(y, dtype=float))[0])
    return B, BtB, mbar


def kernel_density(spec: ModelSpec, y, V, V_next) -> np.ndarray:
    """k(V, V') = integral of pi(V' | M) N(M; eta(V), s^2(V)) dM at n = 1.

    Gauss-Hermite is used when the mixing prior has b > 0. With b = 0 the
    integrand is not smooth at M = 0, so adaptive quadrature split there is
    used instead.
    """
    _, BtB, mbar = _scalar_model(spec, y)
    V, V_next = np.broadcast_arrays(np.asarray(V, dtype=float), np.asarray(V_next, dtype=float))
    Q = spec.rho * BtB + 1.0 / V
    mean = mbar / Q
    sd = spec.sigma / np.sqrt(Q)
    p, a, b = (float(v[0]) for v in spec.prior_arrays())
    lam, psi = p - 0.5, a + spec.mu**2 / spec.sigma**2
    if b > 0:
        x, w = _HERMITE
        M = mean[..., None] + math.sqrt(2.0) * sd[..., None] * x
        logf = gig_log_density_arrays(lam, psi, b + M**2 / spec.sigma**2, V_next[..., None])
        return np.sum(w * np.exp(logf), axis=-1) / math.sqrt(math.pi)

    inv_s2 = 1.0 / spec.sigma**2
    norm_const = 0.5 * lam * math.log(psi) - math.log(2.0)

    def one(m0, s0, v):
        log_v = math.log(v)

        def integrand(M):
            if M == 0.0:
                return 0.0
            chi = M * M * inv_s2
            logf = (norm_const - 0.5 * lam * math.log(chi) - log_bessel_k_scalar(lam, math.sqrt(psi * chi))
                    + (lam - 1.0) * log_v - 0.5 * (psi * v + chi / v))
            z = (M - m0) / s0
            return math.exp(logf - 0.5 * z * z)

        lo, hi = m0 - 12 * s0, m0 + 12 * s0
        pieces = [(lo, min(hi, 0.0)), (max(lo, 0.0), hi)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            total = sum(integrate.quad(integrand, u, w, epsabs=0, epsrel=1e-10, limit=200)[0]
                        for u, w in pieces if w > u)
        return total / (s0 * math.sqrt(2 * math.pi))

    out = np.array([one(m0, s0, v) for m0, s0, v in zip(mean.ravel(), sd.ravel(), V_next.ravel())])
    return out.reshape(V.shape)


def log_marginal_v(spec: ModelSpec, y, V) -> np.ndarray:
    """Unnormalized log pi(V | Y) at n = 1: Gaussian log p(y | V) plus the prior."""
    B, _, _ = _scalar_model(spec, y)
    V = np.asarray(V, dtype=float)
    y = np.asarray(y, dtype=float)
    resid = y - spec.offset
    mean = spec.mu * B * (V[..., None] - spec.h[0])
    var = spec.sigma**2 * B**2 * V[..., None] + spec.sigma_eps**2
    loglik = -0.5 * np.sum(np.log(2 * math.pi * var) + (resid - mean) ** 2 / var, axis=-1)
    p, a, b = spec.prior_arrays()
    return loglik + gig_log_density_arrays(p[0], a[0], b[0], V)


def trace_diagonal_integral(spec: ModelSpec, y, lo: float, hi: float) -> float:
    """Integral of k(V, V) over [lo, hi], computed in log V."""
    if not 0 < lo < hi:
        raise ParameterError("need 0 < lo < hi")

    def integrand(t):
        v = math.exp(t)
        return float(kernel_density(spec, y, v, v)) * v

    total, _ = integrate.quad(integrand, math.log(lo), math.log(hi), limit=400, epsrel=1e-10, epsabs=0.0)
    return total


def trace_diagonal_increments(spec: ModelSpec, y, radii) -> np.ndarray:
    """Integrals of k(V, V) over [1/R, R] and the increments between successive R.

    Returns an array with columns (R, integral, increment over the previous R).
    """
    radii = np.sort(np.asarray(radii, dtype=float))
    rows = []
    prev_total, prev_r = 0.0, None
    for R in radii:
        if prev_r is None:
            total = trace_diagonal_integral(spec, y, 1.0 / R, R)
        else:
            total = (prev_total + trace_diagonal_integral(spec, y, 1.0 / R, 1.0 / prev_r)
                     + trace_diagonal_integral(spec, y, prev_r, R))
        rows.append((R, total, total - prev_total if prev_r is not None else math.nan))
        prev_total, prev_r = total, R
    return np.array(rows)


def kernel_symmetry_defect(spec: ModelSpec, y, grid) -> float:
    """Max relative asymmetry of pi(V) k(V, V') on a grid; zero for a reversible kernel."""
    grid = np.asarray(grid, dtype=float)
    Vi, Vj = np.meshgrid(grid, grid, indexing="ij")
    logpi = log_marginal_v(spec, y, grid)
    S = np.exp(logpi - logpi.max())[:, None] * kernel_density(spec, y, Vi, Vj)
    scale = np.abs(S).max()
    return float(np.abs(S - S.T).max() / scale)
