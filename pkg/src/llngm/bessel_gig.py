"""Modified Bessel functions of the second kind and the GIG distribution family.

The GIG(p, a, b) density on (0, inf) is

    f(x) = (a/b)^(p/2) / (2 K_p(sqrt(ab))) * x^(p-1) * exp(-(a x + b / x) / 2)

with the two boundary branches a = 0 (inverse gamma, p < 0) and b = 0
(gamma, p > 0) carried explicitly by :class:`GigParams`.

Bessel values come from Temme's series for x < 2 and Steed's continued
fraction for x >= 2, followed by forward recurrence in the order. Everything
is computed in the log domain so orders and arguments far from unity stay
finite.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit, vectorize
from scipy import integrate, special

from .errors import DomainError, MomentDivergenceError, ParameterError

BESSEL_RTOL = 1e-12
QUAD_TOL = 1e-8
V_FLOOR = 1e-300

_EPS = 1e-16
_MAXIT = 100_000
_BIG = 1e280
_LOG_BIG = 280.0 * math.log(10.0)

# Taylor coefficients c_k of 1/Gamma(z) = sum_{k>=1} c_k z^k.
_RGAMMA = np.array([
    1.0000000000000000, 0.5772156649015329, -0.6558780715202538,
    -0.0420026350340952, 0.1665386113822915, -0.0421977345555443,
    -0.0096219715278770, 0.0072189432466630, -0.0011651675918591,
    -0.0002152416741149, 0.0001280502823882, -0.0000201348547807,
    -0.0000012504934821, 0.0000011330272320, -0.0000002056338417,
    0.0000000061160950, 0.0000000050020075, -0.0000000011812746,
    0.0000000001043427, 0.0000000000077823, -0.0000000000036968,
    0.0000000000005100, -0.0000000000000206, -0.0000000000000054,
    0.0000000000000014, 0.0000000000000001,
])


@njit(cache=True)
def _temme_gamma_terms(mu):
    """Return gam1, gam2, 1/Gamma(1+mu), 1/Gamma(1-mu) for |mu| <= 1/2."""
    mu2 = mu * mu
    gam1 = 0.0
    gam2 = 0.0
    pw = 1.0
    for j in range(13):
        gam2 += _RGAMMA[2 * j] * pw
        gam1 -= _RGAMMA[2 * j + 1] * pw
        pw *= mu2
    return gam1, gam2, gam2 - mu * gam1, gam2 + mu * gam1


@njit(cache=True)
def _log_bessel_k_scalar(nu, x):
    if not (x > 0.0) or not math.isfinite(nu):
        return math.nan
    if math.isinf(x):
        return -math.inf
    nu = abs(nu)
    nl = int(nu + 0.5)
    xmu = nu - nl
    xmu2 = xmu * xmu
    xi = 1.0 / x
    xi2 = 2.0 * xi
    if x < 2.0:
        x2 = 0.5 * x
        pimu = math.pi * xmu
        fact = 1.0 if abs(pimu) < _EPS else pimu / math.sin(pimu)
        d = -math.log(x2)
        e = xmu * d
        fact2 = 1.0 if abs(e) < _EPS else math.sinh(e) / e
        gam1, gam2, gampl, gammi = _temme_gamma_terms(xmu)
        ff = fact * (gam1 * math.cosh(e) + gam2 * fact2 * d)
        total = ff
        e = math.exp(e)
        p = 0.5 * e / gampl
        q = 0.5 / (e * gammi)
        c = 1.0
        d = x2 * x2
        total1 = p
        for i in range(1, _MAXIT):
            ff = (i * ff + p + q) / (i * i - xmu2)
            c *= d / i
            p /= i - xmu
            q /= i + xmu
            term = c * ff
            total += term
            total1 += c * (p - i * ff)
            if abs(term) < abs(total) * _EPS:
                break
        k_mu = total
        k_mu1 = total1 * xi2
        log_scale = 0.0
    else:
        b = 2.0 * (1.0 + x)
        d = 1.0 / b
        h = d
        delh = d
        q1 = 0.0
        q2 = 1.0
        a1 = 0.25 - xmu2
        q = a1
        c = a1
        a = -a1
        s = 1.0 + q * delh
        for i in range(2, _MAXIT):
            a -= 2.0 * (i - 1)
            c = -a * c / i
            qnew = (q1 - b * q2) / a
            q1 = q2
            q2 = qnew
            q += c * qnew
            b += 2.0
            d = 1.0 / (b + a * d)
            delh = (b * d - 1.0) * delh
            h += delh
            dels = q * delh
            s += dels
            if abs(dels / s) < _EPS:
                break
        h = a1 * h
        k_mu = math.sqrt(math.pi / (2.0 * x)) / s
        k_mu1 = k_mu * (xmu + x + 0.5 - h) * xi
        log_scale = -x
    for i in range(1, nl + 1):
        nxt = (xmu + i) * xi2 * k_mu1 + k_mu
        k_mu = k_mu1
        k_mu1 = nxt
        if k_mu1 > _BIG:
            k_mu /= _BIG
            k_mu1 /= _BIG
            log_scale += _LOG_BIG
    return math.log(k_mu) + log_scale


@vectorize(["float64(float64, float64)"], cache=True)
def _log_bessel_k_ufunc(nu, x):
    return _log_bessel_k_scalar(nu, x)


def _check_bessel_args(nu, x):
    nu = np.asarray(nu, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("bessel_k needs x > 0")
    if np.any(~np.isfinite(nu)):
        raise DomainError("bessel_k needs a finite order")
    return nu, x


def _unwrap(value):
    return float(value) if np.ndim(value) == 0 else value


def log_bessel_k_scalar(nu: float, x: float) -> float:
    """log K_nu(x) for Python floats without argument checks, for use in inner loops."""
    return _log_bessel_k_scalar(nu, x)


def log_bessel_k(nu, x):
    """log K_nu(x), elementwise over broadcast arrays."""
    nu, x = _check_bessel_args(nu, x)
    return _unwrap(_log_bessel_k_ufunc(nu, x))


def bessel_k(nu, x):
    """K_nu(x) in the linear domain.

    Raises OverflowError when the value does not fit in a double; use
    :func:`log_bessel_k` in that case.
    """
    logk = np.asarray(log_bessel_k(nu, x))
    if np.any(logk > 709.78):
        raise OverflowError("K_nu(x) overflows; use log_bessel_k")
    return _unwrap(np.exp(logk))


def bessel_k_scaled(nu, x):
    """exp(x) * K_nu(x)."""
    nu, x = _check_bessel_args(nu, x)
    return _unwrap(np.exp(_log_bessel_k_ufunc(nu, x) + x))


def bessel_k_ratio(nu, delta, x):
    """K_{nu+delta}(x) / K_nu(x)."""
    nu, x = _check_bessel_args(nu, x)
    return _unwrap(np.exp(_log_bessel_k_ufunc(nu + delta, x) - _log_bessel_k_ufunc(nu, x)))


# Gamma-function helpers used by the gamma-mixing (GAL) score and the drift
# constants. scipy's implementations are accurate to a few ulps.
log_gamma = special.gammaln
digamma = special.digamma


class GigBranch(str, enum.Enum):
    INTERIOR = "interior"
    INVERSE_GAMMA = "inverse_gamma"
    GAMMA = "gamma"


@dataclass(frozen=True)
class GigParams:
    """Parameters (p, a, b) of a GIG law with an explicit branch tag."""

    p: float
    a: float
    b: float
    branch: GigBranch = field(init=False, compare=False)

    def __post_init__(self):
        p, a, b = float(self.p), float(self.a), float(self.b)
        if not (math.isfinite(p) and math.isfinite(a) and math.isfinite(b)):
            raise ParameterError(f"GIG parameters must be finite, got {(p, a, b)}")
        if a > 0 and b > 0:
            branch = GigBranch.INTERIOR
        elif a == 0 and b > 0 and p < 0:
            branch = GigBranch.INVERSE_GAMMA
        elif a > 0 and b == 0 and p > 0:
            branch = GigBranch.GAMMA
        else:
            raise ParameterError(f"(p, a, b) = {(p, a, b)} is not a valid GIG parameter")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "branch", branch)

    def scaled(self, c: float) -> GigParams:
        """Law of c * V when V follows this law."""
        if not c > 0:
            raise ParameterError("scale must be positive")
        return GigParams(self.p, self.a / c, self.b * c)

    def as_tuple(self):
        return self.p, self.a, self.b


def gig_log_density(params: GigParams, x):
    """Normalized log density, elementwise in x."""
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError("GIG density is supported on x > 0")
    p, a, b = params.as_tuple()
    logx = np.log(x)
    if params.branch is GigBranch.INTERIOR:
        omega = math.sqrt(a * b)
        lognorm = 0.5 * p * math.log(a / b) - math.log(2.0) - log_bessel_k(p, omega)
        out = lognorm + (p - 1.0) * logx - 0.5 * (a * x + b / x)
    elif params.branch is GigBranch.GAMMA:
        rate = 0.5 * a
        out = p * math.log(rate) - log_gamma(p) + (p - 1.0) * logx - rate * x
    else:
        shape, scale = -p, 0.5 * b
        out = shape * math.log(scale) - log_gamma(shape) - (shape + 1.0) * logx - scale / x
    return _unwrap(out)


def gig_log_density_arrays(p, a, b, x):
    """Broadcast log density over arrays of parameters; invalid entries give nan."""
    p, a, b, x = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (p, a, b, x)))
    out = np.full(x.shape, np.nan)
    logx = np.log(np.where(x > 0, x, np.nan))
    interior = (a > 0) & (b > 0)
    gamma = (a > 0) & (b == 0) & (p > 0)
    inv_gamma = (a == 0) & (b > 0) & (p < 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        if interior.any():
            pi, ai, bi, lx = p[interior], a[interior], b[interior], logx[interior]
            xi = x[interior]
            lognorm = 0.5 * pi * np.log(ai / bi) - math.log(2.0) - log_bessel_k(pi, np.sqrt(ai * bi))
            out[interior] = lognorm + (pi - 1.0) * lx - 0.5 * (ai * xi + bi / xi)
        if gamma.any():
            pg, rate = p[gamma], 0.5 * a[gamma]
            out[gamma] = pg * np.log(rate) - log_gamma(pg) + (pg - 1.0) * logx[gamma] - rate * x[gamma]
        if inv_gamma.any():
            shape, scale = -p[inv_gamma], 0.5 * b[inv_gamma]
            out[inv_gamma] = (shape * np.log(scale) - log_gamma(shape) - (shape + 1.0) * logx[inv_gamma]
                              - scale / x[inv_gamma])
    return out


def gig_moment(params: GigParams, r: float) -> float:
    """E[V^r] for V ~ GIG(p, a, b)."""
    p, a, b = params.as_tuple()
    if params.branch is GigBranch.INTERIOR:
        omega = math.sqrt(a * b)
        return math.exp(0.5 * r * math.log(b / a) + log_bessel_k(p + r, omega) - log_bessel_k(p, omega))
    if params.branch is GigBranch.GAMMA:
        if not p + r > 0:
            raise MomentDivergenceError(f"E[V^{r}] is infinite for Gamma shape {p}")
        return math.exp(log_gamma(p + r) - log_gamma(p) - r * math.log(0.5 * a))
    shape = -p
    if not r < shape:
        raise MomentDivergenceError(f"E[V^{r}] is infinite for inverse-gamma shape {shape}")
    return math.exp(r * math.log(0.5 * b) + log_gamma(shape - r) - log_gamma(shape))


def _log_center(params: GigParams) -> float:
    """Log of a point in the bulk of the law: the mode, or the mean on the gamma branch."""
    p, a, b = params.as_tuple()
    if params.branch is GigBranch.INTERIOR:
        return math.log(((p - 1.0) + math.sqrt((p - 1.0) ** 2 + a * b)) / a)
    if params.branch is GigBranch.GAMMA:
        return math.log(p / (0.5 * a))
    return math.log(0.5 * b / (1.0 - p))


def gig_total_mass(params: GigParams) -> float:
    """Numerical integral of the density over (0, inf), computed on the log scale."""
    shift = _log_center(params)

    def integrand(t):
        u = t + shift
        if not -700.0 < u < 700.0:
            return 0.0
        return math.exp(gig_log_density(params, math.exp(u)) + u)

    total, _ = integrate.quad(integrand, -np.inf, np.inf, epsabs=0.0, epsrel=1e-11, limit=500)
    return total


# ---------------------------------------------------------------------------
# Sampling. The interior branch uses the three-regime scheme of Hoermann and
# Leydold: ratio-of-uniforms with mode shift for large order or argument,
# without shift in the middle range, and a concave-piece envelope for small
# order and small omega. Draws are first made from the standardized law
# GIG(lam, omega, omega) with lam >= 0 and then rescaled / inverted.


@njit(cache=True)
def _gig_mode(lam, omega):
    if lam >= 1.0:
        return (math.sqrt((lam - 1.0) ** 2 + omega * omega) + (lam - 1.0)) / omega
    return omega / (math.sqrt((1.0 - lam) ** 2 + omega * omega) + (1.0 - lam))


@njit(cache=True)
def _rou_shift(rng, lam, omega):
    t = 0.5 * (lam - 1.0)
    s = 0.25 * omega
    xm = _gig_mode(lam, omega)
    nc = t * math.log(xm) - s * (xm + 1.0 / xm)
    # extremes of (x - xm) sqrt(f(x)) are roots of a cubic
    a = -(2.0 * (lam + 1.0) / omega + xm)
    b = 2.0 * (lam - 1.0) * xm / omega - 1.0
    c = xm
    p = b - a * a / 3.0
    q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c
    arg = -q / (2.0 * math.sqrt(-(p * p * p) / 27.0))
    arg = min(1.0, max(-1.0, arg))
    fi = math.acos(arg)
    fak = 2.0 * math.sqrt(-p / 3.0)
    y1 = fak * math.cos(fi / 3.0) - a / 3.0
    y2 = fak * math.cos(fi / 3.0 + 4.0 / 3.0 * math.pi) - a / 3.0
    uplus = (y1 - xm) * math.exp(t * math.log(y1) - s * (y1 + 1.0 / y1) - nc)
    uminus = (y2 - xm) * math.exp(t * math.log(y2) - s * (y2 + 1.0 / y2) - nc)
    while True:
        u = uminus + rng.random() * (uplus - uminus)
        v = rng.random()
        if v <= 0.0:
            continue
        x = u / v + xm
        if x <= 0.0:
            continue
        if math.log(v) <= t * math.log(x) - s * (x + 1.0 / x) - nc:
            return x


@njit(cache=True)
def _rou_noshift(rng, lam, omega):
    t = 0.5 * (lam - 1.0)
    s = 0.25 * omega
    xm = _gig_mode(lam, omega)
    nc = t * math.log(xm) - s * (xm + 1.0 / xm)
    ym = ((lam + 1.0) + math.sqrt((lam + 1.0) ** 2 + omega * omega)) / omega
    um = math.exp(0.5 * (lam + 1.0) * math.log(ym) - s * (ym + 1.0 / ym) - nc)
    while True:
        u = um * rng.random()
        v = rng.random()
        if v <= 0.0 or u <= 0.0:
            continue
        x = u / v
        if math.log(v) <= t * math.log(x) - s * (x + 1.0 / x) - nc:
            return x


@njit(cache=True)
def _concave_split(rng, lam, omega):
    xm = _gig_mode(lam, omega)
    x0 = omega / (1.0 - lam)
    k0 = math.exp((lam - 1.0) * math.log(xm) - 0.5 * omega * (xm + 1.0 / xm))
    area0 = k0 * x0
    if x0 >= 2.0 / omega:
        k1 = 0.0
        area1 = 0.0
        k2 = x0 ** (lam - 1.0)
        area2 = k2 * 2.0 * math.exp(-omega * x0 / 2.0) / omega
    else:
        k1 = math.exp(-omega)
        if lam == 0.0:
            area1 = k1 * (math.log(2.0) - 2.0 * math.log(omega))
        else:
            area1 = k1 / lam * ((2.0 / omega) ** lam - x0 ** lam)
        k2 = (2.0 / omega) ** (lam - 1.0)
        area2 = k2 * 2.0 * math.exp(-1.0) / omega
    total = area0 + area1 + area2
    lower = max(x0, 2.0 / omega)
    while True:
        v = total * rng.random()
        if v <= area0:
            x = x0 * v / area0
            hx = k0
        else:
            v -= area0
            if v <= area1:
                if lam == 0.0:
                    x = omega * math.exp(math.exp(omega) * v)
                    hx = k1 / x
                else:
                    x = (x0 ** lam + lam / k1 * v) ** (1.0 / lam)
                    hx = k1 * x ** (lam - 1.0)
            else:
                v -= area1
                x = -2.0 / omega * math.log(math.exp(-omega / 2.0 * lower) - omega / (2.0 * k2) * v)
                hx = k2 * math.exp(-omega / 2.0 * x)
        if x <= 0.0:
            continue
        u = rng.random() * hx
        if u > 0.0 and math.log(u) <= (lam - 1.0) * math.log(x) - 0.5 * omega * (x + 1.0 / x):
            return x


@njit(cache=True)
def _gig_standard(rng, lam, omega):
    if lam > 2.0 or omega > 3.0:
        return _rou_shift(rng, lam, omega)
    if lam >= 1.0 - 2.25 * omega * omega or omega > 0.2:
        return _rou_noshift(rng, lam, omega)
    return _concave_split(rng, lam, omega)


@njit(cache=True)
def gig_draw(rng, lam, psi, chi):
    """One draw from GIG(lam, psi, chi); NaN for parameters outside the family."""
    if chi == 0.0:
        if lam <= 0.0 or psi <= 0.0:
            return math.nan
        return 2.0 * rng.standard_gamma(lam) / psi
    if psi == 0.0:
        if lam >= 0.0 or chi <= 0.0:
            return math.nan
        return 0.5 * chi / rng.standard_gamma(-lam)
    omega = math.sqrt(psi * chi)
    alpha = math.sqrt(chi / psi)
    if lam < 0.0:
        return alpha / _gig_standard(rng, -lam, omega)
    return alpha * _gig_standard(rng, lam, omega)


@njit(cache=True)
def _gig_fill(rng, lam, psi, chi, out):
    for i in range(out.shape[0]):
        out[i] = gig_draw(rng, lam[i], psi[i], chi[i])


def _valid_mask(p, a, b):
    return ((a > 0) & (b > 0)) | ((a == 0) & (b > 0) & (p < 0)) | ((a > 0) & (b == 0) & (p > 0))


def sample_gig_arrays(rng: np.random.Generator, p, a, b) -> np.ndarray:
    """Independent draws V_i ~ GIG(p_i, a_i, b_i) over broadcast parameter arrays."""
    p, a, b = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (p, a, b)))
    if not np.all(_valid_mask(p, a, b)):
        raise ParameterError("some (p, a, b) entries are outside the GIG parameter space")
    out = np.empty(p.size)
    _gig_fill(rng, p.ravel().copy(), a.ravel().copy(), b.ravel().copy(), out)
    return out.reshape(p.shape)


def gig_sample(params: GigParams, rng: np.random.Generator, size=None):
    """Draw from GIG(params); a float when size is None, else an array."""
    shape = () if size is None else size
    p = np.full(shape, params.p)
    out = sample_gig_arrays(rng, p, params.a, params.b)
    return float(out) if size is None else out


# ---------------------------------------------------------------------------
# Self-check: sampler moments against the Bessel-ratio formula.

MOMENT_ORDERS = (-0.5, 0.5, 1.0, 2.0)


def random_gig_params(rng: np.random.Generator, count: int) -> list[GigParams]:
    """``count`` parameter sets cycling through the interior, gamma and inverse-gamma branches."""
    out = []
    for i in range(count):
        p = float(rng.uniform(-3.0, 3.0))
        if i % 3 == 0:
            out.append(GigParams(p, float(np.exp(rng.uniform(-2, 2))), float(np.exp(rng.uniform(-2, 2)))))
        elif i % 3 == 1:
            out.append(GigParams(abs(p) + 0.2, float(np.exp(rng.uniform(-2, 2))), 0.0))
        else:
            out.append(GigParams(-abs(p) - 0.2, 0.0, float(np.exp(rng.uniform(-2, 2)))))
    return out


def has_finite_variance(params: GigParams, r: float) -> bool:
    """True when E[V^(2r)] is finite, so a standard error for the r-th moment exists."""
    if params.branch is GigBranch.GAMMA:
        return params.p + 2 * r > 0
    if params.branch is GigBranch.INVERSE_GAMMA:
        return 2 * r < -params.p
    return True


def moment_check(params: GigParams, rng: np.random.Generator, n_draws: int,
                 orders=MOMENT_ORDERS, z_max: float = 4.0) -> list[dict]:
    """Compare sample and exact moments; orders without a finite variance are skipped."""
    draws = gig_sample(params, rng, size=n_draws)
    rows = []
    for r in orders:
        if not has_finite_variance(params, r):
            continue
        powered = draws**r
        se = float(powered.std(ddof=1) / math.sqrt(n_draws))
        exact = gig_moment(params, r)
        sample = float(powered.mean())
        z = abs(sample - exact) / se
        rows.append({"r": r, "exact": exact, "sample": sample, "se": se, "z": z, "ok": bool(z <= z_max)})
    return rows


def property_suite(seed: int = 0, n_sets: int = 20, n_draws: int = 10**6, mass_tol: float = 1e-6) -> dict:
    """Moment and normalization checks over random parameter sets."""
    rng = np.random.default_rng(seed)
    sets = []
    for params in random_gig_params(rng, n_sets):
        mass = gig_total_mass(params)
        rows = moment_check(params, rng, n_draws)
        sets.append({"p": params.p, "a": params.a, "b": params.b, "branch": params.branch.value,
                     "mass": mass, "mass_ok": bool(abs(mass - 1.0) <= mass_tol), "moments": rows})
    ok = all(s["mass_ok"] and all(m["ok"] for m in s["moments"]) for s in sets)
    return {"ok": ok, "n_draws": n_draws, "sets": sets}
