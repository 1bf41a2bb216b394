"""Model specification for the linear latent non-Gaussian model.

Centered form::

    Y | W   ~ N(X beta + A W, sigma_eps^2 I)
    K W | V ~ N(mu (V - h), sigma^2 diag(V))
    V_i     ~ GIG(p, a, b)

Non-centered form uses M = K W + mu h, so that M | V ~ N(mu V, sigma^2 diag(V))
and Y | M ~ N(X beta + B (M - mu h), sigma_eps^2 I) with B = A K^{-1}.
"""

from __future__ import annotations

import dataclasses
import enum
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from .bessel_gig import GigParams
from .errors import FactorizationError, ParameterError


class Parameterization(str, enum.Enum):
    CENTERED = "centered"
    NONCENTERED = "noncentered"


def build_ar1_operator(n: int, phi: float) -> np.ndarray:
    """AR(1) correlation matrix with entries phi^|i-j|."""
    if not -1.0 < phi < 1.0:
        raise ParameterError(f"AR(1) coefficient must lie in (-1, 1), got {phi}")
    lag = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    return np.power(float(phi), lag)


def ar1_operator_derivative(n: int, phi: float) -> np.ndarray:
    """Entrywise derivative of the AR(1) correlation matrix in phi."""
    lag = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    out = np.zeros((n, n))
    off = lag > 0
    out[off] = lag[off] * np.power(float(phi), lag[off] - 1)
    return out


def build_ar1_precision(n: int, phi: float) -> np.ndarray:
    """Inverse of the AR(1) correlation matrix, tridiagonal in closed form."""
    if not -1.0 < phi < 1.0:
        raise ParameterError(f"AR(1) coefficient must lie in (-1, 1), got {phi}")
    if n == 1:
        return np.ones((1, 1))
    diag = np.full(n, 1.0 + phi**2)
    diag[[0, -1]] = 1.0
    out = np.diag(diag) - phi * (np.eye(n, k=1) + np.eye(n, k=-1))
    return out / (1.0 - phi**2)


def ar1_precision_derivative(n: int, phi: float) -> np.ndarray:
    """Derivative in phi of :func:`build_ar1_precision`."""
    if n == 1:
        return np.zeros((1, 1))
    c = 1.0 - phi**2
    diag = np.full(n, 1.0 + phi**2)
    diag[[0, -1]] = 1.0
    off = np.eye(n, k=1) + np.eye(n, k=-1)
    T = np.diag(diag) - phi * off
    dT = np.diag(np.where(diag == 1.0, 0.0, 2.0 * phi)) - off
    return 2.0 * phi / c**2 * T + dT / c


def build_rank_deficient_A(n: int) -> np.ndarray:
    """Projector I - u u^T with u = 1/sqrt(n); its null space is span{1}."""
    if n < 2:
        raise ParameterError("need n >= 2")
    u = np.full(n, 1.0 / np.sqrt(n))
    return np.eye(n) - np.outer(u, u)


AR1_FORMS = ("correlation", "precision")


@dataclass(frozen=True)
class AR1Kernel:
    """K(zeta) with zeta = (phi,).

    ``form="correlation"`` gives K = [phi^|i-j|]; ``form="precision"`` gives its
    inverse, so that K^{-1} is the correlation matrix.
    """

    n: int
    phi: float
    form: str = "correlation"

    def __post_init__(self):
        if self.form not in AR1_FORMS:
            raise ParameterError(f"unknown AR(1) form {self.form!r}")

    def matrix(self) -> np.ndarray:
        if self.form == "precision":
            return build_ar1_precision(self.n, self.phi)
        return build_ar1_operator(self.n, self.phi)

    def derivatives(self) -> tuple[np.ndarray, ...]:
        if self.form == "precision":
            return (ar1_precision_derivative(self.n, self.phi),)
        return (ar1_operator_derivative(self.n, self.phi),)

    @property
    def params(self) -> np.ndarray:
        return np.array([self.phi])

    def with_params(self, zeta) -> AR1Kernel:
        (phi,) = np.asarray(zeta, dtype=float).ravel()
        return AR1Kernel(self.n, float(phi), self.form)


class _Factor:
    """Factorization of K used for every solve; K^{-1} is never formed."""

    def __init__(self, K):
        self.symmetric = bool(np.allclose(K, K.T, rtol=0, atol=1e-14 * np.abs(K).max()))
        self.chol = None
        if self.symmetric:
            try:
                self.chol = sla.cho_factor(K, lower=True)
            except np.linalg.LinAlgError:
                self.chol = None
        if self.chol is None:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)  # singularity is reported below
                lu, piv = sla.lu_factor(K, check_finite=True)
            if np.any(np.abs(np.diag(lu)) <= 1e-14 * np.abs(K).max()):
                raise FactorizationError("K is singular")
            self.lu = (lu, piv)

    def solve(self, rhs, trans=False):
        if self.chol is not None:
            return sla.cho_solve(self.chol, rhs)
        return sla.lu_solve(self.lu, rhs, trans=1 if trans else 0)

    def logabsdet(self):
        if self.chol is not None:
            return 2.0 * np.sum(np.log(np.diag(self.chol[0])))
        return float(np.sum(np.log(np.abs(np.diag(self.lu[0])))))


MIXING_FAMILIES = ("gig", "nig", "gal")


@dataclass(frozen=True, eq=False, kw_only=True)
class ModelSpec:
    """Full parameterization of the model.

    ``family`` selects how the mixing law depends on ``nu`` and ``h``:
    ``"gig"`` uses ``gig`` for every coordinate, ``"nig"`` uses
    V_i ~ GIG(-1/2, nu, nu h_i^2) and ``"gal"`` uses V_i ~ Gamma(h_i nu, rate nu).
    For the two named families ``gig`` is filled in from ``nu`` (at h = 1).
    """

    gig: GigParams | None = None
    mu: float
    sigma: float
    sigma_eps: float
    K: np.ndarray | None = None
    A: np.ndarray
    X: np.ndarray | None = None
    beta: np.ndarray | None = None
    h: np.ndarray | None = None
    family: str = "gig"
    nu: float | None = None
    kernel: AR1Kernel | None = None

    def __post_init__(self):
        set_ = lambda name, value: object.__setattr__(self, name, value)
        if self.K is None:
            if self.kernel is None:
                raise ParameterError("either K or kernel is required")
            set_("K", self.kernel.matrix())
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        n = K.shape[0]
        if K.shape != (n, n):
            raise ParameterError(f"K must be square, got {K.shape}")
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if A.shape[1] != n:
            raise ParameterError(f"A must have {n} columns, got {A.shape}")
        m = A.shape[0]
        X = np.zeros((m, 0)) if self.X is None else np.asarray(self.X, dtype=float).reshape(m, -1)
        beta = np.zeros(X.shape[1]) if self.beta is None else np.asarray(self.beta, dtype=float).ravel()
        if beta.shape != (X.shape[1],):
            raise ParameterError("beta length must match the columns of X")
        h = np.ones(n) if self.h is None else np.asarray(self.h, dtype=float).ravel()
        if h.shape != (n,) or np.any(h <= 0):
            raise ParameterError("h must be a positive n-vector")
        if not (self.sigma > 0 and self.sigma_eps > 0):
            raise ParameterError("sigma and sigma_eps must be positive")
        if self.family not in MIXING_FAMILIES:
            raise ParameterError(f"unknown mixing family {self.family!r}")
        if self.family == "gig":
            if self.gig is None:
                raise ParameterError("family 'gig' needs gig parameters")
        else:
            if self.nu is None or not self.nu > 0:
                raise ParameterError(f"family {self.family!r} needs nu > 0")
            nu = float(self.nu)
            set_("gig", GigParams(-0.5, nu, nu) if self.family == "nig" else GigParams(nu, 2.0 * nu, 0.0))
        for name, value in (("K", K), ("A", A), ("X", X), ("beta", beta), ("h", h)):
            value.setflags(write=False)
            set_(name, value)
        set_("mu", float(self.mu))
        set_("sigma", float(self.sigma))
        set_("sigma_eps", float(self.sigma_eps))
        _ = self._factor  # fail early on a singular K

    # -- dimensions and derived scalars --------------------------------------
    @property
    def n(self) -> int:
        return self.K.shape[0]

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def q(self) -> int:
        return self.X.shape[1]

    @property
    def rho(self) -> float:
        return self.sigma**2 / self.sigma_eps**2

    @property
    def a_tilde(self) -> float:
        return self.gig.a + self.mu**2 / self.sigma**2

    @property
    def p_tilde(self) -> float:
        return self.gig.p - 0.5

    @cached_property
    def offset(self) -> np.ndarray:
        """X beta."""
        return self.X @ self.beta

    # -- operators -------------------------------------------------------------
    @cached_property
    def _factor(self) -> _Factor:
        return _Factor(np.asarray(self.K))

    def solve_K(self, rhs, trans=False):
        """K^{-1} rhs (or K^{-T} rhs)."""
        return self._factor.solve(np.asarray(rhs, dtype=float), trans=trans)

    @cached_property
    def log_abs_det_K(self) -> float:
        return self._factor.logabsdet()

    @cached_property
    def B(self) -> np.ndarray:
        """B = A K^{-1}, obtained by solving K^T B^T = A^T."""
        out = self.solve_K(self.A.T, trans=True).T
        out.setflags(write=False)
        return out

    @cached_property
    def BtB(self) -> np.ndarray:
        out = self.B.T @ self.B
        out = 0.5 * (out + out.T)
        out.setflags(write=False)
        return out

    @property
    def dK(self) -> tuple[np.ndarray, ...]:
        return () if self.kernel is None else self.kernel.derivatives()

    @property
    def zeta(self) -> np.ndarray:
        return np.zeros(0) if self.kernel is None else self.kernel.params

    def prior_arrays(self):
        """Per-coordinate GIG parameters (p_i, a_i, b_i) of the mixing prior."""
        n = self.n
        if self.family == "gig":
            g = self.gig
            return np.full(n, g.p), np.full(n, g.a), np.full(n, g.b)
        nu = float(self.nu)
        if self.family == "nig":
            return np.full(n, -0.5), np.full(n, nu), nu * self.h**2
        return self.h * nu, np.full(n, 2.0 * nu), np.zeros(n)

    def replace(self, **changes) -> ModelSpec:
        """Copy with some fields changed; ``zeta=`` rebuilds K from the kernel."""
        if "zeta" in changes:
            zeta = changes.pop("zeta")
            if self.kernel is None:
                if np.size(zeta):
                    raise ParameterError("this model has no kernel parameters")
            else:
                changes["kernel"] = self.kernel.with_params(zeta)
                changes["K"] = None
        if "kernel" in changes and "K" not in changes:
            changes["K"] = None
        if self.family != "gig" and "gig" not in changes:
            changes["gig"] = None
        return dataclasses.replace(self, **changes)


def to_noncentered(spec: ModelSpec, W) -> np.ndarray:
    """M = K W + mu h."""
    return spec.K @ np.asarray(W, dtype=float) + spec.mu * spec.h


def to_centered(spec: ModelSpec, M) -> np.ndarray:
    """W = K^{-1} (M - mu h)."""
    return spec.solve_K(np.asarray(M, dtype=float) - spec.mu * spec.h)


def marginal_y_given_v(spec: ModelSpec, V, param=Parameterization.NONCENTERED):
    """Mean and covariance of Y | V with the latent layer integrated out."""
    V = np.asarray(V, dtype=float)
    s2, se2 = spec.sigma**2, spec.sigma_eps**2
    if Parameterization(param) is Parameterization.NONCENTERED:
        mean = spec.offset + spec.B @ (spec.mu * (V - spec.h))
        cov = s2 * (spec.B * V) @ spec.B.T + se2 * np.eye(spec.m)
    else:
        w_mean = spec.solve_K(spec.mu * (V - spec.h))
        chol_w = spec.solve_K(np.diag(np.sqrt(V)))  # K^{-1} D^{1/2}
        AW = spec.A @ chol_w
        mean = spec.offset + spec.A @ w_mean
        cov = s2 * AW @ AW.T + se2 * np.eye(spec.m)
    return mean, cov


def simulate(spec: ModelSpec, rng: np.random.Generator):
    """Draw (y, V, M) from the model."""
    from .bessel_gig import sample_gig_arrays

    p, a, b = spec.prior_arrays()
    V = sample_gig_arrays(rng, p, a, b)
    M = spec.mu * V + spec.sigma * np.sqrt(V) * rng.standard_normal(spec.n)
    y = spec.offset + spec.B @ (M - spec.mu * spec.h) + spec.sigma_eps * rng.standard_normal(spec.m)
    return y, V, M
