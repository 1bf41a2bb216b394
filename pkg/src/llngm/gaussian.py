"""Gaussian full conditionals of the latent field in precision form.

Both conditionals are stored as (Qbar, mbar, sigma^2) with mean Qbar^{-1} mbar
and covariance sigma^2 Qbar^{-1}:

* non-centered, M | V, Y:  Qbar = rho B^T B + D_V^{-1},
  mbar = rho B^T (Y - X beta + mu B h) + mu 1
* centered, W | V, Y:      Qbar = K^T D_V^{-1} K + rho A^T A,
  mbar = K^T D_V^{-1} mu (V - h) + rho A^T (Y - X beta)

For long chains, :func:`latent_structure` precomputes everything that does not
depend on V. When B^T B splits into a banded matrix plus a low-rank term of one
sign (AR(1)-type K with A = I or A a projector), each draw costs O(n) instead of
a dense O(n^3) factorization. The split is verified against the dense B^T B
before it is used.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
from numba import njit

from .bessel_gig import V_FLOOR
from .errors import DomainError, FactorizationError
from .model import ModelSpec

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class PrecisionGaussian:
    Qbar: np.ndarray
    mbar: np.ndarray
    sigma2: float

    @cached_property
    def chol(self) -> np.ndarray:
        try:
            return np.linalg.cholesky(self.Qbar)
        except np.linalg.LinAlgError as exc:
            raise FactorizationError("Qbar is not positive definite") from exc

    @cached_property
    def mean(self) -> np.ndarray:
        return sla.cho_solve((self.chol, True), self.mbar)

    def covariance(self) -> np.ndarray:
        n = self.mbar.shape[0]
        return self.sigma2 * sla.cho_solve((self.chol, True), np.eye(n))

    def cov_diag(self) -> np.ndarray:
        Linv = sla.solve_triangular(self.chol, np.eye(self.mbar.shape[0]), lower=True)
        return self.sigma2 * np.sum(Linv**2, axis=0)


def _check_v(V):
    V = np.asarray(V, dtype=float)
    if np.any(~(V > 0)):
        raise DomainError("mixing variables must be positive")
    return V


def clamp_v(V):
    """Raise entries below V_FLOOR to V_FLOOR, warning when that happens."""
    V = np.asarray(V, dtype=float)
    low = V < V_FLOOR
    if np.any(low):
        log.warning("clamped %d mixing variable(s) to %g", int(low.sum()), V_FLOOR)
        V = np.where(low, V_FLOOR, V)
    return V


def noncentered_mbar(spec: ModelSpec, y) -> np.ndarray:
    resid = np.asarray(y, dtype=float) - spec.offset + spec.mu * (spec.B @ spec.h)
    return spec.rho * (spec.B.T @ resid) + spec.mu * np.ones(spec.n)


def conditional_M(spec: ModelSpec, V, y) -> PrecisionGaussian:
    """M | V, Y in the non-centered parameterization."""
    V = _check_v(V)
    Qbar = spec.rho * spec.BtB + np.diag(1.0 / V)
    return PrecisionGaussian(Qbar, noncentered_mbar(spec, y), spec.sigma**2)


def conditional_W(spec: ModelSpec, V, y) -> PrecisionGaussian:
    """W | V, Y in the centered parameterization."""
    V = _check_v(V)
    K, A = spec.K, spec.A
    KtDinv = K.T / V
    Qbar = KtDinv @ K + spec.rho * (A.T @ A)
    Qbar = 0.5 * (Qbar + Qbar.T)
    mbar = KtDinv @ (spec.mu * (V - spec.h)) + spec.rho * (A.T @ (np.asarray(y, dtype=float) - spec.offset))
    return PrecisionGaussian(Qbar, mbar, spec.sigma**2)


def sample_gaussian(g: PrecisionGaussian, rng: np.random.Generator) -> np.ndarray:
    """mean + sigma L^{-T} xi with L the lower Cholesky factor of Qbar."""
    xi = rng.standard_normal(g.mbar.shape[0])
    x = sla.solve_triangular(g.chol, xi, lower=True, trans="T")
    return g.mean + math.sqrt(g.sigma2) * x


# ---------------------------------------------------------------------------
# Structured sampler used inside the chain kernel.

DENSE, BANDED, KBANDED = 0, 1, 2


@dataclass(frozen=True, eq=False)
class LatentStructure:
    """V-independent pieces of M | V, Y for repeated draws.

    All modes write ``rho B^T B = base + Z diag(lam) Z^T`` with every ``lam`` of
    one sign (``lam`` may be empty).

    * DENSE: ``dense`` holds ``rho B^T B`` and ``lam`` is empty.
    * BANDED: ``base = rho K^{-T} K^{-1}`` is banded; ``band[i, d]`` stores entry
      (i, i - d).
    * KBANDED: K itself is banded (``kband[i, w + d]`` is entry (i, i + d)) and
      ``band`` stores ``K K^T / rho``. Solves with ``D^{-1} + base`` use
      ``(D^{-1} + base)^{-1} = D - D S^{-1} D`` with ``S = D + K K^T / rho``.
    """

    mode: int
    dense: np.ndarray
    band: np.ndarray
    kband: np.ndarray
    Z: np.ndarray
    lam: np.ndarray
    mbar: np.ndarray
    sigma: float
    rho: float

    @property
    def n(self) -> int:
        return self.mbar.shape[0]

    @property
    def n_noise(self) -> int:
        """Standard normals consumed per latent draw, excluding the low-rank part."""
        return 2 * self.n if self.mode == KBANDED else self.n

    def draw(self, V, rng: np.random.Generator) -> np.ndarray:
        xi = rng.standard_normal(self.n_noise)
        eta = rng.standard_normal(self.lam.shape[0])
        out = np.empty(self.n)
        ok = draw_latent(self.mode, self.dense, self.band, self.kband, self.Z, self.lam, self.mbar,
                         self.sigma, self.rho, np.asarray(V, dtype=float), xi, eta, out)
        if not ok:
            raise FactorizationError("conditional precision is not positive definite")
        return out


def _bandwidth(M, rtol):
    lag = np.abs(np.subtract.outer(np.arange(M.shape[0]), np.arange(M.shape[1])))
    significant = np.abs(M) > rtol * max(np.abs(M).max(), 1e-300)
    return int(lag[significant].max()) if significant.any() else 0


def _lower_band(M, width):
    n = M.shape[0]
    band = np.zeros((n, width + 1))
    for d in range(width + 1):
        band[d:, d] = np.diagonal(M, -d)
    return band


def _lowrank_part(spec: ModelSpec, max_rank: int):
    """(Z, s) with B^T B - K^{-T} K^{-1} = Z diag(s) Z^T and s of one sign, or None."""
    n = spec.n
    evals, evecs = np.linalg.eigh(spec.A.T @ spec.A - np.eye(n))
    keep = np.abs(evals) > 1e-10 * max(1.0, np.abs(evals).max())
    if keep.sum() > max_rank:
        return None
    s, vecs = evals[keep], evecs[:, keep]
    if s.size and not (np.all(s > 0) or np.all(s < 0)):
        return None
    return spec.solve_K(vecs, trans=True), s


def _split_structure(spec: ModelSpec, max_bandwidth: int, max_rank: int, rtol: float):
    lowrank = _lowrank_part(spec, max_rank)
    if lowrank is None:
        return None
    Z, s = lowrank
    n = spec.n
    scale = max(np.abs(spec.BtB).max(), 1.0)
    Kinv = spec.solve_K(np.eye(n))
    T = Kinv.T @ Kinv
    T = 0.5 * (T + T.T)
    width = _bandwidth(T, rtol)
    if width <= max_bandwidth:
        Tband = np.where(np.abs(np.subtract.outer(np.arange(n), np.arange(n))) <= width, T, 0.0)
        if np.abs(Tband + (Z * s) @ Z.T - spec.BtB).max() <= 1e3 * rtol * scale:
            return BANDED, _lower_band(Tband, width), np.zeros((n, 1)), Z, s
    K = np.asarray(spec.K)
    kw = _bandwidth(K, 0.0)
    if kw > max_bandwidth:
        return None
    if np.abs(T + (Z * s) @ Z.T - spec.BtB).max() > 1e3 * rtol * scale:
        return None
    KKt = K @ K.T
    kband = np.zeros((n, 2 * kw + 1))
    for d in range(-kw, kw + 1):
        rows = np.arange(max(0, -d), min(n, n - d))
        kband[rows, kw + d] = K[rows, rows + d]
    return KBANDED, _lower_band(KKt, 2 * kw), kband, Z, s


def latent_structure(spec: ModelSpec, y, allow_banded: bool = True, max_bandwidth: int = 8,
                     max_rank: int = 4, rtol: float = 1e-12) -> LatentStructure:
    """Precompute the non-centered conditional for repeated draws.

    The banded modes are used only when their decomposition reproduces
    ``B^T B``; otherwise the dense mode is returned.
    """
    mbar = noncentered_mbar(spec, y)
    rho = spec.rho
    split = _split_structure(spec, max_bandwidth, max_rank, rtol) if allow_banded else None
    if split is None:
        return LatentStructure(DENSE, rho * np.asarray(spec.BtB), np.zeros((spec.n, 1)),
                               np.zeros((spec.n, 1)), np.zeros((spec.n, 0)), np.zeros(0),
                               mbar, spec.sigma, rho)
    mode, band, kband, Z, s = split
    band = rho * band if mode == BANDED else band / rho
    return LatentStructure(mode, np.zeros((0, 0)), band, kband, Z, rho * s, mbar, spec.sigma, rho)


@njit(cache=True)
def _band_cholesky(band, diag, L):
    """Lower band Cholesky of band + diag(diag) in the row-wise band layout."""
    n, w1 = band.shape
    w = w1 - 1
    for i in range(n):
        for d in range(min(i, w), -1, -1):
            j = i - d
            s = band[i, d]
            if d == 0:
                s += diag[i]
            for k in range(max(i - w, 0), j):
                s -= L[i, i - k] * L[j, j - k]
            if d == 0:
                if not s > 0.0:
                    return False
                L[i, 0] = math.sqrt(s)
            else:
                L[i, d] = s / L[j, 0]
    return True


@njit(cache=True)
def _band_forward(L, b, out):
    n, w1 = L.shape
    w = w1 - 1
    for i in range(n):
        s = b[i]
        for k in range(max(i - w, 0), i):
            s -= L[i, i - k] * out[k]
        out[i] = s / L[i, 0]


@njit(cache=True)
def _band_backward(L, b, out):
    n, w1 = L.shape
    w = w1 - 1
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, min(n, i + w + 1)):
            s -= L[k, k - i] * out[k]
        out[i] = s / L[i, 0]


@njit(cache=True)
def _dense_forward(L, b, out):
    n = L.shape[0]
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * out[k]
        out[i] = s / L[i, i]


@njit(cache=True)
def _dense_backward(L, b, out):
    n = L.shape[0]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, n):
            s -= L[k, i] * out[k]
        out[i] = s / L[i, i]


@njit(cache=True)
def _base_solve(mode, L, V, rhs, tmp, out):
    """out = P^{-1} rhs for the base precision P = D^{-1} + base."""
    n = rhs.shape[0]
    if mode == 1:
        _band_forward(L, rhs, tmp)
        _band_backward(L, tmp, out)
        return
    # mode 2: P^{-1} = D - D S^{-1} D
    dr = np.empty(n)
    for i in range(n):
        dr[i] = V[i] * rhs[i]
    _band_forward(L, dr, tmp)
    _band_backward(L, tmp, out)
    for i in range(n):
        out[i] = dr[i] - V[i] * out[i]


@njit(cache=True)
def draw_latent(mode, dense, band, kband, Z, lam, mbar, sigma, rho, V, xi, eta, out):
    """One draw of M | V, Y from standard normals ``xi`` and ``eta``.

    ``xi`` has length n (DENSE, BANDED) or 2n (KBANDED); ``eta`` has one entry
    per low-rank term. Returns False when a factorization fails.
    """
    n = mbar.shape[0]
    tmp = np.empty(n)
    noise = np.empty(n)
    mean = np.empty(n)
    if mode == 0:
        Q = dense.copy()
        for i in range(n):
            Q[i, i] += 1.0 / V[i]
        for i in range(n):
            if not Q[i, i] > 0.0:
                return False
        L = np.linalg.cholesky(Q)
        _dense_forward(L, mbar, tmp)
        _dense_backward(L, tmp, mean)
        _dense_backward(L, xi, noise)
        for i in range(n):
            out[i] = mean[i] + sigma * noise[i]
        return True
    L = np.zeros(band.shape)
    if mode == 1:
        if not _band_cholesky(band, 1.0 / V, L):
            return False
        _band_backward(L, xi, noise)
    else:
        if not _band_cholesky(band, V, L):
            return False
        # Matheron: x0 ~ N(0, D), e ~ N(0, I / rho) observed through K^{-1}
        kw = (kband.shape[1] - 1) // 2
        r0 = np.empty(n)
        x0 = np.empty(n)
        s_e = 1.0 / math.sqrt(rho)
        for i in range(n):
            x0[i] = math.sqrt(V[i]) * xi[i]
        for i in range(n):
            s = x0[i]
            for d in range(-kw, kw + 1):
                j = i + d
                if 0 <= j < n:
                    s += kband[i, kw + d] * s_e * xi[n + j]
            r0[i] = s
        _band_forward(L, r0, tmp)
        _band_backward(L, tmp, noise)
        for i in range(n):
            noise[i] = x0[i] - V[i] * noise[i]
    _base_solve(mode, L, V, mbar, tmp, mean)
    r = lam.shape[0]
    if r == 0:
        for i in range(n):
            out[i] = mean[i] + sigma * noise[i]
        return True
    U = np.empty((n, r))
    col = np.empty(n)
    for j in range(r):
        _base_solve(mode, L, V, Z[:, j].copy(), tmp, col)
        U[:, j] = col
    C = Z.T @ U
    for j in range(r):
        C[j, j] += 1.0 / lam[j]
    Cinv = np.linalg.inv(C)
    if lam[0] < 0.0:
        # Qbar^{-1} = P^{-1} + U (-C^{-1}) U^T with -C^{-1} positive definite
        mean = mean - U @ (Cinv @ (Z.T @ mean))
        Lh = np.linalg.cholesky(-0.5 * (Cinv + Cinv.T))
        extra = U @ (Lh @ eta)
        for i in range(n):
            out[i] = mean[i] + sigma * (noise[i] + extra[i])
    else:
        # condition a draw from N(P^{-1} mbar, sigma^2 P^{-1}) on Z^T x + e = 0
        x0 = mean + sigma * noise
        e = sigma * eta / np.sqrt(lam)
        corr = U @ (Cinv @ (Z.T @ x0 + e))
        for i in range(n):
            out[i] = x0[i] - corr[i]
    return True
