"""Mixing diagnostics for scalar chain summaries.

IACT uses Geyer's initial positive sequence: autocorrelations are summed in
adjacent pairs until a pair sum turns non-positive, pair sums are forced to be
non-increasing, and the lag is capped at N/10.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSeriesError, ParameterError

MIN_LENGTH = 100
LAG_CAP_FRACTION = 0.1
DEFAULT_IACT_FLOOR = 1e-3


def autocorrelation(series, max_lag: int | None = None) -> np.ndarray:
    """Sample autocorrelations rho_0..rho_max_lag (biased autocovariance, FFT)."""
    x = np.asarray(series, dtype=float)
    n = x.size
    x = x - x.mean()
    size = 1 << int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(x, size)
    acov = np.fft.irfft(f * np.conj(f), size)[:n] / n
    if acov[0] <= 0:
        raise DegenerateSeriesError("series is constant")
    rho = acov / acov[0]
    return rho if max_lag is None else rho[: max_lag + 1]


def iact(series, floor: float = DEFAULT_IACT_FLOOR) -> float:
    """Integrated autocorrelation time 1 + 2 sum_k rho_k."""
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < MIN_LENGTH:
        raise ParameterError(f"need a 1-d series of length >= {MIN_LENGTH}")
    if not np.all(np.isfinite(x)):
        raise ParameterError("series has non-finite entries")
    if np.ptp(x) == 0:
        raise DegenerateSeriesError("series is constant")
    cap = max(2, int(LAG_CAP_FRACTION * x.size))
    rho = autocorrelation(x, cap + 1)
    n_pairs = (rho.size) // 2
    pairs = rho[: 2 * n_pairs].reshape(n_pairs, 2).sum(axis=1)
    total = 0.0
    prev = np.inf
    for g in pairs:
        if g <= 0:
            break
        g = min(g, prev)
        total += g
        prev = g
    return max(floor, 2.0 * total - 1.0)


def ess(series, floor: float = DEFAULT_IACT_FLOOR) -> float:
    x = np.asarray(series, dtype=float)
    return x.size / iact(x, floor)


def mcse(series, floor: float = DEFAULT_IACT_FLOOR) -> float:
    """Monte Carlo standard error of the series mean, sd * sqrt(IACT / N)."""
    x = np.asarray(series, dtype=float)
    return float(np.std(x, ddof=1) * np.sqrt(iact(x, floor) / x.size))


def split_rhat(chains) -> float:
    """Split-half potential scale reduction factor."""
    chains = [np.asarray(c, dtype=float) for c in chains]
    if len(chains) < 2:
        raise ParameterError("split R-hat needs at least two chains")
    lengths = {c.size for c in chains}
    if len(lengths) != 1:
        raise ParameterError("chains must have equal lengths")
    n = lengths.pop()
    if n < 4:
        raise ParameterError("chains must have length >= 4")
    half = n // 2
    halves = np.array([part for c in chains for part in (c[:half], c[n - half:])])
    means = halves.mean(axis=1)
    within = halves.var(axis=1, ddof=1).mean()
    between = half * means.var(ddof=1)
    if within == 0:
        return 1.0 if between == 0 else np.inf
    pooled = (half - 1) / half * within + between / half
    return float(np.sqrt(pooled / within))


@dataclass(frozen=True)
class DiagSummary:
    stat: str
    iact: float
    ess: float
    ess_per_sec: float
    split_rhat: float


def summarize_run(tracks: dict, wall_times, floor: float = DEFAULT_IACT_FLOOR) -> list[DiagSummary]:
    """One row per statistic.

    ``tracks`` maps a statistic name to a list of per-chain series. IACT is the
    mean of per-chain IACTs, ESS = N / IACT with N the per-chain length, and
    ESS/sec averages per-chain ESS over per-chain wall time.
    """
    wall_times = np.asarray(wall_times, dtype=float)
    rows = []
    for name, chains in tracks.items():
        chains = [np.asarray(c, dtype=float) for c in chains]
        if len(chains) != wall_times.size:
            raise ParameterError("need one wall time per chain")
        per_chain = np.array([iact(c, floor) for c in chains])
        n = chains[0].size
        mean_iact = float(per_chain.mean())
        rate = float(np.mean(n / per_chain / wall_times))
        rhat = split_rhat(chains) if len(chains) > 1 else float("nan")
        rows.append(DiagSummary(name, mean_iact, n / mean_iact, rate, rhat))
    return rows


def max_rhat(rows) -> float:
    return max(r.split_rhat for r in rows)
