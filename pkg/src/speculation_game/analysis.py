"""Hurst exponent and stylized-fact diagnostics for price paths.

All functions are pure and accept either a :class:`PriceSeries` or a plain
array of prices.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .series import PriceSeries


class AnalysisError(ValueError):
    """Raised when a statistic is undefined for the given input."""


@dataclass(frozen=True)
class HurstFit:
    """Least-squares fit of log sigma(tau) on log tau; ``hurst`` is the slope."""

    taus: np.ndarray
    sigmas: np.ndarray
    hurst: float
    intercept: float
    r_squared: float

    def predict(self, taus: Sequence[float]) -> np.ndarray:
        return np.exp(self.intercept) * np.asarray(taus, dtype=float) ** self.hurst

    def summary(self) -> dict[str, float | int]:
        return {
            "hurst": self.hurst,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "n_points": len(self.taus),
        }


@dataclass(frozen=True)
class AcfResult:
    lags: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class TailStats:
    bin_centers: np.ndarray
    densities: np.ndarray
    bin_width: float
    excess_kurtosis: float


def _prices(series: PriceSeries | Sequence[float] | np.ndarray) -> np.ndarray:
    p = series.prices if isinstance(series, PriceSeries) else np.asarray(series, dtype=float)
    if p.ndim != 1:
        raise AnalysisError("price series must be one-dimensional")
    if len(p) < 2:
        raise AnalysisError(f"series too short: {len(p)} point(s), need at least 2")
    if not np.isfinite(p).all():
        raise AnalysisError("price series has missing or non-finite values")
    return p


def sigma_tau(series, tau: int) -> float:
    """Standard deviation of the tau-step price change over all start times.

    Windows overlap (stride 1), and the variance is the population one,
    mean of squares minus square of the mean.
    """
    p = _prices(series)
    tau = int(tau)
    if tau < 1:
        raise AnalysisError(f"tau must be >= 1, got {tau}")
    if tau >= len(p):
        raise AnalysisError(f"tau={tau} must be smaller than the series length {len(p)}")
    d = p[tau:] - p[:-tau]
    # centre first: same quantity as <d^2> - <d>^2 without the cancellation
    c = d - d.mean()
    return float(np.sqrt(np.mean(c * c)))


def sigma_profile(series, taus: Sequence[int]) -> np.ndarray:
    return np.array([sigma_tau(series, t) for t in taus])


def default_tau_grid(length: int, max_power: int = 12, min_samples: int = 20) -> np.ndarray:
    """Dyadic lags 1, 2, 4, ... 2**max_power, keeping tau <= length / min_samples."""
    taus = 2 ** np.arange(max_power + 1)
    return taus[taus <= length / min_samples]


def fit_power_law(taus: Sequence[int], sigmas: Sequence[float]) -> HurstFit:
    """OLS of log sigma on log tau; points with sigma <= 0 are dropped."""
    taus = np.asarray(taus, dtype=float)
    sigmas = np.asarray(sigmas, dtype=float)
    if taus.shape != sigmas.shape:
        raise AnalysisError("taus and sigmas differ in length")
    if np.any(np.diff(taus) <= 0):
        raise AnalysisError("taus must be strictly ascending")
    usable = sigmas > 0
    if usable.sum() < 3:
        raise AnalysisError(f"need at least 3 usable (sigma > 0) points, got {int(usable.sum())}")
    x = np.log(taus[usable])
    y = np.log(sigmas[usable])
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    sxy = np.sum((x - xm) * (y - ym))
    syy = np.sum((y - ym) ** 2)
    slope = sxy / sxx
    intercept = ym - slope * xm
    if syy == 0:
        r2 = 1.0
    else:
        resid = y - (intercept + slope * x)
        r2 = float(max(0.0, 1.0 - np.sum(resid**2) / syy))
    return HurstFit(
        taus=taus[usable].astype(np.int64),
        sigmas=sigmas[usable],
        hurst=float(slope),
        intercept=float(intercept),
        r_squared=r2,
    )


def fit_hurst(series, taus: Sequence[int] | None = None) -> HurstFit:
    p = _prices(series)
    if taus is None:
        taus = default_tau_grid(len(p))
    return fit_power_law(taus, sigma_profile(p, taus))


def average_sigma_across_trials(tables: Sequence[tuple[Sequence[int], Sequence[float]]]) -> tuple[np.ndarray, np.ndarray]:
    """Average per-trial sigma(tau) tables that share one tau grid.

    Each table is a ``(taus, sigmas)`` pair; the mean is taken per tau before
    any fitting.
    """
    if not tables:
        raise AnalysisError("no trials to average")
    taus0 = np.asarray(tables[0][0])
    stacked = []
    for taus, sigmas in tables:
        taus = np.asarray(taus)
        if taus.shape != taus0.shape or np.any(taus != taus0):
            raise AnalysisError("trials do not share the same tau grid")
        sigmas = np.asarray(sigmas, dtype=float)
        if sigmas.shape != taus0.shape:
            raise AnalysisError("sigma table length does not match its tau grid")
        stacked.append(sigmas)
    return taus0.copy(), np.mean(stacked, axis=0)


def returns(series, horizon: int = 1) -> np.ndarray:
    """Non-overlapping arithmetic price changes p(t + horizon) - p(t)."""
    p = _prices(series)
    horizon = int(horizon)
    if horizon < 1:
        raise AnalysisError(f"horizon must be >= 1, got {horizon}")
    if horizon >= len(p):
        raise AnalysisError(f"horizon={horizon} must be smaller than the series length {len(p)}")
    sampled = p[::horizon]
    return np.diff(sampled)


def log_returns(series, horizon: int = 1) -> np.ndarray:
    p = _prices(series)
    if np.any(p <= 0):
        raise AnalysisError("log returns need strictly positive prices")
    return returns(np.log(p), horizon)


def acf(values: Sequence[float], max_lag: int, include_zero: bool = False) -> AcfResult:
    """Sample autocorrelation normalized by the global mean and variance."""
    x = np.asarray(values, dtype=float)
    max_lag = int(max_lag)
    if max_lag < 1:
        raise AnalysisError(f"max_lag must be >= 1, got {max_lag}")
    if len(x) <= max_lag + 1:
        raise AnalysisError(f"need more than {max_lag + 1} values, got {len(x)}")
    c = x - x.mean()
    denom = np.dot(c, c)
    if denom == 0:
        raise AnalysisError("autocorrelation undefined for a constant sequence")
    start = 0 if include_zero else 1
    lags = np.arange(start, max_lag + 1)
    vals = np.array([1.0 if k == 0 else np.dot(c[:-k], c[k:]) / denom for k in lags])
    return AcfResult(lags=lags, values=vals)


def excess_kurtosis(values: Sequence[float]) -> float:
    """m4 / m2**2 - 3 with central (biased) sample moments."""
    x = np.asarray(values, dtype=float)
    if len(x) < 4:
        raise AnalysisError(f"need at least 4 values, got {len(x)}")
    c = x - x.mean()
    m2 = np.mean(c * c)
    if m2 == 0:
        raise AnalysisError("kurtosis undefined for zero variance")
    m4 = np.mean(c**4)
    return float(m4 / m2**2 - 3.0)


def aggregational_gaussianity_profile(series, horizons: Sequence[int]) -> list[tuple[int, float]]:
    return [(int(h), excess_kurtosis(returns(series, h))) for h in horizons]


def return_histogram(values: Sequence[float], n_bins: int = 101, width_sd: float = 6.0) -> TailStats:
    """Density histogram over +-``width_sd`` sample standard deviations.

    Values outside the range are dropped before normalizing, so the density
    integrates to 1 over the bins shown.
    """
    x = np.asarray(values, dtype=float)
    if len(x) < 4:
        raise AnalysisError(f"need at least 4 values, got {len(x)}")
    mean, sd = x.mean(), x.std()
    if sd == 0:
        raise AnalysisError("histogram undefined for zero variance")
    edges = np.linspace(mean - width_sd * sd, mean + width_sd * sd, n_bins + 1)
    counts, edges = np.histogram(x, bins=edges)
    width = float(edges[1] - edges[0])
    densities = counts / (counts.sum() * width)
    return TailStats(
        bin_centers=0.5 * (edges[:-1] + edges[1:]),
        densities=densities,
        bin_width=width,
        excess_kurtosis=excess_kurtosis(x),
    )


def white_noise_band(n: int) -> float:
    """Three-sigma band for the sample ACF of white noise of length n."""
    return 3.0 / np.sqrt(n)
