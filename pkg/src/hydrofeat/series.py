"""Evenly spaced series container and correlation primitives.

The autocorrelation estimator uses a common mean and a divisor-n denominator,
so every lag shares the same normalisation and the sequence is bounded by 1
in absolute value.  Partial autocorrelations come from the Durbin-Levinson
recursion applied to that estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DegeneratePacfError,
    InvalidSeriesError,
    LagTooLargeError,
    TooShortError,
    ZeroVarianceError,
)

__all__ = [
    "TimeSeries",
    "CorrelationSpectrum",
    "default_max_lag",
    "zscore",
    "difference",
    "seasonal_difference",
    "sample_acf",
    "sample_pacf",
    "first_zero_crossing",
    "first_local_min",
]


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """A univariate evenly spaced series.

    values : 1-D float array, finite throughout.
    period : cycle length in observations (12 for monthly data).  Seasonal
        operations require period >= 2; period = 1 marks a non-seasonal series.
    id : station or series identifier, carried through the pipeline.
    start : (year, month) of the first observation.
    """

    values: np.ndarray
    period: int = 12
    id: str = ""
    start: tuple[int, int] = (1, 1)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise InvalidSeriesError(f"series {self.id!r}: values must be 1-D, got shape {v.shape}")
        if len(v) < 2:
            raise TooShortError(f"series {self.id!r}: need at least 2 observations, got {len(v)}")
        if not np.all(np.isfinite(v)):
            raise InvalidSeriesError(f"series {self.id!r}: values contain NaN or inf")
        if not isinstance(self.period, (int, np.integer)) or self.period < 1:
            raise InvalidSeriesError(f"series {self.id!r}: period must be a positive integer")
        y, m = self.start
        if not 1 <= m <= 12:
            raise InvalidSeriesError(f"series {self.id!r}: start month {m} out of range")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "period", int(self.period))

    def __len__(self) -> int:
        return len(self.values)

    @property
    def n(self) -> int:
        return len(self.values)


@dataclass(frozen=True, eq=False)
class CorrelationSpectrum:
    """ACF (and optionally PACF) values at lags 1..max_lag."""

    acf: np.ndarray
    max_lag: int
    pacf: np.ndarray | None = None

    def acf_at(self, lag: int) -> float:
        if not 1 <= lag <= self.max_lag:
            raise LagTooLargeError(f"lag {lag} outside 1..{self.max_lag}")
        return float(self.acf[lag - 1])

    def pacf_at(self, lag: int) -> float:
        if self.pacf is None:
            raise InvalidSeriesError("spectrum holds no PACF values")
        if not 1 <= lag <= self.max_lag:
            raise LagTooLargeError(f"lag {lag} outside 1..{self.max_lag}")
        return float(self.pacf[lag - 1])


def default_max_lag(n: int) -> int:
    """min(n - 1, floor(10 * log10(n))): the usual ACF horizon for length n."""
    if n < 2:
        raise TooShortError(f"need at least 2 observations, got {n}")
    return min(n - 1, int(math.floor(10.0 * math.log10(n))))


def _advance_start(start: tuple[int, int], months: int) -> tuple[int, int]:
    y, m = start
    total = y * 12 + (m - 1) + months
    return total // 12, total % 12 + 1


def zscore(x: TimeSeries) -> TimeSeries:
    """Centre to mean 0 and scale to sample standard deviation 1 (divisor n-1)."""
    v = x.values
    sd = v.std(ddof=1)
    if not sd > 0:
        raise ZeroVarianceError(f"series {x.id!r}: constant series cannot be z-scored")
    return replace(x, values=(v - v.mean()) / sd)


def difference(x: TimeSeries, order: int = 1) -> TimeSeries:
    """Difference `order` times (order 1 or 2); output is shorter by `order`."""
    if order not in (1, 2):
        raise InvalidSeriesError(f"difference order must be 1 or 2, got {order}")
    if len(x) <= order:
        raise TooShortError(f"series {x.id!r}: length {len(x)} too short for order-{order} differencing")
    return replace(x, values=np.diff(x.values, n=order), start=_advance_start(x.start, order))


def seasonal_difference(x: TimeSeries) -> TimeSeries:
    """Difference at lag = period; output is shorter by one full cycle."""
    if x.period < 2:
        raise InvalidSeriesError(f"series {x.id!r}: seasonal differencing needs period >= 2")
    if len(x) <= x.period:
        raise TooShortError(f"series {x.id!r}: length {len(x)} too short for seasonal differencing")
    v = x.values
    return replace(x, values=v[x.period :] - v[: -x.period], start=_advance_start(x.start, x.period))


def _acf_values(v: np.ndarray, max_lag: int) -> np.ndarray:
    n = len(v)
    xc = v - v.sum() / n
    den = float(xc @ xc)
    if den <= 0:
        raise ZeroVarianceError("autocorrelation undefined for a constant series")
    full = np.correlate(xc, xc, mode="full")
    return full[n : n + max_lag] / den


def sample_acf(x: TimeSeries, max_lag: int | None = None) -> CorrelationSpectrum:
    """Sample autocorrelations r_1..r_max_lag (common mean, divisor n).

    max_lag defaults to `default_max_lag(len(x))` and must satisfy
    1 <= max_lag <= len(x) - 1.
    """
    n = len(x)
    if max_lag is None:
        max_lag = default_max_lag(n)
    if not 1 <= max_lag <= n - 1:
        raise LagTooLargeError(f"max_lag {max_lag} outside 1..{n - 1}")
    return CorrelationSpectrum(acf=_acf_values(x.values, max_lag), max_lag=max_lag)


def _durbin_levinson(rho: np.ndarray) -> np.ndarray:
    """PACF phi_kk for k = 1..len(rho)-1 from a normalised ACF (rho[0] = 1)."""
    L = len(rho) - 1
    a = np.zeros(L)
    pacf = np.empty(L)
    v = 1.0
    for k in range(1, L + 1):
        if k == 1:
            phi_kk = rho[1]
        else:
            phi_kk = (rho[k] - float(a[: k - 1] @ rho[k - 1 : 0 : -1])) / v
        if not np.isfinite(phi_kk) or abs(phi_kk) > 1.0:
            raise DegeneratePacfError(f"recursion left the unit interval at lag {k}")
        if k > 1:
            a[: k - 1] -= phi_kk * a[k - 2 :: -1]
        a[k - 1] = phi_kk
        v *= 1.0 - phi_kk * phi_kk
        pacf[k - 1] = phi_kk
        if v <= 1e-300 and k < L:
            raise DegeneratePacfError(f"innovation variance vanished at lag {k}")
    return pacf


def sample_pacf(x: TimeSeries, max_lag: int) -> CorrelationSpectrum:
    """Partial autocorrelations via Durbin-Levinson on the sample ACF.

    Requires max_lag < len(x) / 2 so the Yule-Walker systems are well posed.
    """
    n = len(x)
    if not 1 <= max_lag or not max_lag < n / 2:
        raise LagTooLargeError(f"max_lag {max_lag} must satisfy 1 <= max_lag < n/2 = {n / 2}")
    acf = _acf_values(x.values, max_lag)
    pacf = _durbin_levinson(np.concatenate([[1.0], acf]))
    return CorrelationSpectrum(acf=acf, max_lag=max_lag, pacf=pacf)


def first_zero_crossing(c: CorrelationSpectrum) -> int:
    """Smallest lag with r_k <= 0, saturating at max_lag when none exists."""
    hits = np.nonzero(c.acf <= 0.0)[0]
    return int(hits[0]) + 1 if len(hits) else c.max_lag


def first_local_min(c: CorrelationSpectrum) -> int:
    """Lag of the first local minimum of the ACF, saturating at max_lag.

    Lag 0 (r_0 = 1) serves as the left boundary, so a strictly rising start
    can never report lag 1 spuriously.
    """
    rr = np.concatenate([[1.0], c.acf])
    mids = rr[1:-1]
    is_min = (mids < rr[:-2]) & (mids < rr[2:])
    hits = np.nonzero(is_min)[0]
    return int(hits[0]) + 1 if len(hits) else c.max_lag
