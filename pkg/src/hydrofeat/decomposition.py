"""Seasonal-trend decompositions: classical moving-average and STL.

Both return additive components with the exact identity
``trend + seasonal + remainder == values`` (the remainder is computed by
subtraction).  STL is the standard inner-loop design: cycle-subseries loess,
a [period, period, 3] moving-average low-pass with a final loess, and a trend
loess on the deseasonalised series.  Local fits are degree 1 with tricube
weights, evaluated at every q-th index (q = window length) and linearly
interpolated in between.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonconvergentLoessError, TooShortError
from .series import TimeSeries

__all__ = ["Decomposition", "classical_additive", "stl"]


@dataclass(frozen=True, eq=False)
class Decomposition:
    """Additive components of a series, aligned index-by-index with it."""

    trend: np.ndarray
    seasonal: np.ndarray
    remainder: np.ndarray
    period: int
    method: str
    params: dict

    @property
    def deseasonalized(self) -> np.ndarray:
        return self.trend + self.remainder


def _require_two_cycles(x: TimeSeries) -> None:
    if x.period < 2:
        raise TooShortError(f"series {x.id!r}: decomposition needs period >= 2")
    if len(x) < 2 * x.period:
        raise TooShortError(
            f"series {x.id!r}: need at least two full cycles "
            f"({2 * x.period} points), got {len(x)}"
        )


def classical_additive(x: TimeSeries) -> Decomposition:
    """Moving-average decomposition.

    Trend is the centred moving average (2xp for even periods), extended flat
    at the edges.  Seasonal indices are per-phase means of the detrended
    interior, re-centred to sum to zero.
    """
    _require_two_cycles(x)
    v = x.values
    n = len(v)
    p = x.period
    if p % 2 == 0:
        w = np.full(p + 1, 1.0 / p)
        w[0] = w[-1] = 0.5 / p
    else:
        w = np.full(p, 1.0 / p)
    half = len(w) // 2
    core = np.convolve(v, w, mode="valid")  # trend at indices half..n-1-half

    detrended = v[half : n - half] - core
    phase = (np.arange(half, n - half)) % p
    means = np.zeros(p)
    for ph in range(p):
        means[ph] = detrended[phase == ph].mean()
    means -= means.mean()
    seasonal = means[np.arange(n) % p]

    trend = np.empty(n)
    trend[half : n - half] = core
    trend[:half] = core[0]
    trend[n - half :] = core[-1]

    return Decomposition(
        trend=trend,
        seasonal=seasonal,
        remainder=v - seasonal - trend,
        period=p,
        method="classical",
        params={"period": p},
    )


def _tricube(u: np.ndarray) -> np.ndarray:
    c = np.clip(1.0 - np.abs(u) ** 3, 0.0, None)
    return c * c * c


def _loess_at(y: np.ndarray, positions: np.ndarray, window: int,
              rho: np.ndarray | None = None) -> np.ndarray:
    """Weighted degree-1 local fits of y (at integer indices) at `positions`.

    The neighbourhood is the `window` nearest indices; when window exceeds the
    series length every point is used and the bandwidth is inflated by
    window / n, following the usual loess convention.  `rho` holds optional
    robustness weights.
    """
    n = len(y)
    if n < 2:
        raise NonconvergentLoessError("loess needs at least 2 points")
    q = min(window, n)
    t = np.arange(n, dtype=float)
    out = np.empty(len(positions))
    for i, pos in enumerate(positions):
        left = int(np.clip(np.floor(pos) - (q - 1) // 2, 0, n - q))
        idx = slice(left, left + q)
        dt = t[idx] - pos
        h = np.max(np.abs(dt))
        if window > n:
            h *= window / n
        if h <= 0:
            raise NonconvergentLoessError("zero bandwidth in local fit")
        w = _tricube(dt / h)
        if rho is not None:
            w = w * rho[idx]
        sw = w.sum()
        if sw <= 0:
            raise NonconvergentLoessError("all-zero weights in local fit")
        yy = y[idx]
        sx = float(w @ dt)
        sxx = float(w @ (dt * dt))
        sy = float(w @ yy)
        sxy = float(w @ (dt * yy))
        denom = sw * sxx - sx * sx
        if abs(denom) > 1e-12 * max(sw * sxx, 1e-300):
            out[i] = (sxx * sy - sx * sxy) / denom
        else:
            out[i] = sy / sw
    return out


def _loess_series(y: np.ndarray, window: int, rho: np.ndarray | None = None) -> np.ndarray:
    """Smooth y at every index, fitting only at every window-th point."""
    n = len(y)
    pts = list(range(0, n, max(window, 1)))
    if pts[-1] != n - 1:
        pts.append(n - 1)
    pts_arr = np.array(pts, dtype=float)
    fitted = _loess_at(y, pts_arr, window, rho)
    if len(pts) == 1:
        return np.full(n, fitted[0])
    return np.interp(np.arange(n, dtype=float), pts_arr, fitted)


def _moving_average(y: np.ndarray, width: int) -> np.ndarray:
    return np.convolve(y, np.full(width, 1.0 / width), mode="valid")


def _next_odd(v: float) -> int:
    k = int(np.ceil(v))
    return k if k % 2 == 1 else k + 1


def default_trend_window(period: int, seasonal_window: int = 13) -> int:
    """Smallest odd integer >= 1.5 * period / (1 - 1.5 / seasonal_window)."""
    return _next_odd(1.5 * period / (1.0 - 1.5 / seasonal_window))


def stl(
    x: TimeSeries,
    seasonal_window: int = 13,
    trend_window: int | None = None,
    inner: int = 2,
    outer: int = 0,
) -> Decomposition:
    """Seasonal-trend decomposition by loess.

    `outer` > 0 adds robustness passes with bisquare weights computed from the
    remainder; the default performs none.
    """
    _require_two_cycles(x)
    v = x.values
    n = len(v)
    p = x.period
    if trend_window is None:
        trend_window = default_trend_window(p, seasonal_window)
    lowpass_window = _next_odd(p)

    # subseries layout: position j of phase ph is time ph + p*j
    counts = [len(range(ph, n, p)) for ph in range(p)]

    def eval_positions(m: int) -> np.ndarray:
        # every q-th subseries index plus both one-cycle extensions
        pts = set(range(0, m, seasonal_window))
        pts.update((-1, m - 1, m))
        return np.array(sorted(pts), dtype=float)

    rho = None
    trend = np.zeros(n)
    seasonal = np.zeros(n)
    for _ in range(outer + 1):
        for _ in range(inner):
            detrended = v - trend
            extended = np.empty(n + 2 * p)
            for ph in range(p):
                sub = detrended[ph::p]
                m = counts[ph]
                pos = eval_positions(m)
                sub_rho = rho[ph::p] if rho is not None else None
                fit = _loess_at(sub, pos, seasonal_window, sub_rho)
                # interpolate onto subseries index -1..m
                allpos = np.arange(-1.0, m + 1.0)
                vals = np.interp(allpos, pos, fit)
                extended[ph + p * np.arange(0, m + 2)] = vals
            low = _moving_average(_moving_average(extended, p), p)
            low = _moving_average(low, 3)
            low = _loess_series(low, lowpass_window)
            seasonal = extended[p : p + n] - low
            trend = _loess_series(v - seasonal, trend_window, rho)
        remainder = v - trend - seasonal
        if outer:
            h = 6.0 * np.median(np.abs(remainder))
            if h <= 0:
                rho = np.ones(n)
            else:
                u = np.clip(remainder / h, -1.0, 1.0)
                rho = (1.0 - u * u) ** 2
    remainder = v - trend - seasonal
    return Decomposition(
        trend=trend,
        seasonal=seasonal,
        remainder=remainder,
        period=p,
        method="stl",
        params={
            "seasonal_window": seasonal_window,
            "trend_window": trend_window,
            "lowpass_window": lowpass_window,
            "inner": inner,
            "outer": outer,
        },
    )
