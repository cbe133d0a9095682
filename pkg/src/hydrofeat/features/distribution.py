"""Distribution- and predictability-oriented features: sample entropy,
derivative spread, histogram mode, outlier timing, fluctuation scaling,
median crossings, AR spectral entropy, flat spots.
"""

from __future__ import annotations

import math
from bisect import insort

import numpy as np

from ..errors import (
    DegenerateFitError,
    FitFailureError,
    TooShortError,
    UndefinedFeatureError,
    ZeroVarianceError,
)
from ..series import TimeSeries, zscore
from ._ar import fit_ar_aic

__all__ = [
    "std1st_der",
    "histogram_mode_10",
    "outlierinclude_mdrmd",
    "crossing_points",
    "flat_spots",
    "sampen_first",
    "spectral_entropy",
    "fluctanal_prop_r1",
]


def std1st_der(ts: TimeSeries) -> float:
    """Sample standard deviation of the first differences of the z-scored
    series; near sqrt(2) for white noise, small for smooth series."""
    if len(ts) < 3:
        raise TooShortError("need at least 3 points")
    return float(np.diff(zscore(ts).values).std(ddof=1))


def histogram_mode_10(ts: TimeSeries) -> float:
    """Centre of the most populated of 10 equal-width bins over the z-scored
    range; ties go to the lowest bin."""
    z = zscore(ts).values
    counts, edges = np.histogram(z, bins=10)
    i = int(np.argmax(counts))
    return float(0.5 * (edges[i] + edges[i + 1]))


def outlierinclude_mdrmd(ts: TimeSeries) -> float:
    """Median (over inclusion thresholds) of the median relative time of
    points at least tau sigma from the mean, centred so 0 means spread-out
    extremes and positive values mean late-record extremes."""
    z = zscore(ts).values
    n = len(z)
    absz = np.abs(z)
    zmax = float(absz.max())
    # indices ordered by decreasing magnitude; the threshold sets select
    # prefixes of this ordering
    order = np.argsort(-absz, kind="stable")
    sorted_desc = absz[order]
    # median of each prefix of `order` (+1 for 1-based time), built once by
    # incremental sorted insertion; threshold sets are exactly these prefixes
    prefix_median = np.empty(n + 1)
    positions = [int(order[0]) + 1]
    prefix_median[1] = positions[0]
    for k in range(2, n + 1):
        insort(positions, int(order[k - 1]) + 1)
        half = k // 2
        if k % 2:
            prefix_median[k] = positions[half]
        else:
            prefix_median[k] = 0.5 * (positions[half - 1] + positions[half])

    taus = 0.01 * np.arange(0, int(np.floor(zmax / 0.01)) + 2)
    taus = taus[taus <= zmax]
    ks = np.searchsorted(-sorted_desc, -taus, side="right")
    ks = ks[ks >= 2]  # ks is non-increasing, so this keeps a prefix
    if ks.size == 0:
        raise UndefinedFeatureError("no threshold retained at least 2 points")
    return float(np.median(prefix_median[ks] / n - 0.5))


def crossing_points(ts: TimeSeries) -> int:
    """Number of median crossings; values equal to the median count as above."""
    v = ts.values
    above = v >= np.median(v)
    return int(np.count_nonzero(above[1:] != above[:-1]))


def flat_spots(ts: TimeSeries) -> int:
    """Longest run of consecutive samples falling in the same decile bin of
    the range [min, max]; a constant series scores its full length."""
    v = ts.values
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        return len(v)
    bins = np.minimum((v - lo) * (10.0 / (hi - lo)), 9.999999).astype(np.int64)
    change = np.nonzero(np.diff(bins))[0]
    starts = np.concatenate([[0], change + 1])
    ends = np.concatenate([change + 1, [len(v)]])
    return int(np.max(ends - starts))


def sampen_counts(ts: TimeSeries, m: int = 2, r: float = 0.3) -> tuple[int, int]:
    """Template-match pair counts (A, B) on the z-scored series.

    B counts ordered pairs of length-m windows within Chebyshev distance r
    (strict inequality, self-matches excluded), A the same for length m+1;
    both use window starts 0..n-m-1.
    """
    z = zscore(ts).values
    n = len(z)
    nt = n - m
    if nt < 2:
        raise TooShortError("not enough windows for template matching")
    d = np.abs(z[:nt, None] - z[None, :nt])
    for off in range(1, m):
        np.maximum(d, np.abs(z[off : off + nt, None] - z[None, off : off + nt]), out=d)
    mask = d < r
    np.fill_diagonal(mask, False)
    B = int(np.count_nonzero(mask))
    np.maximum(d, np.abs(z[m : m + nt, None] - z[None, m : m + nt]), out=d)
    mask = d < r
    np.fill_diagonal(mask, False)
    A = int(np.count_nonzero(mask))
    return A, B


def sampen_first(ts: TimeSeries, m: int = 2, r: float = 0.3) -> float:
    """Sample entropy -ln(A/B) of order m, tolerance r (on z-scored values).

    A = 0 falls back to the ln(B*(B-1)) upper-bound convention; B = 0 leaves
    the feature undefined.
    """
    if len(ts) < 20:
        raise TooShortError("sample entropy needs at least 20 points")
    A, B = sampen_counts(ts, m, r)
    if B == 0:
        raise UndefinedFeatureError("no length-m template matches")
    if A == 0:
        if B < 2:
            raise UndefinedFeatureError("single match cannot bound the entropy")
        return float(math.log(B * (B - 1)))
    return float(-math.log(A / B))


def spectral_entropy(ts: TimeSeries) -> float:
    """Normalized Shannon entropy of the Yule-Walker AR spectral density on
    500 frequencies in (0, pi]; 1 for a flat spectrum, near 0 for a line."""
    v = ts.values
    if v.std() == 0:
        raise ZeroVarianceError("spectral entropy undefined for a constant series")
    fit = fit_ar_aic(v)
    omega = np.pi * np.arange(1, 501) / 500.0
    if fit.order == 0:
        return 1.0
    # |1 - sum_j phi_j e^{-i j w}|^{-2}, constant factors cancel on normalising
    j = np.arange(1, fit.order + 1)
    ew = np.exp(-1j * omega[:, None] * j[None, :])
    denom = np.abs(1.0 - ew @ fit.phi) ** 2
    dens = 1.0 / np.maximum(denom, 1e-300)
    p = dens / dens.sum()
    return float(-(p * np.log(p)).sum() / math.log(500.0))


def fluctanal_prop_r1(ts: TimeSeries) -> float:
    """Relative position of the best two-regime split of the fluctuation
    function: cumulative profile, per-buffer linear detrend, residual range,
    RMS over buffers, split fit in log-log coordinates."""
    if len(ts) < 50:
        raise TooShortError("fluctuation analysis needs at least 50 points")
    z = zscore(ts).values
    n = len(z)
    y = np.cumsum(z)
    taus = np.unique(
        np.round(np.exp(np.linspace(math.log(5.0), math.log(n / 2.0), 50))).astype(int)
    )
    taus = taus[(taus >= 5) & (taus <= n // 2)]
    logf = []
    for tau in taus:
        nb = n // tau
        buf = y[: nb * tau].reshape(nb, tau)
        t = np.arange(tau, dtype=float)
        tc = t - t.mean()
        denom = float(tc @ tc)
        slope = (buf @ tc) / denom
        mean = buf.mean(axis=1)
        resid = buf - mean[:, None] - slope[:, None] * tc[None, :]
        ranges = resid.max(axis=1) - resid.min(axis=1)
        f = math.sqrt(float(np.mean(ranges**2)))
        if f <= 0:
            raise DegenerateFitError(f"zero fluctuation at scale {tau}")
        logf.append(math.log(f))
    m = len(taus)
    if m < 6:
        raise DegenerateFitError("too few scales for a two-regime split")
    lt = np.log(taus.astype(float))
    lf = np.array(logf)

    def sse_line(xs: np.ndarray, ys: np.ndarray) -> float:
        xc = xs - xs.mean()
        d = float(xc @ xc)
        if d == 0:
            return float(np.sum((ys - ys.mean()) ** 2))
        b = float(xc @ (ys - ys.mean())) / d
        resid = ys - ys.mean() - b * xc
        return float(resid @ resid)

    best_k, best_sse = None, math.inf
    for k in range(3, m - 2):  # split after the k-th point, 1-based k in [3, m-3]
        sse = sse_line(lt[:k], lf[:k]) + sse_line(lt[k:], lf[k:])
        if sse < best_sse - 1e-15:
            best_sse = sse
            best_k = k
    return best_k / m
