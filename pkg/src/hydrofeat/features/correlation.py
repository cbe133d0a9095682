"""Correlation-structure features: ACF/PACF families, 2-D embedding, motif
entropy, walker crossings, local-forecast residual lags, segment stability.

Everything here is invariant under x -> a*x + b (a > 0): values are either
correlations or are computed on the z-scored series.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import lfilter

from ..errors import (
    HydrofeatError,
    SegmentTooLongError,
    UndefinedFeatureError,
    ZeroVarianceError,
)
from ..series import (
    TimeSeries,
    default_max_lag,
    difference,
    first_local_min,
    first_zero_crossing,
    sample_acf,
    sample_pacf,
    zscore,
)

__all__ = [
    "acf_suite",
    "pacf_suite",
    "embed2_incircle",
    "trev_num",
    "motiftwo_entro3",
    "walker_propcross",
    "localsimple_tau",
    "spreadrandomlocal",
]

_NAN = float("nan")


def _guard(fn) -> float:
    try:
        return float(fn())
    except HydrofeatError:
        return _NAN


def acf_suite(ts: TimeSeries) -> dict[str, float]:
    """Autocorrelation block: lags 1 and 9, 10-lag energy, differenced
    variants, the seasonal lag, and the first zero/minimum locations."""
    out: dict[str, float] = {}
    p = ts.period

    def block(series: TimeSeries, keys: tuple[str, str]) -> None:
        try:
            c = sample_acf(series, max_lag=10)
            out[keys[0]] = float(c.acf[0])
            out[keys[1]] = float(np.sum(c.acf**2))
        except HydrofeatError:
            out[keys[0]] = _NAN
            out[keys[1]] = _NAN

    block(ts, ("x_acf1", "x_acf10"))
    out["ac_9"] = _guard(lambda: sample_acf(ts, max_lag=9).acf[8])
    try:
        d1 = difference(ts, order=1)
        block(d1, ("diff1_acf1", "diff1_acf10"))
    except HydrofeatError:
        out["diff1_acf1"] = out["diff1_acf10"] = _NAN
    try:
        d2 = difference(ts, order=2)
        block(d2, ("diff2_acf1", "diff2_acf10"))
    except HydrofeatError:
        out["diff2_acf1"] = out["diff2_acf10"] = _NAN
    out["seas_acf1"] = _guard(lambda: sample_acf(ts, max_lag=p).acf[p - 1])

    try:
        c = sample_acf(ts)  # default horizon
        out["firstzero_ac"] = float(first_zero_crossing(c))
        out["firstmin_ac"] = float(first_local_min(c))
    except HydrofeatError:
        out["firstzero_ac"] = out["firstmin_ac"] = _NAN
    return out


def pacf_suite(ts: TimeSeries) -> dict[str, float]:
    """Partial-autocorrelation block: 5-lag energies and the seasonal lag."""
    out: dict[str, float] = {}

    def energy5(series: TimeSeries) -> float:
        return float(np.sum(sample_pacf(series, max_lag=5).pacf ** 2))

    out["x_pacf5"] = _guard(lambda: energy5(ts))
    out["diff1x_pacf5"] = _guard(lambda: energy5(difference(ts, order=1)))
    out["diff2x_pacf5"] = _guard(lambda: energy5(difference(ts, order=2)))
    out["seas_pacf"] = _guard(
        lambda: sample_pacf(ts, max_lag=ts.period).pacf[ts.period - 1]
    )
    return out


def _embedding_delay(z: TimeSeries) -> int:
    try:
        tau = first_zero_crossing(sample_acf(z))
    except HydrofeatError:
        return 1
    if tau > len(z) - 2:
        return 1
    return tau


def embed2_incircle(ts: TimeSeries, boundary: float) -> float:
    """Fraction of delay pairs (z_t, z_{t+tau}) with squared radius below
    `boundary`; tau is the first ACF zero crossing (fallback 1)."""
    if boundary not in (1, 2):
        raise UndefinedFeatureError(f"boundary must be 1 or 2, got {boundary}")
    z = zscore(ts).values
    tau = _embedding_delay(zscore(ts))
    a = z[: len(z) - tau]
    b = z[tau:]
    return float(np.mean(a * a + b * b < boundary))


def trev_num(ts: TimeSeries) -> float:
    """Mean cubed successive difference of the z-scored series (lag 1)."""
    z = zscore(ts).values
    d = np.diff(z)
    return float(np.mean(d**3))


def motiftwo_entro3(ts: TimeSeries) -> float:
    """Entropy of overlapping 3-letter words after above-mean binarization."""
    v = ts.values
    if len(v) < 4:
        raise UndefinedFeatureError("need at least 4 points for 3-letter motifs")
    b = (v > v.mean()).astype(np.int64)
    words = 4 * b[:-2] + 2 * b[1:-1] + b[2:]
    counts = np.bincount(words, minlength=8)
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def walker_propcross(ts: TimeSeries) -> float:
    """A walker closes 10% of its gap to the previous observation each step;
    return the fraction of steps where walker and series swap sides."""
    z = zscore(ts).values
    n = len(z)
    # w[t] = 0.9*w[t-1] + 0.1*z[t-1], w[0] = 0
    w = np.empty(n)
    w[0] = 0.0
    w[1:] = lfilter([0.1], [1.0, -0.9], z[:-1])
    d = w - z
    return float(np.mean(d[:-1] * d[1:] < 0.0))


def localsimple_tau(ts: TimeSeries, mode: str) -> int:
    """First zero crossing of the residual ACF of a trivial local forecaster.

    mode "mean1": predict the previous value.  mode "lfit3": extrapolate an
    OLS line through the previous three values one step ahead.
    """
    z = zscore(ts).values
    if mode == "mean1":
        e = np.diff(z)
    elif mode == "lfit3":
        if len(z) < 10:
            raise UndefinedFeatureError("lfit3 needs at least 10 points")
        ym = (z[:-3] + z[1:-2] + z[2:-1]) / 3.0
        slope = (z[2:-1] - z[:-3]) / 2.0
        e = z[3:] - (ym + 2.0 * slope)
    else:
        raise UndefinedFeatureError(f"unknown forecaster {mode!r}")
    # an exactly predictable series leaves only rounding residue
    if not np.any(np.abs(e) > 1e-12):
        raise ZeroVarianceError("forecast residuals are identically zero")
    resid = TimeSeries(values=e, period=1)
    return first_zero_crossing(sample_acf(resid))


def spreadrandomlocal(ts: TimeSeries, segment_rule: str, rng_seed: int) -> float:
    """Mean first-zero-crossing lag over 100 random contiguous segments.

    Segment length is 50 ("fixed50") or twice the full-series first zero
    crossing ("ac2").  Constant segments have no ACF and are skipped; if more
    than half are skipped the feature is undefined.
    """
    z = zscore(ts)
    n = len(z)
    if segment_rule == "fixed50":
        seg_len = 50
    elif segment_rule == "ac2":
        seg_len = 2 * first_zero_crossing(sample_acf(z))
    else:
        raise UndefinedFeatureError(f"unknown segment rule {segment_rule!r}")
    if seg_len >= n:
        raise SegmentTooLongError(f"segment length {seg_len} >= series length {n}")
    if seg_len < 3:
        raise UndefinedFeatureError(f"segment length {seg_len} too short for an ACF")

    rng = np.random.default_rng(rng_seed)
    starts = rng.integers(0, n - seg_len + 1, size=100)
    vals = []
    zv = z.values
    for s in starts:
        seg = zv[s : s + seg_len]
        try:
            vals.append(first_zero_crossing(sample_acf(TimeSeries(values=seg, period=1))))
        except ZeroVarianceError:
            continue
    if len(vals) < 50:
        raise UndefinedFeatureError("too many degenerate segments")
    return float(np.mean(vals))
