"""Windowed variability features.

Tiled (non-overlapping) windows summarise how the level and spread wander
across the record; sliding half-window comparisons locate the largest abrupt
shifts in mean, variance, and distribution.  All statistics run on the
z-scored series so they are scale-free.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import TooShortError
from ..series import TimeSeries, zscore

__all__ = ["tiled_stats", "shift_suite"]


def tiled_stats(ts: TimeSeries) -> dict[str, float]:
    """Variance of per-window variances (lumpiness) and of per-window means
    (stability) over non-overlapping windows of width = period.

    The series is z-scored first and a ragged tail shorter than one window is
    dropped.
    """
    w = ts.period
    n = len(ts)
    if n < 2 * w:
        raise TooShortError(
            f"series {ts.id!r}: tiled windows need >= {2 * w} points, got {n}"
        )
    z = zscore(ts).values
    k = n // w
    tiles = z[: k * w].reshape(k, w)
    return {
        "lumpiness": float(np.var(tiles.var(axis=1, ddof=1), ddof=1)),
        "stability": float(np.var(tiles.mean(axis=1), ddof=1)),
    }


def shift_suite(ts: TimeSeries) -> dict[str, float]:
    """Largest mean, variance, and Gaussian-KL shifts between consecutive
    windows of width = period, each with the offset (1-based) where it occurs.

    At offset t (t = w..n-w) the windows [t-w+1, t] and [t+1, t+w] are
    compared; KL uses the closed form for normals with 1e-8 added to both
    variances.  Ties break toward the earliest offset.
    """
    w = ts.period
    n = len(ts)
    if n < 2 * w + 1:
        raise TooShortError(
            f"series {ts.id!r}: shift windows need >= {2 * w + 1} points, got {n}"
        )
    z = zscore(ts).values
    windows = sliding_window_view(z, w)  # row i = z[i : i + w]
    means = windows.mean(axis=1)
    variances = windows.var(axis=1, ddof=1)

    # offset t (1-based) pairs window starting at t - w with the one at t
    left = slice(0, n - 2 * w + 1)
    right = slice(w, n - w + 1)
    mu_a, mu_b = means[left], means[right]
    va = variances[left] + 1e-8
    vb = variances[right] + 1e-8

    level = np.abs(mu_b - mu_a)
    var_shift = np.abs(variances[right] - variances[left])
    kl = 0.5 * (np.log(vb / va) + (va + (mu_a - mu_b) ** 2) / vb - 1.0)

    out: dict[str, float] = {}
    for name, series in (("level", level), ("var", var_shift), ("kl", kl)):
        idx = int(np.argmax(series))
        out[f"max_{name}_shift"] = float(series[idx])
        out[f"time_{name}_shift"] = float(w + idx)
    return out
