"""Decomposition-based features: strength of trend and seasonality, shape of
the trend path, residual autocorrelation, and seasonal phase.

The series is z-scored, decomposed by STL with the package defaults, and the
nine features are read off the three components.
"""

from __future__ import annotations

import numpy as np

from ..decomposition import stl
from ..errors import TooShortError
from ..series import TimeSeries, _acf_values, zscore

__all__ = ["stl_feature_suite"]


def _strength(num_var: float, denom_var: float) -> float:
    """clamp(1 - num/denom, 0, 1); a vanishing denominator means there is no
    variation left to explain, scored as 0."""
    if denom_var <= 0:
        return 0.0
    return min(1.0, max(0.0, 1.0 - num_var / denom_var))


def _loo_variances(r: np.ndarray) -> np.ndarray:
    """Sample variance of r with each element left out in turn."""
    n = len(r)
    s = r.sum()
    ss = float(r @ r)
    mean_wo = (s - r) / (n - 1)
    return (ss - r * r - (n - 1) * mean_wo**2) / (n - 2)


def _orthonormal_poly_coef(t_comp: np.ndarray) -> tuple[float, float]:
    """Coefficients of the degree-1 and degree-2 regressors when t_comp is
    projected onto unit-norm orthogonal polynomials of the sample grid."""
    n = len(t_comp)
    grid = np.arange(1.0, n + 1.0)
    vander = np.column_stack([np.ones(n), grid, grid * grid])
    q, r = np.linalg.qr(vander)
    # fix signs so each basis vector has a positive leading coefficient,
    # matching Gram-Schmidt run in degree order
    signs = np.sign(np.diag(r))
    q = q * signs
    coef = q.T @ t_comp
    return float(coef[1]), float(coef[2])


def stl_feature_suite(ts: TimeSeries) -> dict[str, float]:
    """Nine features of the STL decomposition of the z-scored series.

    trend and seasonal_strength are variance-explained ratios clamped to
    [0, 1]; spike is the variance of leave-one-out variances of the
    remainder; linearity and curvature are orthonormal-polynomial
    coefficients of the trend path; e_acf1 and e_acf10 summarise remainder
    autocorrelation; peak and trough are the cycle positions (1..period) of
    the extremes of the mean seasonal profile.
    """
    p = ts.period
    n = len(ts)
    if n < 2 * p:
        raise TooShortError(
            f"series {ts.id!r}: decomposition features need >= {2 * p} points, got {n}"
        )
    z = zscore(ts).values
    dec = stl(zscore(ts))
    seasonal, trend_c, remainder = dec.seasonal, dec.trend, dec.remainder

    var = lambda a: float(np.var(a, ddof=1))
    out = {
        "trend": _strength(var(remainder), var(z - seasonal)),
        "seasonal_strength": _strength(var(remainder), var(z - trend_c)),
        "spike": float(np.var(_loo_variances(remainder), ddof=1)),
    }
    out["linearity"], out["curvature"] = _orthonormal_poly_coef(trend_c)

    r_acf = _acf_values(remainder, 10)
    out["e_acf1"] = float(r_acf[0])
    out["e_acf10"] = float(r_acf @ r_acf)

    # mean seasonal value at each cycle position (1..p), ties to the earliest
    positions = np.arange(n) % p
    profile = np.bincount(positions, weights=seasonal, minlength=p) / np.bincount(
        positions, minlength=p
    )
    out["peak"] = float(np.argmax(profile) + 1)
    out["trough"] = float(np.argmin(profile) + 1)
    return out
