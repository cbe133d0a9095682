"""Sequential numeric kernels behind the model-fit features.

These recursions cannot be vectorised (each step feeds the next), so they
are JIT-compiled with numba when it is installed and fall back to plain
Python otherwise.  Both paths execute the same arithmetic in the same order.
"""

from __future__ import annotations

import math

import numpy as np


def _hw_sse_impl(x, m, alpha, beta, gamma, l0, b0, s_init):
    """One-step squared-error sum of additive Holt-Winters recursions.

    s_init holds the seasonal indices for the first cycle; the recursion
    starts at t = m with level l0 and trend b0.
    """
    level = l0
    trend = b0
    s = s_init.copy()
    sse = 0.0
    for t in range(m, x.shape[0]):
        idx = t % m
        seas = s[idx]
        err = x[t] - (level + trend + seas)
        sse += err * err
        new_level = alpha * (x[t] - seas) + (1.0 - alpha) * (level + trend)
        new_trend = beta * (new_level - level) + (1.0 - beta) * trend
        s[idx] = gamma * (x[t] - level - trend) + (1.0 - gamma) * seas
        level = new_level
        trend = new_trend
    return sse


def _arfima_obj_impl(x, pacf):
    """Profiled Gaussian deviance terms for a fractional-noise lattice.

    Returns (sum of e_t^2 / v_t, sum of ln v_t) where e_t are lattice
    innovations and v_t the innovation-variance ratios implied by the
    reflection coefficients `pacf`.
    """
    n = x.shape[0]
    f = x.copy()
    b = x.copy()
    e2v = x[0] * x[0]
    sum_log_v = 0.0
    v = 1.0
    for k in range(1, n):
        phi = pacf[k - 1]
        for t in range(n - 1, k - 1, -1):
            b_prev = b[t - 1]
            f_t = f[t]
            f[t] = f_t - phi * b_prev
            b[t] = b_prev - phi * f_t
        v = v * (1.0 - phi * phi)
        e = f[k]
        e2v += e * e / v
        sum_log_v += math.log(v)
    return e2v, sum_log_v


def _garch_nll_impl(y2, w, a, b, var0):
    """Gaussian GARCH(1,1) negative log-likelihood (constant terms dropped),
    with the variance recursion started at var0."""
    sig = var0
    nll = 0.5 * (math.log(var0) + y2[0] / var0)
    for t in range(1, y2.shape[0]):
        sig = w + a * y2[t - 1] + b * sig
        if sig <= 0.0:
            return 1e300
        nll += 0.5 * (math.log(sig) + y2[t] / sig)
    return nll


def _garch_sigma2_impl(y2, w, a, b, var0):
    out = np.empty(y2.shape[0])
    out[0] = var0
    for t in range(1, y2.shape[0]):
        out[t] = w + a * y2[t - 1] + b * out[t - 1]
    return out


try:  # pragma: no cover - exercised implicitly by every feature test
    from numba import njit

    hw_sse = njit(cache=True, nogil=True)(_hw_sse_impl)
    arfima_obj = njit(cache=True, nogil=True)(_arfima_obj_impl)
    garch_nll = njit(cache=True, nogil=True)(_garch_nll_impl)
    garch_sigma2 = njit(cache=True, nogil=True)(_garch_sigma2_impl)
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    hw_sse = _hw_sse_impl
    arfima_obj = _arfima_obj_impl
    garch_nll = _garch_nll_impl
    garch_sigma2 = _garch_sigma2_impl
    HAVE_NUMBA = False
