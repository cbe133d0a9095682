"""Model-fit features: conditional heteroskedasticity, Holt-Winters smoothing
parameters, a neural-network-free nonlinearity score, trend stationarity, and
long-range dependence.

Every operation here fits a small parametric model and reports either its
parameters or a goodness statistic.  All fits run on demeaned or standardized
data, which makes the outputs invariant under positive affine rescaling of
the input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from ..decomposition import classical_additive
from ..errors import (
    GarchNonconvergenceError,
    OptimizerFailureError,
    SingularDesignError,
    TooShortError,
    ZeroVarianceError,
)
from ..series import TimeSeries, _acf_values, zscore
from . import _fast
from ._ar import fit_ar_aic

__all__ = [
    "HeterogeneityFit",
    "HoltWintersFit",
    "FractionalFit",
    "prewhiten_ar",
    "fit_garch11",
    "heterogeneity_suite",
    "holt_winters_params",
    "nonlinearity_terasvirta",
    "kpss_stat",
    "hurst_arfima",
]

_HETERO_LAGS = 12


@dataclass(frozen=True)
class HeterogeneityFit:
    """AR pre-whitening plus a GARCH(1,1) fit on the residuals.

    garch_params is (omega, alpha1, beta1) on the scale of the prewhitened
    series; garch_residuals are the standardized residuals e_t = y_t / sigma_t.
    Both are None when the variance model did not converge.
    """

    prewhitened: np.ndarray
    garch_params: tuple[float, float, float] | None
    garch_residuals: np.ndarray | None
    converged: bool


@dataclass(frozen=True)
class HoltWintersFit:
    """Additive Holt-Winters smoothing parameters and the one-step SSE they
    achieve (SSE measured on the z-scored series the optimizer saw)."""

    alpha: float
    beta: float
    gamma: float
    sse: float


@dataclass(frozen=True)
class FractionalFit:
    """Fractional differencing order d and the implied Hurst exponent 0.5 + d."""

    d: float
    hurst: float


def prewhiten_ar(ts: TimeSeries) -> np.ndarray:
    """Residuals of an AIC-selected Yule-Walker autoregression.

    The series is demeaned, AR(p) is chosen by AIC with p up to
    floor(10*log10(n)), and the one-step residuals (t = p..n-1, re-centred to
    mean zero) are returned.
    """
    if len(ts) < 30:
        raise TooShortError(f"series {ts.id!r}: pre-whitening needs >= 30 points, got {len(ts)}")
    fit = fit_ar_aic(ts.values)
    e = fit.residuals(ts.values)
    return e - e.mean()


def _ar_ols_r2(u: np.ndarray, order: int = _HETERO_LAGS) -> float:
    """R-squared of an OLS regression of u_t on an intercept and u_{t-1..t-order}."""
    n = len(u)
    if n <= order + 1:
        raise TooShortError(f"AR({order}) regression needs more than {order + 1} points, got {n}")
    y = u[order:]
    cols = [np.ones(n - order)]
    cols.extend(u[order - k : n - k] for k in range(1, order + 1))
    design = np.column_stack(cols)
    sst = float(np.sum((y - y.mean()) ** 2))
    if sst <= 0:
        raise ZeroVarianceError("regressand is constant; R^2 undefined")
    coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    sse = float(np.sum((y - design @ coef) ** 2))
    return min(1.0, max(0.0, 1.0 - sse / sst))


def _acf_sumsq(u: np.ndarray, lags: int = _HETERO_LAGS) -> float:
    """Sum over k = 1..lags of the squared sample autocorrelation of u."""
    r = _acf_values(u, lags)
    return float(r @ r)


def fit_garch11(y: np.ndarray) -> tuple[tuple[float, float, float], np.ndarray]:
    """Gaussian MLE of a GARCH(1,1) conditional-variance model.

    sigma^2_t = omega + alpha*y^2_{t-1} + beta*sigma^2_{t-1}, with sigma^2_0
    set to the sample variance.  Optimized by Nelder-Mead with penalty terms
    enforcing omega > 0, alpha, beta >= 0 and alpha + beta < 1.  Returns
    ((omega, alpha, beta), standardized residuals); raises
    GarchNonconvergenceError when no start converges to an interior optimum.
    """
    y = np.asarray(y, dtype=float)
    raw_var = float(np.var(y))
    if raw_var <= 0:
        raise ZeroVarianceError("variance model undefined for a constant series")
    # Optimize on the unit-variance scale: alpha/beta are scale-free and
    # omega is mapped back afterwards.
    ys = y / math.sqrt(raw_var)
    y2 = ys * ys
    var0 = float(np.var(ys))

    def objective(p: np.ndarray) -> float:
        w, a, b = p
        slack = (
            max(0.0, 1e-10 - w)
            + max(0.0, -a)
            + max(0.0, -b)
            + max(0.0, a + b - 0.999999)
        )
        if slack > 0:
            return 1e10 * (1.0 + slack)
        return float(_fast.garch_nll(y2, w, a, b, var0))

    best = None
    for start in ((0.05, 0.05, 0.90), (0.20, 0.10, 0.60)):
        res = minimize(
            objective,
            np.asarray(start, dtype=float),
            method="Nelder-Mead",
            options={"xatol": 1e-5, "fatol": 1e-6, "maxiter": 2000, "maxfev": 2000},
        )
        w, a, b = res.x
        ok = (
            res.success
            and np.isfinite(res.fun)
            and res.fun < 1e9
            and w > 0
            and a >= 0
            and b >= 0
            and a + b < 1
        )
        if ok and (best is None or res.fun < best[0]):
            best = (float(res.fun), float(w), float(a), float(b))

    if best is None:
        raise GarchNonconvergenceError("GARCH(1,1) likelihood optimization did not converge")

    _, w, a, b = best
    sigma2 = _fast.garch_sigma2(y2, w, a, b, var0)
    resid = ys / np.sqrt(sigma2)
    return (w * raw_var, a, b), resid


def heterogeneity_suite(ts: TimeSeries) -> dict[str, float]:
    """Conditional-heteroskedasticity features of the pre-whitened series.

    arch_acf / arch_r2 summarise dependence in the squared AR residuals;
    garch_acf / garch_r2 do the same for squared standardized GARCH(1,1)
    residuals (NaN when the variance model fails to converge); ARCH.LM is the
    R-squared of an order-12 autoregression on the squared demeaned raw data.
    """
    if len(ts) < 60:
        raise TooShortError(
            f"series {ts.id!r}: heterogeneity features need >= 60 points, got {len(ts)}"
        )
    y = prewhiten_ar(ts)
    y2 = y * y
    out = {
        "arch_acf": _acf_sumsq(y2),
        "arch_r2": _ar_ols_r2(y2),
    }
    try:
        _, e = fit_garch11(y)
        e2 = e * e
        out["garch_acf"] = _acf_sumsq(e2)
        out["garch_r2"] = _ar_ols_r2(e2)
    except GarchNonconvergenceError:
        out["garch_acf"] = math.nan
        out["garch_r2"] = math.nan
    w = ts.values - ts.values.mean()
    out["ARCH.LM"] = _ar_ols_r2(w * w)
    return out


_HW_STARTS = ((0.3, 0.1, 0.1), (0.7, 0.3, 0.3), (0.1, 0.01, 0.5))
_HW_LO, _HW_HI = 1e-4, 0.9999


def holt_winters_params(ts: TimeSeries) -> HoltWintersFit:
    """Smoothing parameters of additive Holt-Winters exponential smoothing.

    Level, trend and seasonal recursions are run over the z-scored series;
    (alpha, beta, gamma) minimize the one-step squared-error sum over the box
    [1e-4, 0.9999]^3, taking the best of three Nelder-Mead starts.
    Initialization: level = mean of the first cycle, trend = difference of
    the first two cycle means over the period, season = first-cycle
    deviations from its mean.
    """
    m = ts.period
    if len(ts) < 3 * m:
        raise TooShortError(
            f"series {ts.id!r}: Holt-Winters needs >= 3 cycles ({3 * m}), got {len(ts)}"
        )
    z = zscore(ts).values
    c1 = float(z[:m].mean())
    c2 = float(z[m : 2 * m].mean())
    level0 = c1
    trend0 = (c2 - c1) / m
    season0 = z[:m] - c1

    def objective(p: np.ndarray) -> float:
        a, b, g = p
        slack = sum(max(0.0, _HW_LO - q) + max(0.0, q - _HW_HI) for q in (a, b, g))
        if slack > 0:
            return 1e10 * (1.0 + slack)
        return float(_fast.hw_sse(z, m, a, b, g, level0, trend0, season0))

    best = None
    for start in _HW_STARTS:
        res = minimize(
            objective,
            np.asarray(start, dtype=float),
            method="Nelder-Mead",
            options={"xatol": 1e-5, "fatol": 1e-6, "maxiter": 2000, "maxfev": 2000},
        )
        if res.success and np.isfinite(res.fun) and res.fun < 1e9:
            if best is None or res.fun < best[0]:
                best = (float(res.fun), res.x.copy())

    if best is None:
        raise OptimizerFailureError("Holt-Winters SSE minimization did not converge")
    sse, p = best
    a, b, g = (float(min(_HW_HI, max(_HW_LO, q))) for q in p)
    return HoltWintersFit(alpha=a, beta=b, gamma=g, sse=sse)


def nonlinearity_terasvirta(ts: TimeSeries) -> float:
    """Cubic-augmentation neglected-nonlinearity score at lag 1.

    Compares the SSE of regressing x_t on {1, x_{t-1}} against the cubic
    augmentation {1, x_{t-1}, x_{t-1}^2, x_{t-1}^3}: with
    X^2 = T (SSE0 - SSE1)/SSE0 over T usable points, the feature is 10 X^2/T.
    Computed on the z-scored series (the SSE ratio is affine-invariant).
    """
    if len(ts) < 30:
        raise TooShortError(
            f"series {ts.id!r}: nonlinearity score needs >= 30 points, got {len(ts)}"
        )
    z = zscore(ts).values
    y = z[1:]
    lag = z[:-1]
    t_len = len(y)
    design1 = np.column_stack([np.ones(t_len), lag, lag * lag, lag**3])
    design0 = design1[:, :2]
    coef0, _, rank0, _ = np.linalg.lstsq(design0, y, rcond=None)
    coef1, _, rank1, _ = np.linalg.lstsq(design1, y, rcond=None)
    if rank0 < 2 or rank1 < 4:
        raise SingularDesignError("lagged regressors are collinear; score undefined")
    sse0 = float(np.sum((y - design0 @ coef0) ** 2))
    sse1 = float(np.sum((y - design1 @ coef1) ** 2))
    if sse0 <= 0:
        raise ZeroVarianceError("restricted regression fits exactly; score undefined")
    return max(0.0, 10.0 * (sse0 - sse1) / sse0)


def kpss_stat(ts: TimeSeries) -> float:
    """Trend-stationarity score: the KPSS statistic for a linear trend.

    Residuals u_t come from OLS of x on {1, t}; with partial sums S_t and a
    Bartlett long-run variance at truncation lag 1 (sigma^2 = gamma_0 +
    gamma_1), the statistic is n^-2 sum(S_t^2) / sigma^2.
    """
    n = len(ts)
    if n < 20:
        raise TooShortError(f"series {ts.id!r}: stationarity score needs >= 20 points, got {n}")
    v = ts.values
    t = np.arange(1.0, n + 1.0)
    design = np.column_stack([np.ones(n), t])
    coef, _, _, _ = np.linalg.lstsq(design, v, rcond=None)
    u = v - design @ coef
    gamma0 = float(u @ u) / n
    # An exact linear trend leaves only rounding residue, so the guard is
    # relative to the series' own scale.
    if gamma0 <= 1e-20 * max(float(np.var(v)), 1.0):
        raise ZeroVarianceError("trend regression fits exactly; statistic undefined")
    gamma1 = float(u[:-1] @ u[1:]) / n
    sigma2 = gamma0 + gamma1
    if sigma2 <= 0:
        raise ZeroVarianceError("long-run variance estimate is not positive")
    s = np.cumsum(u)
    return float(np.sum(s * s) / (n * n * sigma2))


def hurst_arfima(ts: TimeSeries) -> FractionalFit:
    """Long-range dependence of the deseasonalized series.

    The seasonal component from the classical decomposition is subtracted,
    the result z-scored, and the fractional differencing order d of an
    ARFIMA(0, d, 0) model is estimated by maximizing the approximate Gaussian
    likelihood (lattice/innovations form with reflection coefficients
    d/(k - d)) over d in (-0.499, 0.499).  Hurst exponent = 0.5 + d.
    """
    if len(ts) < 4 * ts.period:
        raise TooShortError(
            f"series {ts.id!r}: fractional fit needs >= 4 cycles ({4 * ts.period}), got {len(ts)}"
        )
    w = ts.values - classical_additive(ts).seasonal
    sd = w.std(ddof=1)
    if not sd > 0:
        raise ZeroVarianceError(f"series {ts.id!r}: deseasonalized series is constant")
    z = (w - w.mean()) / sd
    n = len(z)
    k = np.arange(1.0, n)

    def deviance(d: float) -> float:
        e2v, sum_log_v = _fast.arfima_obj(z, d / (k - d))
        return n * math.log(e2v / n) + sum_log_v

    res = minimize_scalar(deviance, bounds=(-0.499, 0.499), method="bounded")
    if not (res.success and np.isfinite(res.fun)):
        raise OptimizerFailureError("fractional-likelihood optimization did not converge")
    d = float(res.x)
    return FractionalFit(d=d, hurst=0.5 + d)
