"""Yule-Walker autoregression with AIC order selection.

Shared by spectral entropy (AR spectrum) and pre-whitening (AR residuals).
The Durbin-Levinson recursion produces innovation variances for every order
up to the cap in one pass, so AIC selection costs one recursion.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import FitFailureError, ZeroVarianceError

__all__ = ["ArFit", "fit_ar_aic"]


class ArFit:
    """AR(p) fit: coefficients phi (length p), innovation variance, order."""

    __slots__ = ("phi", "sigma2", "order", "mean")

    def __init__(self, phi: np.ndarray, sigma2: float, order: int, mean: float):
        self.phi = phi
        self.sigma2 = sigma2
        self.order = order
        self.mean = mean

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """One-step-ahead residuals on the fitting data, t = order..n-1."""
        xc = np.asarray(x, dtype=float) - self.mean
        p = self.order
        if p == 0:
            return xc.copy()
        e = xc[p:].copy()
        for j in range(1, p + 1):
            e -= self.phi[j - 1] * xc[p - j : len(xc) - j]
        return e


def fit_ar_aic(x: np.ndarray, max_order: int | None = None) -> ArFit:
    """Fit AR(p) by Yule-Walker, choosing p in 0..max_order by AIC.

    max_order defaults to floor(10*log10(n)) and is clipped so the
    autocorrelations stay estimable.  Orders past a degenerate
    Durbin-Levinson step are simply not candidates.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 5:
        raise FitFailureError(f"AR fit needs at least 5 points, got {n}")
    if max_order is None:
        max_order = int(math.floor(10.0 * math.log10(n)))
    pmax = max(0, min(max_order, n - 2))

    xc = x - x.mean()
    gamma0 = float(xc @ xc) / n
    if gamma0 <= 0:
        raise ZeroVarianceError("AR fit undefined for a constant series")
    full = np.correlate(xc, xc, mode="full")
    rho = full[n - 1 : n + pmax] / full[n - 1]  # rho[0] = 1

    # Durbin-Levinson, tracking log innovation-variance ratio per order.
    a = np.zeros(pmax)
    pacf = np.zeros(pmax)
    v = 1.0
    log_v = [0.0]  # order 0
    stable_orders = 0
    for k in range(1, pmax + 1):
        if k == 1:
            phi_kk = rho[1]
        else:
            phi_kk = (rho[k] - float(a[: k - 1] @ rho[k - 1 : 0 : -1])) / v
        if not np.isfinite(phi_kk) or abs(phi_kk) >= 1.0:
            break
        if k > 1:
            a[: k - 1] -= phi_kk * a[k - 2 :: -1]
        a[k - 1] = phi_kk
        pacf[k - 1] = phi_kk
        v *= 1.0 - phi_kk * phi_kk
        if v <= 0:
            break
        log_v.append(math.log(v))
        stable_orders = k

    # AIC_k = n*log(sigma2_k) + 2(k+1); the common n*log(gamma0) term cancels.
    aic = np.array([n * lv + 2.0 * (k + 1) for k, lv in enumerate(log_v)])
    best = int(np.argmin(aic))

    if best == 0:
        return ArFit(np.empty(0), gamma0, 0, float(x.mean()))

    # rebuild the coefficient vector at the chosen order from the pacf
    phi = np.zeros(best)
    for k in range(1, best + 1):
        pk = pacf[k - 1]
        if k > 1:
            phi[: k - 1] -= pk * phi[k - 2 :: -1]
        phi[k - 1] = pk
    sigma2 = gamma0 * math.exp(log_v[best])
    return ArFit(phi, sigma2, best, float(x.mean()))
