"""Multivariate-GARCH benchmark forecasts of (VaR, CoVaR).

A constant-conditional-correlation model with univariate Gaussian-QML
GARCH(1,1) volatilities supplies the conditional covariance matrix H_t.
Risk forecasts then require a decomposition H_t = Sigma_t Sigma_t', and
the choice of Sigma_t (symmetric square root versus lower-triangular
Cholesky factor) changes the CoVaR forecast even though H_t is identical.
Quantiles are extracted empirically from in-window standardized residual
pairs: the VaR is the beta-quantile of the first-row combination of the
residuals, the CoVaR the alpha-quantile of the second-row combination over
the VaR-exceedance subset.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from .core import LossSeries, NumericalError, ProbLevels, ValidationError, validate_series

__all__ = [
    "CovMatrix2",
    "chol_lower",
    "sym_sqrt",
    "var_from_sigma",
    "covar_from_sigma",
    "Garch11Fit",
    "CccGarchFit",
    "fit_garch11",
    "fit_ccc_garch",
    "benchmark_forecast",
]

MIN_RESIDUALS = 100
MIN_EXCEEDANCES = 20
MIN_GARCH_SAMPLE = 500

DECOMPOSITIONS = ("cholesky", "symmetric")


@dataclass(frozen=True)
class CovMatrix2:
    """2x2 covariance matrix (sxx, syy variances, sxy covariance)."""

    sxx: float
    syy: float
    sxy: float

    def __post_init__(self):
        if not (self.sxx > 0 and self.syy > 0):
            raise ValidationError("variances must be positive")
        if self.sxx * self.syy - self.sxy**2 <= 0:
            raise ValidationError("covariance matrix is not positive definite")

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.sxx, self.sxy], [self.sxy, self.syy]])


def chol_lower(h: CovMatrix2) -> np.ndarray:
    """Lower-triangular factor with positive diagonal: Sigma Sigma' = H."""
    a = np.sqrt(h.sxx)
    b = h.sxy / a
    c = np.sqrt(h.syy - b * b)
    return np.array([[a, 0.0], [b, c]])


def sym_sqrt(h: CovMatrix2) -> np.ndarray:
    """Symmetric positive-definite square root: Sigma Sigma = H.

    For 2x2 matrices, Sigma = (H + sqrt(det H) I) / sqrt(tr H + 2 sqrt(det H)).
    """
    H = h.as_matrix()
    s = np.sqrt(h.sxx * h.syy - h.sxy**2)
    tau = np.sqrt(h.sxx + h.syy + 2.0 * s)
    return (H + s * np.eye(2)) / tau


def _check_residuals(residuals) -> np.ndarray:
    residuals = np.asarray(residuals, dtype=float)
    if residuals.ndim != 2 or residuals.shape[1] != 2:
        raise ValidationError("residuals must be an (m, 2) array of pairs")
    if residuals.shape[0] < MIN_RESIDUALS:
        raise ValidationError(
            f"need at least {MIN_RESIDUALS} residual pairs, got {residuals.shape[0]}"
        )
    return residuals


def var_from_sigma(sigma, residuals, beta: float) -> float:
    """Empirical beta-quantile of the first-row residual combination."""
    if not (0.0 < beta < 1.0):
        raise ValidationError(f"beta must be in (0, 1), got {beta}")
    sigma = np.asarray(sigma, dtype=float)
    residuals = _check_residuals(residuals)
    combo = sigma[0, 0] * residuals[:, 0] + sigma[0, 1] * residuals[:, 1]
    return float(np.quantile(combo, beta))


def covar_from_sigma(sigma, residuals, var_forecast: float, alpha: float) -> float:
    """Empirical alpha-quantile of the second-row residual combination over
    the index set where the first-row combination reaches the VaR forecast."""
    if not (0.0 < alpha < 1.0):
        raise ValidationError(f"alpha must be in (0, 1), got {alpha}")
    sigma = np.asarray(sigma, dtype=float)
    residuals = _check_residuals(residuals)
    first = sigma[0, 0] * residuals[:, 0] + sigma[0, 1] * residuals[:, 1]
    second = sigma[1, 0] * residuals[:, 0] + sigma[1, 1] * residuals[:, 1]
    exceed = first >= var_forecast
    m = int(exceed.sum())
    if m == 0:
        raise ValidationError("empty VaR-exceedance set; cannot form the CoVaR quantile")
    if m < MIN_EXCEEDANCES:
        raise ValidationError(
            f"thin VaR-exceedance set ({m} < {MIN_EXCEEDANCES}); "
            f"increase the residual sample or lower beta"
        )
    return float(np.quantile(second[exceed], alpha))


@dataclass(frozen=True)
class Garch11Fit:
    omega: float
    alpha: float
    beta: float
    sig2: np.ndarray
    nll: float
    converged: bool

    @property
    def persistence(self) -> float:
        return self.alpha + self.beta

    def forecast_sig2(self, last_r: float) -> float:
        return self.omega + self.alpha * last_r**2 + self.beta * float(self.sig2[-1])


def _garch_sig2(r2: np.ndarray, omega: float, a: float, b: float,
                backcast: float) -> np.ndarray:
    # sig2_t = omega + a r2_{t-1} + b sig2_{t-1}; pre-sample r2 and sig2 backcast
    u = omega + a * np.concatenate(([backcast], r2[:-1]))
    sig2, _ = lfilter([1.0], [1.0, -b], u, zi=np.array([b * backcast]))
    return sig2


_GARCH_STARTS = ((0.05, 0.90), (0.10, 0.80), (0.05, 0.10), (0.02, 0.50))


def fit_garch11(returns) -> Garch11Fit:
    """Gaussian QML fit of a GARCH(1,1) variance recursion.

    Deterministic: fixed moment-matched starting points, ties across starts
    broken by smaller persistence so that near-i.i.d. data yields the
    least-persistent representative of a flat likelihood ridge.
    """
    r = np.asarray(returns, dtype=float)
    r2 = r * r
    backcast = float(np.mean(r2))
    if backcast <= 0:
        raise ValidationError("degenerate series: zero variance")

    def nll(theta):
        omega, a, b = theta
        if a + b >= 0.999:
            return 1e100
        sig2 = _garch_sig2(r2, omega, a, b, backcast)
        if not np.isfinite(sig2).all() or np.any(sig2 <= 0):
            return 1e100
        return 0.5 * float(np.sum(np.log(sig2) + r2 / sig2))

    bounds = [(1e-12, 10.0 * backcast), (0.0, 0.998), (0.0, 0.998)]
    candidates = []
    for a0, b0 in _GARCH_STARTS:
        x0 = np.array([backcast * (1.0 - a0 - b0), a0, b0])
        res = minimize(nll, x0, method="Nelder-Mead", bounds=bounds,
                       options={"maxiter": 4000, "maxfev": 4000,
                                "fatol": 1e-10, "xatol": 1e-8})
        if np.isfinite(res.fun) and res.fun < 1e100:
            candidates.append(res)
    if not candidates:
        raise NumericalError("GARCH(1,1) QML did not converge from any start")
    best_nll = min(res.fun for res in candidates)
    tol = 1e-6 * (1.0 + abs(best_nll))
    near = [res for res in candidates if res.fun <= best_nll + tol]
    res = min(near, key=lambda r_: (r_.x[1] + r_.x[2], r_.fun))
    omega, a, b = res.x
    return Garch11Fit(
        omega=float(omega), alpha=float(a), beta=float(b),
        sig2=_garch_sig2(r2, omega, a, b, backcast),
        nll=float(res.fun), converged=bool(res.success),
    )


@dataclass(frozen=True)
class CccGarchFit:
    """Constant-correlation pair of GARCH(1,1) fits."""

    fit_x: Garch11Fit
    fit_y: Garch11Fit
    rho: float
    residuals: np.ndarray        # (n, 2) standardized residual pairs
    h_next: CovMatrix2           # one-step-ahead covariance forecast


def fit_ccc_garch(series: LossSeries) -> CccGarchFit:
    """Fit both margins by Gaussian QML and couple them with the sample
    correlation of the standardized residuals; assemble the one-step-ahead
    covariance forecast."""
    validate_series(series)
    if series.n < MIN_GARCH_SAMPLE:
        raise ValidationError(
            f"need at least {MIN_GARCH_SAMPLE} observations, got {series.n}"
        )
    fx = fit_garch11(series.x)
    fy = fit_garch11(series.y)
    ex = series.x / np.sqrt(fx.sig2)
    ey = series.y / np.sqrt(fy.sig2)
    rho = float(np.corrcoef(ex, ey)[0, 1])
    sig2_x = fx.forecast_sig2(float(series.x[-1]))
    sig2_y = fy.forecast_sig2(float(series.y[-1]))
    h_next = CovMatrix2(sig2_x, sig2_y, rho * np.sqrt(sig2_x * sig2_y))
    return CccGarchFit(fx, fy, rho, np.column_stack([ex, ey]), h_next)


def decompose(h: CovMatrix2, decomposition: str) -> np.ndarray:
    if decomposition == "cholesky":
        return chol_lower(h)
    if decomposition == "symmetric":
        return sym_sqrt(h)
    raise ValidationError(
        f"unknown decomposition {decomposition!r}; choose from {DECOMPOSITIONS}"
    )


def benchmark_forecast(series: LossSeries, window: int, decomposition: str,
                       levels: ProbLevels):
    """One-step-ahead (VaR, CoVaR) forecast from the trailing window."""
    if window > series.n:
        raise ValidationError(f"window {window} exceeds series length {series.n}")
    tail = series.window(series.n - window, series.n)
    fit = fit_ccc_garch(tail)
    sigma = decompose(fit.h_next, decomposition)
    v = var_from_sigma(sigma, fit.residuals, levels.beta)
    c = covar_from_sigma(sigma, fit.residuals, v, levels.alpha)
    return v, c
