"""Recursive (VaR, CoVaR) model dynamics: regressor construction, path
filtering with analytic parameter gradients, stationarity checks and
default starting values.

Both equations are linear autoregressions in their own lag,

    v_t = omega_v + a_v' w_{t-1} + b_v v_{t-1},
    c_t = omega_c + a_c' w~_{t-1} [+ b_vc v_{t-1}] + b_c c_{t-1},

driven by transforms of the lagged losses. The pre-sample regressor w_0
(needed at t=1) is the zero vector, so v_1 = omega + b * v_0 is
deterministic given the start value. Gradients follow the companion
recursion grad_t = r_t + b * grad_{t-1} with grad_0 = 0, where r_t stacks
the regressors of period t; for the CoVaR equation the plugged-in VaR path
is held fixed, matching two-step estimation.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import lfilter

from .core import (
    ABS_X,
    ABS_Y,
    X_NEG,
    X_POS,
    Y_NEG,
    Y_POS,
    LossSeries,
    ModelSpec,
    NumericalError,
    ProbLevels,
    StartValues,
    ValidationError,
)

__all__ = [
    "build_regressors",
    "filter_var",
    "filter_covar",
    "spectral_radius_ok",
    "default_start_values",
    "resolve_start",
]

MIN_START_SAMPLE = 20
MIN_COVAR_START_EXCEEDANCES = 5


def _transform(series: LossSeries, token: str) -> np.ndarray:
    x, y = series.x, series.y
    if token == ABS_X:
        return np.abs(x)
    if token == X_POS:
        return np.maximum(x, 0.0)
    if token == X_NEG:
        return -np.minimum(x, 0.0)
    if token == ABS_Y:
        return np.abs(y)
    if token == Y_POS:
        return np.maximum(y, 0.0)
    if token == Y_NEG:
        return -np.minimum(y, 0.0)
    if token.startswith("z"):
        idx = int(token[1:])
        if series.z is None:
            raise ValidationError(f"covariate mask references {token} but series has no z")
        if idx >= series.z.shape[1]:
            raise ValidationError(
                f"covariate mask references {token} but z has only "
                f"{series.z.shape[1]} components"
            )
        return series.z[:, idx]
    raise ValidationError(f"unknown covariate token {token!r}")


def build_regressors(series: LossSeries, mask: tuple) -> np.ndarray:
    """Per-period covariate matrix for one equation.

    Row t holds the masked transforms of the observations of period t-1;
    row 0 is the pre-sample convention (all zeros).
    """
    n = series.n
    out = np.zeros((n, len(mask)))
    for j, token in enumerate(mask):
        out[1:, j] = _transform(series, token)[:-1]
    return out


def _ar1(u: np.ndarray, b: float, y0: float) -> np.ndarray:
    """y_t = u_t + b * y_{t-1} for t = 1..n with y_0 = y0."""
    out, _ = lfilter([1.0], [1.0, -b], u, zi=np.array([b * y0]))
    return out


def _ar1_columns(r: np.ndarray, b: float) -> np.ndarray:
    """Columnwise g_t = r_t + b * g_{t-1} with g_0 = 0."""
    out, _ = lfilter([1.0], [1.0, -b], r, axis=0, zi=np.zeros((1, r.shape[1])))
    return out


def filter_var(spec: ModelSpec, theta_v, series: LossSeries,
               start: StartValues | None = None):
    """Filter the VaR path and its gradient path.

    Returns (v, grad_v) with v of shape (n,) and grad_v of shape (n, p).
    Raises NumericalError if the recursion produces non-finite values.
    """
    theta_v = np.asarray(theta_v, dtype=float)
    if theta_v.shape != (spec.p,):
        raise ValidationError(f"theta_v has length {theta_v.shape[0]}, expected {spec.p}")
    start = resolve_start(start, series, spec.levels)
    w = build_regressors(series, spec.var_covariates)
    omega, loadings, b = theta_v[0], theta_v[1:-1], theta_v[-1]
    u = omega + w @ loadings
    v = _ar1(u, b, start.v0)
    if not np.isfinite(v).all():
        raise NumericalError("non-finite VaR path (parameter explosion)")
    v_lag = np.concatenate(([start.v0], v[:-1]))
    regressors = np.column_stack([np.ones(series.n), w, v_lag])
    grad = _ar1_columns(regressors, b)
    if not np.isfinite(grad).all():
        raise NumericalError("non-finite VaR gradient path")
    return v, grad


def filter_covar(spec: ModelSpec, theta_c, series: LossSeries,
                 v_path=None, start: StartValues | None = None):
    """Filter the CoVaR path and its gradient path for a fixed VaR path.

    ``v_path`` must be supplied when the specification includes the lagged
    VaR in the CoVaR equation; the gradient is taken with respect to
    theta_c only.
    """
    theta_c = np.asarray(theta_c, dtype=float)
    if theta_c.shape != (spec.q,):
        raise ValidationError(f"theta_c has length {theta_c.shape[0]}, expected {spec.q}")
    start = resolve_start(start, series, spec.levels)
    w = build_regressors(series, spec.covar_covariates)
    k = len(spec.covar_covariates)
    omega, loadings, b = theta_c[0], theta_c[1 : 1 + k], theta_c[-1]
    u = omega + w @ loadings
    columns = [np.ones(series.n), w]
    if spec.include_lagged_var_in_covar:
        if v_path is None:
            raise ValidationError("spec includes lagged VaR in the CoVaR equation "
                                  "but no v_path was supplied")
        v_path = np.asarray(v_path, dtype=float)
        if v_path.shape != (series.n,):
            raise ValidationError("v_path length does not match the series")
        v_lag = np.concatenate(([start.v0], v_path[:-1]))
        u = u + theta_c[1 + k] * v_lag
        columns.append(v_lag)
    c = _ar1(u, b, start.c0)
    if not np.isfinite(c).all():
        raise NumericalError("non-finite CoVaR path (parameter explosion)")
    c_lag = np.concatenate(([start.c0], c[:-1]))
    columns.append(c_lag)
    regressors = np.column_stack(columns)
    grad = _ar1_columns(regressors, b)
    if not np.isfinite(grad).all():
        raise NumericalError("non-finite CoVaR gradient path")
    return c, grad


def spectral_radius_ok(theta_v, theta_c, spec: ModelSpec) -> bool:
    """True iff both own-lag coefficients are strictly inside (-1, 1).

    The lag matrix is triangular under the no-lagged-CoVaR-in-VaR
    restriction, so its eigenvalues are the diagonal entries.
    """
    b_v = float(np.asarray(theta_v, dtype=float)[-1])
    b_c = float(np.asarray(theta_c, dtype=float)[-1])
    return max(abs(b_v), abs(b_c)) < 1.0


def default_start_values(series: LossSeries, levels: ProbLevels) -> StartValues:
    """Empirical-quantile starting values.

    v0 is the beta-quantile of x; c0 is the alpha-quantile of y restricted
    to periods with x >= v0, falling back to the unconditional alpha-quantile
    of y when fewer than five such periods exist.
    """
    if series.n < MIN_START_SAMPLE:
        raise ValidationError(
            f"series too short for empirical start values "
            f"({series.n} < {MIN_START_SAMPLE})"
        )
    v0 = float(np.quantile(series.x, levels.beta))
    stressed = series.y[series.x >= v0]
    if stressed.size >= MIN_COVAR_START_EXCEEDANCES:
        c0 = float(np.quantile(stressed, levels.alpha))
    else:
        c0 = float(np.quantile(series.y, levels.alpha))
    return StartValues(v0, c0, policy="empirical_quantile")


def resolve_start(start: StartValues | None, series: LossSeries,
                  levels: ProbLevels) -> StartValues:
    """Materialize the default start-value policy when none is given."""
    if start is None:
        return default_start_values(series, levels)
    return start
