"""Two-step M-estimation of the (VaR, CoVaR) model parameters.

Step one minimizes the average tick loss of the VaR equation over theta_v.
Step two plugs the fitted VaR path in and minimizes the average gated
CoVaR loss over theta_c. Both objectives are piecewise linear in the
paths and discontinuous in the parameters, so a derivative-free simplex
search with multiple restarts is used: one moment-matched start plus
uniform draws inside a box that keeps the recursions stable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from . import inference
from .core import (
    FitResult,
    LossSeries,
    ModelSpec,
    NumericalError,
    ParamSet,
    RiskPath,
    StartValues,
    ValidationError,
    validate_series,
)
from .dynamics import build_regressors, filter_covar, filter_var, resolve_start
from .scoring import average_scores

__all__ = ["OptimizerConfig", "FitDiagnostics", "fit_var", "fit_covar", "fit_two_step"]

_BAD_OBJECTIVE = 1e100

# Minimum effective samples: n >= 10 p for the VaR step, and at least
# max(10 q, 20) strict VaR exceedances for the CoVaR step.
MIN_OBS_PER_PARAM = 10
MIN_COVAR_EXCEEDANCES = 20


@dataclass(frozen=True)
class OptimizerConfig:
    """Multi-start simplex settings and box constraints.

    ``bounds_var`` / ``bounds_covar`` override the default box (a pinned
    coordinate is expressed as an equal lower and upper bound). The default
    box puts intercepts within ``intercept_mad_mult`` sample MADs of zero,
    loadings within ``loading_bound`` and lag coefficients within
    ``stationarity_cap`` in absolute value.
    """

    restarts: int = 10
    max_iters: int = 4000
    fatol: float = 1e-9
    xatol: float = 1e-6
    seed: int = 0
    bounds_var: Optional[Sequence] = None
    bounds_covar: Optional[Sequence] = None
    stationarity_cap: float = 0.999
    loading_bound: float = 2.0
    intercept_mad_mult: float = 10.0
    own_lag_bounds: Optional[tuple] = None

    def __post_init__(self):
        if self.restarts < 1:
            raise ValidationError("restarts must be >= 1")
        if self.fatol <= 0 or self.xatol <= 0:
            raise ValidationError("tolerances must be > 0")
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")


@dataclass(frozen=True)
class FitDiagnostics:
    """Per-equation optimizer trace."""

    objective: float
    restarts: int
    best_restart: int
    initial_objectives: tuple
    restart_objectives: tuple
    iterations: tuple
    converged: tuple
    n_failed: int

    @property
    def any_converged(self) -> bool:
        return any(self.converged)


def _mad(values: np.ndarray) -> float:
    med = np.median(values)
    return float(np.median(np.abs(values - med)))


def _default_bounds(n_loadings: int, intercept_scale: float, cfg: OptimizerConfig,
                    extra_loading: int = 0):
    # extra_loading covers the lagged-VaR coefficient of the CoVaR equation,
    # which is a loading on a persistent regressor, not an own lag.
    half = max(cfg.intercept_mad_mult * intercept_scale, 1e-6)
    bounds = [(-half, half)]
    bounds += [(-cfg.loading_bound, cfg.loading_bound)] * (n_loadings + extra_loading)
    lag = cfg.own_lag_bounds or (-cfg.stationarity_cap, cfg.stationarity_cap)
    bounds += [tuple(lag)]
    return bounds


def _restart_points(bounds, moment_start, restarts, rng):
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    points = [np.clip(np.asarray(moment_start, dtype=float), lo, hi)]
    for _ in range(restarts - 1):
        points.append(lo + (hi - lo) * rng.uniform(size=len(bounds)))
    return points


def _run_restarts(objective, starts, bounds, cfg: OptimizerConfig):
    """Run the simplex from every start and keep the best finite result.

    Ties in the objective are broken by the smaller parameter norm, then by
    restart order, so results do not depend on scheduling.
    """
    results = []
    initial = []
    for i, x0 in enumerate(starts):
        f0 = objective(x0)
        initial.append(f0)
        res = minimize(
            objective,
            x0,
            method="Nelder-Mead",
            bounds=bounds,
            options={
                "maxiter": cfg.max_iters,
                "maxfev": cfg.max_iters,
                "fatol": cfg.fatol,
                "xatol": cfg.xatol,
                "adaptive": len(x0) > 3,
            },
        )
        results.append((res, i))
    finite = [(res, i) for res, i in results if np.isfinite(res.fun) and res.fun < _BAD_OBJECTIVE]
    n_failed = len(results) - len(finite)
    if not finite:
        raise NumericalError("all optimizer restarts failed to produce a finite objective")
    best_res, best_i = min(
        finite, key=lambda ri: (ri[0].fun, float(np.linalg.norm(ri[0].x)), ri[1])
    )
    diag = FitDiagnostics(
        objective=float(best_res.fun),
        restarts=len(starts),
        best_restart=best_i,
        initial_objectives=tuple(float(f) for f in initial),
        restart_objectives=tuple(float(res.fun) for res, _ in results),
        iterations=tuple(int(res.nit) for res, _ in results),
        converged=tuple(bool(res.success) for res, _ in results),
        n_failed=n_failed,
    )
    return np.asarray(best_res.x, dtype=float), diag


def _var_objective_factory(w, x, beta, v0):
    def objective(theta):
        u = theta[0] + w @ theta[1:-1]
        v, _ = lfilter([1.0], [1.0, -theta[-1]], u, zi=np.array([theta[-1] * v0]))
        if not np.isfinite(v).all():
            return _BAD_OBJECTIVE
        return float(np.mean(((x <= v) - beta) * (v - x)))

    return objective


def _covar_objective_factory(w, v_lag, x, y, v_path, alpha, c0):
    gate = (x > v_path).astype(float)
    k = w.shape[1]

    def objective(theta):
        u = theta[0] + w @ theta[1 : 1 + k]
        if v_lag is not None:
            u = u + theta[1 + k] * v_lag
        c, _ = lfilter([1.0], [1.0, -theta[-1]], u, zi=np.array([theta[-1] * c0]))
        if not np.isfinite(c).all():
            return _BAD_OBJECTIVE
        return float(np.mean(gate * ((y <= c) - alpha) * (c - y)))

    return objective


def fit_var(spec: ModelSpec, series: LossSeries, opt: OptimizerConfig | None = None,
            start: StartValues | None = None):
    """First-step estimator: minimize the average VaR tick loss.

    Returns (theta_v_hat, FitDiagnostics). Independent of the CoVaR level
    and of the CoVaR covariate mask by construction.
    """
    opt = opt or OptimizerConfig()
    validate_series(series)
    if series.n < MIN_OBS_PER_PARAM * spec.p:
        raise ValidationError(
            f"need at least {MIN_OBS_PER_PARAM * spec.p} observations "
            f"to fit {spec.p} VaR parameters, got {series.n}"
        )
    start = resolve_start(start, series, spec.levels)
    w = build_regressors(series, spec.var_covariates)
    objective = _var_objective_factory(w, series.x, spec.levels.beta, start.v0)
    bounds = opt.bounds_var
    if bounds is None:
        bounds = _default_bounds(len(spec.var_covariates), _mad(series.x), opt)
    elif len(bounds) != spec.p:
        raise ValidationError(f"bounds_var must have {spec.p} entries")
    moment_start = np.array(
        [np.quantile(series.x, spec.levels.beta)]
        + [0.05] * len(spec.var_covariates)
        + [0.85]
    )
    rng = np.random.default_rng(np.random.SeedSequence((opt.seed, 0)))
    starts = _restart_points(bounds, moment_start, opt.restarts, rng)
    return _run_restarts(objective, starts, bounds, opt)


def fit_covar(spec: ModelSpec, series: LossSeries, theta_v_hat,
              opt: OptimizerConfig | None = None, start: StartValues | None = None):
    """Second-step estimator with the fitted VaR path plugged in.

    Returns (theta_c_hat, FitDiagnostics). Requires enough strict VaR
    exceedances for the gated objective to carry information.
    """
    opt = opt or OptimizerConfig()
    validate_series(series)
    start = resolve_start(start, series, spec.levels)
    v_path, _ = filter_var(spec, theta_v_hat, series, start)
    n_exc = int(np.sum(series.x > v_path))
    needed = max(MIN_OBS_PER_PARAM * spec.q, MIN_COVAR_EXCEEDANCES)
    if n_exc < needed:
        raise ValidationError(
            f"too few VaR exceedances to fit the CoVaR equation: "
            f"{n_exc} < {needed} (effective sample (1-beta)*n too small)"
        )
    w = build_regressors(series, spec.covar_covariates)
    v_lag = None
    if spec.include_lagged_var_in_covar:
        v_lag = np.concatenate(([start.v0], v_path[:-1]))
    objective = _covar_objective_factory(
        w, v_lag, series.x, series.y, v_path, spec.levels.alpha, start.c0
    )
    bounds = opt.bounds_covar
    if bounds is None:
        bounds = _default_bounds(
            len(spec.covar_covariates), _mad(series.y), opt,
            extra_loading=int(spec.include_lagged_var_in_covar),
        )
    elif len(bounds) != spec.q:
        raise ValidationError(f"bounds_covar must have {spec.q} entries")
    stressed = series.y[series.x > v_path]
    moment_intercept = np.quantile(stressed, spec.levels.alpha)
    moment_start = np.array(
        [moment_intercept]
        + [0.05] * len(spec.covar_covariates)
        + ([0.05] if spec.include_lagged_var_in_covar else [])
        + [0.85]
    )
    rng = np.random.default_rng(np.random.SeedSequence((opt.seed, 1)))
    starts = _restart_points(bounds, moment_start, opt.restarts, rng)
    return _run_restarts(objective, starts, bounds, opt)


def fit_two_step(spec: ModelSpec, series: LossSeries,
                 opt: OptimizerConfig | None = None,
                 start: StartValues | None = None,
                 with_inference: bool = True) -> FitResult:
    """Full two-step fit with asymptotic covariance estimation.

    Set ``with_inference=False`` to skip the kernel variance step (useful
    in rolling forecasts where only the point estimates are needed); the
    covariance fields are then NaN.
    """
    opt = opt or OptimizerConfig()
    validate_series(series)
    start = resolve_start(start, series, spec.levels)
    theta_v, diag_v = fit_var(spec, series, opt, start)
    theta_c, diag_c = fit_covar(spec, series, theta_v, opt, start)
    params = ParamSet.for_spec(spec, theta_v, theta_c)
    v, grad_v = filter_var(spec, theta_v, series, start)
    c, grad_c = filter_covar(spec, theta_c, series, v_path=v, start=start)
    path = RiskPath(v, c, grad_v, grad_c)
    scores = average_scores(series, path, spec.levels)
    diagnostics = {"var": diag_v, "covar": diag_c, "start": start}
    if with_inference:
        components = inference.estimate_components(series, path, spec.levels)
        cov_v, cov_c, cov_joint = inference.assemble_covariances(components, series.n)
        se_v = np.sqrt(np.diag(cov_v))
        se_c = np.sqrt(np.diag(cov_c))
        diagnostics["bandwidths"] = (components.bw_x, components.bw_y)
    else:
        p, q = spec.p, spec.q
        cov_v = np.full((p, p), np.nan)
        cov_c = np.full((q, q), np.nan)
        cov_joint = np.full((p + q, p + q), np.nan)
        se_v = np.full(p, np.nan)
        se_c = np.full(q, np.nan)
    return FitResult(
        params=params,
        avg_score_var=scores.s_var,
        avg_score_covar=scores.s_covar,
        cov_v=cov_v,
        cov_c=cov_c,
        cov_joint=cov_joint,
        se_v=se_v,
        se_c=se_c,
        diagnostics=diagnostics,
    )
