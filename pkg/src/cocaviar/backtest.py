"""Rolling-window forecasting protocol and forecast comparison.

Forecasts at time t use only information before t. Models are re-estimated
every ``refit_every`` origins; between refits the fitted recursion (or the
fitted variance recursion of the benchmark) is filtered forward over the
incoming observations with fixed parameters.

Comparison follows a one-and-a-half-sided scheme on the bivariate score:
CoVaR scores are only compared once the VaR scores are statistically tied,
because the lexicographic order makes second-component comparisons
meaningful only at equal first components. Zones: red / grey decide on the
VaR stage (baseline / alternative significantly better), orange / green /
yellow on the CoVaR stage.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.stats import norm

from . import garch
from .core import (
    LossSeries,
    ModelSpec,
    NumericalError,
    ProbLevels,
    ValidationError,
    validate_series,
)
from .dynamics import default_start_values, filter_covar, filter_var
from .estimation import OptimizerConfig, fit_covar, fit_var
from .scoring import score_covar, score_var

__all__ = [
    "ForecastRecord",
    "TrafficZone",
    "BenchmarkModel",
    "rolling_forecast",
    "hit_stats",
    "record_scores",
    "dm_test",
    "traffic_light",
    "ZONES",
]

log = logging.getLogger(__name__)

ZONES = ("red", "grey", "orange", "green", "yellow")
MIN_DM_SAMPLE = 30
# score differences below this relative size are numerical noise, not signal
_NOISE_REL_TOL = 1e-12


@dataclass(frozen=True)
class ForecastRecord:
    """One out-of-sample period: forecasts made strictly before t plus the
    realized losses."""

    t: int
    v_forecast: float
    c_forecast: float
    x: float
    y: float
    model_id: str
    label: Optional[str] = None


@dataclass(frozen=True)
class TrafficZone:
    """Comparison verdict. p_covar is present iff the CoVaR stage ran."""

    zone: str
    p_var: float
    p_covar: Optional[float] = None

    def __post_init__(self):
        if self.zone not in ZONES:
            raise ValidationError(f"unknown zone {self.zone!r}")
        if not (0.0 <= self.p_var <= 1.0):
            raise ValidationError("p_var must lie in [0, 1]")
        if (self.p_covar is None) != (self.zone in ("red", "grey")):
            raise ValidationError("p_covar must be present iff the CoVaR stage ran")


@dataclass(frozen=True)
class BenchmarkModel:
    """Selector for the multivariate-GARCH benchmark."""

    decomposition: str
    levels: ProbLevels

    def __post_init__(self):
        garch.decompose(garch.CovMatrix2(1.0, 1.0, 0.0), self.decomposition)

    @property
    def model_id(self) -> str:
        return f"ccc-garch-{self.decomposition}"


def _cocaviar_block_forecasts(series, spec, theta_v, theta_c, start,
                              win_start, t0, t_end):
    """In-block one-step forecasts: filter once over [win_start, t_end) and
    read off positions t0 - win_start .. t_end - 1 - win_start."""
    sub = series.window(win_start, t_end)
    v_path, _ = filter_var(spec, theta_v, sub, start)
    c_path, _ = filter_covar(spec, theta_c, sub, v_path=v_path, start=start)
    offset = t0 - win_start
    return v_path[offset:], c_path[offset:]


def _garch_block_forecasts(series, model, fit, win_start, t0, t_end):
    """Continue both variance recursions with fixed parameters over the
    block and extract quantile forecasts from the fit-window residuals."""
    x = series.x[win_start:t_end]
    y = series.y[win_start:t_end]
    sig2x = garch._garch_sig2(x * x, fit.fit_x.omega, fit.fit_x.alpha,
                              fit.fit_x.beta, float(np.mean((x * x)[: t0 - win_start])))
    sig2y = garch._garch_sig2(y * y, fit.fit_y.omega, fit.fit_y.alpha,
                              fit.fit_y.beta, float(np.mean((y * y)[: t0 - win_start])))
    vs, cs = [], []
    for pos in range(t0 - win_start, t_end - win_start):
        h = garch.CovMatrix2(
            float(sig2x[pos]), float(sig2y[pos]),
            fit.rho * math.sqrt(float(sig2x[pos]) * float(sig2y[pos])),
        )
        sigma = garch.decompose(h, model.decomposition)
        v = garch.var_from_sigma(sigma, fit.residuals, model.levels.beta)
        c = garch.covar_from_sigma(sigma, fit.residuals, v, model.levels.alpha)
        vs.append(v)
        cs.append(c)
    return np.array(vs), np.array(cs)


def rolling_forecast(series: LossSeries,
                     model: Union[ModelSpec, BenchmarkModel],
                     window: int,
                     refit_every: int = 100,
                     opt: OptimizerConfig | None = None) -> list:
    """One-step-ahead forecasts for every t in (window, n].

    Parameters are re-estimated at origins window, window + refit_every, ...
    on the trailing ``window`` observations; a failed refit carries the
    previous parameters forward and is logged. Returns ForecastRecords.
    """
    validate_series(series)
    n = series.n
    if not (0 < window < n):
        raise ValidationError(f"window must lie in (0, n); got {window} with n={n}")
    if refit_every < 1:
        raise ValidationError("refit_every must be >= 1")
    is_cocaviar = isinstance(model, ModelSpec)
    opt = opt or OptimizerConfig()
    model_id = f"cocaviar-{model.variant}" if is_cocaviar else model.model_id

    records = []
    state = None
    carried = 0
    for t0 in range(window, n, refit_every):
        t_end = min(t0 + refit_every, n)
        win_start = t0 - window
        fit_window = series.window(win_start, t0)
        try:
            if is_cocaviar:
                start = default_start_values(fit_window, model.levels)
                theta_v, _ = fit_var(model, fit_window, opt, start)
                theta_c, _ = fit_covar(model, fit_window, theta_v, opt, start)
                state = (theta_v, theta_c, start)
            else:
                state = garch.fit_ccc_garch(fit_window)
        except (ValidationError, NumericalError) as exc:
            if state is None:
                raise NumericalError(
                    f"first refit at origin {t0} failed: {exc}"
                ) from exc
            carried += 1
            log.warning("refit at origin %d failed (%s); carrying previous "
                        "parameters forward", t0, exc)
        if is_cocaviar:
            theta_v, theta_c, start = state
            vs, cs = _cocaviar_block_forecasts(
                series, model, theta_v, theta_c, start, win_start, t0, t_end
            )
        else:
            vs, cs = _garch_block_forecasts(series, model, state, win_start, t0, t_end)
        for i, t in enumerate(range(t0, t_end)):
            records.append(ForecastRecord(
                t=t,
                v_forecast=float(vs[i]),
                c_forecast=float(cs[i]),
                x=float(series.x[t]),
                y=float(series.y[t]),
                model_id=model_id,
                label=None if series.labels is None else series.labels[t],
            ))
    if carried:
        log.warning("%d of %d refits carried previous parameters forward",
                    carried, math.ceil((n - window) / refit_every))
    return records


def hit_stats(records: Sequence[ForecastRecord], levels: ProbLevels):
    """(VaR hit rate, CoVaR hit rate among VaR-hit periods).

    A VaR hit is x >= v_forecast; the CoVaR rate is None when no VaR hit
    occurred.
    """
    if len(records) == 0:
        raise ValidationError("no forecast records")
    x = np.array([r.x for r in records])
    y = np.array([r.y for r in records])
    v = np.array([r.v_forecast for r in records])
    c = np.array([r.c_forecast for r in records])
    var_hits = x >= v
    var_rate = float(np.mean(var_hits))
    if not var_hits.any():
        return var_rate, None
    covar_rate = float(np.mean(y[var_hits] >= c[var_hits]))
    return var_rate, covar_rate


def record_scores(records: Sequence[ForecastRecord], levels: ProbLevels):
    """Per-record (VaR score, CoVaR score) streams of a forecast sequence."""
    v = np.array([r.v_forecast for r in records])
    c = np.array([r.c_forecast for r in records])
    x = np.array([r.x for r in records])
    y = np.array([r.y for r in records])
    return (
        score_var(v, x, levels.beta),
        score_covar(v, c, x, y, levels.alpha),
    )


def dm_test(score_diffs, hac_lags: int | None = None):
    """Diebold-Mariano test of zero mean score difference.

    Returns (statistic, two_sided_p). The long-run variance uses a Bartlett
    kernel with ``hac_lags`` lags (default floor(N^(1/3))). Exactly-zero or
    noise-level differences short-circuit to (0, 1); a genuinely constant
    nonzero difference has no long-run variance and raises NumericalError.
    """
    d = np.asarray(score_diffs, dtype=float)
    n = d.shape[0]
    if n < MIN_DM_SAMPLE:
        raise ValidationError(f"need at least {MIN_DM_SAMPLE} score differences, got {n}")
    if not np.isfinite(d).all():
        raise ValidationError("score differences contain non-finite values")
    scale = float(np.max(np.abs(d), initial=0.0))
    if scale <= 1e-12:
        # exactly-zero or double-precision-noise differences carry no signal
        return 0.0, 1.0
    if hac_lags is None:
        hac_lags = int(np.floor(n ** (1.0 / 3.0)))
    if hac_lags < 0:
        raise ValidationError("hac_lags must be >= 0")
    dbar = float(np.mean(d))
    centered = d - dbar
    lrv = float(np.mean(centered**2))
    for k in range(1, hac_lags + 1):
        weight = 1.0 - k / (hac_lags + 1.0)
        lrv += 2.0 * weight * float(np.mean(centered[k:] * centered[:-k]))
    if lrv <= 0.0 or math.sqrt(max(lrv, 0.0)) <= _NOISE_REL_TOL * scale:
        raise NumericalError("zero long-run variance: score differences are constant")
    stat = dbar / math.sqrt(lrv / n)
    p = 2.0 * float(norm.sf(abs(stat)))
    return float(stat), p


def _aligned_records(base, alt):
    if len(base) != len(alt):
        raise ValidationError("record sequences have different lengths")
    if len(base) == 0:
        raise ValidationError("no forecast records")
    for rb, ra in zip(base, alt):
        if rb.t != ra.t or rb.x != ra.x or rb.y != ra.y:
            raise ValidationError(
                f"records are not aligned at t={rb.t}: differing periods or realizations"
            )


def _diff_is_noise(d, sb, sa):
    mag = float(np.max(np.abs(sb), initial=0.0) + np.max(np.abs(sa), initial=0.0))
    return float(np.max(np.abs(d), initial=0.0)) <= _NOISE_REL_TOL * max(mag, 1.0)


def traffic_light(records_base: Sequence[ForecastRecord],
                  records_alt: Sequence[ForecastRecord],
                  levels: ProbLevels,
                  significance: float = 0.10,
                  hac_lags: int | None = None) -> TrafficZone:
    """Two-stage comparison of an alternative model against a baseline.

    Stage one tests the VaR score differences (alternative minus baseline):
    a significant difference ends the comparison in red (baseline better)
    or grey (alternative better). Otherwise stage two tests the CoVaR score
    differences: orange (baseline better), green (alternative better) or
    yellow (tied).
    """
    if not (0.0 < significance < 1.0):
        raise ValidationError("significance must be in (0, 1)")
    _aligned_records(records_base, records_alt)
    sv_base, sc_base = record_scores(records_base, levels)
    sv_alt, sc_alt = record_scores(records_alt, levels)

    d_var = sv_alt - sv_base
    if _diff_is_noise(d_var, sv_base, sv_alt):
        stat_v, p_var = 0.0, 1.0
    else:
        stat_v, p_var = dm_test(d_var, hac_lags)
    if p_var < significance:
        zone = "red" if stat_v > 0 else "grey"
        return TrafficZone(zone=zone, p_var=p_var, p_covar=None)

    d_covar = sc_alt - sc_base
    if _diff_is_noise(d_covar, sc_base, sc_alt):
        stat_c, p_covar = 0.0, 1.0
    else:
        stat_c, p_covar = dm_test(d_covar, hac_lags)
    if p_covar < significance:
        zone = "orange" if stat_c > 0 else "green"
    else:
        zone = "yellow"
    return TrafficZone(zone=zone, p_var=p_var, p_covar=p_covar)
