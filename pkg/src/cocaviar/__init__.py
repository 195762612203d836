"""Joint dynamic modeling, two-step estimation, inference, simulation,
forecasting and backtesting of the (VaR, CoVaR) pair."""

from .core import (
    FitResult,
    LossSeries,
    ModelSpec,
    NumericalError,
    ParamSet,
    ProbLevels,
    RiskPath,
    StartValues,
    ValidationError,
    expand_spec,
    flat_from_paramset,
    param_roles,
    paramset_from_flat,
    validate_series,
)
from .scoring import Ordering, ScorePair, average_scores, lex_compare, score_covar, score_var
from .dynamics import (
    build_regressors,
    default_start_values,
    filter_covar,
    filter_var,
    spectral_radius_ok,
)
from .estimation import FitDiagnostics, OptimizerConfig, fit_covar, fit_two_step, fit_var
from .inference import (
    AvarComponents,
    assemble_covariances,
    bandwidths,
    estimate_components,
    estimate_Cstar,
    estimate_Lambda,
    estimate_Lambda1,
    estimate_Lambda2,
    estimate_V,
    quantile_spacing,
)
from .simulation import (
    EcccParams,
    Innovation,
    McConfig,
    McStudyResult,
    innovation_covar,
    innovation_var,
    run_mc_study,
    sample_innovations,
    section_three_dgp,
    simulate_eccc,
    true_risk_params,
)
from .garch import (
    CovMatrix2,
    benchmark_forecast,
    chol_lower,
    covar_from_sigma,
    fit_ccc_garch,
    sym_sqrt,
    var_from_sigma,
)
from .backtest import (
    BenchmarkModel,
    ForecastRecord,
    TrafficZone,
    dm_test,
    hit_stats,
    record_scores,
    rolling_forecast,
    traffic_light,
)

__version__ = "0.1.0"
