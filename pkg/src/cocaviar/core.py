"""Core data model: loss series, probability levels, model specifications,
parameter layouts and result records shared by all modules.

All value types are frozen dataclasses holding read-only numpy arrays, so
instances can be shared across threads once constructed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "ValidationError",
    "NumericalError",
    "LossSeries",
    "ProbLevels",
    "ModelSpec",
    "ParamSet",
    "RiskPath",
    "FitResult",
    "StartValues",
    "NAMED_VARIANTS",
    "COVARIATE_ORDER",
    "validate_series",
    "expand_spec",
    "canonical_mask",
    "param_roles",
    "paramset_from_flat",
    "flat_from_paramset",
]


class ValidationError(ValueError):
    """Invalid input data, configuration or model specification."""


class NumericalError(RuntimeError):
    """Numerical failure: explosive recursion, singular matrix, failed fit."""


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.flags.writeable = False
    return out


# Canonical covariate column order; z-components are appended as z0, z1, ...
ABS_X, X_POS, X_NEG = "abs_x", "x_pos", "x_neg"
ABS_Y, Y_POS, Y_NEG = "abs_y", "y_pos", "y_neg"
COVARIATE_ORDER = (ABS_X, X_POS, X_NEG, ABS_Y, Y_POS, Y_NEG)


@dataclass(frozen=True)
class LossSeries:
    """Aligned bivariate log-loss observations with optional covariates.

    ``x`` holds the reference-position losses, ``y`` the target losses.
    ``z`` is an optional (n, k) matrix of exogenous covariates and
    ``labels`` an optional tuple of opaque date strings.
    """

    x: np.ndarray
    y: np.ndarray
    z: Optional[np.ndarray] = None
    labels: Optional[tuple] = None

    def __post_init__(self):
        object.__setattr__(self, "x", _readonly(np.atleast_1d(self.x)))
        object.__setattr__(self, "y", _readonly(np.atleast_1d(self.y)))
        if self.z is not None:
            z = np.asarray(self.z, dtype=float)
            if z.ndim == 1:
                z = z[:, None]
            object.__setattr__(self, "z", _readonly(z))
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))

    def __len__(self) -> int:
        return self.x.shape[0]

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def window(self, start: int, stop: int) -> "LossSeries":
        """Contiguous sub-series over observation indices [start, stop)."""
        return LossSeries(
            self.x[start:stop],
            self.y[start:stop],
            None if self.z is None else self.z[start:stop],
            None if self.labels is None else self.labels[start:stop],
        )


def validate_series(series: LossSeries) -> LossSeries:
    """Check series invariants and return the series unchanged.

    Raises ValidationError on length mismatches or the first non-finite
    value (the offending index is reported).
    """
    n = series.x.shape[0]
    if n < 1:
        raise ValidationError("series is empty")
    if series.y.shape[0] != n:
        raise ValidationError(
            f"length mismatch: x has {n} observations, y has {series.y.shape[0]}"
        )
    if series.z is not None and series.z.shape[0] != n:
        raise ValidationError(
            f"length mismatch: x has {n} observations, z has {series.z.shape[0]}"
        )
    if series.labels is not None and len(series.labels) != n:
        raise ValidationError(
            f"length mismatch: x has {n} observations, labels has {len(series.labels)}"
        )
    for name, values in (("x", series.x), ("y", series.y)):
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise ValidationError(f"non-finite value in {name} at t={bad[0]}")
    if series.z is not None:
        bad = np.flatnonzero(~np.isfinite(series.z).all(axis=1))
        if bad.size:
            raise ValidationError(f"non-finite value in z at t={bad[0]}")
    return series


@dataclass(frozen=True)
class ProbLevels:
    """Probability levels: ``beta`` for the VaR of x, ``alpha`` for the
    CoVaR of y given x-stress. Both must lie strictly inside (0, 1)."""

    beta: float
    alpha: float

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise ValidationError(f"beta must be in (0, 1), got {self.beta}")
        if not (0.0 < self.alpha < 1.0):
            raise ValidationError(f"alpha must be in (0, 1), got {self.alpha}")


def canonical_mask(tokens: Sequence[str], n_z: int = 0) -> tuple:
    """Validate covariate tokens and return them in canonical column order."""
    z_names = tuple(f"z{i}" for i in range(n_z))
    allowed = COVARIATE_ORDER + z_names
    seen = set()
    for tok in tokens:
        if tok not in COVARIATE_ORDER and not (tok.startswith("z") and tok[1:].isdigit()):
            raise ValidationError(f"unknown covariate token {tok!r}")
        if tok in seen:
            raise ValidationError(f"duplicate covariate token {tok!r}")
        seen.add(tok)
    order = {name: i for i, name in enumerate(COVARIATE_ORDER)}
    def key(tok):
        if tok in order:
            return (0, order[tok])
        return (1, int(tok[1:]))
    return tuple(sorted(tokens, key=key))


# variant -> (VaR-equation mask, CoVaR-equation mask, lagged VaR in CoVaR eq)
NAMED_VARIANTS = {
    "SAV_diag": ((ABS_X,), (ABS_Y,), False),
    "SAV_fullA": ((ABS_X, ABS_Y), (ABS_X, ABS_Y), False),
    "SAV_full": ((ABS_X, ABS_Y), (ABS_X, ABS_Y), True),
    "AS_pos": ((X_POS, Y_POS), (X_POS, Y_POS), False),
    "AS_signs": ((X_POS, X_NEG), (X_POS, X_NEG, Y_POS, Y_NEG), False),
    "AS_mixed": ((X_POS, X_NEG, ABS_Y), (ABS_X, Y_POS, Y_NEG), False),
}


@dataclass(frozen=True)
class ModelSpec:
    """A (VaR, CoVaR) model specification.

    Each equation always contains an intercept and its own lag; the masks
    list the additional lagged-loss covariates. ``include_lagged_var_in_covar``
    adds the lagged VaR as a regressor of the CoVaR equation, which is only
    legal for SAV_full-style specifications.
    """

    variant: str
    var_covariates: tuple
    covar_covariates: tuple
    include_lagged_var_in_covar: bool
    levels: ProbLevels

    def __post_init__(self):
        object.__setattr__(self, "var_covariates", canonical_mask(self.var_covariates))
        object.__setattr__(self, "covar_covariates", canonical_mask(self.covar_covariates))
        if self.variant in NAMED_VARIANTS:
            vmask, cmask, lagged = NAMED_VARIANTS[self.variant]
            if (
                self.var_covariates != vmask
                or self.covar_covariates != cmask
                or self.include_lagged_var_in_covar != lagged
            ):
                raise ValidationError(
                    f"covariate masks do not match named variant {self.variant!r}"
                )
        elif self.variant != "custom":
            raise ValidationError(f"unknown variant {self.variant!r}")
        if self.include_lagged_var_in_covar and self.variant not in ("SAV_full", "custom"):
            raise ValidationError(
                "lagged VaR in the CoVaR equation is only legal for SAV_full-style specs"
            )

    @property
    def p(self) -> int:
        """Length of the VaR parameter vector."""
        return 2 + len(self.var_covariates)

    @property
    def q(self) -> int:
        """Length of the CoVaR parameter vector."""
        return 2 + len(self.covar_covariates) + int(self.include_lagged_var_in_covar)


def expand_spec(variant: str, levels: ProbLevels) -> ModelSpec:
    """Expand a named variant into its full covariate masks."""
    if variant not in NAMED_VARIANTS:
        raise ValidationError(f"unknown variant {variant!r}")
    vmask, cmask, lagged = NAMED_VARIANTS[variant]
    return ModelSpec(variant, vmask, cmask, lagged, levels)


def param_roles(spec: ModelSpec) -> tuple:
    """(VaR-equation roles, CoVaR-equation roles) position-by-position."""
    var_roles = ("intercept",) + spec.var_covariates + ("lag_var",)
    covar_roles = ("intercept",) + spec.covar_covariates
    if spec.include_lagged_var_in_covar:
        covar_roles += ("lag_var",)
    covar_roles += ("lag_covar",)
    return var_roles, covar_roles


@dataclass(frozen=True)
class ParamSet:
    """Parameter vectors for both equations with their position-to-role map.

    Layout per equation: intercept, covariate loadings in mask order, then
    (for the CoVaR equation, if present) the lagged-VaR coefficient, and the
    own-lag coefficient last.
    """

    theta_v: np.ndarray
    theta_c: np.ndarray
    var_roles: tuple
    covar_roles: tuple

    def __post_init__(self):
        object.__setattr__(self, "theta_v", _readonly(self.theta_v))
        object.__setattr__(self, "theta_c", _readonly(self.theta_c))
        if self.theta_v.shape != (len(self.var_roles),):
            raise ValidationError(
                f"theta_v has length {self.theta_v.shape[0]}, "
                f"layout expects {len(self.var_roles)}"
            )
        if self.theta_c.shape != (len(self.covar_roles),):
            raise ValidationError(
                f"theta_c has length {self.theta_c.shape[0]}, "
                f"layout expects {len(self.covar_roles)}"
            )

    @classmethod
    def for_spec(cls, spec: ModelSpec, theta_v, theta_c) -> "ParamSet":
        var_roles, covar_roles = param_roles(spec)
        return cls(np.asarray(theta_v, float), np.asarray(theta_c, float),
                   var_roles, covar_roles)

    @property
    def own_lag_var(self) -> float:
        return float(self.theta_v[-1])

    @property
    def own_lag_covar(self) -> float:
        return float(self.theta_c[-1])


def paramset_from_flat(spec: ModelSpec, flat) -> ParamSet:
    """Split a flat (p+q)-vector into a ParamSet for ``spec``."""
    flat = np.asarray(flat, dtype=float)
    if flat.shape != (spec.p + spec.q,):
        raise ValidationError(
            f"flat vector has length {flat.shape[0]}, expected {spec.p + spec.q}"
        )
    return ParamSet.for_spec(spec, flat[: spec.p], flat[spec.p:])


def flat_from_paramset(params: ParamSet) -> np.ndarray:
    """Concatenate both parameter vectors back into one flat vector."""
    return np.concatenate([params.theta_v, params.theta_c])


@dataclass(frozen=True)
class StartValues:
    """Initial values of the (VaR, CoVaR) recursion at t=0."""

    v0: float
    c0: float
    policy: str = "explicit"

    def __post_init__(self):
        if self.policy not in ("explicit", "empirical_quantile"):
            raise ValidationError(f"unknown start-value policy {self.policy!r}")
        if not (np.isfinite(self.v0) and np.isfinite(self.c0)):
            raise ValidationError("start values must be finite")


@dataclass(frozen=True)
class RiskPath:
    """Fitted in-sample (VaR, CoVaR) paths and their parameter gradients."""

    v: np.ndarray
    c: np.ndarray
    grad_v: np.ndarray
    grad_c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v", _readonly(self.v))
        object.__setattr__(self, "c", _readonly(self.c))
        object.__setattr__(self, "grad_v", _readonly(self.grad_v))
        object.__setattr__(self, "grad_c", _readonly(self.grad_c))
        n = self.v.shape[0]
        if not (
            self.c.shape[0] == n
            and self.grad_v.shape[0] == n
            and self.grad_c.shape[0] == n
        ):
            raise ValidationError("path components have mismatching lengths")
        if not (np.isfinite(self.grad_v).all() and np.isfinite(self.grad_c).all()):
            raise ValidationError("non-finite gradient path")

    @property
    def n(self) -> int:
        return self.v.shape[0]


@dataclass(frozen=True)
class FitResult:
    """Two-step estimation output: estimates, scores, covariances, SEs."""

    params: ParamSet
    avg_score_var: float
    avg_score_covar: float
    cov_v: np.ndarray
    cov_c: np.ndarray
    cov_joint: np.ndarray
    se_v: np.ndarray
    se_c: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("cov_v", "cov_c", "cov_joint", "se_v", "se_c"):
            object.__setattr__(self, name, _readonly(getattr(self, name)))
        for name in ("cov_v", "cov_c", "cov_joint"):
            m = getattr(self, name)
            if not np.allclose(m, m.T, atol=1e-8, rtol=1e-8, equal_nan=True):
                raise ValidationError(f"{name} is not symmetric")
            if np.any(np.diag(m) < -1e-12):
                raise ValidationError(f"{name} has negative diagonal entries")
