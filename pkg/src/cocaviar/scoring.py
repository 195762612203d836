"""Bivariate scoring of (VaR, CoVaR) reports and the lexicographic order
used both for estimation and for forecast comparison.

The VaR component is the standard tick loss. The CoVaR component has the
same shape but is gated to periods with a strict VaR exceedance of x.
Ties x == v therefore count as non-exceedance.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import LossSeries, ProbLevels, RiskPath, ValidationError

__all__ = ["ScorePair", "Ordering", "score_var", "score_covar", "average_scores",
           "lex_compare", "score_var_path", "score_covar_path"]


class Ordering(enum.IntEnum):
    LESS = -1
    EQUAL = 0
    GREATER = 1


@dataclass(frozen=True)
class ScorePair:
    """Non-negative (VaR score, CoVaR score) pair."""

    s_var: float
    s_covar: float

    def __post_init__(self):
        if not (np.isfinite(self.s_var) and np.isfinite(self.s_covar)):
            raise ValidationError("score components must be finite")
        if self.s_var < 0 or self.s_covar < 0:
            raise ValidationError("score components must be non-negative")


def _check_level(name, value):
    if not (0.0 < value < 1.0):
        raise ValidationError(f"{name} must be in (0, 1), got {value}")


def score_var(v, x, beta):
    """Tick loss (1{x <= v} - beta) * (v - x); non-negative, zero iff v == x."""
    _check_level("beta", beta)
    v = np.asarray(v, dtype=float)
    x = np.asarray(x, dtype=float)
    out = ((x <= v).astype(float) - beta) * (v - x)
    return float(out) if out.ndim == 0 else out


def score_covar(v, c, x, y, alpha):
    """Gated tick loss 1{x > v} * (1{y <= c} - alpha) * (c - y).

    Exactly zero whenever x <= v, regardless of the CoVaR report.
    """
    _check_level("alpha", alpha)
    v = np.asarray(v, dtype=float)
    c = np.asarray(c, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = (x > v).astype(float) * ((y <= c).astype(float) - alpha) * (c - y)
    return float(out) if out.ndim == 0 else out


def score_var_path(v, x, beta):
    """Per-period VaR scores for aligned arrays."""
    return score_var(v, x, beta)


def score_covar_path(v, c, x, y, alpha):
    """Per-period CoVaR scores for aligned arrays."""
    return score_covar(v, c, x, y, alpha)


def average_scores(series: LossSeries, path: RiskPath, levels: ProbLevels) -> ScorePair:
    """Componentwise mean scores of a fitted path over the whole sample."""
    n = series.n
    if n == 0:
        raise ValidationError("series is empty")
    if path.n != n:
        raise ValidationError(f"path length {path.n} does not match series length {n}")
    s_var = float(np.mean(score_var(path.v, series.x, levels.beta)))
    s_covar = float(np.mean(score_covar(path.v, path.c, series.x, series.y, levels.alpha)))
    return ScorePair(s_var, s_covar)


def lex_compare(a: ScorePair, b: ScorePair, tolerance_var: float = 0.0) -> Ordering:
    """Lexicographic comparison of score pairs.

    The first components are compared up to ``tolerance_var``; within that
    band the second components decide. Estimation uses tolerance 0; forecast
    evaluation replaces the band with a significance test.
    """
    if tolerance_var < 0:
        raise ValidationError("tolerance_var must be >= 0")
    if a.s_var < b.s_var - tolerance_var:
        return Ordering.LESS
    if b.s_var < a.s_var - tolerance_var:
        return Ordering.GREATER
    if a.s_covar < b.s_covar:
        return Ordering.LESS
    if b.s_covar < a.s_covar:
        return Ordering.GREATER
    return Ordering.EQUAL
