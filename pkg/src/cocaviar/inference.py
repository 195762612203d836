"""Consistent estimation of the asymptotic covariance matrices of the
two-step estimator.

All kernel terms use a rectangular kernel with data-driven bandwidths
built from the sample median absolute deviation of the fitted residuals.
The two-step structure shows up in the CoVaR covariance: plugging in the
first-stage estimate inflates the variance through the cross term
Lambda2, and the assembled covariance is

    cov_v = Lambda^-1 V Lambda^-1 / n
    cov_c = Gamma C Gamma' / n,   Gamma = [L1^-1 L2 Lambda^-1 | -L1^-1],
                                  C = blockdiag(V, C*).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .core import LossSeries, NumericalError, ProbLevels, RiskPath, ValidationError

__all__ = [
    "AvarComponents",
    "quantile_spacing",
    "bandwidths",
    "estimate_V",
    "estimate_Lambda",
    "estimate_Cstar",
    "estimate_Lambda1",
    "estimate_Lambda2",
    "estimate_components",
    "assemble_covariances",
]

MAX_CONDITION_NUMBER = 1e12


@dataclass(frozen=True)
class AvarComponents:
    """Plug-in pieces of the asymptotic covariances.

    V_hat, Lambda_hat are p x p; Cstar_hat, Lambda1_hat are q x q;
    Lambda2_hat is q x p. Bandwidths are the rectangular-kernel half-widths
    used for the density terms.
    """

    V_hat: np.ndarray
    Lambda_hat: np.ndarray
    Cstar_hat: np.ndarray
    Lambda1_hat: np.ndarray
    Lambda2_hat: np.ndarray
    bw_x: float
    bw_y: float

    def __post_init__(self):
        if not (self.bw_x > 0 and self.bw_y > 0):
            raise ValidationError("bandwidths must be positive")
        if not (np.isfinite(self.bw_x) and np.isfinite(self.bw_y)):
            raise ValidationError("bandwidths must be finite")


def quantile_spacing(n: float, tau: float) -> float:
    """Half-width m(n, tau) of the quantile window used by the bandwidth rule:

        m(n, tau) = n^(-1/3) * z_0.975^(2/3)
                    * [1.5 * phi(z_tau)^2 / (2 z_tau^2 + 1)]^(1/3)

    with z_tau the standard normal tau-quantile.
    """
    if n <= 0:
        raise ValidationError("sample size for the bandwidth rule must be positive")
    z_tau = norm.ppf(tau)
    return float(
        n ** (-1.0 / 3.0)
        * norm.ppf(0.975) ** (2.0 / 3.0)
        * (1.5 * norm.pdf(z_tau) ** 2 / (2.0 * z_tau**2 + 1.0)) ** (1.0 / 3.0)
    )


def _mad(values: np.ndarray) -> float:
    med = np.median(values)
    return float(np.median(np.abs(values - med)))


def bandwidths(series: LossSeries, path: RiskPath, levels: ProbLevels):
    """Data-driven rectangular-kernel bandwidths (bw_x, bw_y).

    bw_x scales the MAD of the VaR residuals by the normal quantile spacing
    at level beta; bw_y does the same for the CoVaR residuals at level
    alpha, with the effective sample size (1 - beta) * n.

    Raises NumericalError when the quantile window leaves (0, 1) (sample
    too small for the level) or when a residual MAD is zero.
    """
    n = series.n
    beta, alpha = levels.beta, levels.alpha
    m_x = quantile_spacing(n, beta)
    if beta + m_x >= 1.0 or beta - m_x <= 0.0:
        raise NumericalError(
            f"bandwidth rule leaves (0, 1): beta={beta}, m={m_x:.4g}, n={n}"
        )
    n_eff = (1.0 - beta) * n
    m_y = quantile_spacing(n_eff, alpha)
    if alpha + m_y >= 1.0 or alpha - m_y <= 0.0:
        raise NumericalError(
            f"bandwidth rule leaves (0, 1): alpha={alpha}, m={m_y:.4g}, "
            f"effective n={n_eff:.1f}"
        )
    mad_x = _mad(series.x - path.v)
    mad_y = _mad(series.y - path.c)
    if mad_x <= 0.0:
        raise NumericalError("degenerate VaR residuals: MAD is zero")
    if mad_y <= 0.0:
        raise NumericalError("degenerate CoVaR residuals: MAD is zero")
    bw_x = mad_x * (norm.ppf(beta + m_x) - norm.ppf(beta - m_x))
    bw_y = mad_y * (norm.ppf(alpha + m_y) - norm.ppf(alpha - m_y))
    return float(bw_x), float(bw_y)


def estimate_V(path: RiskPath, beta: float) -> np.ndarray:
    """beta (1 - beta) times the mean outer product of the VaR gradients."""
    g = path.grad_v
    return beta * (1.0 - beta) * (g.T @ g) / g.shape[0]


def estimate_Lambda(series: LossSeries, path: RiskPath, bw_x: float) -> np.ndarray:
    """Kernel estimate of the VaR curvature matrix.

    Averages gradient outer products over periods whose VaR residual lies
    strictly inside the bandwidth window, weighted by 1 / (2 bw_x).
    """
    if bw_x <= 0:
        raise ValidationError("bw_x must be positive")
    g = path.grad_v
    inside = np.abs(series.x - path.v) < bw_x
    gw = g[inside]
    return (gw.T @ gw) / (2.0 * bw_x * g.shape[0])


def estimate_Cstar(path: RiskPath, alpha: float, beta: float) -> np.ndarray:
    """alpha (1 - alpha) (1 - beta) times the mean CoVaR-gradient outer product."""
    g = path.grad_c
    return alpha * (1.0 - alpha) * (1.0 - beta) * (g.T @ g) / g.shape[0]


def estimate_Lambda1(series: LossSeries, path: RiskPath, bw_y: float) -> np.ndarray:
    """Kernel estimate of the CoVaR curvature matrix.

    The weight of period t is the in-window indicator of the CoVaR residual
    minus the same indicator restricted to x_t <= v_t, so periods without a
    VaR exceedance cancel out.
    """
    if bw_y <= 0:
        raise ValidationError("bw_y must be positive")
    g = path.grad_c
    in_window = np.abs(series.y - path.c) < bw_y
    weight = in_window.astype(float) - (in_window & (series.x <= path.v)).astype(float)
    gw = g * weight[:, None]
    return (gw.T @ g) / (2.0 * bw_y * g.shape[0])


def estimate_Lambda2(series: LossSeries, path: RiskPath, bw_x: float,
                     alpha: float) -> np.ndarray:
    """Kernel estimate of the cross term linking the two estimation stages."""
    if bw_x <= 0:
        raise ValidationError("bw_x must be positive")
    in_window = np.abs(series.x - path.v) < bw_x
    weight = alpha * in_window.astype(float) - (
        in_window & (series.y <= path.c)
    ).astype(float)
    gw = path.grad_c * weight[:, None]
    return (gw.T @ path.grad_v) / (2.0 * bw_x * series.n)


def estimate_components(series: LossSeries, path: RiskPath,
                        levels: ProbLevels) -> AvarComponents:
    """All plug-in covariance pieces at the fitted paths."""
    bw_x, bw_y = bandwidths(series, path, levels)
    return AvarComponents(
        V_hat=estimate_V(path, levels.beta),
        Lambda_hat=estimate_Lambda(series, path, bw_x),
        Cstar_hat=estimate_Cstar(path, levels.alpha, levels.beta),
        Lambda1_hat=estimate_Lambda1(series, path, bw_y),
        Lambda2_hat=estimate_Lambda2(series, path, bw_x, levels.alpha),
        bw_x=bw_x,
        bw_y=bw_y,
    )


def _checked_inverse(m: np.ndarray, name: str) -> np.ndarray:
    cond = np.linalg.cond(m)
    if not np.isfinite(cond) or cond > MAX_CONDITION_NUMBER:
        raise NumericalError(
            f"{name} is numerically singular (condition number {cond:.3g})"
        )
    return np.linalg.solve(m, np.eye(m.shape[0]))


def assemble_covariances(components: AvarComponents, n: int):
    """Assemble (cov_v, cov_c, cov_joint), each scaled by 1/n.

    cov_c carries the first-stage inflation term; with Lambda2 = 0 it
    collapses to L1^-1 C* L1^-1 / n, the covariance that would obtain if
    the true VaR parameters were known.
    """
    if n < 1:
        raise ValidationError("n must be >= 1")
    V = components.V_hat
    Cs = components.Cstar_hat
    L_inv = _checked_inverse(components.Lambda_hat, "Lambda_hat")
    L1_inv = _checked_inverse(components.Lambda1_hat, "Lambda1_hat")
    L2 = components.Lambda2_hat
    p = V.shape[0]
    q = Cs.shape[0]

    cov_v = L_inv @ V @ L_inv / n

    gamma_left = L1_inv @ L2 @ L_inv           # q x p
    cov_c = (gamma_left @ V @ gamma_left.T + L1_inv @ Cs @ L1_inv) / n

    gamma_bar = np.zeros((p + q, p + q))
    gamma_bar[:p, :p] = -L_inv
    gamma_bar[p:, :p] = gamma_left
    gamma_bar[p:, p:] = -L1_inv
    big_c = np.zeros((p + q, p + q))
    big_c[:p, :p] = V
    big_c[p:, p:] = Cs
    cov_joint = gamma_bar @ big_c @ gamma_bar.T / n

    cov_v = 0.5 * (cov_v + cov_v.T)
    cov_c = 0.5 * (cov_c + cov_c.T)
    cov_joint = 0.5 * (cov_joint + cov_joint.T)
    return cov_v, cov_c, cov_joint
