"""Log-score and Tsallis-score objectives for the normal nonlinear regression model.

For y ~ N(mu, sigma2) and gamma > 1 the per-observation Tsallis score is

    S(y; theta) = (gamma - 1) * int f^gamma dy - gamma * f(y)^(gamma - 1)
                = -gamma * c * exp(-(gamma-1) r^2 / (2 sigma2)) + (gamma-1) * c / sqrt(gamma)

with r = y - mu and c = (2 pi sigma2)^(-(gamma-1)/2).  The log-score is minus
the normal log density.  Totals are sums over observations; numpy's
``sum`` on contiguous float arrays is pairwise, which keeps the reduction
stable when responses span several orders of magnitude.

Gradients are taken in theta = (beta, sigma2).  Besides the raw gradient of
S we expose the *normalized* estimating function

    s_bar(y; theta) = dS(y; theta)/dtheta / (gamma (gamma - 1)),

which tends to the log-score gradient as gamma -> 1 and is the
parameterization in which the sensitivity and variability matrices take
their standard density-power-divergence closed forms.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

__all__ = [
    "Theta",
    "TsallisConfig",
    "log_score_terms",
    "log_score_total",
    "log_score_gradient",
    "tsallis_score_terms",
    "tsallis_score_total",
    "tsallis_score_gradient",
    "tsallis_integral",
    "estimating_function",
    "estimating_function_jacobian",
    "score_contributions",
]

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class Theta:
    """Curve parameters ``beta`` plus the error variance ``sigma2``."""

    beta: np.ndarray
    sigma2: float

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float).copy())
        object.__setattr__(self, "sigma2", float(self.sigma2))
        if not self.sigma2 > 0:
            raise DomainError(f"sigma2 must be > 0, got {self.sigma2}")

    def as_vector(self):
        return np.append(self.beta, self.sigma2)

    @classmethod
    def from_vector(cls, vec):
        vec = np.asarray(vec, dtype=float)
        return cls(vec[:-1], vec[-1])

    @property
    def sigma(self):
        return float(np.sqrt(self.sigma2))


@dataclass(frozen=True)
class TsallisConfig:
    """Robustness exponent of the Tsallis score; ``alpha = gamma - 1``."""

    gamma: float = 1.5
    alpha: float = field(init=False)

    def __post_init__(self):
        gamma = float(self.gamma)
        if not gamma > 1:
            raise DomainError(
                f"Tsallis gamma must be > 1 (gamma = 1 is the log-score), got {self.gamma}"
            )
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "alpha", gamma - 1.0)


def _gamma_of(cfg):
    """gamma for a config, with ``None`` standing for the log-score (gamma = 1)."""
    return 1.0 if cfg is None else cfg.gamma


def _check_sigma2(sigma2):
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be > 0, got {sigma2}")


def _residuals(model, theta):
    mu = model.family.eval(model.xs, theta.beta)
    return np.asarray(model.ys, dtype=float) - mu


# ---------------------------------------------------------------------------
# log-score
# ---------------------------------------------------------------------------

def log_score_terms(y, mu, sigma2):
    """Per-observation negative normal log density."""
    _check_sigma2(sigma2)
    r = np.asarray(y, dtype=float) - mu
    return 0.5 * (LOG_2PI + np.log(sigma2)) + r * r / (2.0 * sigma2)


def log_score_total(model, theta):
    """Negative log-likelihood of the normal nonlinear regression model."""
    _check_sigma2(theta.sigma2)
    r = _residuals(model, theta)
    n = r.size
    return 0.5 * n * (LOG_2PI + np.log(theta.sigma2)) + np.sum(r * r) / (2.0 * theta.sigma2)


def log_score_gradient(model, theta):
    _check_sigma2(theta.sigma2)
    r = _residuals(model, theta)
    m = model.family.grad(model.xs, theta.beta)
    v = theta.sigma2
    g_beta = -(r @ m) / v
    g_v = 0.5 * r.size / v - np.sum(r * r) / (2.0 * v * v)
    return np.append(g_beta, g_v)


# ---------------------------------------------------------------------------
# Tsallis score
# ---------------------------------------------------------------------------

def tsallis_integral(sigma2, gamma):
    """Closed form of int N(y; mu, sigma2)^gamma dy."""
    return gamma ** -0.5 * (2.0 * np.pi * sigma2) ** (-(gamma - 1.0) / 2.0)


def tsallis_score_terms(y, mu, sigma2, gamma):
    """Per-observation Tsallis score for normal observations."""
    _check_sigma2(sigma2)
    if not gamma > 1:
        raise DomainError(f"gamma must be > 1, got {gamma}")
    a = gamma - 1.0
    r = np.asarray(y, dtype=float) - mu
    c = (2.0 * np.pi * sigma2) ** (-a / 2.0)
    return -gamma * c * np.exp(-a * r * r / (2.0 * sigma2)) + a * c / np.sqrt(gamma)


def tsallis_score_total(model, theta, cfg):
    """Total Tsallis score of the sample at ``theta``."""
    r = _residuals(model, theta)
    return float(np.sum(tsallis_score_terms(r, 0.0, theta.sigma2, cfg.gamma)))


def estimating_function(r, m, sigma2, gamma):
    """Normalized per-observation score s_bar for residuals ``r``.

    Parameters
    ----------
    r : array_like, shape (n,)
        Residuals y - mu.
    m : array_like, shape (n, p)
        Mean-function Jacobian d mu / d beta at each observation.
    sigma2 : float
    gamma : float
        ``1`` gives the log-score gradient.

    Returns
    -------
    ndarray, shape (n, p + 1)
    """
    _check_sigma2(sigma2)
    r = np.asarray(r, dtype=float)
    m = np.asarray(m, dtype=float)
    a = gamma - 1.0
    v = sigma2
    c = (2.0 * np.pi * v) ** (-a / 2.0)
    w = c * np.exp(-a * r * r / (2.0 * v))
    s_beta = -(w * r / v)[..., None] * m
    s_v = w / (2.0 * v) * (1.0 - r * r / v) - a * c / (2.0 * v * gamma ** 1.5)
    return np.concatenate([s_beta, np.asarray(s_v)[..., None]], axis=-1)


def estimating_function_jacobian(r, m, m2, sigma2, gamma):
    """d s_bar / d theta for one observation.

    ``m2`` is the mean-function Hessian (p, p); pass zeros when the
    expectation over y is wanted, since that term is odd in r.
    """
    a = gamma - 1.0
    v = sigma2
    m = np.asarray(m, dtype=float)
    c = (2.0 * np.pi * v) ** (-a / 2.0)
    w = c * np.exp(-a * r * r / (2.0 * v))
    p = m.size
    out = np.empty((p + 1, p + 1))
    out[:p, :p] = (w / v) * (1.0 - a * r * r / v) * np.outer(m, m) - (w * r / v) * m2
    cross = (w * r / (2.0 * v * v)) * (a * (1.0 - r * r / v) + 2.0) * m
    out[:p, p] = cross
    out[p, :p] = cross
    h = 1.0 - r * r / v
    g = w / (2.0 * v)
    out[p, p] = (
        g * ((a * r * r / (2.0 * v * v) - (a + 2.0) / (2.0 * v)) * h + r * r / (v * v))
        + a * (a + 2.0) * c / (4.0 * v * v * gamma ** 1.5)
    )
    return out


def score_contributions(model, theta, cfg=None):
    """Per-observation normalized scores s_bar, shape (n, p + 1)."""
    r = _residuals(model, theta)
    m = model.family.grad(model.xs, theta.beta)
    return estimating_function(r, m, theta.sigma2, _gamma_of(cfg))


def tsallis_score_gradient(model, theta, cfg):
    """Gradient of the total Tsallis score with respect to (beta, sigma2)."""
    g = cfg.gamma
    return (g * (g - 1.0)) * np.sum(score_contributions(model, theta, cfg), axis=0)
