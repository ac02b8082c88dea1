"""Influence functions and per-observation downweights.

Two scalings are offered.  The *proportional* forms are the closed-form
shapes

    beta:   (y - mu) * dmu/dbeta * exp(-(gamma-1) (y-mu)^2 / (2 sigma2))
    sigma2: gamma * exp(-(gamma-1) r^2 / (2 sigma2)) * [sigma^(3-gamma)
            - (gamma-1)/2 * sigma^(5-gamma) r^2] - (gamma-1) / (sqrt(gamma) sigma^(gamma-3))

(sigma the standard deviation), which fix the influence only up to a
positive constant.  The *normalized* form is K^-1 s_bar(y; theta), the
M-estimator influence function in the units of theta.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .inference import DEFAULT_CONVENTION, sensitivity_K
from .models import get_family
from .scoring import estimating_function

__all__ = [
    "InfluenceCurve",
    "influence_beta",
    "influence_sigma2",
    "mle_influence_beta",
    "influence_function",
    "influence_curve",
    "observation_weights",
]


def _gamma(cfg):
    if cfg is None:
        return 1.0
    if not cfg.gamma > 1:
        raise DomainError("influence of the Tsallis estimator needs gamma > 1")
    return cfg.gamma


def influence_beta(y, x, theta, cfg, family="log-logistic-5"):
    """Proportional influence of (x, y) on the regression coefficients.

    Returns shape ``np.shape(y) + (p,)``.
    """
    fam = get_family(family)
    g = _gamma(cfg)
    y = np.asarray(y, dtype=float)
    mu = fam.eval(x, theta.beta)
    m = fam.grad(x, theta.beta)
    r = y - mu
    w = r * np.exp(-(g - 1.0) * r * r / (2.0 * theta.sigma2))
    return w[..., None] * m


def mle_influence_beta(y, x, theta, family="log-logistic-5"):
    """(y - mu) dmu/dbeta: the log-score counterpart of ``influence_beta``."""
    fam = get_family(family)
    y = np.asarray(y, dtype=float)
    r = y - fam.eval(x, theta.beta)
    return r[..., None] * fam.grad(x, theta.beta)


def influence_sigma2(y, x, theta, cfg, family="log-logistic-5"):
    """Proportional influence of (x, y) on the error variance (bounded for gamma > 1)."""
    fam = get_family(family)
    g = _gamma(cfg)
    s = theta.sigma
    r = np.asarray(y, dtype=float) - fam.eval(x, theta.beta)
    e = np.exp(-(g - 1.0) * r * r / (2.0 * theta.sigma2))
    bracket = s ** (3.0 - g) - (g - 1.0) / 2.0 * s ** (5.0 - g) * r * r
    return g * e * bracket - (g - 1.0) / (np.sqrt(g) * s ** (g - 3.0))


def influence_function(model, theta, cfg, x, y, convention=DEFAULT_CONVENTION):
    """K^-1 s_bar(y; theta) at design point ``x`` (shape ``np.shape(y) + (p+1,)``)."""
    fam = model.family
    y = np.asarray(y, dtype=float)
    mu = fam.eval(x, theta.beta)
    m = np.broadcast_to(fam.grad(x, theta.beta), y.shape + (fam.arity,))
    s = estimating_function(y - mu, m, theta.sigma2, _gamma(cfg))
    K = sensitivity_K(model, theta, cfg, convention)
    return np.linalg.solve(K, s.reshape(-1, fam.arity + 1).T).T.reshape(s.shape)


@dataclass
class InfluenceCurve:
    """Influence evaluated along a grid of responses at one design point."""

    x: float
    grid: np.ndarray
    values: np.ndarray
    names: list
    form: str

    @property
    def sup_abs(self):
        return np.max(np.abs(self.values), axis=0)

    def rows(self):
        for j, name in enumerate(self.names):
            for y, v in zip(self.grid, self.values[:, j]):
                yield name, float(y), float(v)


def influence_curve(model, theta, cfg, x, grid=None, width=8.0, points=401, form="normalized",
                    convention=DEFAULT_CONVENTION):
    """Influence over ``grid`` (default mu(x) +/- width * sigma, ``points`` values)."""
    fam = model.family
    mu = float(fam.eval(x, theta.beta))
    if grid is None:
        grid = np.linspace(mu - width * theta.sigma, mu + width * theta.sigma, points)
    grid = np.asarray(grid, dtype=float)
    names = list(fam.param_names) + ["sigma2"]
    if form == "normalized":
        values = influence_function(model, theta, cfg, x, grid, convention)
    elif form == "proportional":
        if cfg is None:
            b = mle_influence_beta(grid, x, theta, fam)
            r = grid - mu
            s2 = (r * r - theta.sigma2) / (2.0 * theta.sigma2 ** 2)
        else:
            b = influence_beta(grid, x, theta, cfg, fam)
            s2 = influence_sigma2(grid, x, theta, cfg, fam)
        values = np.column_stack([b, s2])
    else:
        raise DomainError(f"unknown influence form {form!r}")
    return InfluenceCurve(float(x), grid, values, names, form)


def observation_weights(model, fit, cfg=None):
    """exp(-(gamma-1) r_i^2 / (2 sigma2)) for each observation (all 1 for the MLE)."""
    cfg = fit.config if cfg is None else cfg
    r = model.ys - model.family.eval(model.xs, fit.theta.beta)
    if cfg is None:
        return np.ones_like(r)
    return np.exp(-cfg.alpha * r * r / (2.0 * fit.theta.sigma2))
