"""Sandwich variance, Wald intervals and score-ratio tests for Tsallis fits.

K and J are per-observation averages of the derivative and the outer
product of the normalized estimating function (see ``scoring``), so the
covariance of the estimator is V / n with V = K^-1 J K^-T.  For the normal
nonlinear model both matrices are block diagonal:

    K = diag(xi(a) / n * M'M,  vs(a))
    J = diag(xi(2a) / n * M'M,  vs(2a) - a^2/4 * xi(a)^2)

with a = gamma - 1, M the n x p mean-function Jacobian and

    xi(a) = (2 pi)^(-a/2) v^(-(a+2)/2) (1+a)^(-3/2)
    vs(a) = 1/4 (2 pi)^(-a/2) v^(-(a+4)/2) (2+a^2) / (1+a)^(5/2)

where v is the error variance.  ``convention="sd-literal"`` reads the
powers of v as powers of the standard deviation and drops the square on
xi(a) in J; it is kept only so the quadrature oracle can show that it is
wrong.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg, stats

from .errors import DomainError, SingularMatrixError
from .scoring import (
    log_score_total,
    score_contributions,
    tsallis_score_total,
)

log = logging.getLogger(__name__)

__all__ = [
    "CONVENTIONS",
    "xi",
    "varsigma",
    "SandwichMatrices",
    "sensitivity_K",
    "variability_J",
    "sandwich_variance",
    "sandwich",
    "WaldReport",
    "wald_test",
    "RatioReport",
    "score_ratio_test",
    "adjusted_score_ratio",
    "mixture_sf",
    "imhof_sf",
    "ruben_sf",
    "free_indices",
]

CONVENTIONS = ("variance", "sd-literal")
DEFAULT_CONVENTION = "variance"


def _alpha(cfg):
    return 0.0 if cfg is None else cfg.alpha


def _scale_power(sigma2, power, convention):
    # power is applied to v = sigma2 ("variance") or to sqrt(v) ("sd-literal")
    if convention == "variance":
        return sigma2 ** power
    if convention == "sd-literal":
        return np.sqrt(sigma2) ** power
    raise DomainError(f"unknown sigma convention {convention!r}; use one of {CONVENTIONS}")


def xi(alpha, sigma2, convention=DEFAULT_CONVENTION):
    return (
        (2.0 * np.pi) ** (-alpha / 2.0)
        * _scale_power(sigma2, -(alpha + 2.0) / 2.0, convention)
        * (1.0 + alpha) ** -1.5
    )


def varsigma(alpha, sigma2, convention=DEFAULT_CONVENTION):
    return (
        0.25
        * (2.0 * np.pi) ** (-alpha / 2.0)
        * _scale_power(sigma2, -(alpha + 4.0) / 2.0, convention)
        * (2.0 + alpha * alpha)
        / (1.0 + alpha) ** 2.5
    )


def _gram(model, theta):
    m = model.family.grad(model.xs, theta.beta)
    G = m.T @ m
    rank = np.linalg.matrix_rank(m)
    if rank < m.shape[1]:
        raise SingularMatrixError(
            f"mean-function Jacobian has rank {rank} < {m.shape[1]} at theta",
            condition_number=float(np.linalg.cond(G)),
        )
    return G


def sensitivity_K(model, theta, cfg=None, convention=DEFAULT_CONVENTION):
    """Per-observation sensitivity matrix E[d s_bar / d theta]; ``cfg=None`` is the log-score."""
    a = _alpha(cfg)
    G = _gram(model, theta)
    p = G.shape[0]
    K = np.zeros((p + 1, p + 1))
    K[:p, :p] = xi(a, theta.sigma2, convention) / model.n * G
    K[p, p] = varsigma(a, theta.sigma2, convention)
    return K


def variability_J(model, theta, cfg=None, convention=DEFAULT_CONVENTION):
    """Per-observation variability matrix E[s_bar s_bar']."""
    a = _alpha(cfg)
    G = _gram(model, theta)
    p = G.shape[0]
    J = np.zeros((p + 1, p + 1))
    v = theta.sigma2
    J[:p, :p] = xi(2.0 * a, v, convention) / model.n * G
    xa = xi(a, v, convention)
    if convention == "variance":
        J[p, p] = varsigma(2.0 * a, v, convention) - a * a / 4.0 * xa * xa
    else:
        J[p, p] = varsigma(2.0 * a, v, convention) - a * a / 4.0 * xa
    return J


def sandwich_variance(K, J):
    """V = K^-1 J K^-T."""
    K = np.asarray(K, dtype=float)
    J = np.asarray(J, dtype=float)
    cond = float(np.linalg.cond(K))
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularMatrixError(f"sensitivity matrix is singular (condition number {cond:.3g})", cond)
    Kinv_J = np.linalg.solve(K, J)
    V = np.linalg.solve(K, Kinv_J.T).T
    return 0.5 * (V + V.T)


@dataclass
class SandwichMatrices:
    K: np.ndarray
    J: np.ndarray
    V: np.ndarray
    G: np.ndarray
    n: int
    convention: str = DEFAULT_CONVENTION

    @property
    def covariance(self):
        """Asymptotic covariance of the estimator, V / n."""
        return self.V / self.n

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        K = self.K[np.ix_(idx, idx)]
        J = self.J[np.ix_(idx, idx)]
        V = sandwich_variance(K, J)
        return SandwichMatrices(K, J, V, np.linalg.inv(V), self.n, self.convention)

    def to_dict(self):
        return {
            "K": self.K.tolist(),
            "J": self.J.tolist(),
            "V": self.V.tolist(),
            "G": self.G.tolist(),
            "n": int(self.n),
            "sigma_convention": self.convention,
        }


def sandwich(model, theta, cfg=None, convention=DEFAULT_CONVENTION):
    K = sensitivity_K(model, theta, cfg, convention)
    J = variability_J(model, theta, cfg, convention)
    V = sandwich_variance(K, J)
    return SandwichMatrices(K, J, V, np.linalg.inv(V), model.n, convention)


def free_indices(fit):
    """Indices into (beta, sigma2) of the parameters the fit estimated."""
    names = list(fit.family.param_names) + ["sigma2"]
    return [i for i, k in enumerate(names) if k not in fit.fixed]


def param_names(fit):
    return list(fit.family.param_names) + ["sigma2"]


@dataclass
class WaldReport:
    statistic: float
    dof: int
    p_value: float
    names: list
    estimate: np.ndarray
    se: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float = 0.95

    def interval(self, name):
        k = self.names.index(name)
        return float(self.lower[k]), float(self.upper[k])

    def to_dict(self):
        return {
            "statistic": float(self.statistic),
            "dof": int(self.dof),
            "p_value": float(self.p_value),
            "level": self.level,
            "parameters": {
                k: {
                    "estimate": float(self.estimate[i]),
                    "se": float(self.se[i]),
                    "lower": float(self.lower[i]),
                    "upper": float(self.upper[i]),
                }
                for i, k in enumerate(self.names)
            },
        }


def wald_test(fit, null_theta=None, level=0.95, indices=None, convention=DEFAULT_CONVENTION,
              matrices=None):
    """Wald statistic n (t - t0)' V(t)^-1 (t - t0) with per-parameter intervals.

    ``null_theta`` defaults to the estimate itself (statistic 0), which
    is convenient when only the intervals are wanted.  ``indices`` selects
    a sub-vector of (beta, sigma2); by default all estimated parameters.
    """
    if indices is None:
        indices = free_indices(fit)
    indices = list(indices)
    mats = matrices or sandwich(fit.model, fit.theta, fit.config, convention)
    sub = mats.subset(indices)
    est = fit.theta.as_vector()[indices]
    null = est if null_theta is None else null_theta.as_vector()[indices]
    diff = est - null
    n = fit.model.n
    stat = float(n * diff @ np.linalg.solve(sub.V, diff))
    stat = max(stat, 0.0)
    dof = len(indices)
    z = stats.norm.ppf(0.5 + level / 2.0)
    se = np.sqrt(np.diag(sub.V) / n)
    names = [param_names(fit)[i] for i in indices]
    return WaldReport(
        statistic=stat,
        dof=dof,
        p_value=float(stats.chi2.sf(stat, dof)),
        names=names,
        estimate=est,
        se=se,
        lower=est - z * se,
        upper=est + z * se,
        level=level,
    )


# ---------------------------------------------------------------------------
# weighted chi-square mixtures
# ---------------------------------------------------------------------------

def imhof_sf(x, weights):
    """P(sum_j w_j Z_j^2 > x) by Imhof's numerical inversion (weights >= 0).

    The phase is split as A(u) - x u / 2 with A(u) = sum_j arctan(w_j u) / 2;
    past the first oscillation the integral is handed to QUADPACK's Fourier
    routine, which handles the infinite oscillatory range.  A single weight
    is answered exactly.
    """
    w = np.asarray(weights, dtype=float)
    w = w[w > 0]
    if w.size == 0:
        return 1.0 if x < 0 else 0.0
    if w.size == 1:
        return float(stats.chi2.sf(x / w[0], 1))
    if x <= 0:
        return 1.0
    omega = 0.5 * x

    def phase(u):
        return 0.5 * np.sum(np.arctan(w * u))

    def rho_u(u):
        return u * np.prod((1.0 + (w * u) ** 2) ** 0.25)

    def full(u):
        if u == 0.0:
            return 0.5 * (np.sum(w) - x)
        return np.sin(phase(u) - omega * u) / rho_u(u)

    cut = 2.0 * np.pi / omega
    head = integrate.quad(full, 0.0, cut, limit=200, epsabs=1e-13, epsrel=1e-12)[0]
    cos_part = integrate.quad(lambda u: np.sin(phase(u)) / rho_u(u), cut, np.inf,
                              weight="cos", wvar=omega, limlst=200)[0]
    sin_part = integrate.quad(lambda u: np.cos(phase(u)) / rho_u(u), cut, np.inf,
                              weight="sin", wvar=omega, limlst=200)[0]
    val = head + cos_part - sin_part
    return float(min(max(0.5 + val / np.pi, 0.0), 1.0))


def ruben_sf(x, weights, tol=1e-12, max_terms=4000):
    """P(sum_j w_j Z_j^2 > x) from Ruben's chi-square mixture series (weights >= 0).

    With b = min(w) the distribution is sum_k a_k chi2_{d+2k}(. / b) where
    a_0 = prod (b / w_j)^(1/2) and a_k = 1/(2k) sum_{r<k} g_{k-r} a_r,
    g_m = sum_j (1 - b / w_j)^m.  The a_k are nonnegative and sum to one,
    so truncating once the remaining mass is below ``tol`` bounds the error.
    Weights so spread out that more than ``max_terms`` terms would be needed
    are handed to ``imhof_sf``.
    """
    w = np.asarray(weights, dtype=float)
    w = w[w > 0]
    if w.size == 0:
        return 1.0 if x < 0 else 0.0
    if x <= 0:
        return 1.0
    d = w.size
    b = float(w.min())
    q = 1.0 - b / w
    qmax = float(q.max())
    if qmax > 0 and np.log(tol) / np.log(qmax) > max_terms:
        return imhof_sf(x, w)
    a = np.zeros(max_terms + 1)
    g = np.zeros(max_terms + 1)
    a[0] = np.exp(0.5 * np.sum(np.log(b / w)))
    mass = a[0]
    k = 0
    while 1.0 - mass > tol and k < max_terms:
        k += 1
        g[k] = np.sum(q ** k)
        a[k] = g[k:0:-1] @ a[:k] / (2.0 * k)
        mass += a[k]
    dofs = d + 2 * np.arange(k + 1)
    sf = float(a[: k + 1] @ stats.chi2.sf(x / b, dofs))
    return float(min(max(sf, 0.0), 1.0))


def mixture_sf(x, weights, method="simulation", draws=100_000, seed=0):
    """Upper tail of sum_j w_j Z_j^2.

    ``method`` is ``"simulation"`` (seeded draws), ``"imhof"`` (numerical
    inversion of the characteristic function) or ``"ruben"`` (exact series).
    """
    if method == "imhof":
        return imhof_sf(x, weights)
    if method == "ruben":
        return ruben_sf(x, weights)
    if method != "simulation":
        raise DomainError(f"unknown mixture p-value method {method!r}")
    rng = np.random.default_rng(seed)
    w = np.asarray(weights, dtype=float)
    sims = rng.chisquare(1.0, size=(draws, w.size)) @ w
    return float(np.mean(sims >= x))


def _clamped_eigenvalues(J, K):
    lam = linalg.eigh(J, K, eigvals_only=True)
    if np.any(lam < -1e-10):
        warnings.warn(
            f"negative eigenvalues {lam[lam < -1e-10]} in J K^-1; clamping to 0",
            RuntimeWarning,
            stacklevel=3,
        )
    return np.sort(np.maximum(lam, 0.0))[::-1]


def _raw_factor(cfg):
    # raw Tsallis gradient = gamma (gamma - 1) * s_bar; 1 for the log-score
    return 1.0 if cfg is None else cfg.gamma * cfg.alpha


def _total_score(model, theta, cfg):
    if cfg is None:
        return float(log_score_total(model, theta))
    return float(tsallis_score_total(model, theta, cfg))


@dataclass
class RatioReport:
    statistic: float
    dof: int
    p_value: float
    method: str
    weights: np.ndarray = field(default_factory=lambda: np.empty(0))
    rescaling: float | None = None
    unadjusted: float | None = None

    def to_dict(self):
        out = {
            "statistic": float(self.statistic),
            "dof": int(self.dof),
            "p_value": float(self.p_value),
            "method": self.method,
            "weights": [float(w) for w in self.weights],
        }
        if self.rescaling is not None:
            out["rescaling"] = float(self.rescaling)
            out["unadjusted"] = float(self.unadjusted)
        return out


def _ratio_statistic(model, fit, null_theta, cfg):
    return 2.0 * (_total_score(model, null_theta, cfg) - _total_score(model, fit.theta, cfg))


def score_ratio_test(model, fit, null_theta, cfg=None, indices=None, method="simulation",
                     draws=100_000, seed=0, convention=DEFAULT_CONVENTION):
    """W = 2 {S(t0) - S(t)} referred to sum_j mu_j Z_j^2, mu = eig(J K^-1) at the fit.

    ``cfg`` defaults to the fit's own objective.  The eigenvalues are those
    of the raw score (the normalized J K^-1 times gamma (gamma - 1)) so that
    they match the scale of W.
    """
    cfg = fit.config if cfg is None else cfg
    if indices is None:
        indices = free_indices(fit)
    mats = sandwich(model, fit.theta, cfg, convention).subset(indices)
    weights = _raw_factor(cfg) * _clamped_eigenvalues(mats.J, mats.K)
    W = _ratio_statistic(model, fit, null_theta, cfg)
    if abs(W) < 1e-12 * (1.0 + abs(fit.objective)):
        W = 0.0
    p = mixture_sf(W, weights, method=method, draws=draws, seed=seed)
    return RatioReport(W, len(indices), p, method, weights)


def rescaling_factor(model, theta, cfg, indices, form="pace", convention=DEFAULT_CONVENTION):
    """Rescaling A(theta) so that A * W is approximately chi-square.

    ``form="pace"`` uses s' K^-1 s / (s' K^-1 J K^-1 s), the composite-likelihood
    adjustment; ``form="literal"`` uses s' J s / (s' K s).  Both equal 1 when
    J = K.  Raw (unnormalized) score quantities are used throughout.
    """
    idx = list(indices)
    mats = sandwich(model, theta, cfg, convention).subset(idx)
    c = _raw_factor(cfg)
    n = model.n
    K = c * n * mats.K
    J = c * c * n * mats.J
    s = c * np.sum(score_contributions(model, theta, cfg), axis=0)[idx]
    Kinv_s = np.linalg.solve(K, s)
    score_stat = float(s @ Kinv_s)
    if score_stat <= 1e-10:
        raise DomainError(
            "rescaling factor undefined: score at the null is zero (null equals the estimate?)"
        )
    if form == "pace":
        return score_stat / float(Kinv_s @ J @ Kinv_s)
    if form == "literal":
        return float(s @ J @ s) / float(s @ K @ s)
    raise DomainError(f"unknown rescaling form {form!r}")


def adjusted_score_ratio(model, fit, null_theta, cfg=None, indices=None, form="pace",
                         convention=DEFAULT_CONVENTION):
    """A(t0) * W(t0) referred to chi-square with dim(theta) degrees of freedom."""
    cfg = fit.config if cfg is None else cfg
    if indices is None:
        indices = free_indices(fit)
    A = rescaling_factor(model, null_theta, cfg, indices, form, convention)
    W = _ratio_statistic(model, fit, null_theta, cfg)
    stat = A * W
    d = len(indices)
    return RatioReport(
        statistic=stat,
        dof=d,
        p_value=float(stats.chi2.sf(stat, d)),
        method=f"chi2 ({form} rescaling)",
        rescaling=A,
        unadjusted=W,
    )
