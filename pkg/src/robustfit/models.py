"""Sigmoid mean functions mu(x, beta) with analytic gradients and self-starters.

All families share the dose-response parameterization

    b  steepness (increasing curves have b < 0 for the log-logistic family)
    c  lower asymptote
    d  upper asymptote
    e  inflection location (> 0 where log(e) is taken)
    f  asymmetry exponent (> 0, log-logistic-5 only)

Parameter vectors are plain numpy arrays ordered as ``family.param_names``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import DegenerateDataError, DomainError

__all__ = [
    "CurveParams",
    "MeanFunction",
    "LogLogistic5",
    "LogLogistic4",
    "Weibull1",
    "Gompertz",
    "FAMILIES",
    "get_family",
    "eval_loglogistic5",
    "grad_loglogistic5",
    "self_start",
]

_EXP_CAP = 700.0


@dataclass(frozen=True)
class CurveParams:
    """Named curve parameters; ``f`` defaults to 1 (four-parameter variant)."""

    b: float
    c: float
    d: float
    e: float
    f: float = 1.0

    def __post_init__(self):
        if not self.e > 0:
            raise DomainError(f"inflection parameter e must be > 0, got {self.e}")
        if not self.f > 0:
            raise DomainError(f"asymmetry exponent f must be > 0, got {self.f}")

    def as_array(self, names=("b", "c", "d", "e", "f")):
        return np.array([getattr(self, k) for k in names], dtype=float)


def _check_x(x, need_positive=True):
    x = np.asarray(x, dtype=float)
    if need_positive and np.any(~(x > 0)):
        raise DomainError("covariate x must be > 0 (day indices start at 1)")
    return x


class MeanFunction:
    """Base class for a curve family.

    Subclasses define ``name``, ``param_names``, ``positive`` (parameters
    that must stay strictly positive), the link used by the self-starter
    and the two core maps ``_eval`` / ``_grad`` on validated inputs.
    """

    name: str = ""
    param_names: tuple = ()
    positive: tuple = ()
    log_x: bool = True
    # value of the normalized response g = (mu - c)/(d - c) at x = e
    mid_level: float = 0.5

    @property
    def arity(self):
        return len(self.param_names)

    @property
    def param_bounds(self):
        return {
            k: ((0.0, np.inf) if k in self.positive else (-np.inf, np.inf))
            for k in self.param_names
        }

    def index(self, name):
        return self.param_names.index(name)

    def check_beta(self, beta):
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (self.arity,):
            raise DomainError(
                f"{self.name} expects {self.arity} parameters {self.param_names}, "
                f"got shape {beta.shape}"
            )
        for k in self.positive:
            v = beta[self.index(k)]
            if not v > 0:
                raise DomainError(f"parameter {k} must be > 0, got {v}")
        return beta

    def eval(self, x, beta):
        """Mean response at ``x`` (scalar or array)."""
        x = _check_x(x, self.log_x)
        return self._eval(x, self.check_beta(beta))

    def grad(self, x, beta):
        """Jacobian d mu / d beta with shape ``x.shape + (p,)``."""
        x = _check_x(x, self.log_x)
        return self._grad(x, self.check_beta(beta))

    def limit_at_zero(self, beta):
        """Limit of mu(x) as x -> 0+."""
        raise NotImplementedError

    def to_params(self, beta):
        beta = self.check_beta(beta)
        kw = dict(zip(self.param_names, beta))
        return CurveParams(**kw)

    def from_params(self, params):
        return params.as_array(self.param_names)

    # self-start -------------------------------------------------------
    def _link(self, g):
        """Map normalized response g in (0, 1) to the linear predictor u."""
        raise NotImplementedError

    def self_start(self, xs, ys):
        xs = _check_x(xs, self.log_x)
        ys = np.asarray(ys, dtype=float)
        if xs.shape != ys.shape or xs.ndim != 1:
            raise DegenerateDataError("xs and ys must be 1-d arrays of equal length")
        if np.unique(xs).size < self.arity:
            raise DegenerateDataError(
                f"{self.name} needs at least {self.arity} distinct x values, "
                f"got {np.unique(xs).size}"
            )
        if not np.all(np.isfinite(ys)):
            raise DegenerateDataError("responses contain non-finite values")
        if np.ptp(ys) == 0:
            raise DegenerateDataError("responses are constant; curve is not identifiable")

        c0 = float(ys.min())
        d0 = 1.05 * float(ys.max())
        if d0 <= c0:
            # max(y) <= 0: widen upward by 5% of the range instead
            d0 = float(ys.max()) + 0.05 * float(np.ptp(ys))

        level = c0 + self.mid_level * (d0 - c0)
        e0 = _first_crossing(xs, ys, level)
        if e0 is None:
            e0 = float(np.median(xs))
        if "e" in self.positive and e0 <= 0:
            e0 = float(xs[xs > 0].min())

        g = (ys - c0) / (d0 - c0)
        ok = (g > 0) & (g < 1)
        cov = np.log(xs) if self.log_x else xs
        b0 = np.nan
        if np.count_nonzero(ok) >= 2 and np.ptp(cov[ok]) > 0:
            slope = np.polyfit(cov[ok], self._link(g[ok]), 1)[0]
            b0 = float(slope)
        if not np.isfinite(b0) or b0 == 0:
            b0 = self._default_b(xs, ys)

        start = {"b": b0, "c": c0, "d": d0, "e": e0, "f": 1.0}
        return np.array([start[k] for k in self.param_names], dtype=float)

    def _default_b(self, xs, ys):
        increasing = np.polyfit(xs, ys, 1)[0] >= 0
        return -1.0 if increasing else 1.0


def _first_crossing(xs, ys, level):
    """x at which the piecewise-linear path through (xs, ys) first reaches ``level``."""
    above = ys >= level
    if above[0]:
        # series starts above the level: look for the first downward crossing
        idx = np.flatnonzero(~above)
    else:
        idx = np.flatnonzero(above)
    if idx.size == 0:
        return None
    k = int(idx[0])
    x0, x1, y0, y1 = xs[k - 1], xs[k], ys[k - 1], ys[k]
    if y1 == y0:
        return float(x1)
    return float(x0 + (level - y0) * (x1 - x0) / (y1 - y0))


class LogLogistic5(MeanFunction):
    """c + (d - c) / (1 + exp(b (log x - log e)))^f"""

    name = "log-logistic-5"
    param_names = ("b", "c", "d", "e", "f")
    positive = ("e", "f")

    def _parts(self, x, b, e, f):
        lx = np.log(x) - np.log(e)
        u = b * lx
        logt = np.logaddexp(0.0, u)
        g = np.exp(-f * logt)
        return lx, u, logt, g

    def _eval(self, x, beta):
        b, c, d, e = beta[:4]
        f = beta[4] if self.arity == 5 else 1.0
        _, _, _, g = self._parts(x, b, e, f)
        return c + (d - c) * g

    def _grad(self, x, beta):
        b, c, d, e = beta[:4]
        f = beta[4] if self.arity == 5 else 1.0
        lx, u, logt, g = self._parts(x, b, e, f)
        dg_du = -f * g * expit(u)
        cols = [
            (d - c) * dg_du * lx,
            1.0 - g,
            g,
            (d - c) * dg_du * (-b / e),
        ]
        if self.arity == 5:
            cols.append(-(d - c) * logt * g)
        return np.stack(np.broadcast_arrays(*cols), axis=-1)

    def _link(self, g):
        return np.log1p(-g) - np.log(g)

    def limit_at_zero(self, beta):
        b, c, d = beta[:3]
        f = beta[4] if self.arity == 5 else 1.0
        if b < 0:
            return float(c)
        if b > 0:
            return float(d)
        return float(c + (d - c) * 2.0 ** (-f))


class LogLogistic4(LogLogistic5):
    """Log-logistic curve with f fixed at 1."""

    name = "log-logistic-4"
    param_names = ("b", "c", "d", "e")
    positive = ("e",)


class Weibull1(MeanFunction):
    """Type-1 Weibull: c + (d - c) exp(-exp(b (log x - log e)))."""

    name = "weibull-1"
    param_names = ("b", "c", "d", "e")
    positive = ("e",)
    mid_level = float(np.exp(-1.0))

    def _covariate(self, x, e):
        return np.log(x) - np.log(e)

    def _eval(self, x, beta):
        b, c, d, e = beta
        w = np.exp(np.minimum(b * self._covariate(x, e), _EXP_CAP))
        return c + (d - c) * np.exp(-w)

    def _grad(self, x, beta):
        b, c, d, e = beta
        lx = self._covariate(x, e)
        w = np.exp(np.minimum(b * lx, _EXP_CAP))
        g = np.exp(-w)
        dg_du = -w * g
        de_du = -b / e if self.log_x else -b
        cols = [(d - c) * dg_du * lx, 1.0 - g, g, (d - c) * dg_du * de_du]
        return np.stack(np.broadcast_arrays(*cols), axis=-1)

    def _link(self, g):
        return np.log(-np.log(g))

    def limit_at_zero(self, beta):
        b, c, d, _ = beta
        if b > 0:
            return float(d)
        if b < 0:
            return float(c)
        return float(c + (d - c) * np.exp(-1.0))


class Gompertz(Weibull1):
    """Gompertz: c + (d - c) exp(-exp(b (x - e))); e may take any sign."""

    name = "gompertz"
    positive = ()
    log_x = False

    def _covariate(self, x, e):
        return x - e

    def limit_at_zero(self, beta):
        return float(self._eval(np.array(0.0), np.asarray(beta, dtype=float)))


FAMILIES = {
    cls.name: cls()
    for cls in (LogLogistic5, LogLogistic4, Weibull1, Gompertz)
}


def get_family(name):
    """Look up a curve family by name (``log-logistic-5``, ``gompertz``, ...)."""
    if isinstance(name, MeanFunction):
        return name
    try:
        return FAMILIES[name]
    except KeyError:
        raise DomainError(
            f"unknown model {name!r}; available: {', '.join(FAMILIES)}"
        ) from None


def eval_loglogistic5(x, p):
    """Five-parameter log-logistic mean at ``x`` for ``CurveParams`` ``p``."""
    fam = FAMILIES["log-logistic-5"]
    return fam.eval(x, fam.from_params(p))


def grad_loglogistic5(x, p):
    """Gradient (d/db, d/dc, d/dd, d/de, d/df) of the five-parameter curve."""
    fam = FAMILIES["log-logistic-5"]
    return fam.grad(x, fam.from_params(p))


def self_start(xs, ys, family="log-logistic-5"):
    """Heuristic starting values for ``family`` as a ``CurveParams``."""
    fam = get_family(family)
    return fam.to_params(fam.self_start(xs, ys))
