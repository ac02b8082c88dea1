"""Minimum-score fitting of sigmoid regression models.

``fit`` minimizes either the log-score (maximum likelihood) or the total
Tsallis score.  Optimization runs on an internal, unconstrained and roughly
unit-scaled coordinate vector:

* c and d are divided by the response scale max|y|,
* positive curve parameters (e, f) enter through their logarithm,
* sigma2 enters as log(sigma2 / scale**2).

Each start goes through a Nelder-Mead warm-up, a BFGS run with the analytic
gradient and a Newton polish whose Hessian is a central difference of the
analytic gradient.  For the log-score, sigma2 is profiled out
(sigma2 = RSS / n) so exact fits stay well defined.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from .errors import ConvergenceError, DegenerateDataError, DomainError
from .models import MeanFunction, get_family
from .scoring import Theta, TsallisConfig, log_score_total, tsallis_score_total

log = logging.getLogger(__name__)

__all__ = [
    "RegressionModel",
    "FitOptions",
    "FitResult",
    "fit",
    "fit_mle",
    "fit_tsallis",
    "resolve_objective",
]


@dataclass(frozen=True)
class RegressionModel:
    """Observations (x_i, y_i) with a mean-function family and N(0, sigma2) errors."""

    xs: np.ndarray
    ys: np.ndarray
    family: MeanFunction

    def __post_init__(self):
        fam = get_family(self.family)
        xs = np.asarray(self.xs, dtype=float)
        ys = np.asarray(self.ys, dtype=float)
        object.__setattr__(self, "family", fam)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)
        if xs.ndim != 1 or xs.shape != ys.shape:
            raise DegenerateDataError("xs and ys must be 1-d arrays of equal length")
        if fam.log_x and np.any(xs <= 0):
            raise DomainError("day indices must be > 0")
        if np.any(np.diff(xs) <= 0):
            raise DegenerateDataError("xs must be strictly increasing")
        if not np.all(np.isfinite(ys)):
            raise DegenerateDataError("ys contain non-finite values")
        if xs.size < fam.arity + 1:
            raise DegenerateDataError(
                f"need at least {fam.arity + 1} observations for {fam.name}, got {xs.size}"
            )

    @property
    def n(self):
        return self.xs.size

    def mean(self, beta, x=None):
        return self.family.eval(self.xs if x is None else x, beta)

    def rss(self, beta):
        r = self.ys - self.mean(beta)
        return float(r @ r)

    def with_ys(self, ys):
        return RegressionModel(self.xs, ys, self.family)


@dataclass
class FitOptions:
    """Optimizer settings.

    ``fixed`` maps parameter names (curve names or ``"sigma2"``) to values
    held constant during the fit.  ``n_starts > 1`` adds starts drawn by
    multiplying each self-start value by U(1 - perturbation, 1 + perturbation).
    ``extra_starts`` are already-refined ``Theta`` values (e.g. a previous
    fit); they skip the simplex warm-up.  With ``mle_start`` a Tsallis fit
    also starts from the maximum likelihood estimate.
    """

    max_iter: int = 2000
    tol: float = 1e-8
    warmup_iter: int | None = None
    n_starts: int = 1
    seed: int = 0
    perturbation: float = 0.2
    fixed: dict = field(default_factory=dict)
    start: Theta | None = None
    extra_starts: tuple = ()
    mle_start: bool = True
    monotone: bool = False
    raise_on_failure: bool = True


@dataclass
class FitResult:
    theta: Theta
    objective: float
    converged: bool
    iterations: int
    gradient_norm: float
    estimator_kind: str
    gamma: float | None
    model: RegressionModel = field(repr=False)
    fixed: dict = field(default_factory=dict)
    trace: list = field(default_factory=list, repr=False)

    @property
    def family(self):
        return self.model.family

    @property
    def config(self):
        return None if self.gamma is None else TsallisConfig(self.gamma)

    def named_params(self):
        out = dict(zip(self.family.param_names, map(float, self.theta.beta)))
        out["sigma2"] = self.theta.sigma2
        return out

    def to_dict(self):
        return {
            "estimator_kind": self.estimator_kind,
            "gamma": self.gamma,
            "model": self.family.name,
            "params": self.named_params(),
            "objective": float(self.objective),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "gradient_norm": float(self.gradient_norm),
            "fixed": {k: float(v) for k, v in self.fixed.items()},
        }


def resolve_objective(objective):
    """Normalize ``objective`` to ``None`` (log-score) or a ``TsallisConfig``."""
    if objective is None or isinstance(objective, TsallisConfig):
        return objective
    if isinstance(objective, str):
        key = objective.lower()
        if key in ("mle", "log-score", "logscore", "log"):
            return None
        if key == "tsallis":
            return TsallisConfig()
    if isinstance(objective, (int, float)):
        return TsallisConfig(float(objective))
    raise DomainError(f"unknown objective {objective!r}")


# ---------------------------------------------------------------------------
# internal coordinates
# ---------------------------------------------------------------------------

class _Reparam:
    """Map between theta = (beta, sigma2) and the optimizer's coordinates."""

    def __init__(self, family, scale, fixed, monotone, profile_sigma):
        self.family = family
        self.p = family.arity
        self.scale = scale
        self.fixed_beta = {}
        for k, v in fixed.items():
            if k == "sigma2":
                continue
            if k not in family.param_names:
                raise DomainError(f"cannot fix unknown parameter {k!r} of {family.name}")
            self.fixed_beta[family.index(k)] = float(v)
        self.fixed_sigma2 = float(fixed["sigma2"]) if "sigma2" in fixed else None
        self.free = [i for i in range(self.p) if i not in self.fixed_beta]
        self.kinds = {}
        names = family.param_names
        gap = (
            monotone
            and "d" in names
            and "c" in names
            and family.index("d") in self.free
        )
        for i in self.free:
            name = names[i]
            if name in family.positive:
                self.kinds[i] = "log"
            elif name == "d" and gap:
                self.kinds[i] = "gap"
            elif name in ("c", "d"):
                self.kinds[i] = "scaled"
            else:
                self.kinds[i] = "plain"
        self.c_index = family.index("c") if "c" in names else None
        self.with_sigma = not profile_sigma and self.fixed_sigma2 is None
        self.size = len(self.free) + int(self.with_sigma)

    def encode(self, beta, sigma2):
        eta = []
        for i in self.free:
            kind = self.kinds[i]
            if kind == "log":
                eta.append(math.log(beta[i]))
            elif kind == "scaled":
                eta.append(beta[i] / self.scale)
            elif kind == "gap":
                gap = beta[i] - beta[self.c_index]
                if not gap > 0:
                    raise DomainError("monotone fit needs a start with d > c")
                eta.append(math.log(gap / self.scale))
            else:
                eta.append(beta[i])
        if self.with_sigma:
            eta.append(math.log(sigma2 / self.scale ** 2))
        return np.array(eta, dtype=float)

    def decode(self, eta):
        beta = np.empty(self.p)
        for i, v in self.fixed_beta.items():
            beta[i] = v
        gap_i = None
        for j, i in enumerate(self.free):
            kind = self.kinds[i]
            if kind == "log":
                beta[i] = math.exp(eta[j])
            elif kind == "scaled":
                beta[i] = eta[j] * self.scale
            elif kind == "gap":
                gap_i = (i, j)
            else:
                beta[i] = eta[j]
        if gap_i is not None:
            i, j = gap_i
            beta[i] = beta[self.c_index] + self.scale * math.exp(eta[j])
        sigma2 = None
        if self.with_sigma:
            sigma2 = self.scale ** 2 * math.exp(eta[-1])
        elif self.fixed_sigma2 is not None:
            sigma2 = self.fixed_sigma2
        return beta, sigma2

    def jacobian(self, eta, beta, sigma2):
        """d(beta, sigma2)/d eta, shape (p + 1, size)."""
        D = np.zeros((self.p + 1, self.size))
        for j, i in enumerate(self.free):
            kind = self.kinds[i]
            if kind == "log":
                D[i, j] = beta[i]
            elif kind == "scaled":
                D[i, j] = self.scale
            elif kind == "gap":
                D[i, j] = beta[i] - beta[self.c_index]
            else:
                D[i, j] = 1.0
        for j, i in enumerate(self.free):
            if self.kinds[i] == "gap" and self.c_index in self.kinds:
                jc = self.free.index(self.c_index)
                D[i, jc] = self.scale
        if self.with_sigma:
            D[self.p, -1] = sigma2
        return D


class _Problem:
    """Scaled internal objective F(eta) and its gradient for one dataset."""

    def __init__(self, model, cfg, reparam):
        self.model = model
        self.cfg = cfg
        self.rp = reparam
        self.norm = 1.0

    def theta(self, eta):
        beta, sigma2 = self.rp.decode(eta)
        if sigma2 is None:
            sigma2 = max(self.model.rss(beta) / self.model.n, np.finfo(float).tiny)
        return beta, sigma2

    def renormalize(self, eta):
        """Rescale F so that it is O(1) near ``eta``."""
        if self.cfg is None:
            self.norm = 2.0 * self.model.n * self.rp.scale ** 2
        else:
            _, sigma2 = self.theta(eta)
            a = self.cfg.alpha
            self.norm = self.model.n * (2.0 * np.pi * sigma2) ** (-a / 2.0)

    def raw_parts(self, eta):
        beta, sigma2 = self.theta(eta)
        fam = self.model.family
        for k in fam.positive:
            if not beta[fam.index(k)] > 0:
                raise DomainError("positive parameter left its domain")
        # inputs were validated when the model was built; skip per-call checks
        mu = fam._eval(self.model.xs, beta)
        r = self.model.ys - mu
        return beta, sigma2, r

    def value(self, eta):
        try:
            beta, sigma2, r = self.raw_parts(eta)
        except (DomainError, OverflowError, FloatingPointError):
            return np.inf
        if self.cfg is None:
            val = float(r @ r)
        else:
            g, a = self.cfg.gamma, self.cfg.alpha
            c = (2.0 * np.pi * sigma2) ** (-a / 2.0)
            val = float(np.sum(-g * c * np.exp(-a * r * r / (2.0 * sigma2)) + a * c / np.sqrt(g)))
        val /= self.norm
        return val if np.isfinite(val) else np.inf

    def gradient(self, eta):
        beta, sigma2, r = self.raw_parts(eta)
        m = self.model.family._grad(self.model.xs, beta)
        if self.cfg is None:
            g_theta = np.append(-2.0 * (r @ m), 0.0)
        else:
            g, a = self.cfg.gamma, self.cfg.alpha
            v = sigma2
            c = (2.0 * np.pi * v) ** (-a / 2.0)
            w = c * np.exp(-a * r * r / (2.0 * v))
            g_beta = -g * a / v * ((w * r) @ m)
            g_v = g * a * np.sum(w / (2.0 * v) * (1.0 - r * r / v)) - r.size * a * a * c / (
                2.0 * v * np.sqrt(g)
            )
            g_theta = np.append(g_beta, g_v)
        D = self.rp.jacobian(eta, beta, sigma2)
        return (D.T @ g_theta) / self.norm

    def hessian(self, eta):
        k = eta.size
        H = np.empty((k, k))
        # near-noiseless data make the objective's valleys about sigma / scale
        # wide in eta; shrink the difference step to resolve them
        _, sigma2 = self.theta(eta)
        narrow = min(1.0, 100.0 * math.sqrt(sigma2) / self.rp.scale)
        for j in range(k):
            h = 1e-5 * narrow * max(1.0, abs(eta[j]))
            ep = eta.copy()
            em = eta.copy()
            ep[j] += h
            em[j] -= h
            H[:, j] = (self.gradient(ep) - self.gradient(em)) / (2.0 * h)
        return 0.5 * (H + H.T)


def _safe_gradient(problem, eta):
    try:
        g = problem.gradient(eta)
    except (DomainError, OverflowError, FloatingPointError):
        return None
    return g if np.all(np.isfinite(g)) else None


def _newton_polish(problem, eta, tol, max_steps):
    """Damped Newton iterations; returns (eta, steps, converged, gnorm)."""
    f = problem.value(eta)
    g = _safe_gradient(problem, eta)
    steps = 0
    stalled = 0
    if g is None:
        return eta, steps, False, np.inf
    for steps in range(1, max_steps + 1):
        gnorm = float(np.max(np.abs(g)))
        if gnorm <= tol * (1.0 + abs(f)):
            return eta, steps - 1, True, gnorm
        try:
            H = problem.hessian(eta)
            w, U = np.linalg.eigh(H)
        except (DomainError, OverflowError, FloatingPointError, np.linalg.LinAlgError):
            break
        if not np.all(np.isfinite(w)):
            break
        floor = 1e-10 * max(1.0, float(np.max(np.abs(w))))
        w_raw = w
        w = np.maximum(np.abs(w), floor)
        step = -U @ ((U.T @ g) / w)
        t = 1.0
        gc = None
        for _ in range(40):
            cand = eta + t * step
            fc = problem.value(cand)
            if np.isfinite(fc) and fc <= f + 1e-4 * t * float(g @ step):
                gc = _safe_gradient(problem, cand)
                break
            if np.isfinite(fc) and fc <= f + 1e-12 * (1.0 + abs(f)):
                # decrease below rounding level: judge the step by the gradient instead
                gtry = _safe_gradient(problem, cand)
                if gtry is not None and np.max(np.abs(gtry)) < gnorm:
                    gc = gtry
                    break
            t *= 0.5
        # stalled at rounding level: accept a local minimum whose Newton
        # decrement is negligible next to |f| (scale-free test)
        stalled = stalled + 1 if gc is None or fc > f - 1e-14 * (1.0 + abs(f)) else 0
        if stalled >= 3 or gc is None:
            dec = float(-g @ step)
            if np.all(w_raw > 0) and dec <= 1e-2 * tol * (1.0 + abs(f)):
                return eta, steps, True, float(np.max(np.abs(g)))
        if gc is None:
            break
        eta, f, g = cand, fc, gc
    gnorm = float(np.max(np.abs(g)))
    return eta, steps, gnorm <= tol * (1.0 + abs(f)), gnorm


def _run_from(problem, eta0, options, warmup=True):
    """Warm-up, BFGS and Newton polish from one start."""
    trace = []
    k = eta0.size
    if k == 0:
        return eta0, 0, True, 0.0, [("closed-form", float(problem.value(eta0)), 0)]
    budget = options.max_iter
    warm = options.warmup_iter if options.warmup_iter is not None else 40 * k
    if not warmup:
        warm = 0
    eta = eta0
    problem.renormalize(eta)
    iterations = 0
    if warm > 0:
        res = optimize.minimize(
            problem.value,
            eta,
            method="Nelder-Mead",
            options={"maxiter": min(warm, budget), "xatol": 1e-8, "fatol": 1e-12, "adaptive": k > 2},
        )
        if np.isfinite(res.fun):
            eta = res.x
        iterations += int(res.nit)
        trace.append(("nelder-mead", float(res.fun), int(res.nit)))

    problem.renormalize(eta)
    remaining = max(budget - iterations, 1)
    if _safe_gradient(problem, eta) is not None:
        res = optimize.minimize(
            problem.value,
            eta,
            jac=problem.gradient,
            method="BFGS",
            options={"maxiter": remaining, "gtol": options.tol * 1e-2},
        )
        if np.isfinite(res.fun) and res.fun <= problem.value(eta):
            eta = res.x
        iterations += int(res.nit)
        trace.append(("bfgs", float(res.fun), int(res.nit)))

    problem.renormalize(eta)
    remaining = max(budget - iterations, 0)
    eta, steps, converged, gnorm = _newton_polish(problem, eta, options.tol, min(50, remaining))
    iterations += steps
    trace.append(("newton", float(problem.value(eta)), steps))
    return eta, iterations, converged, gnorm, trace


def _objective_value(model, theta, cfg):
    if cfg is None:
        return float(log_score_total(model, theta))
    return float(tsallis_score_total(model, theta, cfg))


def _kind(cfg):
    return "MLE" if cfg is None else f"Tsallis(gamma={cfg.gamma:g})"


def _initial_beta(model, options):
    fam = model.family
    if options.start is not None:
        beta = np.array(options.start.beta, dtype=float)
    else:
        beta = fam.self_start(model.xs, model.ys)
    for k, v in options.fixed.items():
        if k != "sigma2":
            beta[fam.index(k)] = v
    return beta


def _perturbed_starts(beta0, options, family):
    starts = [beta0]
    if options.n_starts > 1:
        ss = np.random.SeedSequence(options.seed)
        for child in ss.spawn(options.n_starts - 1):
            rng = np.random.default_rng(child)
            factor = rng.uniform(1 - options.perturbation, 1 + options.perturbation, beta0.size)
            b = beta0 * factor
            for k, v in options.fixed.items():
                if k != "sigma2":
                    b[family.index(k)] = v
            starts.append(b)
    return starts


def fit(model, objective="tsallis", options=None):
    """Minimize ``objective`` (``"mle"``, ``"tsallis"`` or a ``TsallisConfig``).

    Returns a ``FitResult``; raises ``ConvergenceError`` (carrying the best
    attempt as ``.result``) when no start meets the gradient tolerance and
    ``options.raise_on_failure`` is set.
    """
    cfg = resolve_objective(objective)
    options = options or FitOptions()
    fam = model.family
    scale = float(np.max(np.abs(model.ys))) or 1.0
    fixed = dict(options.fixed)
    rp = _Reparam(fam, scale, fixed, options.monotone, profile_sigma=cfg is None)
    problem = _Problem(model, cfg, rp)

    beta0 = _initial_beta(model, options)
    starts = []
    for b in _perturbed_starts(beta0, options, fam):
        if options.start is not None and b is beta0:
            s2 = options.start.sigma2
        else:
            s2 = model.rss(b) / model.n
        s2 = fixed.get("sigma2", s2)
        if not s2 > 0:
            s2 = (1e-3 * scale) ** 2
        starts.append((b, s2, True))

    refined = list(options.extra_starts)
    if cfg is not None and options.mle_start and not refined:
        try:
            mle = fit(model, None, replace(options, n_starts=1, raise_on_failure=False))
        except RobustFitErrorTypes:
            mle = None
        if mle is not None:
            refined.append(mle.theta)
    for th in refined:
        b = np.array(th.beta, dtype=float)
        for k, v in fixed.items():
            if k != "sigma2":
                b[fam.index(k)] = v
        if np.all(np.isfinite(b)):
            starts.append((b, fixed.get("sigma2", th.sigma2), False))

    candidates = []
    for beta_s, s2, warm in starts:
        try:
            eta0 = rp.encode(beta_s, s2)
        except (DomainError, ValueError):
            continue
        eta, its, conv, gnorm, trace = _run_from(problem, eta0, options, warm)
        beta, sigma2 = problem.theta(eta)
        try:
            theta = Theta(beta, sigma2)
        except DomainError:
            continue
        obj = _objective_value(model, theta, cfg)
        if not np.isfinite(obj):
            continue
        candidates.append(
            FitResult(
                theta=theta,
                objective=obj,
                converged=bool(conv),
                iterations=its,
                gradient_norm=gnorm,
                estimator_kind=_kind(cfg),
                gamma=None if cfg is None else cfg.gamma,
                model=model,
                fixed=fixed,
                trace=trace,
            )
        )
    if not candidates:
        raise ConvergenceError("no start produced a finite objective", None, [])

    best = _select(candidates)
    if not best.converged:
        conv = [c for c in candidates if c.converged]
        if conv:
            alt = _select(conv)
            if alt.objective <= best.objective + 1e-10 * (1.0 + abs(best.objective)):
                best = alt
    if not best.converged and options.raise_on_failure:
        raise ConvergenceError(
            f"{best.estimator_kind} fit did not converge: gradient norm {best.gradient_norm:.3g} "
            f"after {best.iterations} iterations",
            best,
            best.trace,
        )
    return best


def _select(candidates):
    """Lowest objective; near-ties (<= 1e-10) go to the smallest ||beta||."""
    lo = min(c.objective for c in candidates)
    tied = [c for c in candidates if c.objective - lo <= 1e-10 * (1.0 + abs(lo))]
    return min(tied, key=lambda c: float(np.linalg.norm(c.theta.beta)))


RobustFitErrorTypes = (ConvergenceError, DomainError, DegenerateDataError)


def fit_mle(model, options=None):
    """Maximum likelihood fit (log-score objective)."""
    return fit(model, None, options)


def fit_tsallis(model, gamma=1.5, options=None):
    return fit(model, TsallisConfig(gamma), options)
