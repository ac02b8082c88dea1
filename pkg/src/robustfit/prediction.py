"""Estimative predictive densities, fitted/forecast curves and the contamination study."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate, stats

from .errors import ConvergenceError, DomainError
from .estimation import FitOptions, RegressionModel, fit
from .models import get_family
from .scoring import Theta, TsallisConfig

log = logging.getLogger(__name__)

__all__ = [
    "PredictiveDensity",
    "estimative_density",
    "Forecast",
    "forecast_curve",
    "SimScenario",
    "EstimatorSummary",
    "RegimeSummary",
    "SimulationReport",
    "run_simulation",
]


@dataclass
class PredictiveDensity:
    """N(mu(z, beta_hat), sigma2_hat) tabulated on a grid around its mean."""

    z_design: float
    theta: Theta
    kind: str
    mean: float
    sd: float
    grid: np.ndarray
    density: np.ndarray

    def pdf(self, z):
        return stats.norm.pdf(z, loc=self.mean, scale=self.sd)

    def integral(self):
        return float(integrate.simpson(self.density, x=self.grid))

    @property
    def mode(self):
        return float(self.grid[np.argmax(self.density)])


def estimative_density(fit_result, z_design, width=10.0, points=2001):
    """Plug-in predictive density for a future observation at day ``z_design``."""
    if not z_design > 0:
        raise DomainError(f"z_design must be > 0, got {z_design}")
    theta = fit_result.theta
    mean = float(fit_result.family.eval(z_design, theta.beta))
    sd = theta.sigma
    grid = np.linspace(mean - width * sd, mean + width * sd, points)
    return PredictiveDensity(
        z_design=float(z_design),
        theta=theta,
        kind=fit_result.estimator_kind,
        mean=mean,
        sd=sd,
        grid=grid,
        density=stats.norm.pdf(grid, loc=mean, scale=sd),
    )


@dataclass
class Forecast:
    days: np.ndarray
    cumulative: np.ndarray
    daily: np.ndarray
    inflection: float
    peak_day: float

    def rows(self):
        for x, c, d in zip(self.days, self.cumulative, self.daily):
            yield int(x), float(c), float(d)


def forecast_curve(fit_result, horizon):
    """Fitted cumulative curve on days 1..horizon and its first differences.

    The first daily value is measured from the curve's limit at x -> 0+,
    so the daily values always sum to the cumulative level.  ``horizon`` may
    also be an explicit array of consecutive day indices.
    """
    fam = fit_result.family
    beta = fit_result.theta.beta
    if np.ndim(horizon) == 0:
        days = np.arange(1, int(horizon) + 1, dtype=float)
    else:
        days = np.asarray(horizon, dtype=float)
    cum = fam.eval(days, beta)
    prev = np.empty_like(cum)
    prev[1:] = cum[:-1]
    if days[0] == 1:
        prev[0] = fam.limit_at_zero(beta)
    else:
        prev[0] = fam.eval(days[0] - 1, beta)
    daily = cum - prev
    names = fam.param_names
    inflection = float(beta[names.index("e")]) if "e" in names else float("nan")
    peak = float(days[np.argmax(daily)])
    return Forecast(days, cum, daily, inflection, peak)


# ---------------------------------------------------------------------------
# Monte Carlo study
# ---------------------------------------------------------------------------

@dataclass
class SimScenario:
    """Data-generating truth and study settings.

    Errors are N(0, sigma2) under the central regime and the mixture
    (1 - epsilon) N(0, sigma2) + epsilon N(delta * sigma, sigma2) under the
    contaminated regime; ``delta`` is in units of sigma.
    """

    family: str = "log-logistic-4"
    beta: tuple = (-4.0, 0.0, 1000.0, 30.0)
    sigma2: float = 400.0
    n: int = 60
    gamma: float = 1.5
    epsilon: float = 0.05
    delta: float = 10.0
    z_design: float | None = None
    regimes: tuple = ("central", "contaminated")

    def __post_init__(self):
        fam = get_family(self.family)
        self.beta = tuple(float(b) for b in self.beta)
        if len(self.beta) != fam.arity:
            raise DomainError(f"{fam.name} needs {fam.arity} parameters, got {len(self.beta)}")
        TsallisConfig(self.gamma)
        if not self.sigma2 > 0:
            raise DomainError("sigma2 must be > 0")
        if not 0 <= self.epsilon < 1:
            raise DomainError("epsilon must lie in [0, 1)")
        for r in self.regimes:
            if r not in ("central", "contaminated"):
                raise DomainError(f"unknown regime {r!r}")
        if self.z_design is None:
            self.z_design = float(self.n + 1)

    @property
    def xs(self):
        return np.arange(1, self.n + 1, dtype=float)

    @property
    def target(self):
        """True mean mu(z_design, beta) being predicted."""
        return float(get_family(self.family).eval(self.z_design, np.array(self.beta)))

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        unknown = set(d) - set(known)
        if unknown:
            raise DomainError(f"unknown scenario keys: {sorted(unknown)}")
        if "regimes" in known:
            known["regimes"] = tuple(known["regimes"])
        return cls(**known)

    def to_dict(self):
        d = asdict(self)
        d["beta"] = list(self.beta)
        d["regimes"] = list(self.regimes)
        return d


_REGIME_CODE = {"central": 0, "contaminated": 1}


def draw_sample(scenario, regime, rng):
    fam = get_family(scenario.family)
    mu = fam.eval(scenario.xs, np.array(scenario.beta))
    sd = np.sqrt(scenario.sigma2)
    eps = rng.normal(0.0, sd, scenario.n)
    if regime == "contaminated":
        hit = rng.random(scenario.n) < scenario.epsilon
        eps = eps + hit * scenario.delta * sd
    return mu + eps


def _replicate(args):
    """Fit both estimators on one simulated sample; returns (mle, tsallis) or None."""
    scenario, seed, regime, rep = args
    ss = np.random.SeedSequence([seed, _REGIME_CODE[regime], rep])
    rng = np.random.default_rng(ss)
    ys = draw_sample(scenario, regime, rng)
    model = RegressionModel(scenario.xs, ys, scenario.family)
    try:
        mle = fit(model, None)
        tsal = fit(
            model,
            TsallisConfig(scenario.gamma),
            FitOptions(extra_starts=(mle.theta,), mle_start=False),
        )
    except ConvergenceError:
        return None
    fam = model.family
    return (
        float(fam.eval(scenario.z_design, mle.theta.beta)),
        float(fam.eval(scenario.z_design, tsal.theta.beta)),
    )


@dataclass
class EstimatorSummary:
    mean: float
    bias: float
    sd: float
    mc_se: float
    quartiles: tuple
    whiskers: tuple
    n: int

    @classmethod
    def from_values(cls, values, target):
        v = np.asarray(values, dtype=float)
        q1, q2, q3 = np.percentile(v, [25, 50, 75])
        iqr = q3 - q1
        lo = float(v[v >= q1 - 1.5 * iqr].min())
        hi = float(v[v <= q3 + 1.5 * iqr].max())
        sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
        mean = float(v.mean())
        return cls(
            mean=mean,
            bias=mean - target,
            sd=sd,
            mc_se=float(sd / np.sqrt(v.size)),
            quartiles=(float(q1), float(q2), float(q3)),
            whiskers=(lo, hi),
            n=int(v.size),
        )


@dataclass
class RegimeSummary:
    regime: str
    n_reps: int
    n_excluded: int
    estimators: dict
    values: dict = field(repr=False, default_factory=dict)


@dataclass
class SimulationReport:
    scenario: SimScenario
    seed: int
    n_reps: int
    target: float
    regimes: dict

    def to_dict(self, include_values=False):
        out = {
            "scenario": self.scenario.to_dict(),
            "contamination_scheme": "(1-eps) N(0, sigma2) + eps N(delta*sigma, sigma2) in the errors",
            "seed": self.seed,
            "n_reps": self.n_reps,
            "target_mean": self.target,
            "regimes": {},
        }
        for name, reg in self.regimes.items():
            entry = {
                "n_reps": reg.n_reps,
                "n_excluded": reg.n_excluded,
                "estimators": {k: asdict(v) for k, v in reg.estimators.items()},
            }
            if include_values:
                entry["values"] = {k: list(map(float, v)) for k, v in reg.values.items()}
            out["regimes"][name] = entry
        return out


def run_simulation(scenario, seed=42, reps=1000, workers=1, max_excluded=0.01):
    """Monte Carlo comparison of MLE and Tsallis point predictions of mu(z, beta).

    Each replicate's random stream is derived from (seed, regime, replicate
    index), so results do not depend on ``workers``.  Replicates where either
    fit fails to converge are excluded and counted; more than
    ``max_excluded`` of them raises ``ConvergenceError``.
    """
    target = scenario.target
    regimes = {}
    for regime in scenario.regimes:
        jobs = [(scenario, seed, regime, r) for r in range(reps)]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                out = list(pool.map(_replicate, jobs, chunksize=max(1, reps // (4 * workers))))
        else:
            out = [_replicate(j) for j in jobs]
        kept = [o for o in out if o is not None]
        excluded = reps - len(kept)
        if excluded > max_excluded * reps:
            raise ConvergenceError(
                f"{excluded} of {reps} replicates failed to converge in the {regime} regime"
            )
        vals = {
            "MLE": np.array([k[0] for k in kept]),
            "Tsallis": np.array([k[1] for k in kept]),
        }
        regimes[regime] = RegimeSummary(
            regime=regime,
            n_reps=reps,
            n_excluded=excluded,
            estimators={k: EstimatorSummary.from_values(v, target) for k, v in vals.items()},
            values=vals,
        )
    return SimulationReport(scenario, int(seed), int(reps), target, regimes)
