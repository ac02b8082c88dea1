"""Monte Carlo studies shared by the acceptance and unit tests.

Each study is cached per (arguments) for the lifetime of the test session
so that criteria reusing the same simulation do not pay for it twice.
``fresh=True`` bypasses the cache (used by the determinism check).
"""
from __future__ import annotations

import hashlib
import json
from functools import lru_cache

import numpy as np
from scipy import stats

from robustfit.errors import ConvergenceError
from robustfit.estimation import FitOptions, RegressionModel, fit
from robustfit.inference import adjusted_score_ratio, score_ratio_test, wald_test
from robustfit.models import get_family
from robustfit.prediction import SimScenario, run_simulation
from robustfit.scoring import Theta, TsallisConfig

FAMILY = "log-logistic-4"
TRUTH_BETA = (-4.0, 0.0, 1000.0, 30.0)
TRUTH_SIGMA = 20.0
N_OBS = 60
GAMMA = 1.5
NAMES = ("b", "c", "d", "e", "sigma2")


def _truth():
    return Theta(np.array(TRUTH_BETA), TRUTH_SIGMA ** 2)


def _sample(rng, n=N_OBS):
    fam = get_family(FAMILY)
    xs = np.arange(1.0, n + 1.0)
    ys = fam.eval(xs, np.array(TRUTH_BETA)) + rng.normal(0.0, TRUTH_SIGMA, n)
    return RegressionModel(xs, ys, fam)


def digest(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


# ---------------------------------------------------------------------------
# Wald interval coverage
# ---------------------------------------------------------------------------

def _wald_coverage(reps, seed, n):
    truth = _truth().as_vector()
    cfg = TsallisConfig(GAMMA)
    hits = {k: 0 for k in NAMES}
    failed = 0
    estimates = []
    for r in range(reps):
        rng = np.random.default_rng(np.random.SeedSequence([seed, r]))
        model = _sample(rng, n)
        try:
            res = fit(model, cfg)
        except ConvergenceError:
            failed += 1
            continue
        rep = wald_test(res)
        estimates.append(res.theta.as_vector().tolist())
        for k, name in enumerate(NAMES):
            lo, hi = rep.interval(name)
            hits[name] += int(lo <= truth[k] <= hi)
    used = reps - failed
    return {
        "reps": reps,
        "failed": failed,
        "coverage": {k: v / used for k, v in hits.items()},
        "estimates": estimates,
    }


@lru_cache(maxsize=None)
def _wald_cached(reps, seed, n):
    return _wald_coverage(reps, seed, n)


def wald_coverage(reps=2000, seed=42, n=N_OBS, fresh=False):
    return _wald_coverage(reps, seed, n) if fresh else _wald_cached(reps, seed, n)


# ---------------------------------------------------------------------------
# score-ratio calibration on one-parameter slices
# ---------------------------------------------------------------------------

def _ratio_slice(name, reps, seed):
    truth = _truth()
    cfg = TsallisConfig(GAMMA)
    fixed = {k: v for k, v in zip(NAMES, truth.as_vector()) if k != name}
    adj, raw, p_mix = [], [], []
    weight = None
    for r in range(reps):
        rng = np.random.default_rng(np.random.SeedSequence([seed, NAMES.index(name), r]))
        model = _sample(rng)
        res = fit(model, cfg, FitOptions(fixed=fixed))
        u = score_ratio_test(model, res, truth, method="ruben")
        a = adjusted_score_ratio(model, res, truth)
        adj.append(a.statistic)
        raw.append(u.statistic)
        p_mix.append(u.p_value)
        weight = float(u.weights[0])
    adj, raw, p_mix = np.array(adj), np.array(raw), np.array(p_mix)
    # mixture reference for d = 1 is weight * chi2_1, simulated as the criterion asks
    ref = weight * np.random.default_rng(seed).chisquare(1.0, 100_000)
    return {
        "param": name,
        "reps": reps,
        "weight": weight,
        "ks_adjusted": float(stats.kstest(adj, "chi2", args=(1,)).statistic),
        "ks_unadjusted_vs_mixture": float(stats.ks_2samp(raw, ref).statistic),
        "rejection_rate": float(np.mean(p_mix < 0.05)),
        "adjusted": adj.tolist(),
        "unadjusted": raw.tolist(),
    }


@lru_cache(maxsize=None)
def _ratio_cached(name, reps, seed):
    return _ratio_slice(name, reps, seed)


def ratio_slice(name, reps=2000, seed=42, fresh=False):
    return _ratio_slice(name, reps, seed) if fresh else _ratio_cached(name, reps, seed)


# ---------------------------------------------------------------------------
# robustness contrast
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _contrast_cached(reps, seed):
    return run_simulation(SimScenario(), seed=seed, reps=reps).to_dict(include_values=True)


def robustness_contrast(reps=1000, seed=42, fresh=False):
    if fresh:
        return run_simulation(SimScenario(), seed=seed, reps=reps).to_dict(include_values=True)
    return _contrast_cached(reps, seed)
