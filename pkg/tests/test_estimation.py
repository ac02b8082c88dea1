import numpy as np
import pytest

from robustfit.errors import ConvergenceError, DegenerateDataError, DomainError
from robustfit.estimation import (
    FitOptions,
    FitResult,
    RegressionModel,
    _select,
    fit,
    fit_mle,
    fit_tsallis,
    resolve_objective,
)
from robustfit.models import get_family
from robustfit.scoring import Theta, TsallisConfig, score_contributions, tsallis_score_total


XS = np.arange(1.0, 61.0)


class TestRegressionModel:
    def test_validation(self):
        with pytest.raises(DegenerateDataError):
            RegressionModel(np.array([1.0, 3.0, 2.0, 4.0, 5.0, 6.0]), np.zeros(6), "log-logistic-4")
        with pytest.raises(DegenerateDataError):
            RegressionModel(np.arange(1.0, 5.0), np.arange(4.0), "log-logistic-4")
        with pytest.raises(DegenerateDataError):
            RegressionModel(np.arange(1.0, 8.0), np.arange(6.0), "log-logistic-4")
        with pytest.raises(DomainError):
            RegressionModel(np.arange(0.0, 8.0), np.arange(8.0), "log-logistic-4")

    def test_objective_names(self):
        assert resolve_objective("mle") is None
        assert resolve_objective("tsallis").gamma == 1.5
        assert resolve_objective(2.0).gamma == 2.0
        with pytest.raises(DomainError):
            resolve_objective("brier")


class TestMLE:
    def test_noiseless_recovery(self):
        beta = np.array([-3.0, 5.0, 900.0, 30.0, 1.2])
        fam = get_family("log-logistic-5")
        res = fit(RegressionModel(XS, fam.eval(XS, beta), fam), None)
        assert res.converged
        np.testing.assert_allclose(res.theta.beta, beta, rtol=1e-4)
        assert res.theta.sigma2 <= 1e-8

    def test_alias(self, ll4_model):
        a = fit(ll4_model, "mle")
        b = fit_mle(ll4_model)
        np.testing.assert_array_equal(a.theta.as_vector(), b.theta.as_vector())
        assert a.estimator_kind == "MLE" and a.gamma is None

    def test_profile_variance(self, ll4_model):
        res = fit_mle(ll4_model)
        assert res.theta.sigma2 == pytest.approx(ll4_model.rss(res.theta.beta) / ll4_model.n, rel=1e-8)

    def test_linear_parameters_match_least_squares(self):
        # b and e fixed: mu = c (1 - g) + d g is linear in (c, d)
        fam = get_family("log-logistic-4")
        rng = np.random.default_rng(4)
        b, e = -3.0, 28.0
        ys = fam.eval(XS, np.array([b, 10.0, 500.0, e])) + rng.normal(0, 8, XS.size)
        g = 1.0 / (1.0 + np.exp(b * (np.log(XS) - np.log(e))))
        design = np.column_stack([1.0 - g, g])
        ols, *_ = np.linalg.lstsq(design, ys, rcond=None)
        res = fit(RegressionModel(XS, ys, fam), None, FitOptions(fixed={"b": b, "e": e}))
        np.testing.assert_allclose(res.theta.beta[1:3], ols, rtol=1e-6)
        assert res.theta.beta[0] == b and res.theta.beta[3] == e


class TestTsallis:
    def test_kind_and_gamma(self, ll4_model):
        res = fit_tsallis(ll4_model, 2.0)
        assert res.estimator_kind == "Tsallis(gamma=2)"
        assert res.gamma == 2.0
        assert res.config == TsallisConfig(2.0)

    def test_estimating_equation_residual(self, ll4_model):
        cfg = TsallisConfig(1.5)
        res = fit(ll4_model, cfg)
        assert res.converged
        s = cfg.gamma * cfg.alpha * np.sum(score_contributions(ll4_model, res.theta, cfg), axis=0)
        total = tsallis_score_total(ll4_model, res.theta, cfg)
        assert np.max(np.abs(s)) <= 1e-6 * (1 + abs(total))

    def test_multistart_stability(self, ll4_model):
        cfg = TsallisConfig(1.5)
        base = fit(ll4_model, cfg)
        beta0 = ll4_model.family.self_start(ll4_model.xs, ll4_model.ys)
        rng = np.random.default_rng(9)
        for _ in range(10):
            b = beta0 * rng.uniform(0.8, 1.2, beta0.size)
            start = Theta(b, ll4_model.rss(b) / ll4_model.n)
            res = fit(ll4_model, cfg, FitOptions(start=start, mle_start=False))
            assert res.objective == pytest.approx(base.objective, rel=1e-6)

    @pytest.mark.parametrize("objective", [None, TsallisConfig(1.5)])
    def test_scale_equivariance(self, ll4_model, objective):
        k = 7.5
        a = fit(ll4_model, objective)
        b = fit(ll4_model.with_ys(k * ll4_model.ys), objective)
        pa, pb = a.named_params(), b.named_params()
        for name in ("b", "e"):
            assert pb[name] == pytest.approx(pa[name], rel=1e-4)
        for name in ("c", "d"):
            assert pb[name] == pytest.approx(k * pa[name], rel=1e-4, abs=1e-4 * k * abs(pa["d"]))
        assert pb["sigma2"] == pytest.approx(k * k * pa["sigma2"], rel=1e-4)

    def test_non_convergence_reports_trace(self, ll4_model):
        with pytest.raises(ConvergenceError) as info:
            fit(ll4_model, "tsallis", FitOptions(max_iter=1, warmup_iter=1, mle_start=False))
        assert info.value.result is not None
        assert info.value.trace

    def test_no_raise_option(self, ll4_model):
        res = fit(ll4_model, "tsallis", FitOptions(max_iter=1, warmup_iter=1, mle_start=False,
                                                   raise_on_failure=False))
        assert not res.converged

    def test_degenerate_data(self):
        with pytest.raises(DegenerateDataError):
            fit(RegressionModel(XS, np.full(XS.size, 5.0), "log-logistic-4"), "tsallis")

    def test_fixed_sigma2(self, ll4_model):
        res = fit(ll4_model, "tsallis", FitOptions(fixed={"sigma2": 400.0}))
        assert res.theta.sigma2 == 400.0
        assert res.fixed == {"sigma2": 400.0}

    def test_tie_break_prefers_small_beta(self, ll4_model):
        def make(beta, obj):
            return FitResult(Theta(beta, 1.0), obj, True, 1, 0.0, "MLE", None, ll4_model)

        big = make([5.0, 0.0, 10.0, 3.0], 1.0)
        small = make([1.0, 0.0, 2.0, 3.0], 1.0 + 1e-12)
        worse = make([0.1, 0.0, 0.1, 0.1], 1.5)
        assert _select([big, small, worse]) is small
        assert _select([big, worse]) is big

    def test_to_dict(self, ll4_model):
        d = fit(ll4_model, "tsallis").to_dict()
        assert set(d["params"]) == {"b", "c", "d", "e", "sigma2"}
        assert d["converged"] is True


class TestMonteCarlo:
    TRUTH = np.array([-1.0, 0.0, 29392.0, 39.9, 1.0])
    SIGMA = 50.0

    def _reps(self, reps, outliers=False):
        fam = get_family("log-logistic-5")
        mu = fam.eval(XS, self.TRUTH)
        rng = np.random.default_rng(2020)
        out = []
        for _ in range(reps):
            ys = mu + rng.normal(0, self.SIGMA, XS.size)
            if outliers:
                idx = rng.choice(XS.size, size=3, replace=False)
                ys[idx] += 20 * self.SIGMA
            model = RegressionModel(XS, ys, fam)
            mle = fit(model, None, FitOptions(fixed={"f": 1.0}))
            ts = fit(model, TsallisConfig(1.5), FitOptions(fixed={"f": 1.0}, extra_starts=(mle.theta,)))
            out.append((mle.named_params(), ts.named_params()))
        return out

    def test_tsallis_unbiased_for_e_and_d(self):
        reps = self._reps(200)
        for name, k in (("e", 3), ("d", 2)):
            v = np.array([t[name] for _, t in reps])
            se = v.std(ddof=1) / np.sqrt(v.size)
            assert abs(v.mean() - self.TRUTH[k]) <= 3 * se, (name, v.mean(), se)

    def test_outliers_move_tsallis_less(self):
        reps = self._reps(100, outliers=True)
        dev_mle = np.mean([abs(m["d"] - self.TRUTH[2]) for m, _ in reps])
        dev_ts = np.mean([abs(t["d"] - self.TRUTH[2]) for _, t in reps])
        assert dev_ts < 0.5 * dev_mle
