import numpy as np
import pytest

from robustfit.estimation import RegressionModel
from robustfit.models import get_family


def central_diff(f, x, h=1e-5):
    """Central finite-difference gradient of scalar ``f`` at ``x`` with relative steps."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for k in range(x.size):
        step = h * max(1.0, abs(x[k]))
        xp, xm = x.copy(), x.copy()
        xp[k] += step
        xm[k] -= step
        g[k] = (f(xp) - f(xm)) / (2 * step)
    return g


def rel_err(a, b, floor=1e-9):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), floor)))


def make_data(beta=(-4.0, 0.0, 1000.0, 30.0), sigma=20.0, n=60, family="log-logistic-4", seed=0):
    fam = get_family(family)
    xs = np.arange(1, n + 1, dtype=float)
    rng = np.random.default_rng(seed)
    ys = fam.eval(xs, np.array(beta)) + rng.normal(0.0, sigma, n)
    return RegressionModel(xs, ys, family)


@pytest.fixture
def ll4_model():
    return make_data()


# high-precision reference formulas for the curve catalog, written from the
# textbook definitions and differentiated numerically with mpmath
def _mp_curve(name, x, beta):
    import mpmath as mp

    if name in ("log-logistic-4", "log-logistic-5"):
        b, c, d, e = beta[:4]
        f = beta[4] if len(beta) == 5 else mp.mpf(1)
        return c + (d - c) / (1 + mp.exp(b * (mp.log(x) - mp.log(e)))) ** f
    b, c, d, e = beta
    u = b * (mp.log(x) - mp.log(e)) if name == "weibull-1" else b * (x - e)
    return c + (d - c) * mp.exp(-mp.exp(u))


def mp_gradient(name, x, beta, dps=40):
    """d mu / d beta at (x, beta) to roughly ``dps`` digits."""
    import mpmath as mp

    with mp.workdps(dps):
        b = [mp.mpf(float(v)) for v in beta]
        xm = mp.mpf(float(x))
        out = []
        for k in range(len(b)):
            def f(t, k=k):
                bb = list(b)
                bb[k] = t
                return _mp_curve(name, xm, bb)
            out.append(float(mp.diff(f, b[k])))
    return np.array(out)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
