"""``robustfit`` command line: fit, predict, diagnose, simulate, table.

Every JSON artifact carries a ``metadata`` block (package version, seed,
gamma, model, sigma convention, subcommand settings).  JSON is written
with sorted keys so identical runs give identical bytes.  On failure the
command prints an error JSON document to stderr and exits with status 2
(invalid configuration) or 1 (runtime failure).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from . import __version__
from .data import bundled_path, load_csv, to_cumulative, to_daily
from .diagnostics import influence_curve, observation_weights
from .errors import ConfigError, ConvergenceError, RobustFitError
from .estimation import FitOptions, FitResult, RegressionModel, fit
from .inference import CONVENTIONS, DEFAULT_CONVENTION, sandwich, wald_test
from .models import FAMILIES
from .prediction import SimScenario, estimative_density, forecast_curve, run_simulation
from .scoring import Theta, TsallisConfig
from .svgplot import COLORS, Panel, figure, fmt

log = logging.getLogger("robustfit")

DEFAULT_SEED = 42
DEFAULT_GAMMA = 1.5
DEFAULT_MODEL = "log-logistic-5"
BUNDLED_PREFIX = "bundled:"

__all__ = ["main", "build_parser", "DEFAULT_SEED"]


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _clean(obj):
    """Make ``obj`` JSON-safe: arrays to lists, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj):
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _write_text(path, text):
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _write_csv(path, header, rows):
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _cell(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else ""
    return v


def _svg_path(out, suffix=""):
    out = Path(out)
    return out.with_name(out.stem + suffix + ".svg")


def _metadata(args, gamma=None, model=None, extra=None):
    settings = {
        k: v for k, v in sorted(vars(args).items())
        if k not in ("func", "verbose") and v is not None
    }
    meta = {
        "package": "robustfit",
        "version": __version__,
        "subcommand": args.command,
        "seed": getattr(args, "seed", None),
        "gamma": gamma,
        "model": model,
        "sigma_convention": getattr(args, "convention", DEFAULT_CONVENTION),
        "settings": {k: (str(v) if isinstance(v, Path) else v) for k, v in settings.items()},
    }
    if extra:
        meta.update(extra)
    return meta


def _resolve_input(text):
    if text.startswith(BUNDLED_PREFIX):
        return bundled_path(text[len(BUNDLED_PREFIX):])
    return Path(text)


def _gamma_arg(text):
    try:
        g = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"gamma must be a number, got {text!r}") from None
    if not (math.isfinite(g) and g > 1.0):
        raise argparse.ArgumentTypeError(f"gamma must be > 1, got {text}")
    return g


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _level_arg(text):
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"level must lie in (0, 1), got {text}")
    return v


class _Parser(argparse.ArgumentParser):
    """Argument errors raise ``ConfigError`` so ``main`` can report them as JSON."""

    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def _load_series(args):
    path = _resolve_input(args.input)
    if not path.is_file():
        raise ConfigError(f"input file not found: {args.input}")
    series = load_csv(
        path,
        format=args.format,
        series_name=args.series,
        region=args.region,
        kind=args.kind,
        allow_gaps=args.allow_gaps,
    )
    if args.transform == "cumsum":
        series = to_cumulative(series if series.kind == "daily" else _as_daily_level(series))
    elif args.transform == "diff":
        series = to_daily(series)
    if args.cumulative and series.kind != "cumulative":
        series = to_cumulative(series)
    return series


def _as_daily_level(series):
    return replace(series, kind="daily")


def _fit_payload(result, series, args, matrices, wald):
    return {
        "metadata": _metadata(args, result.gamma, result.family.name),
        "data": {
            "dates": [d.isoformat() for d in series.dates],
            "xs": series.day_index,
            "ys": series.values,
            "kind": series.kind,
            "region": series.region,
            "series": series.series_name,
            "warnings": list(series.warnings),
        },
        "fit": result.to_dict(),
        "inference": {
            "sandwich": matrices.to_dict(),
            "wald": wald.to_dict(),
            "parameter_order": list(result.family.param_names) + ["sigma2"],
        },
    }


def _table_row(payload):
    data = payload["data"]
    fitd = payload["fit"]
    pars = payload["inference"]["wald"]["parameters"]
    row = {
        "region": data["region"],
        "series": data["series"],
        "model": fitd["model"],
        "estimator": fitd["estimator_kind"],
    }
    for name in ("e", "d"):
        p = pars.get(name)
        if p is None:
            row.update({name: float("nan"), f"{name}_lower": float("nan"), f"{name}_upper": float("nan")})
            row[f"{name}_report"] = ""
            continue
        row[name] = p["estimate"]
        row[f"{name}_lower"] = p["lower"]
        row[f"{name}_upper"] = p["upper"]
        digits = 1 if name == "e" else 0
        row[f"{name}_report"] = (
            f"{p['estimate']:.{digits}f} ({p['lower']:.{digits}f};{p['upper']:.{digits}f})"
        )
    return row


TABLE_COLUMNS = [
    "region", "series", "model", "estimator",
    "e", "e_lower", "e_upper", "d", "d_lower", "d_upper", "e_report", "d_report",
]


def _write_table(path, payloads):
    rows = [_table_row(p) for p in payloads]
    _write_csv(path, TABLE_COLUMNS, ([r[c] for c in TABLE_COLUMNS] for r in rows))


def cmd_fit(args):
    series = _load_series(args)
    model = RegressionModel(series.day_index, series.values, args.model)
    objective = None if args.objective == "mle" else TsallisConfig(args.gamma)
    options = FitOptions(
        max_iter=args.max_iter,
        tol=args.tol,
        n_starts=args.n_starts,
        seed=args.seed,
    )
    result = fit(model, objective, options)
    matrices = sandwich(model, result.theta, result.config, args.convention)
    wald = wald_test(result, level=args.level, convention=args.convention, matrices=matrices)
    payload = _fit_payload(result, series, args, matrices, wald)
    _write_text(args.out, dumps(payload))
    if args.table:
        _write_table(args.table, [payload])
    if args.plot == "svg":
        fc = forecast_curve(result, max(int(series.day_index[-1]), args.horizon))
        _write_text(_svg_path(args.out), _curve_svg(result, series.day_index, series.values, fc))
    e = result.named_params().get("e")
    log.info("fit converged=%s e=%s", result.converged, e)
    return 0


# ---------------------------------------------------------------------------
# loading a saved fit
# ---------------------------------------------------------------------------

def load_fit(path):
    """Rebuild a ``FitResult`` (and its payload) from a ``fit.json`` file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"fit file not found: {path}")
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
        data, f = payload["data"], payload["fit"]
        model = RegressionModel(np.array(data["xs"], float), np.array(data["ys"], float), f["model"])
        params = f["params"]
        beta = [params[k] for k in model.family.param_names]
        result = FitResult(
            theta=Theta(beta, params["sigma2"]),
            objective=f["objective"],
            converged=f["converged"],
            iterations=f["iterations"],
            gradient_norm=f["gradient_norm"],
            estimator_kind=f["estimator_kind"],
            gamma=f["gamma"],
            model=model,
            fixed=dict(f.get("fixed", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: not a robustfit fit document ({exc})") from None
    return result, payload


# ---------------------------------------------------------------------------
# predict
# ---------------------------------------------------------------------------

def _curve_svg(result, xs, ys, fc):
    """Three panels: cumulative, zoom on the observed window, daily."""
    title = f"{result.family.name}, {result.estimator_kind}"
    full = Panel("cumulative", "day", "count")
    full.points(xs, ys, label="observed").line(fc.days, fc.cumulative, label="fitted")
    zoom = Panel("cumulative (observed window)", "day", "count")
    mask = fc.days <= xs[-1]
    zoom.points(xs, ys).line(fc.days[mask], fc.cumulative[mask])
    daily = Panel("daily", "day", "count")
    obs_daily = np.diff(ys, prepend=ys[0])
    daily.points(xs[1:], obs_daily[1:], label="observed").line(fc.days, fc.daily, label="fitted")
    daily.hline(0.0)
    return figure([full, zoom, daily], title=f"{title}; e = {fmt(fc.inflection)}, peak day {fmt(fc.peak_day)}")


def cmd_predict(args):
    result, payload = load_fit(args.fit)
    fc = forecast_curve(result, args.horizon)
    dates = payload["data"].get("dates") or []
    first = None
    if dates:
        first = date.fromisoformat(dates[0]) - timedelta(days=int(payload["data"]["xs"][0]) - 1)
    rows = []
    for day, cum, dly in fc.rows():
        d = (first + timedelta(days=day - 1)).isoformat() if first else ""
        rows.append((day, d, cum, dly))
    _write_csv(args.out, ["day", "date", "cumulative", "daily"], rows)
    meta = _metadata(args, result.gamma, result.family.name)
    summary = {
        "metadata": meta,
        "inflection": fc.inflection,
        "peak_day": fc.peak_day,
        "horizon": int(args.horizon),
        "final_cumulative": float(fc.cumulative[-1]),
    }
    if args.density_day is not None:
        dens = estimative_density(result, args.density_day)
        _write_csv(
            Path(args.out).with_name(Path(args.out).stem + "_density.csv"),
            ["y", "density"],
            zip(dens.grid, dens.density),
        )
        summary["density"] = {"z_design": dens.z_design, "mean": dens.mean, "sd": dens.sd}
    _write_text(Path(args.out).with_suffix(".json"), dumps(summary))
    if args.plot == "svg":
        _write_text(_svg_path(args.out), _curve_svg(result, result.model.xs, result.model.ys, fc))
    return 0


# ---------------------------------------------------------------------------
# diagnose
# ---------------------------------------------------------------------------

def cmd_diagnose(args):
    result, _ = load_fit(args.fit)
    model = result.model
    x = float(model.xs[-1]) if args.x is None else args.x
    cfg = result.config
    curve = influence_curve(
        model, result.theta, cfg, x, width=args.width, points=args.points, form=args.form,
        convention=args.convention,
    )
    _write_csv(args.out, ["parameter", "y", "influence"], curve.rows())
    w = observation_weights(model, result)
    r = model.ys - model.family.eval(model.xs, result.theta.beta)
    weights_path = Path(args.out).with_name(Path(args.out).stem + "_weights.csv")
    _write_csv(weights_path, ["day", "y", "residual", "weight"], zip(model.xs.astype(int), model.ys, r, w))
    summary = {
        "metadata": _metadata(args, result.gamma, result.family.name),
        "design_point": x,
        "form": args.form,
        "sup_abs_influence": dict(zip(curve.names, map(float, curve.sup_abs))),
        "min_weight": float(np.min(w)),
        "downweighted_days": [int(d) for d, wi in zip(model.xs, w) if wi < 0.5],
    }
    _write_text(Path(args.out).with_suffix(".json"), dumps(summary))
    if args.plot == "svg":
        panels = []
        for j, name in enumerate(curve.names):
            p = Panel(f"influence: {name}", "y", "IF", width=240, height=200)
            p.line(curve.grid, curve.values[:, j])
            p.hline(0.0)
            panels.append(p)
        wp = Panel("observation weights", "day", "weight", width=240, height=200)
        wp.points(model.xs, w)
        wp.ylim = (0.0, 1.0)
        panels.append(wp)
        _write_text(_svg_path(args.out), figure(panels, title=f"{result.estimator_kind} at day {fmt(x)}"))
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _load_scenario(path):
    if path is None:
        return SimScenario()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"scenario file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: scenario must be a JSON object")
    if raw.get("family", DEFAULT_MODEL) not in FAMILIES and "family" in raw:
        raise ConfigError(f"unknown model {raw['family']!r}; choose from {sorted(FAMILIES)}")
    try:
        return SimScenario.from_dict(raw)
    except (RobustFitError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _simulation_svg(report):
    panels = []
    target = report.target
    for name, reg in report.regimes.items():
        p = Panel(f"{name}", "estimator", "mu(z) estimate", width=300, height=260)
        for pos, (est, color) in enumerate((("MLE", COLORS["mle"]), ("Tsallis", COLORS["tsallis"]))):
            s = reg.estimators[est]
            p.box(pos, s.quartiles, s.whiskers, color, f"{est} (bias {fmt(s.bias)})")
        p.hline(target, label=f"target {fmt(target)}")
        p.xlim = (-0.75, 1.75)
        panels.append(p)
    return figure(panels, title=f"{report.n_reps} replicates, seed {report.seed}")


def cmd_simulate(args):
    scenario = _load_scenario(args.scenario)
    report = run_simulation(scenario, seed=args.seed, reps=args.reps, workers=args.workers)
    payload = report.to_dict(include_values=args.include_values)
    payload["metadata"] = _metadata(args, scenario.gamma, scenario.family)
    _write_text(args.out, dumps(payload))
    if args.plot == "svg":
        _write_text(_svg_path(args.out), _simulation_svg(report))
    return 0


# ---------------------------------------------------------------------------
# table
# ---------------------------------------------------------------------------

def cmd_table(args):
    payloads = []
    for p in args.fit:
        path = Path(p)
        if not path.is_file():
            raise ConfigError(f"fit file not found: {p}")
        try:
            payloads.append(json.loads(path.read_text(encoding="utf-8")))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})") from None
    try:
        _write_table(args.out, payloads)
    except KeyError as exc:
        raise ConfigError(f"not a robustfit fit document: missing {exc}") from None
    return 0


# ---------------------------------------------------------------------------
# parser and entry point
# ---------------------------------------------------------------------------

def build_parser():
    fmt_cls = argparse.ArgumentDefaultsHelpFormatter
    parser = _Parser(prog="robustfit", description=__doc__.splitlines()[0], formatter_class=fmt_cls)
    parser.add_argument("--version", action="version", version=f"robustfit {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(p, seed=True):
        if seed:
            p.add_argument("--seed", type=int, default=DEFAULT_SEED, help="seed for all randomness")
        p.add_argument("--convention", choices=CONVENTIONS, default=DEFAULT_CONVENTION,
                       help="reading of the sigma powers in the sandwich matrices")
        p.add_argument("--plot", choices=("svg",), default=None, help="also write an SVG figure")

    p = sub.add_parser("fit", help="fit a growth curve to a CSV series", formatter_class=fmt_cls)
    p.add_argument("--input", required=True,
                   help=f"CSV path, or {BUNDLED_PREFIX}NAME for a file shipped with the package")
    p.add_argument("--format", choices=("auto", "national", "regional", "generic"), default="auto")
    p.add_argument("--series", default=None, help="column to fit (e.g. deceduti, terapia_intensiva)")
    p.add_argument("--region", default=None, help="region name for the regional layout")
    p.add_argument("--kind", choices=("cumulative", "daily"), default=None,
                   help="override the kind inferred from the column name")
    p.add_argument("--cumulative", action="store_true",
                   help="fit the cumulative series (running sum of a daily series)")
    p.add_argument("--transform", choices=("none", "cumsum", "diff"), default="none",
                   help="cumsum: running sum of the raw column; diff: daily differences")
    p.add_argument("--allow-gaps", action="store_true", help="keep calendar-day indices across missing dates")
    p.add_argument("--model", choices=sorted(FAMILIES), default=DEFAULT_MODEL)
    p.add_argument("--objective", choices=("tsallis", "mle"), default="tsallis")
    p.add_argument("--gamma", type=_gamma_arg, default=DEFAULT_GAMMA, help="Tsallis exponent, > 1")
    p.add_argument("--level", type=_level_arg, default=0.95, help="confidence level of the intervals")
    p.add_argument("--max-iter", type=_positive_int, default=2000)
    p.add_argument("--tol", type=float, default=1e-8, help="relative gradient tolerance")
    p.add_argument("--n-starts", type=_positive_int, default=1, help="number of optimizer starts")
    p.add_argument("--horizon", type=_positive_int, default=120, help="days shown in the SVG")
    p.add_argument("--out", default="fit.json")
    p.add_argument("--table", default=None, help="also write a one-row (e, d) table CSV")
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="forecast curve from a saved fit", formatter_class=fmt_cls)
    p.add_argument("--fit", required=True, help="fit.json written by 'robustfit fit'")
    p.add_argument("--horizon", type=_positive_int, default=120, help="last day of the forecast")
    p.add_argument("--density-day", type=float, default=None,
                   help="also tabulate the estimative predictive density at this day")
    p.add_argument("--out", default="forecast.csv")
    common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("diagnose", help="influence curves and observation weights", formatter_class=fmt_cls)
    p.add_argument("--fit", required=True)
    p.add_argument("--x", type=float, default=None, help="design day (default: last observed day)")
    p.add_argument("--width", type=float, default=8.0, help="grid half-width in units of sigma")
    p.add_argument("--points", type=_positive_int, default=401)
    p.add_argument("--form", choices=("normalized", "proportional"), default="normalized")
    p.add_argument("--out", default="if_curves.csv")
    common(p)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("simulate", help="Monte Carlo comparison of MLE and Tsallis", formatter_class=fmt_cls)
    p.add_argument("--scenario", default=None, help="scenario JSON (default: built-in scenario)")
    p.add_argument("--reps", type=_positive_int, default=1000)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--include-values", action="store_true", help="store every replicate's estimate")
    p.add_argument("--out", default="report.json")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("table", help="(e, d) estimates with intervals from several fits", formatter_class=fmt_cls)
    p.add_argument("--fit", action="append", required=True, help="fit.json; repeat for more rows")
    p.add_argument("--out", default="table.csv")
    p.set_defaults(func=cmd_table)
    return parser


def _error_document(exc, status):
    return {
        "error": {
            "type": type(exc).__name__,
            "message": str(exc),
            "status": status,
        },
        "version": __version__,
    }


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        sys.stderr.write(dumps(_error_document(exc, 2)))
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        sys.stderr.write(dumps(_error_document(exc, 2)))
        return 2
    except ConvergenceError as exc:
        doc = _error_document(exc, 1)
        if exc.result is not None:
            doc["error"]["best_attempt"] = exc.result.to_dict()
        sys.stderr.write(dumps(doc))
        return 1
    except (RobustFitError, ValueError, OSError) as exc:
        sys.stderr.write(dumps(_error_document(exc, 1)))
        return 1


if __name__ == "__main__":
    sys.exit(main())
