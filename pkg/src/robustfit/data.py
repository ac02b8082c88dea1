"""Loading epidemic count series from CSV and switching between daily and cumulative forms.

Three layouts are understood:

* ``national``: Protezione Civile national file, date column ``data`` and one
  column per series (``deceduti``, ``terapia_intensiva``, ...);
* ``regional``: same plus ``denominazione_regione``, filtered by ``region``;
* ``generic``: two columns ``date,value``.

Day indices start at 1 on the first retained date.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, replace
from datetime import date
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .estimation import RegressionModel

log = logging.getLogger(__name__)

__all__ = [
    "EpidemicSeries",
    "load_csv",
    "to_cumulative",
    "to_daily",
    "to_regression_model",
    "write_series_csv",
    "bundled_path",
]

DATE_COLUMN = "data"
REGION_COLUMN = "denominazione_regione"
# dpc columns published as running totals; everything else is a daily level
CUMULATIVE_COLUMNS = {"deceduti", "totale_casi", "dimessi_guariti", "tamponi", "casi_testati"}


@dataclass(frozen=True)
class EpidemicSeries:
    dates: tuple
    region: str
    values: np.ndarray
    kind: str
    series_name: str
    day_index: np.ndarray
    warnings: tuple = ()

    def __len__(self):
        return len(self.dates)

    def __post_init__(self):
        if self.kind not in ("cumulative", "daily"):
            raise DataFormatError(f"series kind must be 'cumulative' or 'daily', got {self.kind!r}")


def bundled_path(name):
    """Filesystem path of a CSV shipped in ``robustfit/data``."""
    return Path(str(resources.files("robustfit") / "data" / name))


def _parse_date(text, where):
    try:
        return date.fromisoformat(text.strip()[:10])
    except ValueError:
        raise DataFormatError(f"{where}: cannot parse date {text!r}") from None


def _parse_value(text, where, column):
    try:
        v = float(text)
    except (TypeError, ValueError):
        raise DataFormatError(f"{where}: non-numeric value {text!r} in column {column!r}") from None
    if not np.isfinite(v):
        raise DataFormatError(f"{where}: non-finite value {text!r} in column {column!r}")
    return v


def _detect_format(fields):
    if REGION_COLUMN in fields:
        return "regional"
    if DATE_COLUMN in fields:
        return "national"
    if "date" in fields and "value" in fields:
        return "generic"
    raise DataFormatError(f"unrecognized CSV layout with columns {fields}")


def load_csv(path, format="auto", series_name=None, region=None, kind=None, allow_gaps=False):
    """Read one series from a CSV file.

    Parameters
    ----------
    path : str or Path
    format : {"auto", "national", "regional", "generic"}
    series_name : str, optional
        Column to read; ``value`` for the generic layout, required otherwise.
    region : str, optional
        Region filter (regional layout only; required there).
    kind : {"cumulative", "daily"}, optional
        Overrides the kind inferred from the column name.
    allow_gaps : bool
        Keep missing calendar days as gaps in the day index instead of failing.
    """
    path = Path(path)
    raw = path.read_bytes()
    text = raw.decode("utf-8-sig")
    reader = csv.DictReader(io.StringIO(text))
    fields = reader.fieldnames or []
    if not fields:
        raise DataFormatError(f"{path}: empty file or missing header row")
    fmt = _detect_format(fields) if format == "auto" else format
    if fmt not in ("national", "regional", "generic"):
        raise DataFormatError(f"unknown CSV format {format!r}")

    date_col = "date" if fmt == "generic" else DATE_COLUMN
    column = series_name or ("value" if fmt == "generic" else None)
    if column is None:
        raise DataFormatError(f"{path}: a series column is required; available: {fields}")
    for needed in (date_col, column) + ((REGION_COLUMN,) if fmt == "regional" else ()):
        if needed not in fields:
            raise DataFormatError(
                f"{path}: unknown column {needed!r}; available columns: {', '.join(fields)}"
            )
    if fmt == "regional" and region is None:
        raise DataFormatError(f"{path}: regional layout needs a region")

    rows = []
    seen_regions = set()
    for row in reader:
        where = f"{path}:{reader.line_num}"
        if fmt == "regional":
            name = (row.get(REGION_COLUMN) or "").strip()
            seen_regions.add(name)
            if name != region:
                continue
        d = _parse_date(row.get(date_col) or "", where)
        v = _parse_value(row.get(column), where, column)
        rows.append((d, v, where))
    if fmt == "regional" and not rows:
        raise DataFormatError(
            f"{path}: unknown region {region!r}; available: {', '.join(sorted(seen_regions))}"
        )
    if not rows:
        raise DataFormatError(f"{path}: no data rows")

    rows.sort(key=lambda t: t[0])
    dates = [r[0] for r in rows]
    for (d0, _, _), (d1, _, w1) in zip(rows, rows[1:]):
        if d1 == d0:
            raise DataFormatError(f"{w1}: duplicate date {d1.isoformat()}")
    day_index = np.array([(d - dates[0]).days + 1 for d in dates], dtype=float)
    warnings = []
    gaps = np.flatnonzero(np.diff(day_index) > 1)
    if gaps.size:
        first = dates[gaps[0]]
        if not allow_gaps:
            raise DataFormatError(
                f"{path}: missing dates after {first.isoformat()} ({gaps.size} gap(s)); "
                "use allow_gaps to keep calendar-day indices"
            )
        warnings.append(f"{gaps.size} gap(s) in the calendar; day indices follow calendar days")

    values = np.array([r[1] for r in rows], dtype=float)
    if kind is None:
        kind = "cumulative" if column in CUMULATIVE_COLUMNS else "daily"
    if kind == "cumulative":
        drops = np.flatnonzero(np.diff(values) < 0)
        for i in drops:
            warnings.append(
                f"downward revision on {dates[i + 1].isoformat()}: "
                f"{values[i]:g} -> {values[i + 1]:g}"
            )
    for w in warnings:
        log.warning("%s: %s", path, w)
    return EpidemicSeries(
        dates=tuple(dates),
        region=region if fmt == "regional" else "national",
        values=values,
        kind=kind,
        series_name=column,
        day_index=day_index,
        warnings=tuple(warnings),
    )


def to_cumulative(series):
    """Running sum of a daily series."""
    if series.kind != "daily":
        raise DataFormatError(f"to_cumulative needs a daily series, got {series.kind}")
    return replace(series, values=np.cumsum(series.values), kind="cumulative")


def to_daily(series):
    """First differences of a cumulative series; the first day keeps its level.

    Negative differences (downward revisions) are kept and reported in
    ``warnings``.
    """
    if series.kind != "cumulative":
        raise DataFormatError(f"to_daily needs a cumulative series, got {series.kind}")
    daily = np.diff(series.values, prepend=0.0)
    warnings = list(series.warnings)
    for i in np.flatnonzero(daily[1:] < 0) + 1:
        msg = f"negative daily value {daily[i]:g} on {series.dates[i].isoformat()}"
        if msg not in warnings:
            warnings.append(msg)
    return replace(series, values=daily, kind="daily", warnings=tuple(warnings))


def to_regression_model(series, family="log-logistic-5"):
    return RegressionModel(series.day_index, series.values, family)


def write_series_csv(series, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "day", "value", "kind", "region", "series"])
        for d, x, v in zip(series.dates, series.day_index, series.values):
            w.writerow([d.isoformat(), int(x), repr(float(v)), series.kind, series.region, series.series_name])
