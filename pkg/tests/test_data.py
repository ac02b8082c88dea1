import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustfit.data import (
    EpidemicSeries,
    bundled_path,
    load_csv,
    to_cumulative,
    to_daily,
    to_regression_model,
    write_series_csv,
)
from robustfit.errors import DataFormatError


def write(tmp_path, text, name="in.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


NATIONAL = """data,stato,deceduti,terapia_intensiva
2020-02-24T18:00:00,ITA,7,26
2020-02-25T18:00:00,ITA,10,35
2020-02-26T18:00:00,ITA,12,36
2020-02-27T18:00:00,ITA,17,56
"""

REGIONAL = """data,stato,denominazione_regione,deceduti
2020-02-24,ITA,Lombardia,6
2020-02-24,ITA,Veneto,1
2020-02-25,ITA,Lombardia,9
2020-02-25,ITA,Veneto,1
2020-02-26,ITA,Lombardia,14
2020-02-26,ITA,Veneto,2
"""


def daily_series(values):
    n = len(values)
    from datetime import date, timedelta

    dates = tuple(date(2020, 3, 1) + timedelta(days=k) for k in range(n))
    return EpidemicSeries(dates, "national", np.asarray(values, float), "daily", "x", np.arange(1.0, n + 1))


class TestLoadCsv:
    def test_national_row_count(self, tmp_path):
        s = load_csv(write(tmp_path, NATIONAL), series_name="deceduti")
        assert len(s) == 4
        assert s.kind == "cumulative" and s.region == "national"
        np.testing.assert_array_equal(s.values, [7, 10, 12, 17])
        np.testing.assert_array_equal(s.day_index, [1, 2, 3, 4])

    def test_occupancy_is_daily_level(self, tmp_path):
        s = load_csv(write(tmp_path, NATIONAL), series_name="terapia_intensiva")
        assert s.kind == "daily"

    def test_kind_override(self, tmp_path):
        s = load_csv(write(tmp_path, NATIONAL), series_name="terapia_intensiva", kind="cumulative")
        assert s.kind == "cumulative"

    def test_region_filter(self, tmp_path):
        s = load_csv(write(tmp_path, REGIONAL), series_name="deceduti", region="Lombardia")
        assert s.region == "Lombardia"
        np.testing.assert_array_equal(s.values, [6, 9, 14])

    def test_unknown_region_lists_choices(self, tmp_path):
        with pytest.raises(DataFormatError, match="Lombardia, Veneto"):
            load_csv(write(tmp_path, REGIONAL), series_name="deceduti", region="Sicilia")

    def test_regional_needs_region(self, tmp_path):
        with pytest.raises(DataFormatError, match="region"):
            load_csv(write(tmp_path, REGIONAL), series_name="deceduti")

    def test_malformed_value_names_line(self, tmp_path):
        bad = NATIONAL.replace("ITA,12,36", "ITA,twelve,36")
        with pytest.raises(DataFormatError, match=r"in\.csv:4: non-numeric value 'twelve'"):
            load_csv(write(tmp_path, bad), series_name="deceduti")

    def test_malformed_date_names_line(self, tmp_path):
        bad = NATIONAL.replace("2020-02-25T18:00:00", "25/02/2020")
        with pytest.raises(DataFormatError, match=r"in\.csv:3: cannot parse date"):
            load_csv(write(tmp_path, bad), series_name="deceduti")

    def test_unknown_column_lists_available(self, tmp_path):
        with pytest.raises(DataFormatError, match="available columns: data, stato, deceduti, terapia_intensiva"):
            load_csv(write(tmp_path, NATIONAL), series_name="morti")

    def test_missing_column_name(self, tmp_path):
        with pytest.raises(DataFormatError, match="series column is required"):
            load_csv(write(tmp_path, NATIONAL))

    def test_gap_is_error_by_default(self, tmp_path):
        gappy = "\n".join(l for l in NATIONAL.splitlines() if "02-26" not in l) + "\n"
        with pytest.raises(DataFormatError, match="missing dates after 2020-02-25"):
            load_csv(write(tmp_path, gappy), series_name="deceduti")

    def test_allow_gaps_keeps_calendar_index(self, tmp_path):
        gappy = "\n".join(l for l in NATIONAL.splitlines() if "02-26" not in l) + "\n"
        s = load_csv(write(tmp_path, gappy), series_name="deceduti", allow_gaps=True)
        np.testing.assert_array_equal(s.day_index, [1, 2, 4])
        assert any("gap" in w for w in s.warnings)

    def test_duplicate_date(self, tmp_path):
        dup = NATIONAL + "2020-02-27T18:00:00,ITA,18,57\n"
        with pytest.raises(DataFormatError, match="duplicate date"):
            load_csv(write(tmp_path, dup), series_name="deceduti")

    def test_rows_sorted_by_date(self, tmp_path):
        lines = NATIONAL.splitlines()
        shuffled = "\n".join([lines[0], lines[3], lines[1], lines[4], lines[2]]) + "\n"
        s = load_csv(write(tmp_path, shuffled), series_name="deceduti")
        np.testing.assert_array_equal(s.values, [7, 10, 12, 17])

    def test_downward_revision_warns(self, tmp_path, caplog):
        rev = NATIONAL.replace("ITA,12,36", "ITA,9,36")
        with caplog.at_level(logging.WARNING):
            s = load_csv(write(tmp_path, rev), series_name="deceduti")
        assert s.warnings == ("downward revision on 2020-02-26: 10 -> 9",)
        assert "downward revision" in caplog.text
        np.testing.assert_array_equal(s.values, [7, 10, 9, 17])

    def test_generic_layout(self, tmp_path):
        s = load_csv(write(tmp_path, "date,value\n2021-01-01,3\n2021-01-02,5\n"))
        assert s.series_name == "value" and s.kind == "daily"
        np.testing.assert_array_equal(s.values, [3, 5])

    def test_unrecognized_layout(self, tmp_path):
        with pytest.raises(DataFormatError, match="unrecognized CSV layout"):
            load_csv(write(tmp_path, "when,count\n2021-01-01,3\n"))

    def test_empty_file(self, tmp_path):
        with pytest.raises(DataFormatError, match="empty file"):
            load_csv(write(tmp_path, ""))

    def test_byte_order_mark(self, tmp_path):
        p = tmp_path / "bom.csv"
        p.write_bytes(b"\xef\xbb\xbf" + NATIONAL.encode())
        assert len(load_csv(p, series_name="deceduti")) == 4

    def test_pure_function_of_bytes(self, tmp_path):
        a = load_csv(write(tmp_path, NATIONAL, "a.csv"), series_name="deceduti")
        b = load_csv(write(tmp_path, NATIONAL, "b.csv"), series_name="deceduti")
        assert a.dates == b.dates and a.warnings == b.warnings
        np.testing.assert_array_equal(a.values, b.values)


class TestBundled:
    def test_italy_snapshot(self):
        s = load_csv(bundled_path("italy_deaths_2020-04-04.csv"), series_name="deceduti")
        assert s.dates[0].isoformat() == "2020-02-24"
        assert s.dates[-1].isoformat() == "2020-04-04"
        assert len(s) == 41
        assert np.all(np.diff(s.values) >= 0)

    @pytest.mark.parametrize("region", ["Italy-style", "Lombardia-style"])
    def test_synthetic_regions(self, region):
        s = load_csv(bundled_path("synthetic_regions.csv"), series_name="deceduti", region=region)
        assert len(s) == 41 and s.kind == "cumulative"
        assert s.warnings == ()


class TestConversions:
    def test_cumulative_example(self):
        np.testing.assert_array_equal(to_cumulative(daily_series([1, 2, 3])).values, [1, 3, 6])

    def test_daily_first_value_is_level(self):
        cum = to_cumulative(daily_series([4, 0, 2]))
        np.testing.assert_array_equal(to_daily(cum).values, [4, 0, 2])

    @given(st.lists(st.integers(-1000, 10**6), min_size=1, max_size=60))
    @settings(max_examples=200, deadline=None)
    def test_round_trip_exact(self, values):
        s = daily_series(values)
        back = to_daily(to_cumulative(s))
        np.testing.assert_array_equal(back.values, s.values)
        assert back.kind == "daily"

    def test_negative_daily_kept_with_warning(self):
        cum = EpidemicSeries(daily_series([0, 0, 0]).dates, "national", np.array([5.0, 8.0, 7.0]),
                             "cumulative", "x", np.arange(1.0, 4.0))
        d = to_daily(cum)
        np.testing.assert_array_equal(d.values, [5, 3, -1])
        assert d.warnings == ("negative daily value -1 on 2020-03-03",)

    def test_kind_mismatch(self):
        s = daily_series([1, 2])
        with pytest.raises(DataFormatError):
            to_daily(s)
        with pytest.raises(DataFormatError):
            to_cumulative(to_cumulative(s))

    def test_invalid_kind(self):
        with pytest.raises(DataFormatError):
            EpidemicSeries((), "national", np.array([]), "weekly", "x", np.array([]))


class TestOutputs:
    def test_regression_model(self, tmp_path):
        longer = NATIONAL + "2020-02-28T18:00:00,ITA,21,64\n"
        s = load_csv(write(tmp_path, longer), series_name="deceduti")
        m = to_regression_model(s, "log-logistic-4")
        np.testing.assert_array_equal(m.xs, [1, 2, 3, 4, 5])
        np.testing.assert_array_equal(m.ys, [7, 10, 12, 17, 21])
        assert m.family.name == "log-logistic-4"

    def test_write_series_csv(self, tmp_path):
        s = load_csv(write(tmp_path, NATIONAL), series_name="deceduti")
        out = tmp_path / "out.csv"
        write_series_csv(s, out)
        lines = out.read_text().splitlines()
        assert lines[0] == "date,day,value,kind,region,series"
        assert lines[1] == "2020-02-24,1,7.0,cumulative,national,deceduti"
        back = load_csv(out, format="generic")
        np.testing.assert_array_equal(back.values, s.values)
