from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chinet.ingest import (
    DailyTable,
    IngestError,
    filter_stations,
    parse_daily_csv,
    read_daily,
    read_dly,
    read_sst_series,
    read_stations_csv,
    seasonal_maxima,
    sst_area_average,
    station_coverage,
    write_daily_csv,
    write_dly,
)

DATA = Path(__file__).parent / "data"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def table(rows):
    s, d, v = zip(*rows)
    return DailyTable(np.array(s), np.array(d, dtype="datetime64[D]"), np.array(v, dtype=float))


def days(start, end):
    return np.arange(start, end, dtype="datetime64[D]")


# ------------------------------------------------------------ daily CSV

def test_parse_three_rows(tmp_path):
    p = write(tmp_path, "a.csv", "station,date,prcp\nA,2016-06-01,1.5\nA,2016-06-02,\nB,2016-06-01,0\n")
    t = parse_daily_csv(p)
    assert len(t) == 3 and not t.rejects
    assert np.isnan(t.prcp[1]) and t.station_ids == ["A", "B"]


def test_bad_rows_rejected(tmp_path):
    p = write(tmp_path, "a.csv",
              "station,date,prcp\nA,2017-02-30,1\nA,2017-03-01,-2\nA,2017-03-02,x\nA,2017-03-03,4\n")
    t = parse_daily_csv(p)
    assert len(t) == 1 and t.prcp[0] == 4.0
    assert [r.reason for r in t.rejects] == ["invalid date", "negative or non-finite value",
                                             "non-numeric value"]
    assert [r.line for r in t.rejects] == [2, 3, 4]


def test_missing_header_and_file(tmp_path):
    with pytest.raises(IngestError):
        parse_daily_csv(write(tmp_path, "a.csv", "id,day,value\nA,2017-01-01,1\n"))
    with pytest.raises(IngestError):
        parse_daily_csv(tmp_path / "nope.csv")


def test_sentinels_are_missing(tmp_path):
    t = parse_daily_csv(write(tmp_path, "a.csv", "station,date,prcp\nA,2017-01-01,-9999\nA,2017-01-02,NA\n"))
    assert np.all(np.isnan(t.prcp)) and not t.rejects


ids = st.sampled_from(["A", "B", "USC00012345"])
vals = st.one_of(st.none(), st.floats(0, 500, allow_nan=False))
dates = st.dates(min_value=__import__("datetime").date(1900, 1, 1))


@settings(max_examples=30)
@given(st.lists(st.tuples(ids, dates, vals), min_size=1, max_size=30))
def test_csv_round_trip(tmp_path_factory, rows):
    rows = [(s, d.isoformat(), np.nan if v is None else v) for s, d, v in rows]
    t = table(rows)
    p = tmp_path_factory.mktemp("rt") / "t.csv"
    write_daily_csv(t, p)
    u = parse_daily_csv(p)
    write_daily_csv(u, p.with_suffix(".2.csv"))
    assert p.read_bytes() == p.with_suffix(".2.csv").read_bytes()
    assert np.array_equal(u.station, t.station) and np.array_equal(u.date, t.date)
    assert np.array_equal(u.prcp, t.prcp, equal_nan=True)


# ------------------------------------------------------------ .dly

def test_dly_layout_and_flags(tmp_path):
    vals = ["   12   ", "-9999   ", "    5 X ", "    0   "] + ["-9999   "] * 27
    line = "USC00000001" + "2016" + "02" + "PRCP" + "".join(vals)
    other = "USC00000001" + "2016" + "02" + "TMAX" + "  100   " * 31
    p = write(tmp_path, "x.dly", line + "\n" + other + "\n")
    t = read_dly(p)
    assert len(t) == 29  # February 2016 has 29 days
    assert t.prcp[0] == 1.2 and np.isnan(t.prcp[1]) and np.isnan(t.prcp[2]) and t.prcp[3] == 0.0
    assert str(t.date[-1]) == "2016-02-29"


def test_dly_round_trip(tmp_path):
    d = days("2015-01-01", "2016-03-01")
    rng = np.random.default_rng(0)
    v = np.round(rng.gamma(0.5, 8, d.size), 1)
    v[rng.random(d.size) < 0.1] = np.nan
    t = DailyTable(np.full(d.size, "ZZ1"), d, v)
    write_dly(t, tmp_path / "a.dly.gz")
    u = read_daily(tmp_path)
    assert np.array_equal(u.date, t.date)
    assert np.array_equal(u.prcp, t.prcp, equal_nan=True)


# ------------------------------------------------------------ station filter

def _coverage_table(frac, sid="A", start="2000-01-01", end="2001-01-01", seed=0):
    d = days(start, end)
    v = np.ones(d.size)
    n_missing = int(round((1 - frac) * d.size))
    v[np.random.default_rng(seed).choice(d.size, n_missing, replace=False)] = np.nan
    return DailyTable(np.full(d.size, sid), d, v)


def test_filter_examples():
    t = DailyTable.concat([_coverage_table(0.95, "A"), _coverage_table(0.5, "B"),
                           _coverage_table(1.0, "C")])
    assert filter_stations(t, 0.9).station_ids == ["A", "C"]
    assert filter_stations(t, 1.0).station_ids == ["C"]
    cov = station_coverage(t)
    assert cov["A"] == pytest.approx(0.95, abs=2e-3) and cov["C"] == 1.0


def test_study_vs_record_span():
    short = _coverage_table(1.0, "A", "2000-07-01", "2001-01-01")
    full = _coverage_table(1.0, "B", "2000-01-01", "2001-01-01")
    t = DailyTable.concat([short, full])
    study = station_coverage(t, "2000-01-01", "2000-12-31", "study")
    record = station_coverage(t, "2000-01-01", "2000-12-31", "record")
    assert study["A"] == pytest.approx(184 / 366) and record["A"] == 1.0
    assert study["B"] == record["B"] == 1.0


# ------------------------------------------------------------ seasonal maxima

def test_seasonal_examples():
    d = days("2016-05-01", "2016-11-01")
    v = np.zeros(d.size)
    v[d == np.datetime64("2016-05-20")] = 20.0
    v[d == np.datetime64("2016-06-10")] = 3.0
    v[d == np.datetime64("2016-08-10")] = 12.0
    t = DailyTable.concat([DailyTable(np.full(d.size, "A"), d, v),
                           DailyTable(np.full(d.size, "B"), d, np.ones(d.size))])
    d2 = days("2017-06-01", "2017-11-01")
    t = DailyTable.concat([t, DailyTable(np.full(d2.size, "A"), d2, np.full(d2.size, np.nan)),
                           DailyTable(np.full(d2.size, "B"), d2, np.full(d2.size, 2.0)),
                           DailyTable(np.array(["A"]), np.array(["2018-07-01"], "datetime64[D]"),
                                      np.array([1.0]))])
    mx = seasonal_maxima(t, years=[2016, 2017, 2018], completeness=0.0)
    assert mx.station_ids == ("A", "B")
    assert mx.values[0, 0] == 12.0 and np.isnan(mx.values[1, 0])
    assert mx.values[:2, 1].tolist() == [1.0, 2.0]


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1))
def test_seasonal_maxima_row_order_invariant(perm_seed):
    rng = np.random.default_rng(5)
    d = days("2001-01-01", "2004-01-01")
    parts = []
    for sid in ("A", "B", "C"):
        v = np.round(rng.gamma(0.4, 10, d.size), 1)
        v[rng.random(d.size) < 0.05] = np.nan
        parts.append(DailyTable(np.full(d.size, sid), d, v))
    t = DailyTable.concat(parts)
    perm = np.random.default_rng(perm_seed).permutation(len(t))
    a = seasonal_maxima(t)
    b = seasonal_maxima(t.subset(perm))
    assert np.array_equal(a.values, b.values, equal_nan=True)


def test_fixture_maxima_recovered():
    t = read_daily(DATA / "ghcn")
    t = filter_stations(t, 0.9, "1978-01-01", "2017-12-31")
    assert len(t.station_ids) == 29 and "ZZC00000030" not in t.station_ids
    mx = seasonal_maxima(t, years=range(1978, 2018))
    expected = np.loadtxt(DATA / "expected_maxima.csv", delimiter=",", skiprows=1)
    np.testing.assert_array_equal(mx.values, expected[:, 1:30])
    assert mx.block_labels == tuple(range(1978, 2018))
    s = read_stations_csv(DATA / "stations.csv")
    assert len(s) == 30 and s.coord_system.value == "geographic"


# ------------------------------------------------------------ SST

def _grid(cells, years=(2016, 2017)):
    rows = []
    for y in years:
        for m in range(1, 13):
            for lon, lat, val in cells:
                rows.append((lon, lat, y, m, val(y, m) if callable(val) else val))
    return np.array(rows, dtype=float)


def test_sst_single_cell_constant():
    s = sst_area_average(_grid([(-90.0, 25.0, 25.0)]))
    assert s.years.tolist() == [2017] and s.values[0] == pytest.approx(25.0, abs=1e-12)


def test_sst_cosine_weights():
    g = np.array([(10.0, 0.0, 2017, 6, 10.0), (10.0, 60.0, 2017, 6, 20.0)])
    s = sst_area_average(g, (0, 20), (-10, 70), end_month=6)
    assert s.years.size == 0  # one month cannot fill a 12-month window
    full = _grid([(10.0, 0.0, 10.0), (10.0, 60.0, 20.0)])
    s = sst_area_average(full, (0, 20), (-10, 70))
    assert s.values[0] == pytest.approx((1 * 10 + 0.5 * 20) / 1.5, abs=1e-12)


def test_sst_window_is_july_to_june():
    # value encodes the month index, so the window mean identifies the months used
    g = _grid([(-90.0, 25.0, lambda y, m: 100 * (y - 2016) + m)])
    s = sst_area_average(g)
    july_to_june = [7, 8, 9, 10, 11, 12] + [100 + m for m in range(1, 7)]
    assert s.values[0] == pytest.approx(np.mean(july_to_june))


def test_sst_box_and_missing():
    with pytest.raises(IngestError):
        sst_area_average(_grid([(0.0, 0.0, 1.0)]))
    g = _grid([(-90.0, 25.0, 20.0), (-89.0, 25.0, 30.0)])
    g[(g[:, 0] == -89.0) & (g[:, 3] == 3), 4] = np.nan
    s = sst_area_average(g)
    assert s.values[0] == pytest.approx((11 * 25 + 20) / 12)


@given(st.floats(-2, 35), st.floats(-180, 170), st.floats(-80, 70))
def test_sst_uniform_field(c, lon0, lat0):
    cells = [(lon0 + dx, lat0 + dy, c) for dx in (0, 5, 10) for dy in (0, 5, 10)]
    s = sst_area_average(_grid(cells), (lon0 - 1, lon0 + 11), (lat0 - 1, lat0 + 11))
    assert s.values[0] == pytest.approx(c, abs=1e-12)


def test_fixture_sst_grid_reads(tmp_path):
    s = sst_area_average(DATA / "sst_grid.csv.gz")
    assert s.years[0] == 1978 and s.years[-1] == 2017
    p = write(tmp_path, "s.csv", "year,sst\n2000,25.5\n2001,26.0\n")
    assert read_sst_series(p).as_dict() == {2000: 25.5, 2001: 26.0}
