"""Readers for station daily precipitation and gridded monthly SST.

The canonical daily format is a CSV with header ``station,date,prcp`` and
ISO dates; an empty field or a sentinel marks a missing value. Native
GHCN-Daily ``.dly`` files are read as well (PRCP only, tenths of mm
converted to mm, any quality flag treated as missing). Files ending in
``.gz`` are decompressed transparently.

SST grids are CSVs with header ``lon,lat,year,month,sst``; converting the
upstream archive to that layout is left to the user.
"""

from __future__ import annotations

import calendar
import csv
import datetime as dt
import gzip
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .domain import BlockRule, MaximaMatrix, StationSet, seasonal_block_maxima

log = logging.getLogger(__name__)

DAILY_HEADER = ["station", "date", "prcp"]
SST_HEADER = ["lon", "lat", "year", "month", "sst"]
MISSING_SENTINELS = frozenset({"", "NA", "NaN", "nan", "-9999", "-9999.0", "-999", "M"})
HURRICANE_SEASON = frozenset({6, 7, 8, 9, 10})
GULF_BOX = ((-95.0, -83.0), (23.0, 29.0))


class IngestError(ValueError):
    pass


def _open_text(path):
    path = Path(path)
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, encoding="utf-8", newline="")


@dataclass(frozen=True)
class Reject:
    line: int
    reason: str
    raw: str


@dataclass(frozen=True)
class DailyTable:
    """Long-format daily records; ``prcp`` is NaN where missing."""

    station: np.ndarray
    date: np.ndarray
    prcp: np.ndarray
    rejects: tuple[Reject, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "station", np.asarray(self.station, dtype=str))
        object.__setattr__(self, "date", np.asarray(self.date, dtype="datetime64[D]"))
        object.__setattr__(self, "prcp", np.asarray(self.prcp, dtype=float))
        if not (len(self.station) == len(self.date) == len(self.prcp)):
            raise ValueError("column lengths differ")

    def __len__(self) -> int:
        return len(self.station)

    @property
    def station_ids(self) -> list[str]:
        return sorted(set(self.station.tolist()))

    def subset(self, keep: np.ndarray) -> "DailyTable":
        return DailyTable(self.station[keep], self.date[keep], self.prcp[keep], self.rejects)

    @classmethod
    def concat(cls, tables: Sequence["DailyTable"]) -> "DailyTable":
        return cls(
            np.concatenate([t.station for t in tables]) if tables else np.array([], str),
            np.concatenate([t.date for t in tables]) if tables else np.array([], "datetime64[D]"),
            np.concatenate([t.prcp for t in tables]) if tables else np.array([], float),
            tuple(r for t in tables for r in t.rejects),
        )


def parse_daily_csv(path, sentinels: Iterable[str] = MISSING_SENTINELS) -> DailyTable:
    """Read a ``station,date,prcp`` CSV; malformed rows go to ``rejects``."""
    sentinels = frozenset(sentinels)
    stations, dates, values, rejects = [], [], [], []
    try:
        fh = _open_text(path)
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != DAILY_HEADER:
            raise IngestError(f"{path}: expected header {','.join(DAILY_HEADER)}, got {header}")
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != 3:
                rejects.append(Reject(line, "wrong field count", ",".join(row)))
                continue
            sid, date_s, val_s = (x.strip() for x in row)
            if not sid:
                rejects.append(Reject(line, "empty station id", ",".join(row)))
                continue
            try:
                date = dt.date.fromisoformat(date_s)
            except ValueError:
                rejects.append(Reject(line, "invalid date", ",".join(row)))
                continue
            if val_s in sentinels:
                val = np.nan
            else:
                try:
                    val = float(val_s)
                except ValueError:
                    rejects.append(Reject(line, "non-numeric value", ",".join(row)))
                    continue
                if not np.isfinite(val) or val < 0:
                    rejects.append(Reject(line, "negative or non-finite value", ",".join(row)))
                    continue
            stations.append(sid)
            dates.append(date)
            values.append(val)
    return DailyTable(
        np.array(stations, dtype=str),
        np.array(dates, dtype="datetime64[D]"),
        np.array(values, dtype=float),
        tuple(rejects),
    )


def write_daily_csv(t: DailyTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DAILY_HEADER)
        for s, d, v in zip(t.station, t.date, t.prcp):
            w.writerow([s, str(d), "" if np.isnan(v) else repr(float(v))])


def write_rejects(rejects: Sequence[Reject], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["line", "reason", "raw"])
        for r in rejects:
            w.writerow([r.line, r.reason, r.raw])


def read_dly(paths, element: str = "PRCP") -> DailyTable:
    """Parse GHCN-Daily fixed-width ``.dly`` files.

    Each record line holds one station-month: ID (cols 1-11), YEAR (12-15),
    MONTH (16-17), ELEMENT (18-21), then 31 groups of VALUE (5 chars),
    MFLAG, QFLAG and SFLAG. -9999 and any nonblank QFLAG become missing;
    PRCP tenths of mm are converted to mm. Days past the month's end are
    ignored.
    """
    if isinstance(paths, (str, Path)):
        paths = [paths]
    stations, dates, values, rejects = [], [], [], []
    for path in paths:
        try:
            fh = _open_text(path)
        except OSError as exc:
            raise IngestError(f"cannot read {path}: {exc}") from exc
        with fh:
            for ln, line in enumerate(fh, start=1):
                line = line.rstrip("\r\n")
                if not line.strip():
                    continue
                if len(line) < 21:
                    rejects.append(Reject(ln, "short record", line))
                    continue
                if line[17:21] != element:
                    continue
                try:
                    sid = line[0:11].strip()
                    year = int(line[11:15])
                    month = int(line[15:17])
                    ndays = calendar.monthrange(year, month)[1]
                except ValueError:
                    rejects.append(Reject(ln, "bad station/year/month", line))
                    continue
                line = line.ljust(21 + 31 * 8)
                for day in range(1, ndays + 1):
                    off = 21 + (day - 1) * 8
                    raw, qflag = line[off:off + 5], line[off + 6]
                    try:
                        v = int(raw)
                    except ValueError:
                        rejects.append(Reject(ln, f"bad value for day {day}", line))
                        v = -9999
                    if v == -9999 or qflag.strip():
                        val = np.nan
                    elif v < 0:
                        rejects.append(Reject(ln, f"negative value for day {day}", line))
                        val = np.nan
                    else:
                        val = v / 10.0 if element == "PRCP" else float(v)
                    stations.append(sid)
                    dates.append(dt.date(year, month, day))
                    values.append(val)
    return DailyTable(
        np.array(stations, dtype=str),
        np.array(dates, dtype="datetime64[D]"),
        np.array(values, dtype=float),
        tuple(rejects),
    )


def write_dly(t: DailyTable, path, element: str = "PRCP") -> None:
    """Write a table in the ``.dly`` layout read by ``read_dly``.

    Values are rounded to tenths of mm; missing days are written as -9999.
    Months without any record are omitted. ``.gz`` paths are compressed.
    """
    opener = gzip.open if str(path).endswith(".gz") else open
    order = np.lexsort((t.date, t.station))
    st, dates, vals = t.station[order], t.date[order], t.prcp[order]
    month = dates.astype("datetime64[M]")
    with opener(path, "wt", encoding="ascii", newline="\n") as fh:
        start = 0
        while start < len(st):
            stop = start
            while stop < len(st) and st[stop] == st[start] and month[stop] == month[start]:
                stop += 1
            sid = str(st[start])
            if len(sid) > 11:
                raise IngestError(f"station id {sid!r} longer than 11 characters")
            y, m = (int(x) for x in str(month[start]).split("-"))
            cells = ["-9999   "] * 31
            for d, v in zip(dates[start:stop], vals[start:stop]):
                day = int((d - month[start].astype("datetime64[D]")).astype(int))
                raw = -9999 if not np.isfinite(v) else int(round(v * 10))
                cells[day] = f"{raw:5d}   "
            fh.write(f"{sid:<11}{y:04d}{m:02d}{element}" + "".join(cells) + "\n")
            start = stop


def read_daily(paths) -> DailyTable:
    """Dispatch on file name: ``.dly``/``.dly.gz`` or CSV; directories are globbed."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(p.glob("*.dly")) + sorted(p.glob("*.dly.gz")) + sorted(p.glob("*.csv")))
        else:
            files.append(p)
    if not files:
        raise IngestError("no daily input files found")
    tables = []
    for f in files:
        name = f.name.removesuffix(".gz")
        tables.append(read_dly(f) if name.endswith(".dly") else parse_daily_csv(f))
    return DailyTable.concat(tables)


def _as_day(x) -> np.datetime64:
    return np.datetime64(x, "D")


def station_coverage(
    t: DailyTable,
    start=None,
    end=None,
    span: str = "record",
) -> dict[str, float]:
    """Fraction of non-missing days per station.

    ``span="study"`` measures coverage over ``[start, end]`` (default: the
    whole table's date range); ``span="record"`` intersects that period with
    each station's own first and last record.
    """
    if span not in ("study", "record"):
        raise ValueError(f"unknown span {span!r}")
    if len(t) == 0:
        return {}
    start = t.date.min() if start is None else _as_day(start)
    end = t.date.max() if end is None else _as_day(end)
    out = {}
    for sid in t.station_ids:
        sel = (t.station == sid) & (t.date >= start) & (t.date <= end)
        d = t.date[sel]
        lo, hi = start, end
        if span == "record":
            allrec = t.date[t.station == sid]
            lo, hi = max(start, allrec.min()), min(end, allrec.max())
        n_days = int((hi - lo).astype(int)) + 1
        if n_days <= 0:
            out[sid] = 0.0
            continue
        good = np.unique(d[np.isfinite(t.prcp[sel])])
        out[sid] = good.size / n_days
    return out


def filter_stations(
    t: DailyTable,
    min_fraction: float = 0.9,
    start=None,
    end=None,
    span: str = "record",
) -> DailyTable:
    """Keep stations whose non-missing fraction is at least ``min_fraction``."""
    if not 0 < min_fraction <= 1:
        raise ValueError("min_fraction must lie in (0, 1]")
    cov = station_coverage(t, start, end, span)
    keep_ids = sorted(s for s, f in cov.items() if f >= min_fraction)
    dropped = sorted(set(cov) - set(keep_ids))
    if dropped:
        log.info("dropping %d stations below %.0f%% coverage", len(dropped), 100 * min_fraction)
    return t.subset(np.isin(t.station, keep_ids))


def seasonal_maxima(
    t: DailyTable,
    months: Iterable[int] = HURRICANE_SEASON,
    years: Sequence[int] | None = None,
    completeness: float = 0.8,
    drop_sparse: bool = True,
) -> MaximaMatrix:
    """Per station-year maxima over the chosen months.

    Stations are ordered by id. Duplicate station-days keep the larger
    value, so the result does not depend on row order. With ``drop_sparse``
    stations left with fewer than two valid years are removed (and logged).
    """
    ids = t.station_ids
    if not ids:
        raise IngestError("no stations in daily table")
    col = {s: k for k, s in enumerate(ids)}
    days, day_idx = np.unique(t.date, return_inverse=True)
    cols = np.array([col[s] for s in t.station.tolist()], dtype=int)
    v = t.prcp
    fin = np.isfinite(v)
    grid_fill = np.full((days.size, len(ids)), -np.inf)
    np.maximum.at(grid_fill, (day_idx[fin], cols[fin]), v[fin])
    grid = np.where(np.isfinite(grid_fill), grid_fill, np.nan)

    rule = BlockRule(frozenset(months), completeness)
    if years is None:
        y = days.astype("datetime64[Y]").astype(int) + 1970
        years = range(int(y.min()), int(y.max()) + 1)
    labels, maxima = seasonal_block_maxima(days, grid, rule, years)
    ok = np.isfinite(maxima).sum(axis=0) >= 2
    if not ok.all():
        if not drop_sparse:
            raise IngestError("some stations have fewer than 2 valid blocks")
        log.info("dropping %d stations with < 2 valid blocks", int((~ok).sum()))
    if ok.sum() < 2:
        raise IngestError("fewer than 2 stations with at least 2 valid blocks")
    return MaximaMatrix(maxima[:, ok], None, tuple(labels), tuple(np.array(ids)[ok].tolist()))


@dataclass(frozen=True)
class SstSeries:
    years: np.ndarray
    values: np.ndarray
    lon_range: tuple[float, float]
    lat_range: tuple[float, float]
    end_month: int

    def as_dict(self) -> dict[int, float]:
        return dict(zip(self.years.tolist(), self.values.tolist()))


def read_sst_grid(path) -> np.ndarray:
    """Rows ``(lon, lat, year, month, sst)`` as a float array; NaN for missing."""
    rows = []
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != SST_HEADER:
            raise IngestError(f"{path}: expected header {','.join(SST_HEADER)}, got {header}")
        for row in reader:
            if not row:
                continue
            if len(row) != 5:
                raise IngestError(f"{path}:{reader.line_num}: expected 5 fields")
            lon, lat, year, month, sst = (x.strip() for x in row)
            sval = np.nan if sst in MISSING_SENTINELS else float(sst)
            rows.append((float(lon), float(lat), int(year), int(month), sval))
    return np.array(rows, dtype=float).reshape(-1, 5)


def sst_area_average(
    grid,
    lon_range: tuple[float, float] = GULF_BOX[0],
    lat_range: tuple[float, float] = GULF_BOX[1],
    end_month: int = 6,
    years: Sequence[int] | None = None,
) -> SstSeries:
    """Annual box-mean SST over the 12 months ending in ``end_month``.

    Each month is a cos(latitude)-weighted mean over grid cells whose centre
    lies inside the box (bounds inclusive, longitudes wrapped to [-180, 180))
    with a non-missing value. Year ``Y`` averages the monthly means from the
    month after ``end_month`` in ``Y - 1`` through ``end_month`` of ``Y``
    (July 2016 to June 2017 for 2017 by default); years missing any month
    are left out.
    """
    if isinstance(grid, (str, Path)):
        grid = read_sst_grid(grid)
    grid = np.asarray(grid, dtype=float).reshape(-1, 5)
    lon = (grid[:, 0] + 180.0) % 360.0 - 180.0
    lat, yr, mo, sst = grid[:, 1], grid[:, 2].astype(int), grid[:, 3].astype(int), grid[:, 4]
    inbox = (
        (lon >= lon_range[0]) & (lon <= lon_range[1])
        & (lat >= lat_range[0]) & (lat <= lat_range[1])
    )
    if not inbox.any():
        raise IngestError("no grid cells inside the box")
    sel = inbox & np.isfinite(sst)
    w = np.cos(np.radians(lat[sel]))
    month_key = yr[sel] * 12 + (mo[sel] - 1)
    keys, inv = np.unique(month_key, return_inverse=True)
    monthly = np.bincount(inv, weights=w * sst[sel]) / np.bincount(inv, weights=w)
    by_month = dict(zip(keys.tolist(), monthly.tolist()))

    if years is None:
        first, last = int(keys.min()) // 12, int(keys.max()) // 12
        years = range(first, last + 2)
    out_years, out_vals = [], []
    for y in years:
        end_key = y * 12 + (end_month - 1)
        window = range(end_key - 11, end_key + 1)
        if all(k in by_month for k in window):
            out_years.append(int(y))
            out_vals.append(float(np.mean([by_month[k] for k in window])))
    return SstSeries(
        np.array(out_years, dtype=int),
        np.array(out_vals, dtype=float),
        tuple(lon_range),
        tuple(lat_range),
        end_month,
    )


def read_sst_series(path) -> SstSeries:
    """Read a two-column ``year,sst`` CSV."""
    years, vals = [], []
    with _open_text(path) as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = next(reader, None)
        if header is None or [h.strip() for h in header][:2] != ["year", "sst"]:
            raise IngestError(f"{path}: expected header year,sst")
        for row in reader:
            if row:
                years.append(int(row[0]))
                vals.append(float(row[1]))
    return SstSeries(np.array(years, int), np.array(vals, float), (np.nan, np.nan), (np.nan, np.nan), 6)


def read_stations_csv(path) -> StationSet:
    """Station table with header ``station,x,y`` (planar) or ``station,lon,lat``."""
    with _open_text(path) as fh:
        reader = csv.reader(line for line in fh if not line.startswith("#"))
        header = [h.strip() for h in next(reader, [])]
        rows = [r for r in reader if r]
    if header == ["station", "x", "y"]:
        ids = [r[0] for r in rows]
        return StationSet.planar([[float(r[1]), float(r[2])] for r in rows], ids)
    if header == ["station", "lon", "lat"]:
        return StationSet.geographic(
            [float(r[1]) for r in rows], [float(r[2]) for r in rows], [r[0] for r in rows]
        )
    raise IngestError(f"{path}: expected header station,x,y or station,lon,lat, got {header}")


def read_ghcnd_stations(path, ids: Iterable[str] | None = None) -> StationSet:
    """Station coordinates from the fixed-width ``ghcnd-stations.txt`` listing."""
    wanted = None if ids is None else set(ids)
    sids, lons, lats = [], [], []
    with _open_text(path) as fh:
        for line in fh:
            if len(line) < 30:
                continue
            sid = line[0:11].strip()
            if wanted is not None and sid not in wanted:
                continue
            sids.append(sid)
            lats.append(float(line[12:20]))
            lons.append(float(line[21:30]))
    return StationSet.geographic(lons, lats, sids)
