"""Regenerate the synthetic GHCN-style fixture in this directory.

30 stations, 1978-2017. Yearly June-October maxima come from a
Brown-Resnick field on the unit square, mapped to lon -98..-82 and
lat 25..33 and boosted in years with a warm SST anomaly; the remaining days are drawn below that maximum. About 2% of
days are missing, a few carry quality flags, and one station is too sparse
to pass a 90% coverage filter. A 2-degree monthly SST grid over the Gulf
accompanies the stations.

    python3 tests/data/make_fixture.py
"""

import gzip
from pathlib import Path

import numpy as np

from chinet.brsim import BRParams, br_simulate
from chinet.domain import StationSet
from chinet.ingest import DailyTable, write_dly

HERE = Path(__file__).resolve().parent
YEARS = range(1978, 2018)
D = 30
SPARSE = 29  # index of the station that fails the coverage filter


def main(seed=2024):
    rng = np.random.default_rng(seed)
    xy = rng.random((D, 2))
    lon = np.round(-98.0 + 16.0 * xy[:, 0], 4)
    lat = np.round(25.0 + 8.0 * xy[:, 1], 4)
    ids = [f"ZZC00{k:06d}" for k in range(1, D + 1)]

    # SST anomaly path (monthly, from July of the year before the first block)
    anomaly = np.cumsum(rng.normal(0, 0.15, (len(YEARS) + 1) * 12))
    window = np.array([anomaly[6 + 12 * b: 18 + 12 * b].mean() for b in range(len(YEARS))])
    warm = (window - window.mean()) / window.std()

    # spatial dependence from the planar layout plus a shared warm-year boost
    z = br_simulate(StationSet.planar(xy), BRParams(0.08, 1.0, seed), len(YEARS)).values
    annual_max = np.round(40.0 * (z * np.exp(1.5 * warm)[:, None]) ** 0.25, 1)

    dates = np.arange(f"{YEARS[0]}-01-01", f"{YEARS[-1] + 1}-01-01", dtype="datetime64[D]")
    year = dates.astype("datetime64[Y]").astype(int) + 1970
    month = dates.astype("datetime64[M]").astype(int) % 12 + 1
    season = (month >= 6) & (month <= 10)

    out = HERE / "ghcn"
    out.mkdir(exist_ok=True)
    for old in out.glob("*.dly.gz"):
        old.unlink()
    for k, sid in enumerate(ids):
        vals = np.zeros(dates.size)
        wet = rng.random(dates.size) < 0.3
        for b, y in enumerate(YEARS):
            sel = year == y
            cap = 0.9 * annual_max[b, k]
            vals[sel] = np.where(wet[sel], np.round(cap * rng.random(sel.sum()) ** 3, 1), 0.0)
            pos = np.flatnonzero(sel & season)
            vals[rng.choice(pos)] = annual_max[b, k]
        missing = rng.random(dates.size) < (0.5 if k == SPARSE else 0.02)
        # never blank out the seasonal peak, so maxima stay known exactly
        for b, y in enumerate(YEARS):
            peak = np.flatnonzero((year == y) & season & (vals == annual_max[b, k]))
            missing[peak] = False
        vals[missing] = np.nan
        write_dly(DailyTable(np.full(dates.size, sid), dates, vals), out / f"{sid}.dly.gz")

    with open(HERE / "stations.csv", "w") as fh:
        fh.write("station,lon,lat\n")
        for sid, lo, la in zip(ids, lon, lat):
            fh.write(f"{sid},{float(lo)!r},{float(la)!r}\n")
    with open(HERE / "expected_maxima.csv", "w") as fh:
        fh.write("block," + ",".join(ids) + "\n")
        for y, row in zip(YEARS, annual_max):
            fh.write(f"{y}," + ",".join(repr(float(v)) for v in row) + "\n")

    # monthly SST on a 2-degree grid, with a warming trend and a seasonal cycle
    glon = np.arange(-97.0, -80.0, 2.0)
    glat = np.arange(21.0, 32.0, 2.0)
    rows = []
    for t, y in enumerate(range(YEARS[0] - 1, YEARS[-1] + 1)):
        for m in range(1, 13):
            base = 26.5 + 0.02 * (y - 1977) + 2.5 * np.cos(2 * np.pi * (m - 8) / 12)
            for la in glat:
                for lo in glon:
                    v = base - 0.15 * (la - 25) + anomaly[t * 12 + m - 1] + rng.normal(0, 0.2)
                    rows.append(f"{float(lo)!r},{float(la)!r},{y},{m},{round(float(v), 2)!r}")
    with gzip.open(HERE / "sst_grid.csv.gz", "wt", encoding="ascii", newline="\n") as fh:
        fh.write("lon,lat,year,month,sst\n")
        fh.write("\n".join(rows) + "\n")


if __name__ == "__main__":
    main()
