"""Core value types: stations, distances, block maxima and empirical ranks.

Everything here is immutable after construction (arrays are flagged
read-only) so instances can be shared freely between threads.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.stats import rankdata

EARTH_RADIUS_KM = 6371.0

RankConvention = Literal["over_m", "over_m_plus_1"]
RANK_CONVENTIONS = ("over_m", "over_m_plus_1")


class CoordSystem(str, enum.Enum):
    PLANAR = "planar"
    GEOGRAPHIC = "geographic"


def _frozen(a, dtype=None) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class StationSet:
    """Node locations of a network.

    For geographic sets ``coords[:, 0]`` is longitude and ``coords[:, 1]`` is
    latitude, both in degrees.
    """

    ids: tuple[str, ...]
    coords: np.ndarray
    coord_system: CoordSystem = CoordSystem.PLANAR

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        coords = _frozen(self.coords, float)
        system = CoordSystem(self.coord_system)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError(f"coords must have shape (d, 2), got {coords.shape}")
        if len(ids) != coords.shape[0]:
            raise ValueError("number of ids does not match number of coordinates")
        if len(ids) < 2:
            raise ValueError("a station set needs at least 2 stations")
        if len(set(ids)) != len(ids):
            raise ValueError("station ids must be unique")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coordinates must be finite")
        if system is CoordSystem.GEOGRAPHIC:
            lon, lat = coords[:, 0], coords[:, 1]
            if np.any(np.abs(lon) > 180) or np.any(np.abs(lat) > 90):
                raise ValueError("geographic coordinates out of range")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "coord_system", system)

    def __len__(self) -> int:
        return len(self.ids)

    @classmethod
    def planar(cls, coords, ids=None) -> "StationSet":
        coords = np.asarray(coords, dtype=float)
        if ids is None:
            ids = [f"s{k}" for k in range(coords.shape[0])]
        return cls(tuple(ids), coords, CoordSystem.PLANAR)

    @classmethod
    def geographic(cls, lon, lat, ids=None) -> "StationSet":
        coords = np.column_stack([np.asarray(lon, float), np.asarray(lat, float)])
        if ids is None:
            ids = [f"s{k}" for k in range(coords.shape[0])]
        return cls(tuple(ids), coords, CoordSystem.GEOGRAPHIC)


@dataclass(frozen=True)
class DistanceMatrix:
    values: np.ndarray
    units: str

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, float))

    @property
    def d(self) -> int:
        return self.values.shape[0]

    def upper(self) -> np.ndarray:
        """Distances of the pairs i < j, in ``np.triu_indices`` order."""
        return self.values[np.triu_indices(self.d, k=1)]


def haversine_km(lon1, lat1, lon2, lat2, radius: float = EARTH_RADIUS_KM):
    lon1, lat1, lon2, lat2 = map(np.radians, (lon1, lat1, lon2, lat2))
    a = (
        np.sin((lat2 - lat1) / 2) ** 2
        + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    )
    return 2 * radius * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def pairwise_distances(s: StationSet) -> DistanceMatrix:
    """Euclidean distances for planar sets, great-circle km for geographic ones."""
    c = s.coords
    if s.coord_system is CoordSystem.PLANAR:
        diff = c[:, None, :] - c[None, :, :]
        dist = np.sqrt((diff**2).sum(-1))
        units = "unitless"
    else:
        dist = haversine_km(c[:, None, 0], c[:, None, 1], c[None, :, 0], c[None, :, 1])
        units = "km"
    # exact symmetry and zero diagonal regardless of rounding
    dist = np.triu(dist, k=1)
    dist = dist + dist.T
    return DistanceMatrix(dist, units)


@dataclass(frozen=True)
class MaximaMatrix:
    """Block maxima, ``m`` blocks (rows) by ``d`` stations (columns).

    Invalid cells carry NaN in ``values`` and False in ``valid``.
    """

    values: np.ndarray
    valid: np.ndarray = None
    block_labels: tuple = None
    station_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2:
            raise ValueError("maxima must be a 2-d (blocks x stations) array")
        valid = np.isfinite(values) if self.valid is None else np.array(self.valid, bool)
        if valid.shape != values.shape:
            raise ValueError("validity mask shape does not match values")
        valid &= np.isfinite(values)
        values[~valid] = np.nan
        counts = valid.sum(axis=0)
        if np.any(counts < 2):
            bad = np.flatnonzero(counts < 2).tolist()
            raise ValueError(f"columns {bad} have fewer than 2 valid blocks")
        labels = self.block_labels
        labels = tuple(range(values.shape[0])) if labels is None else tuple(labels)
        if len(labels) != values.shape[0]:
            raise ValueError("block_labels length does not match number of rows")
        ids = self.station_ids
        if ids is not None:
            ids = tuple(str(i) for i in ids)
            if len(ids) != values.shape[1]:
                raise ValueError("station_ids length does not match number of columns")
        object.__setattr__(self, "values", _frozen(values))
        object.__setattr__(self, "valid", _frozen(valid))
        object.__setattr__(self, "block_labels", labels)
        object.__setattr__(self, "station_ids", ids)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def complete(self) -> bool:
        return bool(self.valid.all())

    def take_rows(self, rows) -> "MaximaMatrix":
        rows = np.asarray(rows)
        return MaximaMatrix(
            self.values[rows],
            self.valid[rows],
            tuple(self.block_labels[r] for r in rows),
            self.station_ids,
        )

    def take_columns(self, cols) -> "MaximaMatrix":
        cols = np.asarray(cols)
        ids = None if self.station_ids is None else tuple(self.station_ids[c] for c in cols)
        return MaximaMatrix(self.values[:, cols], self.valid[:, cols], self.block_labels, ids)


@dataclass(frozen=True)
class RankMatrix:
    values: np.ndarray
    valid: np.ndarray
    convention: RankConvention = "over_m"
    block_labels: tuple = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, float))
        object.__setattr__(self, "valid", _frozen(self.valid, bool))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def _check_convention(convention: str) -> None:
    if convention not in RANK_CONVENTIONS:
        raise ValueError(f"unknown rank convention {convention!r}")


def rank_column(x, convention: RankConvention = "over_m") -> np.ndarray:
    """Empirical CDF values of a complete 1-d sample, ties averaged."""
    _check_convention(convention)
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    den = n if convention == "over_m" else n + 1
    return rankdata(x, method="average") / den


def edf_ranks(mx: MaximaMatrix, convention: RankConvention = "over_m") -> RankMatrix:
    """Per-station empirical CDF values over each column's valid blocks.

    ``over_m`` divides the average rank by the number of valid blocks,
    ``over_m_plus_1`` by that number plus one.
    """
    _check_convention(convention)
    vals, valid = mx.values, mx.valid
    counts = valid.sum(axis=0)
    if np.any(counts < 2):
        raise ValueError("every column needs at least 2 valid blocks")
    den = counts if convention == "over_m" else counts + 1
    if mx.complete:
        out = rankdata(vals, method="average", axis=0) / den
    else:
        out = np.full(vals.shape, np.nan)
        for j in range(vals.shape[1]):
            v = valid[:, j]
            out[v, j] = rankdata(vals[v, j], method="average") / den[j]
    return RankMatrix(out, valid, convention, mx.block_labels)


@dataclass(frozen=True)
class BlockRule:
    """Partition of daily time into yearly blocks.

    ``months`` selects the calendar months kept in each year's block; the
    default of all twelve gives calendar-year blocks.
    """

    months: frozenset[int] = frozenset(range(1, 13))
    completeness: float = 0.8

    def __post_init__(self):
        months = frozenset(int(m) for m in self.months)
        if not months or not months <= set(range(1, 13)):
            raise ValueError("months must be a nonempty subset of 1..12")
        if not 0.0 <= self.completeness <= 1.0:
            raise ValueError("completeness must lie in [0, 1]")
        object.__setattr__(self, "months", months)

    @classmethod
    def calendar_year(cls, completeness: float = 0.8) -> "BlockRule":
        return cls(frozenset(range(1, 13)), completeness)

    def block_length(self, year: int) -> int:
        """Number of calendar days in the block of ``year``."""
        start = np.datetime64(f"{year:04d}-01-01")
        days = np.arange(start, np.datetime64(f"{year + 1:04d}-01-01"))
        months = days.astype("datetime64[M]").astype(int) % 12 + 1
        return int(np.isin(months, sorted(self.months)).sum())


def seasonal_block_maxima(
    dates,
    values,
    rule: BlockRule = BlockRule(),
    years: Sequence[int] | None = None,
) -> tuple[list[int], np.ndarray]:
    """Raw per-block maxima as ``(years, maxima)`` with NaN for invalid cells.

    A block's maximum is kept only when the non-missing fraction of its
    calendar days reaches ``rule.completeness``; days absent from ``dates``
    count as missing.
    """
    dates = np.asarray(dates, dtype="datetime64[D]")
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    if values.shape[0] != dates.shape[0]:
        raise ValueError("dates and values lengths differ")
    year_of = dates.astype("datetime64[Y]").astype(int) + 1970
    month_of = dates.astype("datetime64[M]").astype(int) % 12 + 1
    if years is None:
        years = range(int(year_of.min()), int(year_of.max()) + 1) if len(dates) else []
    years = [int(y) for y in years]
    in_window = np.isin(month_of, sorted(rule.months))

    maxima = np.full((len(years), values.shape[1]), np.nan)
    for b, year in enumerate(years):
        sel = in_window & (year_of == year)
        block = values[sel]
        if block.shape[0] == 0:
            continue
        finite = np.isfinite(block)
        # duplicate dates are counted once toward completeness
        _, first = np.unique(dates[sel], return_index=True)
        frac = finite[first].sum(axis=0) / rule.block_length(year)
        bmax = np.where(finite, block, -np.inf).max(axis=0)
        ok = (frac >= rule.completeness) & finite.any(axis=0)
        maxima[b, ok] = bmax[ok]
    return years, maxima


def block_maxima(
    dates,
    values,
    rule: BlockRule = BlockRule(),
    years: Sequence[int] | None = None,
    station_ids: Sequence[str] | None = None,
) -> MaximaMatrix:
    """Block maxima of daily series sharing one date axis.

    Parameters
    ----------
    dates : array_like of datetime64[D]
    values : array_like, shape (n,) or (n, d)
        Daily values, NaN for missing days.
    rule : BlockRule
        Months making up each year's block and the completeness threshold.
    years : sequence of int, optional
        Block labels. Defaults to every year spanned by ``dates``.
    """
    years, maxima = seasonal_block_maxima(dates, values, rule, years)
    return MaximaMatrix(maxima, np.isfinite(maxima), tuple(years), station_ids)
