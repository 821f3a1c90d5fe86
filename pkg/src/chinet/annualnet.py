"""Annual extremal networks and their long-distance connectivity.

In block ``t`` two stations are linked when both of their rank values exceed
``u_star`` (0.95 links stations that both see at least a 20-year event).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import DistanceMatrix, MaximaMatrix, RankMatrix, edf_ranks


class NoEligiblePairsError(ValueError):
    pass


@dataclass(frozen=True)
class AnnualNetworkSeries:
    """Per-block edge lists.

    ``edges[t]`` is an ``(n_t, 2)`` integer array of pairs ``i < j`` sorted
    lexicographically. ``active[t]`` marks stations with valid data in block
    ``t``.
    """

    edges: tuple[np.ndarray, ...]
    u_star: float
    block_labels: tuple
    active: np.ndarray
    convention: str

    @property
    def d(self) -> int:
        return self.active.shape[1]

    def counts(self) -> np.ndarray:
        return np.array([len(e) for e in self.edges], dtype=int)


@dataclass(frozen=True)
class LongDistanceSeries:
    """Long-distance edge counts per block.

    ``log_ratio`` is NaN where it is undefined (zero count without continuity
    correction); ``usable`` marks the blocks that enter a regression.
    """

    block_labels: tuple
    counts: np.ndarray
    eligible: np.ndarray
    log_ratio: np.ndarray
    usable: np.ndarray
    min_distance: float
    continuity: bool


def annual_networks(
    r: RankMatrix | MaximaMatrix,
    u_star: float = 0.95,
    convention: str = "over_m_plus_1",
) -> AnnualNetworkSeries:
    """Co-exceedance networks, one per block.

    Raw maxima are ranked with ``convention`` (default rank/(m+1), so the
    largest block never reaches 1). Invalid cells never connect.
    """
    if not 0 < u_star < 1:
        raise ValueError("u_star must lie in (0, 1)")
    if isinstance(r, MaximaMatrix):
        r = edf_ranks(r, convention)
    vals, valid = r.values, r.valid
    exceed = valid & (np.where(valid, vals, -np.inf) > u_star)
    edges = []
    for t in range(vals.shape[0]):
        idx = np.flatnonzero(exceed[t])
        a, b = np.triu_indices(idx.size, k=1)
        edges.append(np.column_stack([idx[a], idx[b]]).astype(int).reshape(-1, 2))
    labels = r.block_labels if r.block_labels is not None else tuple(range(vals.shape[0]))
    return AnnualNetworkSeries(tuple(edges), float(u_star), tuple(labels), valid.copy(), r.convention)


def long_distance_series(
    a: AnnualNetworkSeries,
    dm: DistanceMatrix,
    min_distance: float,
    eligible: str = "valid",
    continuity: bool = False,
) -> LongDistanceSeries:
    """Count edges longer than ``min_distance`` in every block.

    Parameters
    ----------
    eligible : {"valid", "all"}
        ``valid`` counts the eligible pairs of each block among stations with
        data in that block; ``all`` uses every station in every block.
    continuity : bool
        Use ``log((N_t + 0.5) / P_t)`` so zero-count blocks stay usable.
    """
    if min_distance < 0:
        raise ValueError("distance cutoff must be nonnegative")
    if eligible not in ("valid", "all"):
        raise ValueError(f"unknown eligible-pair mode {eligible!r}")
    dist = dm.values
    d = dist.shape[0]
    iu = np.triu_indices(d, k=1)
    long_pair = np.zeros((d, d), dtype=bool)
    long_pair[iu] = dist[iu] > min_distance
    if not long_pair.any():
        raise NoEligiblePairsError(f"no station pairs farther apart than {min_distance}")

    m = len(a.edges)
    counts = np.zeros(m, dtype=int)
    pairs = np.zeros(m, dtype=int)
    total = int(long_pair.sum())
    for t, e in enumerate(a.edges):
        counts[t] = int(long_pair[e[:, 0], e[:, 1]].sum()) if len(e) else 0
        if eligible == "all":
            pairs[t] = total
        else:
            act = a.active[t]
            pairs[t] = int(long_pair[np.ix_(act, act)].sum())
    with np.errstate(divide="ignore", invalid="ignore"):
        if continuity:
            ratio = np.log((counts + 0.5) / pairs)
        else:
            ratio = np.where(counts > 0, np.log(counts / np.maximum(pairs, 1)), np.nan)
    ratio = np.where(pairs > 0, ratio, np.nan)
    usable = np.isfinite(ratio)
    return LongDistanceSeries(
        a.block_labels, counts, pairs, ratio, usable, float(min_distance), continuity
    )
