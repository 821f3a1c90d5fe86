"""Bootstrap standard errors of pairwise chi estimates.

Whole rows of the maxima matrix (one cross-sectional vector per block) are
resampled with replacement, so each replicate keeps the spatial dependence
between stations. Ranks are recomputed inside every replicate.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .domain import MaximaMatrix, RankConvention, edf_ranks
from .madogram import Pairing, chi_matrix

CHUNK = 25


@dataclass(frozen=True)
class BootstrapSummary:
    """Per-pair bootstrap standard deviations of chi estimates.

    ``n_ok`` counts the replicates in which each pair was estimable; pairs
    unestimable in more than half of them carry NaN in ``sd``. When a
    ``chi_min`` was supplied, ``edge_counts`` holds the number of pairs above
    it in every replicate.
    """

    sd: np.ndarray
    B: int
    seed: int | None
    n_ok: np.ndarray
    edge_counts: np.ndarray | None = None

    @property
    def var(self) -> np.ndarray:
        return self.sd**2


def _replicate_chi(mx: MaximaMatrix, rows, convention, pairing):
    vals = mx.values[rows]
    valid = mx.valid[rows]
    counts = valid.sum(axis=0)
    if np.all(counts >= 2):
        resampled = MaximaMatrix(vals, valid)
        return chi_matrix(edf_ranks(resampled, convention), pairing).chi_hat
    # columns left with < 2 valid blocks make every pair through them unestimable
    ok = counts >= 2
    chi = np.full((mx.shape[1], mx.shape[1]), np.nan)
    if ok.sum() >= 2:
        sub = MaximaMatrix(vals[:, ok], valid[:, ok])
        chi[np.ix_(ok, ok)] = chi_matrix(edf_ranks(sub, convention), pairing).chi_hat
    return chi


def bootstrap_sd(
    mx: MaximaMatrix,
    B: int = 500,
    seed: int | None = None,
    convention: RankConvention = "over_m",
    pairing: Pairing = "common",
    chi_min: float | None = None,
    workers: int = 1,
) -> BootstrapSummary:
    """Bootstrap SD of every pairwise chi estimate.

    Replicate ``b`` draws its row indices from the ``b``-th child of
    ``SeedSequence(seed)``, and replicates are reduced in index order, so the
    result is bit-identical for any ``workers``.
    """
    if B < 2:
        raise ValueError("B must be at least 2")
    m, d = mx.shape
    children = np.random.SeedSequence(seed).spawn(B)
    center = chi_matrix(edf_ranks(mx, convention), pairing).chi_hat
    center = np.where(np.isfinite(center), center, 0.0)
    iu = np.triu_indices(d, k=1)

    def one(b):
        rng = np.random.Generator(np.random.PCG64(children[b]))
        rows = rng.integers(0, m, size=m)
        return _replicate_chi(mx, rows, convention, pairing)

    s1 = np.zeros((d, d))
    s2 = np.zeros((d, d))
    n_ok = np.zeros((d, d), dtype=int)
    edge_counts = np.zeros(B, dtype=int) if chi_min is not None else None

    def reduce(b, chi):
        ok = np.isfinite(chi)
        dev = np.where(ok, chi - center, 0.0)
        s1[...] += dev
        s2[...] += dev * dev
        n_ok[...] += ok
        if edge_counts is not None:
            up = chi[iu]
            edge_counts[b] = int(np.sum(np.where(np.isfinite(up), up, -np.inf) > chi_min))

    pool = ThreadPoolExecutor(workers) if workers > 1 else None
    try:
        for start in range(0, B, CHUNK):
            idx = range(start, min(B, start + CHUNK))
            chis = pool.map(one, idx) if pool else map(one, idx)
            for b, chi in zip(idx, chis):
                reduce(b, chi)
    finally:
        if pool:
            pool.shutdown()

    with np.errstate(invalid="ignore", divide="ignore"):
        var = (s2 - s1**2 / n_ok) / (n_ok - 1)
    sd = np.sqrt(np.clip(var, 0.0, None))
    sd[(2 * n_ok < B) | (n_ok < 2)] = np.nan
    np.fill_diagonal(sd, 0.0)
    sd.setflags(write=False)
    return BootstrapSummary(sd, B, seed, n_ok, edge_counts)
