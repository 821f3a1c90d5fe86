"""Pairwise extremal dependence from block maxima via the F-madogram.

Under max-stability the madogram ``nu`` determines the extremal coefficient
``theta = (1 + 2 nu) / (1 - 2 nu)`` and the tail dependence coefficient
``chi = 2 - theta``, so no exceedance threshold has to be chosen.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .domain import MaximaMatrix, RankConvention, RankMatrix, edf_ranks, rank_column

Pairing = Literal["common", "marginal"]


class UnestimablePairError(ValueError):
    """Raised when a pair shares fewer than two valid blocks."""


@dataclass(frozen=True)
class ChiMatrix:
    """Symmetric matrix of pairwise chi estimates.

    Pairs sharing fewer than two valid blocks hold NaN.
    """

    chi_hat: np.ndarray
    n_pairs_used: np.ndarray
    convention: str = "over_m"
    pairing: str = "common"

    @property
    def d(self) -> int:
        return self.chi_hat.shape[0]

    @property
    def estimable(self) -> np.ndarray:
        return np.isfinite(self.chi_hat)


@dataclass(frozen=True)
class ChiUCurve:
    u: np.ndarray
    chi: np.ndarray
    defined: np.ndarray
    n_exceed: np.ndarray


def f_madogram_pair(x, y) -> float:
    """F-madogram of two rank columns already aligned on common blocks.

    Returns half the mean absolute difference of the empirical CDF values.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("rank columns must be 1-d and of equal length")
    if x.shape[0] < 2:
        raise UnestimablePairError("need at least 2 common valid blocks")
    return 0.5 * float(np.mean(np.abs(x - y)))


def nu_to_theta(nu):
    nu = np.asarray(nu, dtype=float)
    finite = nu[np.isfinite(nu)]
    if np.any(finite < 0) or np.any(finite >= 0.5):
        raise ValueError("madogram must lie in [0, 1/2)")
    out = (1 + 2 * nu) / (1 - 2 * nu)
    return float(out) if out.ndim == 0 else out


def nu_to_chi(nu):
    """Map madogram values to chi; NaN propagates, values outside [0, 1/2) raise."""
    return 2 - nu_to_theta(nu)


def theta_to_nu(theta):
    theta = np.asarray(theta, dtype=float)
    out = (theta - 1) / (2 * (theta + 1))
    return float(out) if out.ndim == 0 else out


def _madogram_complete(g: np.ndarray) -> np.ndarray:
    m, d = g.shape
    nu = np.zeros((d, d))
    for i in range(d - 1):
        nu[i, i + 1:] = np.abs(g[:, i:i + 1] - g[:, i + 1:]).sum(axis=0)
    nu /= 2.0 * m
    return nu + nu.T


def _madogram_common(vals: np.ndarray, valid: np.ndarray, convention: str):
    """Madogram with both columns re-ranked within each pair's common blocks.

    Average ranks inside a subset of blocks are counted directly:
    rank_t = #{s: x_s < x_t} + (#{s: x_s == x_t} + 1) / 2 over s in the subset.
    """
    m, d = vals.shape
    # less[j, t, s] = x_{t,j} > x_{s,j}
    less = (vals.T[:, :, None] > vals.T[:, None, :]).astype(float)
    eq = (vals.T[:, :, None] == vals.T[:, None, :]).astype(float)
    mask_all = valid.astype(float)
    nu = np.full((d, d), np.nan)
    n_used = np.zeros((d, d), dtype=int)
    for i in range(d - 1):
        js = np.arange(i + 1, d)
        mask = mask_all[:, i:i + 1] * mask_all[:, js]  # (m, len(js))
        n = mask.sum(axis=0)
        n_used[i, js] = n
        den = n if convention == "over_m" else n + 1
        ri = less[i] @ mask + 0.5 * (eq[i] @ mask + 1.0)
        rj = np.einsum("jts,sj->tj", less[js], mask) + 0.5 * (
            np.einsum("jts,sj->tj", eq[js], mask) + 1.0
        )
        with np.errstate(invalid="ignore", divide="ignore"):
            diff = np.abs(ri - rj) / den
            s = (np.where(mask > 0, diff, 0.0)).sum(axis=0)
            nu_i = 0.5 * s / n
        ok = n >= 2
        nu[i, js[ok]] = nu_i[ok]
    iu = np.triu_indices(d, 1)
    nu[(iu[1], iu[0])] = nu[iu]
    np.fill_diagonal(nu, 0.0)
    return nu, n_used + n_used.T


def _madogram_marginal(ranks: np.ndarray, valid: np.ndarray):
    m, d = ranks.shape
    g = np.where(valid, ranks, 0.0)
    mask = valid.astype(float)
    nu = np.zeros((d, d))
    n_used = (mask.T @ mask).astype(int)
    for i in range(d - 1):
        both = mask[:, i:i + 1] * mask[:, i + 1:]
        nu[i, i + 1:] = (both * np.abs(g[:, i:i + 1] - g[:, i + 1:])).sum(axis=0)
    nu = nu + nu.T
    with np.errstate(invalid="ignore", divide="ignore"):
        nu = 0.5 * nu / n_used
    nu[n_used < 2] = np.nan
    np.fill_diagonal(nu, 0.0)
    return nu, n_used


def chi_matrix(
    r: RankMatrix | MaximaMatrix,
    pairing: Pairing = "common",
    convention: RankConvention | None = None,
) -> ChiMatrix:
    """Pairwise chi estimates for all station pairs.

    Parameters
    ----------
    r : RankMatrix or MaximaMatrix
        Ranks (or raw maxima, ranked here) of the block maxima.
    pairing : {"common", "marginal"}
        ``common`` re-ranks both columns within the pair's common valid
        blocks; ``marginal`` keeps each station's own ranks and only averages
        over the common blocks. Identical when there is no missing data.
    convention : {"over_m", "over_m_plus_1"}, optional
        Plotting position used for re-ranking. Defaults to the convention of
        ``r`` (or ``over_m`` for raw maxima).
    """
    if isinstance(r, MaximaMatrix):
        r = edf_ranks(r, convention or "over_m")
    convention = convention or r.convention
    vals, valid = r.values, r.valid
    m, d = vals.shape
    if pairing not in ("common", "marginal"):
        raise ValueError(f"unknown pairing {pairing!r}")

    if valid.all():
        g = vals
        if convention != r.convention:
            g = np.column_stack([rank_column(vals[:, j], convention) for j in range(d)])
        nu = _madogram_complete(g)
        n_used = np.full((d, d), m, dtype=int)
    elif pairing == "common":
        nu, n_used = _madogram_common(np.where(valid, vals, np.nan), valid, convention)
    else:
        nu, n_used = _madogram_marginal(vals, valid)

    chi = nu_to_chi(nu)
    np.fill_diagonal(chi, 1.0)
    np.fill_diagonal(n_used, valid.sum(axis=0))
    chi.setflags(write=False)
    n_used.setflags(write=False)
    return ChiMatrix(chi, n_used, convention, pairing)


def chi_u_curve(x, y, u) -> ChiUCurve:
    """Empirical conditional co-exceedance probability on a grid of levels.

    ``x`` and ``y`` are rank columns; NaN marks invalid blocks and only blocks
    valid in both are used. Levels with no exceedance of ``x`` are flagged
    undefined and carry NaN.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = np.atleast_1d(np.asarray(u, dtype=float))
    if np.any((u <= 0) | (u >= 1)):
        raise ValueError("threshold grid must lie in (0, 1)")
    both = np.isfinite(x) & np.isfinite(y)
    if both.sum() < 2:
        raise UnestimablePairError("need at least 2 common valid blocks")
    x, y = x[both], y[both]
    ex = x[None, :] > u[:, None]
    n_x = ex.sum(axis=1)
    n_xy = (ex & (y[None, :] > u[:, None])).sum(axis=1)
    defined = n_x > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        chi = np.where(defined, n_xy / np.maximum(n_x, 1), np.nan)
    return ChiUCurve(u, chi, defined, n_x)
