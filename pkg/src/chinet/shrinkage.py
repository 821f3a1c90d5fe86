"""Empirical-Bayes correction of chi estimates and network construction.

Each estimate is pulled toward the fitted distance curve with weight
``lam_ij = tau2(h_ij) / (tau2(h_ij) + sd_ij**2)``: noisy pairs (large
bootstrap variance) lean on the curve, pairs whose true chi is expected to
wander far from the curve (large ``tau2``) keep their own estimate.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Literal

import numpy as np

from .bootstrap import BootstrapSummary
from .brsim import TrueNetwork
from .chicurve import ChiCurve, Tau2Fn
from .domain import DistanceMatrix
from .madogram import ChiMatrix


@dataclass(frozen=True)
class ShrunkChi:
    chi_tilde: np.ndarray
    lam: np.ndarray
    prior: np.ndarray


@dataclass(frozen=True)
class Network:
    """Undirected edge list; ``i < j`` in every row, sorted lexicographically."""

    i: np.ndarray
    j: np.ndarray
    weight: np.ndarray
    distance: np.ndarray
    chi_min: float
    estimator: Literal["empirical", "corrected", "true"]
    d: int

    def __len__(self) -> int:
        return len(self.i)

    def edge_set(self) -> frozenset[tuple[int, int]]:
        return frozenset(zip(self.i.tolist(), self.j.tolist()))


@dataclass(frozen=True)
class NetMetrics:
    """TPR and PPV; NaN when the denominator is empty."""

    tpr: float
    ppv: float
    n_true: int
    n_est: int
    n_overlap: int


@dataclass(frozen=True)
class DegreeSummary:
    degree: np.ndarray
    n_edges: int
    edge_distances: np.ndarray
    degree_histogram: dict[int, int]


def _as_array(chi) -> np.ndarray:
    if isinstance(chi, ChiMatrix):
        return chi.chi_hat
    if isinstance(chi, ShrunkChi):
        return chi.chi_tilde
    return np.asarray(chi, dtype=float)


def shrink(
    cm: ChiMatrix,
    curve: ChiCurve,
    tau2: Tau2Fn,
    bs: BootstrapSummary,
    dm: DistanceMatrix,
) -> ShrunkChi:
    """Weighted average of each estimate and the curve at its distance.

    The weight is 0 when both variances vanish. Pairs with a missing estimate
    or bootstrap SD stay missing.
    """
    chi = cm.chi_hat
    if not (chi.shape == bs.sd.shape == dm.values.shape):
        raise ValueError("inputs refer to different station sets")
    h = dm.values
    prior = curve(h)
    t2 = tau2(h)
    s2 = bs.sd**2
    den = t2 + s2
    with np.errstate(invalid="ignore", divide="ignore"):
        lam = np.where(den > 0, t2 / den, 0.0)
    lam = np.where(np.isfinite(s2), lam, np.nan)
    tilde = lam * chi + (1.0 - lam) * prior
    np.fill_diagonal(tilde, 1.0)
    np.fill_diagonal(lam, 1.0)
    # exact symmetry
    iu = np.triu_indices(chi.shape[0], k=1)
    for a in (tilde, lam, prior):
        a[(iu[1], iu[0])] = a[iu]
    return ShrunkChi(tilde, lam, prior)


def threshold_network(
    chi,
    dm: DistanceMatrix,
    chi_min: float,
    estimator: Literal["empirical", "corrected", "true"] = "empirical",
) -> Network:
    """Edges between pairs whose chi strictly exceeds ``chi_min``."""
    c = _as_array(chi)
    d = c.shape[0]
    i, j = np.triu_indices(d, k=1)
    v = c[i, j]
    keep = np.where(np.isfinite(v), v, -np.inf) > chi_min
    return Network(
        i[keep], j[keep], v[keep], dm.values[i[keep], j[keep]], float(chi_min), estimator, d
    )


def tpr_ppv(est: Network, truth: TrueNetwork | Network) -> NetMetrics:
    e, t = est.edge_set(), truth.edge_set()
    overlap = len(e & t)
    tpr = overlap / len(t) if t else float("nan")
    ppv = overlap / len(e) if e else float("nan")
    return NetMetrics(tpr, ppv, len(t), len(e), overlap)


def degree_summary(net: Network) -> DegreeSummary:
    deg = np.bincount(np.concatenate([net.i, net.j]), minlength=net.d)
    hist = dict(sorted(Counter(deg.tolist()).items()))
    return DegreeSummary(deg, len(net), np.sort(net.distance), hist)
