"""Stationary isotropic Brown-Resnick processes with known pairwise chi.

The Gaussian increment process has variogram ``2 * h**kappa / rho``
(variance of ``W(s) - W(s')`` at distance ``h``). With the Huesler-Reiss
bivariate margins this gives ``chi(h) = 2 - 2 * Phi(sqrt(h**kappa / (2 rho)))``.

The default sampler is exact: the extremal-function construction of
Dombry, Engelke and Oesting (2016) visits the locations in turn and only
admits spectral functions that do not break an earlier record. The
``spectral`` sampler truncates the de Haan representation after a fixed
number of points and is approximate.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .domain import CoordSystem, MaximaMatrix, StationSet, pairwise_distances

JITTER = 1e-10
CHUNK = 64  # replicates per RNG stream; fixed so output ignores worker count


@dataclass(frozen=True)
class BRParams:
    rho: float
    kappa: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not 0 < self.kappa <= 2:
            raise ValueError("kappa must lie in (0, 2]")


@dataclass(frozen=True)
class TrueNetwork:
    edges: frozenset[tuple[int, int]]
    chi_min: float
    cutoff: float
    d: int

    def edge_set(self) -> frozenset[tuple[int, int]]:
        return self.edges

    def __len__(self) -> int:
        return len(self.edges)


def br_variogram(h, p: BRParams):
    return 2.0 * np.asarray(h, dtype=float) ** p.kappa / p.rho


def br_true_chi(h, p: BRParams):
    """Closed-form pairwise chi at distance ``h``."""
    h = np.asarray(h, dtype=float)
    if np.any(h < 0):
        raise ValueError("distances must be nonnegative")
    out = 2.0 * norm.sf(np.sqrt(h**p.kappa / (2.0 * p.rho)))
    return float(out) if out.ndim == 0 else out


def br_threshold_distance(chi_min: float, p: BRParams) -> float:
    """Distance at which the true chi equals ``chi_min``."""
    if not 0 < chi_min < 1:
        raise ValueError("chi_min must lie in (0, 1)")
    return float((2.0 * p.rho * norm.isf(chi_min / 2.0) ** 2) ** (1.0 / p.kappa))


def true_network(s: StationSet, p: BRParams, chi_min: float) -> TrueNetwork:
    """Pairs whose closed-form chi exceeds ``chi_min``."""
    dist = pairwise_distances(s).values
    chi = br_true_chi(dist, p)
    i, j = np.triu_indices(len(s), k=1)
    keep = chi[i, j] > chi_min
    edges = frozenset(zip(i[keep].tolist(), j[keep].tolist()))
    cutoff = br_threshold_distance(chi_min, p) if 0 < chi_min < 1 else (
        0.0 if chi_min >= 1 else np.inf
    )
    return TrueNetwork(edges, float(chi_min), cutoff, len(s))


def _increment_factor(coords: np.ndarray, p: BRParams) -> np.ndarray:
    """Factor ``L`` with ``L @ L.T`` the covariance of ``W - W(x_0)``.

    Any process with stationary increments works as a base: the extremal
    function anchored at ``x_k`` only needs ``W - W(x_k)``, which is obtained
    from a draw of the base process by subtracting its value at ``x_k``.
    """
    h = np.sqrt(((coords[:, None, :] - coords[None, :, :]) ** 2).sum(-1))
    v = br_variogram(h, p)
    v0 = v[0]
    cov = 0.5 * (v0[:, None] + v0[None, :] - v)
    cov[0, :] = cov[:, 0] = 0.0
    cov = cov + JITTER * np.eye(len(coords))
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        w, q = np.linalg.eigh(cov)
        return q * np.sqrt(np.clip(w, 0.0, None))


def _exact_chunk(L: np.ndarray, vario: np.ndarray, n: int, rng: np.random.Generator):
    d = L.shape[0]
    z = np.zeros((n, d))
    for k in range(d):
        arrival = rng.exponential(size=n)
        active = np.ones(n, dtype=bool) if k == 0 else (1.0 / arrival > z[:, k])
        while active.any():
            idx = np.flatnonzero(active)
            g = rng.standard_normal((idx.size, d)) @ L.T
            g -= g[:, k:k + 1]
            cand = np.exp(g - 0.5 * vario[k]) / arrival[idx, None]
            cand[:, k] = 1.0 / arrival[idx]
            if k == 0:
                accept = np.ones(idx.size, dtype=bool)
            else:
                accept = np.all(cand[:, :k] < z[idx, :k], axis=1)
            rows = idx[accept]
            z[rows] = np.maximum(z[rows], cand[accept])
            arrival[idx] += rng.exponential(size=idx.size)
            active[idx] = 1.0 / arrival[idx] > z[idx, k]
    return z


def _spectral_chunk(L, vario, n, rng, n_spectral):
    d = L.shape[0]
    z = np.zeros((n, d))
    arrival = np.zeros(n)
    for _ in range(n_spectral):
        arrival += rng.exponential(size=n)
        g = rng.standard_normal((n, d)) @ L.T
        g -= g[:, :1]
        z = np.maximum(z, np.exp(g - 0.5 * vario[0]) / arrival[:, None])
    return z


def br_simulate(
    s: StationSet,
    p: BRParams,
    m: int,
    method: str = "exact",
    n_spectral: int = 1000,
    workers: int = 1,
) -> MaximaMatrix:
    """Simulate ``m`` independent replicates with unit Frechet margins.

    Replicates are generated in chunks of 64, each chunk from its own child
    of ``SeedSequence(p.seed)``, so the result for a seed does not depend on
    ``workers``.
    """
    if s.coord_system is not CoordSystem.PLANAR:
        raise ValueError("simulation requires planar coordinates")
    if m < 1:
        raise ValueError("m must be positive")
    coords = s.coords
    dist = pairwise_distances(s).values
    iu = np.triu_indices(len(s), k=1)
    if np.any(dist[iu] == 0):
        raise ValueError("duplicate station locations")
    if method not in ("exact", "spectral"):
        raise ValueError(f"unknown method {method!r}")

    L = _increment_factor(coords, p)
    vario = br_variogram(dist, p)
    sizes = [min(CHUNK, m - start) for start in range(0, m, CHUNK)]
    seeds = np.random.SeedSequence(p.seed).spawn(len(sizes))

    def run(args):
        size, ss = args
        rng = np.random.Generator(np.random.PCG64(ss))
        if method == "exact":
            return _exact_chunk(L, vario, size, rng)
        return _spectral_chunk(L, vario, size, rng, n_spectral)

    jobs = list(zip(sizes, seeds))
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    return MaximaMatrix(np.vstack(parts), station_ids=s.ids)


def uniform_stations(d: int, seed=None) -> StationSet:
    """``d`` locations drawn uniformly on the unit square."""
    rng = np.random.default_rng(seed)
    return StationSet.planar(rng.random((d, 2)))
