"""End-to-end estimation steps shared by the CLI and the simulation study."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .bootstrap import BootstrapSummary, bootstrap_sd
from .brsim import BRParams, TrueNetwork, br_simulate, true_network
from .chicurve import BinnedChi, ChiCurve, Tau2Fn, bin_chi, estimate_tau2, fit_chi_curve
from .domain import DistanceMatrix, MaximaMatrix, StationSet, edf_ranks, pairwise_distances
from .madogram import ChiMatrix, chi_matrix
from .shrinkage import NetMetrics, Network, ShrunkChi, shrink, threshold_network, tpr_ppv


@dataclass(frozen=True)
class ChiNetResult:
    chi: ChiMatrix
    boot: BootstrapSummary
    binned: BinnedChi
    curve: ChiCurve
    tau2: Tau2Fn
    shrunk: ShrunkChi
    empirical: Network
    corrected: Network


def chi_network(
    mx: MaximaMatrix,
    dm: DistanceMatrix,
    chi_min: float = 0.3,
    bins: int = 100,
    boot: int = 500,
    seed=None,
    convention: str = "over_m",
    pairing: str = "common",
    tau2_mode: str = "estimated",
    tau2_params: tuple | None = None,
    lam: float | None = None,
    weighted: bool = False,
    bin_scheme: str = "equal_width",
    workers: int = 1,
) -> ChiNetResult:
    """Empirical and bias-corrected chi networks for one maxima matrix."""
    cm = chi_matrix(edf_ranks(mx, convention), pairing)
    bs = bootstrap_sd(mx, boot, seed, convention, pairing, chi_min=chi_min, workers=workers)
    binned = bin_chi(cm, dm, bins, bin_scheme)
    curve = fit_chi_curve(binned, lam, weighted)
    tau2 = estimate_tau2(binned, bs, tau2_mode, tau2_params)
    shrunk = shrink(cm, curve, tau2, bs, dm)
    return ChiNetResult(
        cm,
        bs,
        binned,
        curve,
        tau2,
        shrunk,
        threshold_network(cm, dm, chi_min, "empirical"),
        threshold_network(shrunk, dm, chi_min, "corrected"),
    )


@dataclass(frozen=True)
class ReplicateOutcome:
    rep: int
    empirical: NetMetrics
    corrected: NetMetrics
    lam: float
    edf: float


@dataclass(frozen=True)
class StudyResult:
    stations: StationSet
    truth: TrueNetwork
    outcomes: tuple[ReplicateOutcome, ...]

    def table(self) -> np.ndarray:
        """Rows ``(tpr_emp, ppv_emp, tpr_corr, ppv_corr, n_emp, n_corr)``."""
        return np.array([
            (o.empirical.tpr, o.empirical.ppv, o.corrected.tpr, o.corrected.ppv,
             o.empirical.n_est, o.corrected.n_est)
            for o in self.outcomes
        ], dtype=float)


def simulation_study(
    stations: StationSet,
    params: BRParams,
    m: int = 50,
    reps: int = 100,
    chi_min: float = 0.3,
    bins: int = 100,
    boot: int = 500,
    seed: int = 0,
    tau2_mode: str = "parametric-logistic",
    tau2_params: tuple | None = None,
    convention: str = "over_m",
    method: str = "exact",
    workers: int = 1,
) -> StudyResult:
    """Monte Carlo comparison of empirical and corrected networks with the truth.

    Replicate ``r`` simulates from entropy ``(seed, 1, r)`` and bootstraps
    from ``(seed, 2, r)``, so results do not depend on ``workers``.
    """
    dm = pairwise_distances(stations)
    truth = true_network(stations, params, chi_min)

    def one(r):
        p = BRParams(params.rho, params.kappa, (seed, 1, r))
        mx = br_simulate(stations, p, m, method=method)
        res = chi_network(
            mx, dm, chi_min, bins, boot, (seed, 2, r), convention,
            tau2_mode=tau2_mode, tau2_params=tau2_params,
        )
        return ReplicateOutcome(
            r,
            tpr_ppv(res.empirical, truth),
            tpr_ppv(res.corrected, truth),
            res.curve.lam,
            res.curve.spline.edf,
        )

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            outcomes = tuple(ex.map(one, range(reps)))
    else:
        outcomes = tuple(one(r) for r in range(reps))
    return StudyResult(stations, truth, outcomes)


PERCENTILES = (5, 25, 50, 75, 95)


def percentile_summary(x, q=PERCENTILES) -> np.ndarray:
    """Percentiles of the defined (non-NaN) values, linear interpolation
    between order statistics (``numpy`` default, R type 7)."""
    x = np.asarray(x, dtype=float)
    x = x[np.isfinite(x)]
    if x.size == 0:
        return np.full(len(q), np.nan)
    return np.percentile(x, q)
