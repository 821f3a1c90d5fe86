"""Distance-decay curve of chi and the variance of departures from it.

Pairwise estimates are averaged within distance bins and a natural cubic
smoothing spline is fitted to the bin means. The spline solves

    min_f  sum_k w_k (y_k - f(x_k))**2 + lam * int f''(x)**2 dx

in Reinsch form, written so that ``lam = inf`` (the weighted least-squares
line) is evaluated without cancellation::

    f = y - W^-1 Q (R / lam + Q' W^-1 Q)^-1 Q' y
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal

import numpy as np
from scipy import linalg, optimize
from scipy.interpolate import CubicSpline

from .bootstrap import BootstrapSummary
from .domain import DistanceMatrix
from .madogram import ChiMatrix

TAU2_PAPER_SIM = (0.095, 6.0, 0.72)


class SplineFitError(RuntimeError):
    pass


@dataclass(frozen=True)
class BinnedChi:
    """Bin summaries of pairwise chi estimates, ordered by distance.

    ``bin_index[i, j]`` is the (kept) bin of pair ``(i, j)``, or -1.
    """

    centers: np.ndarray
    means: np.ndarray
    counts: np.ndarray
    variances: np.ndarray
    edges: np.ndarray
    bin_index: np.ndarray
    scheme: str = "equal_width"

    def __len__(self) -> int:
        return len(self.centers)


def bin_chi(
    cm: ChiMatrix | np.ndarray,
    dm: DistanceMatrix,
    K: int = 100,
    scheme: Literal["equal_width", "equal_count"] = "equal_width",
) -> BinnedChi:
    """Group pairs ``i < j`` into ``K`` distance bins over ``(0, max h]``.

    Bins are right-closed; pairs at distance 0 fall in the first bin. Empty
    bins are dropped. ``variances`` uses ``ddof=1`` and is NaN for single-pair
    bins.
    """
    if K < 2:
        raise ValueError("K must be at least 2")
    chi = cm.chi_hat if isinstance(cm, ChiMatrix) else np.asarray(cm, float)
    dist = dm.values
    d = dist.shape[0]
    i, j = np.triu_indices(d, k=1)
    c, h = chi[i, j], dist[i, j]
    ok = np.isfinite(c)
    if not ok.any():
        raise ValueError("no estimable pairs to bin")
    i, j, c, h = i[ok], j[ok], c[ok], h[ok]
    hmax = float(h.max())
    if scheme == "equal_width":
        edges = np.linspace(0.0, hmax, K + 1)
    elif scheme == "equal_count":
        edges = np.quantile(h, np.linspace(0, 1, K + 1))
        edges[0] = 0.0
    else:
        raise ValueError(f"unknown binning scheme {scheme!r}")
    raw = np.clip(np.searchsorted(edges, h, side="left") - 1, 0, K - 1)

    counts = np.bincount(raw, minlength=K)
    keep = np.flatnonzero(counts > 0)
    remap = np.full(K, -1)
    remap[keep] = np.arange(keep.size)
    b = remap[raw]
    n = counts[keep].astype(float)
    centers = np.bincount(b, weights=h) / n
    means = np.bincount(b, weights=c) / n
    ss = np.bincount(b, weights=(c - means[b]) ** 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        variances = np.where(n > 1, ss / (n - 1), np.nan)

    bin_index = np.full((d, d), -1)
    bin_index[i, j] = b
    bin_index[j, i] = b
    return BinnedChi(centers, means, counts[keep], variances, edges, bin_index, scheme)


def _reinsch_qr(x: np.ndarray):
    n = x.size
    dx = np.diff(x)
    Q = np.zeros((n, n - 2))
    R = np.zeros((n - 2, n - 2))
    for k in range(n - 2):
        Q[k, k] = 1.0 / dx[k]
        Q[k + 1, k] = -1.0 / dx[k] - 1.0 / dx[k + 1]
        Q[k + 2, k] = 1.0 / dx[k + 1]
        R[k, k] = (dx[k] + dx[k + 1]) / 3.0
        if k < n - 3:
            R[k, k + 1] = R[k + 1, k] = dx[k + 1] / 6.0
    return Q, R


@dataclass(frozen=True)
class SmoothingSpline:
    """Natural cubic smoothing spline with knots at the data abscissae.

    Outside ``[x[0], x[-1]]`` the curve continues linearly, which is the
    natural spline's own boundary behaviour.
    """

    x: np.ndarray
    fitted: np.ndarray
    lam: float
    edf: float
    gcv: float
    weights: np.ndarray
    _interp: CubicSpline = field(repr=False, compare=False)

    def __call__(self, h):
        h = np.asarray(h, dtype=float)
        x0, x1 = self.x[0], self.x[-1]
        out = self._interp(np.clip(h, x0, x1))
        lo, hi = h < x0, h > x1
        if lo.any():
            out = np.where(lo, self.fitted[0] + self._interp(x0, 1) * (h - x0), out)
        if hi.any():
            out = np.where(hi, self.fitted[-1] + self._interp(x1, 1) * (h - x1), out)
        return float(out) if out.ndim == 0 else out


class _Smoother:
    """Precomputed pieces of the penalized fit for one design."""

    def __init__(self, x, w):
        self.x = np.asarray(x, float)
        self.w = np.asarray(w, float)
        n = self.x.size
        if n < 4:
            raise SplineFitError(f"need at least 4 distinct abscissae, got {n}")
        dx = np.diff(self.x)
        if np.any(dx <= 0):
            raise SplineFitError("abscissae must be strictly increasing")
        if dx.min() < 1e-10 * (self.x[-1] - self.x[0]):
            raise SplineFitError("abscissae too close together; system ill-conditioned")
        if np.any(self.w <= 0) or not np.all(np.isfinite(self.w)):
            raise SplineFitError("weights must be positive and finite")
        self.Q, self.R = _reinsch_qr(self.x)
        self.WiQ = self.Q / self.w[:, None]
        self.QtWiQ = self.Q.T @ self.WiQ
        self.lam0 = np.trace(self.R) / np.trace(self.QtWiQ)

    def solve(self, y, lam):
        """Fitted values and hat-matrix trace at smoothing parameter ``lam``."""
        mu = 0.0 if np.isinf(lam) else 1.0 / lam
        M = mu * self.R + self.QtWiQ
        try:
            cf = linalg.cho_factor(M)
        except linalg.LinAlgError as exc:
            raise SplineFitError(f"penalized system not positive definite at lam={lam}") from exc
        gamma = linalg.cho_solve(cf, self.Q.T @ y)
        fitted = y - self.WiQ @ gamma
        edf = self.x.size - np.trace(linalg.cho_solve(cf, self.QtWiQ))
        return fitted, edf

    def gcv(self, y, lam):
        fitted, edf = self.solve(y, lam)
        n = self.x.size
        rss = np.sum(self.w * (y - fitted) ** 2)
        if n - edf <= 1e-8:
            return np.inf
        return n * rss / (n - edf) ** 2

    def select_lam(self, y):
        logs = np.linspace(-8.0, 10.0, 181)
        scores = np.array([self.gcv(y, self.lam0 * 10**p) for p in logs])
        best = int(np.argmin(scores))
        lo, hi = logs[max(best - 1, 0)], logs[min(best + 1, logs.size - 1)]
        if hi > lo:
            res = optimize.minimize_scalar(
                lambda p: self.gcv(y, self.lam0 * 10**p),
                bounds=(lo, hi),
                method="bounded",
                options={"xatol": 1e-6},
            )
            if res.fun <= scores[best]:
                return self.lam0 * 10 ** float(res.x)
        return self.lam0 * 10 ** logs[best]


def smoothing_spline(x, y, w=None, lam: float | None = None) -> SmoothingSpline:
    """Fit a natural cubic smoothing spline; ``lam=None`` selects it by GCV.

    Weights are rescaled to mean 1 before fitting, so ``lam`` is on the scale
    of unit weights.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    w = np.ones_like(x) if w is None else np.asarray(w, float)
    w = w / w.mean()
    sm = _Smoother(x, w)
    if lam is None:
        lam = sm.select_lam(y)
    elif lam < 0:
        raise ValueError("lam must be nonnegative")
    elif lam == 0:
        fitted, edf = y.copy(), float(x.size)
    if lam != 0:
        fitted, edf = sm.solve(y, lam)
    n = x.size
    rss = np.sum(w * (y - fitted) ** 2)
    gcv = n * rss / (n - edf) ** 2 if n - edf > 1e-8 else np.inf
    interp = CubicSpline(x, fitted, bc_type="natural")
    return SmoothingSpline(x, fitted, float(lam), float(edf), float(gcv), w, interp)


@dataclass(frozen=True)
class ChiCurve:
    spline: SmoothingSpline
    weighted: bool

    @property
    def lam(self) -> float:
        return self.spline.lam

    @property
    def fitted(self) -> np.ndarray:
        return self.spline.fitted

    @property
    def x(self) -> np.ndarray:
        return self.spline.x

    def __call__(self, h):
        return self.spline(h)


def fit_chi_curve(b: BinnedChi, lam: float | None = None, weighted: bool = False) -> ChiCurve:
    """Smoothing-spline estimate of chi as a function of distance.

    Bin means are fitted unweighted by default; ``weighted=True`` weights
    each bin by its pair count.
    """
    if len(b) < 4:
        raise SplineFitError(f"need at least 4 non-empty bins, got {len(b)}")
    w = b.counts.astype(float) if weighted else None
    return ChiCurve(smoothing_spline(b.centers, b.means, w, lam), weighted)


@dataclass(frozen=True)
class Tau2Fn:
    provenance: Literal["parametric-logistic", "estimated"]
    params: tuple
    fn: Callable = field(repr=False, compare=False)
    bin_values: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __call__(self, h):
        out = np.maximum(np.asarray(self.fn(np.asarray(h, float)), float), 0.0)
        return float(out) if out.ndim == 0 else out


def logistic_tau2(a: float, b: float, c: float) -> Tau2Fn:
    """``tau2(h) = a / (1 + exp(-b (h - c)))``."""
    if not (a >= 0 and np.isfinite(a) and np.isfinite(b) and np.isfinite(c)):
        raise ValueError("logistic tau2 needs finite a >= 0, b, c")

    def fn(h):
        return a * 0.5 * (1.0 + np.tanh(0.5 * b * (h - c)))

    return Tau2Fn("parametric-logistic", (float(a), float(b), float(c)), fn)


def estimate_tau2(
    b: BinnedChi,
    bs: BootstrapSummary | None = None,
    mode: Literal["parametric-logistic", "estimated"] = "estimated",
    params: tuple | None = None,
) -> Tau2Fn:
    """Variance of true chi around the distance curve.

    ``parametric-logistic`` uses ``params = (a, b, c)``. ``estimated``
    subtracts the mean bootstrap variance from the within-bin variance of the
    estimates, floors the result at zero, and smooths it over distance with
    the same GCV spline used for the chi curve.
    """
    if mode == "parametric-logistic":
        return logistic_tau2(*(params if params is not None else TAU2_PAPER_SIM))
    if mode != "estimated":
        raise ValueError(f"unknown tau2 mode {mode!r}")
    if bs is None:
        raise ValueError("estimated tau2 needs a bootstrap summary")

    nb = len(b)
    var = bs.var
    mask = (b.bin_index >= 0) & np.isfinite(var)
    mask &= np.triu(np.ones_like(mask), k=1).astype(bool)
    idx = b.bin_index[mask]
    sums = np.bincount(idx, weights=var[mask], minlength=nb)
    cnt = np.bincount(idx, minlength=nb)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_boot = sums / cnt
    raw = np.maximum(b.variances - mean_boot, 0.0)
    use = np.isfinite(raw)
    if use.sum() < 4:
        raise SplineFitError("fewer than 4 bins with a usable variance estimate")
    if np.all(raw[use] == 0):
        return Tau2Fn("estimated", (), lambda h: np.zeros_like(h), raw)
    sp = smoothing_spline(b.centers[use], raw[use])
    return Tau2Fn("estimated", (sp.lam,), sp, raw)
