"""Simple regressions of long-distance connectivity on a covariate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import gammaln

MAX_ITER = 100
TOL = 1e-10


class ConvergenceError(RuntimeError):
    def __init__(self, msg, beta, grad_norm):
        super().__init__(f"{msg} (gradient norm {grad_norm:.3g})")
        self.beta = beta
        self.grad_norm = grad_norm


@dataclass(frozen=True)
class RegressionFit:
    """Coefficients are ``(intercept, slope)``; ``slope`` fields are NaN for
    intercept-only fits."""

    coef: np.ndarray
    se: np.ndarray
    stat: np.ndarray
    pvalue: np.ndarray
    family: str
    n: int
    loglik: float = float("nan")
    n_iter: int = 0
    df_resid: int = 0

    @property
    def intercept(self) -> float:
        return float(self.coef[0])

    @property
    def slope(self) -> float:
        return float(self.coef[1]) if self.coef.size > 1 else float("nan")

    def conf_int(self, level: float = 0.95) -> np.ndarray:
        if self.family == "gaussian-identity":
            q = stats.t.ppf(0.5 + level / 2, self.df_resid)
        else:
            q = stats.norm.ppf(0.5 + level / 2)
        return np.column_stack([self.coef - q * self.se, self.coef + q * self.se])

    def to_dict(self) -> dict:
        names = ["intercept", "slope"][: self.coef.size]
        return {
            "family": self.family,
            "n": self.n,
            "coefficients": dict(zip(names, self.coef.tolist())),
            "std_errors": dict(zip(names, self.se.tolist())),
            "statistics": dict(zip(names, self.stat.tolist())),
            "p_values": dict(zip(names, self.pvalue.tolist())),
            "loglik": self.loglik,
            "iterations": self.n_iter,
        }


def _design(x, n):
    if x is None:
        return np.ones((n, 1))
    x = np.asarray(x, dtype=float)
    return np.column_stack([np.ones(n), x])


def ols_fit(x, y) -> RegressionFit:
    """Least-squares line with classical SEs and two-sided t-test p-values."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    n = y.size
    if x.shape != y.shape:
        raise ValueError("x and y lengths differ")
    if n < 3:
        raise ValueError("need at least 3 observations")
    if np.ptp(x) == 0:
        raise ValueError("covariate is constant; slope is not identifiable")
    X = _design(x, n)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    df = n - 2
    sigma2 = resid @ resid / df
    cov = sigma2 * np.linalg.inv(X.T @ X)
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = coef / se
    p = np.where(se > 0, 2 * stats.t.sf(np.abs(t), df), np.where(coef == 0, 1.0, 0.0))
    loglik = -0.5 * n * (np.log(2 * np.pi * max(resid @ resid / n, 1e-300)) + 1)
    return RegressionFit(coef, se, t, p, "gaussian-identity", n, float(loglik), 0, df)


def poisson_loglik(beta, X, y, offset=0.0) -> float:
    eta = X @ beta + offset
    return float(np.sum(y * eta - np.exp(eta) - gammaln(y + 1)))


def poisson_glm_fit(x, counts, offset=None) -> RegressionFit:
    """Poisson regression with log link fitted by IRLS.

    Parameters
    ----------
    x : array_like or None
        Covariate; ``None`` fits an intercept-only model.
    counts : array_like of nonnegative integers
    offset : array_like, optional
        Log-exposure added to the linear predictor.

    Iterates until the largest coefficient change is below 1e-10, at most
    100 times; raises ``ConvergenceError`` otherwise. Standard errors come
    from the inverse Fisher information, p-values from the normal.
    """
    y = np.asarray(counts, dtype=float)
    n = y.size
    if n < 3:
        raise ValueError("need at least 3 observations")
    if np.any(y < 0) or np.any(y != np.round(y)):
        raise ValueError("counts must be nonnegative integers")
    if np.all(y == 0):
        raise ValueError("all counts are zero; the MLE does not exist")
    X = _design(x, n)
    if x is not None and np.ptp(X[:, 1]) == 0:
        raise ValueError("covariate is constant; slope is not identifiable")
    off = np.zeros(n) if offset is None else np.asarray(offset, dtype=float)

    # start from a least-squares fit on the log scale
    z0 = np.log(y + 0.5) - off
    beta, *_ = np.linalg.lstsq(X, z0, rcond=None)
    for it in range(1, MAX_ITER + 1):
        eta = X @ beta + off
        mu = np.exp(eta)
        z = eta - off + (y - mu) / mu
        XtW = X.T * mu
        try:
            new = np.linalg.solve(XtW @ X, XtW @ z)
        except np.linalg.LinAlgError:
            grad = float(np.linalg.norm(X.T @ (y - mu)))
            raise ConvergenceError("IRLS weights degenerated (MLE may not exist)", beta, grad) from None
        step = np.max(np.abs(new - beta))
        beta = new
        if not np.all(np.isfinite(beta)):
            break
        if step < TOL:
            break
    else:
        mu = np.exp(X @ beta + off)
        raise ConvergenceError("IRLS did not converge", beta, float(np.linalg.norm(X.T @ (y - mu))))
    if not np.all(np.isfinite(beta)):
        raise ConvergenceError("IRLS diverged", beta, float("nan"))

    mu = np.exp(X @ beta + off)
    cov = np.linalg.inv((X.T * mu) @ X)
    se = np.sqrt(np.diag(cov))
    z = beta / se
    p = 2 * stats.norm.sf(np.abs(z))
    return RegressionFit(
        beta, se, z, p, "poisson-log", n, poisson_loglik(beta, X, y, off), it, n - X.shape[1]
    )
