"""Winsorisation, OLS with absorbed fixed effects and cluster-robust covariance."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import linalg, stats

from .errors import EstimationError

COLLINEAR_TOL = 1e-10


def winsorize(values, lo: float = 0.01, hi: float = 0.99) -> np.ndarray:
    """Clip to the empirical ``lo``/``hi`` quantiles (linear interpolation)."""
    x = np.asarray(values, dtype=float)
    if x.size < 2:
        raise ValueError("winsorize needs at least 2 values")
    if lo <= 0 and hi >= 1:
        return x.copy()
    ql, qh = np.quantile(x, [lo, hi], method="linear")
    return np.clip(x, ql, qh)


def demean_within(a: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """Subtract group means (rows of ``a`` grouped by integer ``codes``)."""
    a = np.asarray(a, dtype=float)
    two_d = a.ndim == 2
    a2 = a if two_d else a[:, None]
    n_groups = int(codes.max()) + 1
    counts = np.bincount(codes, minlength=n_groups).astype(float)
    sums = np.zeros((n_groups, a2.shape[1]))
    np.add.at(sums, codes, a2)
    out = a2 - (sums / counts[:, None])[codes]
    return out if two_d else out[:, 0]


@dataclass(eq=False)
class RegressionResult:
    params: pd.Series
    bse: pd.Series
    tvalues: pd.Series
    pvalues: pd.Series
    vcov: pd.DataFrame
    r_squared: float
    r_squared_within: float
    n: int
    fe_cell_count: int
    cluster_count: int
    df_model: int  # regressors plus absorbed FE cells (K in the small-sample factor)
    residuals: np.ndarray = field(repr=False)
    fitted: np.ndarray = field(repr=False)
    obs_ids: tuple = ()
    label: str = ""

    def coef(self, name: str) -> dict:
        return {
            "beta": float(self.params[name]),
            "se": float(self.bse[name]),
            "t": float(self.tvalues[name]),
            "p": float(self.pvalues[name]),
        }


def _codes(groups) -> tuple[np.ndarray, int]:
    codes, uniques = pd.factorize(pd.Series(list(groups), dtype=object), sort=True)
    return codes.astype(np.int64), len(uniques)


def _check_rank(Xd: np.ndarray, names: Sequence[str]) -> None:
    if Xd.shape[1] == 0:
        return
    norms = np.linalg.norm(Xd, axis=0)
    for j, nm in enumerate(names):
        if norms[j] <= COLLINEAR_TOL * max(1.0, np.sqrt(Xd.shape[0])):
            raise EstimationError(f"regressor {nm!r} is collinear with the fixed effects / intercept")
    scale = np.where(norms > 0, norms, 1.0)
    _, R, piv = linalg.qr(Xd / scale, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    bad = np.nonzero(diag <= COLLINEAR_TOL * diag[0])[0]
    if bad.size:
        raise EstimationError(f"regressor {names[piv[bad[0]]]!r} is collinear with the other regressors")


def cluster_vcov(Xd: np.ndarray, resid: np.ndarray, clusters: np.ndarray, df_model: int,
                 bread: np.ndarray | None = None) -> tuple[np.ndarray, int]:
    """CR1 sandwich with factor G/(G-1) * (N-1)/(N-K)."""
    n = Xd.shape[0]
    codes, g = _codes(clusters)
    if g < 2:
        raise EstimationError("cluster-robust covariance needs at least 2 clusters")
    if bread is None:
        bread = np.linalg.inv(Xd.T @ Xd)
    scores = np.zeros((g, Xd.shape[1]))
    np.add.at(scores, codes, Xd * resid[:, None])
    meat = scores.T @ scores
    factor = g / (g - 1) * (n - 1) / (n - df_model)
    return factor * bread @ meat @ bread, g


def ols_fe(y, X, fe_groups=None, cluster_ids=None, names: Sequence[str] | None = None,
           obs_ids: Sequence = (), label: str = "") -> RegressionResult:
    """Least squares with fixed effects absorbed by within-group demeaning.

    Without ``fe_groups`` an intercept is added and reported as ``const``.
    ``cluster_ids`` defaults to one cluster per observation (HC1).
    R-squared is for the full model including the absorbed effects.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    names = list(names) if names is not None else [f"x{j}" for j in range(p)]
    if len(names) != p:
        raise ValueError("names must match the number of columns of X")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
        raise EstimationError("non-finite values in regression inputs")

    if fe_groups is None:
        Xd = np.column_stack([np.ones(n), X])
        yd = y
        names = ["const", *names]
        n_cells = 0
        df_model = p + 1
    else:
        codes, n_cells = _codes(fe_groups)
        Xd = demean_within(X, codes)
        yd = demean_within(y, codes)
        df_model = p + n_cells
    if n <= df_model:
        raise EstimationError(f"too few observations ({n}) for {df_model} parameters")
    check = Xd[:, 1:] if fe_groups is None else Xd
    _check_rank(check, names[1:] if fe_groups is None else names)

    bread = np.linalg.inv(Xd.T @ Xd)
    beta = bread @ (Xd.T @ yd)
    resid = yd - Xd @ beta
    clusters = np.arange(n) if cluster_ids is None else np.asarray(list(cluster_ids), dtype=object)
    vcov, g = cluster_vcov(Xd, resid, clusters, df_model, bread)
    if cluster_ids is not None and g == n:
        warnings.warn("every cluster is a singleton; CR1 reduces to HC1", RuntimeWarning, stacklevel=2)
    se = np.sqrt(np.clip(np.diag(vcov), 0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = beta / se
    pv = 2 * stats.t.sf(np.abs(t), df=max(g - 1, 1))

    ssr = float(resid @ resid)
    sst = float(np.sum((y - y.mean()) ** 2))
    sst_w = float(yd @ yd) if fe_groups is not None else sst
    r2 = 1 - ssr / sst if sst > 0 else 1.0
    r2w = 1 - ssr / sst_w if sst_w > 0 else 1.0
    idx = pd.Index(names)
    return RegressionResult(
        params=pd.Series(beta, idx),
        bse=pd.Series(se, idx),
        tvalues=pd.Series(t, idx),
        pvalues=pd.Series(pv, idx),
        vcov=pd.DataFrame(vcov, idx, idx),
        r_squared=r2,
        r_squared_within=r2w,
        n=n,
        fe_cell_count=n_cells,
        cluster_count=g,
        df_model=df_model,
        residuals=resid,
        fitted=y - resid,
        obs_ids=tuple(obs_ids),
        label=label,
    )


def ols_dummy(y, X, fe_groups=None, cluster_ids=None, names=None) -> RegressionResult:
    """Reference estimator: the same model with explicit FE dummy columns."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    names = list(names) if names is not None else [f"x{j}" for j in range(p)]
    if fe_groups is None:
        D = np.ones((n, 1))
        dnames = ["const"]
    else:
        codes, k = _codes(fe_groups)
        D = np.zeros((n, k))
        D[np.arange(n), codes] = 1.0
        dnames = [f"fe{j}" for j in range(k)]
    Z = np.column_stack([X, D])
    bread = np.linalg.inv(Z.T @ Z)
    beta = bread @ Z.T @ y
    resid = y - Z @ beta
    clusters = np.arange(n) if cluster_ids is None else np.asarray(list(cluster_ids), dtype=object)
    vcov, g = cluster_vcov(Z, resid, clusters, Z.shape[1], bread)
    se = np.sqrt(np.diag(vcov))
    allnames = names + dnames
    idx = pd.Index(allnames)
    sst = float(np.sum((y - y.mean()) ** 2))
    return RegressionResult(
        params=pd.Series(beta, idx), bse=pd.Series(se, idx), tvalues=pd.Series(beta / se, idx),
        pvalues=pd.Series(2 * stats.t.sf(np.abs(beta / se), max(g - 1, 1)), idx),
        vcov=pd.DataFrame(vcov, idx, idx), r_squared=1 - float(resid @ resid) / sst,
        r_squared_within=np.nan, n=n, fe_cell_count=0 if fe_groups is None else D.shape[1],
        cluster_count=g, df_model=Z.shape[1], residuals=resid, fitted=y - resid,
    )


def hc1_se(X, resid) -> np.ndarray:
    """Heteroskedasticity-robust HC1 standard errors for a plain design matrix."""
    X = np.asarray(X, dtype=float)
    n, k = X.shape
    bread = np.linalg.inv(X.T @ X)
    meat = (X * resid[:, None] ** 2).T @ X
    return np.sqrt(np.diag(n / (n - k) * bread @ meat @ bread))


def wald_equality(res_a: RegressionResult, res_b: RegressionResult, coef_name: str) -> tuple[float, float]:
    """z-test of equal coefficients treating the two estimates as independent (conservative)."""
    if res_a.n != res_b.n or (res_a.obs_ids and res_b.obs_ids and set(res_a.obs_ids) != set(res_b.obs_ids)):
        raise EstimationError("wald_equality requires results estimated on the same matched sample")
    a, b = res_a.coef(coef_name), res_b.coef(coef_name)
    denom = np.hypot(a["se"], b["se"])
    if denom == 0:
        return 0.0, 1.0
    z = (a["beta"] - b["beta"]) / denom
    return float(z), float(2 * stats.norm.sf(abs(z)))
