"""Moving-block bootstrap null for decay, wild-cluster bootstrap and placebo launch timing.

Every replication draws from its own generator seeded by ``(seed, replication)``
so results do not depend on how replications are spread over workers.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
from scipy import stats

from .data import AnalysisSample, HORIZON_DAYS
from .econometrics import _codes, cluster_vcov, demean_within, winsorize
from .errors import EstimationError, InsufficientDataError
from .metrics import vol_adjusted_rows
from .specs import DesignSpec, design_matrices

WEBB_WEIGHTS = np.array([-math.sqrt(1.5), -1.0, -math.sqrt(0.5), math.sqrt(0.5), 1.0, math.sqrt(1.5)])
BLOCK_SIZES = (10, 21, 42, 63)
BLOCK_SCHEMES = ("permute", "moving", "circular")


@dataclass(frozen=True)
class BootstrapConfig:
    replications: int = 999
    block_days: int = 21
    seed: int = 20240101
    weight_scheme: str = "webb6"
    block_scheme: str = "permute"
    threads: int = 1

    def __post_init__(self):
        if self.replications < 99:
            raise ValueError("replications must be at least 99")
        if self.block_days < 1:
            raise ValueError("block_days must be at least 1")
        if self.weight_scheme != "webb6":
            raise ValueError("only the webb6 weight scheme is implemented")
        if self.block_scheme not in BLOCK_SCHEMES:
            raise ValueError(f"block_scheme must be one of {BLOCK_SCHEMES}")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")


def resampling_p(count: int, replications: int) -> float:
    return (1 + count) / (replications + 1)


def _map_replications(fn, config: BootstrapConfig) -> np.ndarray:
    reps = range(config.replications)
    if config.threads == 1:
        return np.array([fn(b) for b in reps])
    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        return np.array(list(pool.map(fn, reps)))


# ------------------------------------------------------- moving-block bootstrap


@dataclass(frozen=True, eq=False)
class BlockBootstrapResult:
    horizon: str
    block_days: int
    observed_beta: float
    null_betas: np.ndarray
    p_value: float
    excess_negativity: float
    n: int


def univariate_slope(y: np.ndarray, x: np.ndarray, winsor=(0.01, 0.99)) -> float:
    """OLS slope of ``y`` on an intercept and the winsorised ``x``."""
    xw = winsorize(x, *winsor)
    xc = xw - xw.mean()
    sxx = float(xc @ xc)
    if sxx == 0:
        raise EstimationError("univariate regressor has no variation")
    return float(xc @ (y - y.mean()) / sxx)


def pooled_windows(sample: AnalysisSample, horizon: str) -> tuple[list[str], np.ndarray]:
    """Each eligible strategy's pre+live window as one row (length 2n, launch at column n)."""
    n = HORIZON_DAYS[horizon]
    ids = sample.eligible(horizon)
    rows = np.empty((len(ids), 2 * n))
    for j, sid in enumerate(ids):
        s = sample.series(sid)
        k = s.launch_index(sample.meta(sid).live_date)
        rows[j] = s.returns[k - n:k + n]
    return ids, rows


def block_indices(rng: np.random.Generator, n_series: int, length: int, block: int,
                  scheme: str = "permute") -> np.ndarray:
    """Row-wise resampling positions assembled from blocks of ``block`` observations.

    ``permute`` shuffles the consecutive non-overlapping blocks of each row
    (the last one may be short), so every observation is used exactly once.
    ``moving`` and ``circular`` draw block starts with replacement, the latter
    wrapping around the end of the row.
    """
    n_blocks = -(-length // block)
    if scheme == "permute":
        order = rng.permuted(np.tile(np.arange(n_blocks), (n_series, 1)), axis=1)
        idx = (order[:, :, None] * block + np.arange(block)).reshape(n_series, -1)
        # drop the padding positions of the short final block; each row loses the same count
        return idx[idx < length].reshape(n_series, length)
    circular = scheme == "circular"
    span = length if circular else length - block + 1
    starts = rng.integers(0, span, size=(n_series, n_blocks))
    idx = (starts[:, :, None] + np.arange(block)).reshape(n_series, -1)[:, :length]
    return idx % length if circular else idx


def _decay_beta(rows: np.ndarray, n: int, convention: str, winsor) -> float:
    pre = vol_adjusted_rows(rows[:, :n], convention)
    live = vol_adjusted_rows(rows[:, n:], convention)
    ok = np.isfinite(pre) & np.isfinite(live)
    return univariate_slope(live[ok] - pre[ok], pre[ok], winsor)


def block_bootstrap_null(sample: AnalysisSample, horizon: str, config: BootstrapConfig = BootstrapConfig(),
                         convention: str = "compound", winsor=(0.01, 0.99)) -> BlockBootstrapResult:
    """Null distribution of the univariate decay slope with the launch break destroyed.

    Each strategy's pooled pre+live window is rebuilt from blocks of its own
    returns while the launch position stays fixed. The p-value is one-sided
    toward a more negative observed slope.
    """
    n = HORIZON_DAYS[horizon]
    ids, rows = pooled_windows(sample, horizon)
    if len(ids) < 3:
        raise InsufficientDataError(f"block bootstrap needs at least 3 eligible strategies, got {len(ids)}")
    if config.block_days > 2 * n:
        raise ValueError(f"block of {config.block_days} days exceeds the {2 * n}-day pooled window")
    observed = _decay_beta(rows, n, convention, winsor)
    take = np.arange(len(ids))[:, None]

    def one(b: int) -> float:
        rng = np.random.default_rng([config.seed, b])
        idx = block_indices(rng, len(ids), 2 * n, config.block_days, config.block_scheme)
        return _decay_beta(rows[take, idx], n, convention, winsor)

    null = _map_replications(one, config)
    p = resampling_p(int(np.sum(null <= observed)), config.replications)
    return BlockBootstrapResult(horizon, config.block_days, observed, null, p, observed - float(null.mean()), len(ids))


def block_size_table(sample: AnalysisSample, horizon: str, config: BootstrapConfig = BootstrapConfig(),
                     sizes=BLOCK_SIZES, convention: str = "compound") -> pd.DataFrame:
    rows = []
    for L in sizes:
        res = block_bootstrap_null(sample, horizon, replace(config, block_days=L), convention)
        rows.append({
            "horizon": horizon,
            "block_days": L,
            "observed_beta": res.observed_beta,
            "null_mean": float(res.null_betas.mean()),
            "null_p05": float(np.quantile(res.null_betas, 0.05)),
            "null_p95": float(np.quantile(res.null_betas, 0.95)),
            "excess_negativity": res.excess_negativity,
            "p_value": res.p_value,
            "replications": config.replications,
            "n": res.n,
        })
    return pd.DataFrame(rows)


# ------------------------------------------------------ wild-cluster bootstrap


def webb_weights(rng: np.random.Generator, n: int) -> np.ndarray:
    return WEBB_WEIGHTS[rng.integers(0, 6, size=n)]


@dataclass(frozen=True, eq=False)
class WildClusterResult:
    coef: str
    beta: float
    t_obs: float
    p_value: float
    t_star: np.ndarray
    clusters: int
    replications: int


def wild_cluster_core(y, X, key: int, clusters, fe_groups=None, config: BootstrapConfig = BootstrapConfig(),
                      coef_name: str = "") -> WildClusterResult:
    """Restricted wild-cluster bootstrap-t for coefficient ``key`` of X.

    The null model drops column ``key``; bootstrap outcomes are its fitted
    values plus its residuals scaled by one Webb weight per cluster. The
    re-estimated t-statistics are computed in closed form: for fixed data the
    bootstrap coefficient and every cluster score are linear in the weights.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    codes = None
    if fe_groups is None:
        Xd, yd = np.column_stack([X, np.ones(n)]), y
        df_model = p + 1
    else:
        codes, cells = _codes(fe_groups)
        Xd, yd = demean_within(X, codes), demean_within(y, codes)
        df_model = p + cells
    cl_codes, G = _codes(clusters)
    if G < 2:
        raise EstimationError("wild-cluster bootstrap needs at least 2 clusters")
    if G < 6:
        warnings.warn(f"only {G} clusters; wild-cluster p-values are coarse", RuntimeWarning, stacklevel=2)
    bread = np.linalg.inv(Xd.T @ Xd)
    beta = bread @ Xd.T @ yd
    resid = yd - Xd @ beta
    vcov, _ = cluster_vcov(Xd, resid, cl_codes, df_model, bread)
    t_obs = beta[key] / math.sqrt(vcov[key, key])

    Xr = np.delete(Xd, key, axis=1)
    u = yd - Xr @ np.linalg.lstsq(Xr, yd, rcond=None)[0]
    h = Xd @ bread[:, key]
    U = np.zeros((n, G))
    U[np.arange(n), cl_codes] = u
    if codes is not None:
        # bootstrap outcomes are re-absorbed by the FE, which matters when cells cut across clusters
        U = demean_within(U, codes)
    E = U - Xd @ (bread @ (Xd.T @ U))  # residual maker applied to each cluster's restricted residuals
    S = np.zeros((G, G))
    np.add.at(S, cl_codes, h[:, None] * E)
    a = np.bincount(cl_codes, weights=h * u, minlength=G)
    factor = G / (G - 1) * (n - 1) / (n - df_model)

    W = np.empty((G, config.replications))
    for b in range(config.replications):
        W[:, b] = webb_weights(np.random.default_rng([config.seed, b]), G)
    beta_star = a @ W
    se_star = np.sqrt(factor * np.sum((S @ W) ** 2, axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t_star = beta_star / se_star
    count = int(np.sum(np.abs(t_star) >= abs(t_obs)))
    return WildClusterResult(coef_name, float(beta[key]), float(t_obs),
                             resampling_p(count, config.replications), t_star, G, config.replications)


def wild_cluster_p(frame: pd.DataFrame, spec: DesignSpec, key_coef: str | None = None, cluster: str = "institution",
                   config: BootstrapConfig = BootstrapConfig()) -> WildClusterResult:
    """Wild-cluster bootstrap p-value for one coefficient of a named specification."""
    d = design_matrices(frame, replace(spec, cluster=cluster))
    key_coef = key_coef or spec.key_predictor
    if key_coef not in d.names:
        raise ValueError(f"{key_coef!r} is not a regressor of the specification")
    return wild_cluster_core(d.y, d.X, d.names.index(key_coef), d.clusters, d.fe_groups, config, key_coef)


# ------------------------------------------------------------ placebo timing


@dataclass(frozen=True, eq=False)
class PlaceboResult:
    per_strategy: pd.DataFrame  # strategy_id, signal_real, placebo_mean, lift, p_value, n_candidates
    skipped: pd.DataFrame  # strategy_id, reason
    mean_lift: float
    aggregate_t: float
    aggregate_p: float
    rejection_rate_10: float
    rejection_rate_05: float
    replications: int

    @property
    def per_strategy_p(self) -> np.ndarray:
        return self.per_strategy["p_value"].to_numpy()

    @property
    def lifts(self) -> np.ndarray:
        return self.per_strategy["lift"].to_numpy()

    def summary(self) -> dict:
        return {
            "n_tested": len(self.per_strategy),
            "n_skipped": len(self.skipped),
            "mean_lift": self.mean_lift,
            "aggregate_t": self.aggregate_t,
            "aggregate_p": self.aggregate_p,
            "rejection_rate_10": self.rejection_rate_10,
            "rejection_rate_05": self.rejection_rate_05,
            "replications": self.replications,
        }


def month_index(dates) -> np.ndarray:
    """Calendar-month ordinal of each date (months since 1970-01)."""
    return np.asarray(dates, dtype="datetime64[D]").astype("datetime64[M]").astype(np.int64)


def monthly_signals(returns: np.ndarray, dates: np.ndarray, lookback_months: int = 6,
                    convention: str = "compound") -> tuple[np.ndarray, np.ndarray]:
    """Per calendar month: trailing vol-adjusted return over the previous ``lookback_months`` full months.

    Returns ``(month_start_index, signal)``; the signal is NaN for the first
    ``lookback_months`` months and wherever volatility is zero.
    """
    months = month_index(dates)
    starts = np.flatnonzero(np.concatenate([[True], months[1:] != months[:-1]]))
    sig = np.full(len(starts), np.nan)
    for j in range(lookback_months, len(starts)):
        r = returns[starts[j - lookback_months]:starts[j]]
        if len(r) >= 2:
            sig[j] = vol_adjusted_rows(r[None, :], convention)[0]
    return starts, sig


def placebo_launch(sample: AnalysisSample, window_months: int = 36, replications: int = 999, seed: int = 0,
                   lookback_months: int = 6, min_candidates: int = 12, convention: str = "compound") -> PlaceboResult:
    """Rank each strategy's launch-month signal against randomly drawn pre-launch months.

    Placebo months are drawn with replacement from the ``window_months``
    months before the launch month; only the launch month itself is excluded.
    """
    rows, skipped = [], []
    for pos, sid in enumerate(sample.ids):
        s = sample.series(sid)
        starts, sig = monthly_signals(s.returns, s.dates, lookback_months, convention)
        k = s.launch_index(sample.meta(sid).live_date)
        m = int(np.searchsorted(starts, k, side="right") - 1)  # month holding the first live observation
        if m < window_months:
            skipped.append({"strategy_id": sid, "reason": f"fewer than {window_months} pre-launch months"})
            continue
        real = sig[m]
        window = sig[m - window_months:m]
        cand = window[np.isfinite(window)]
        if not np.isfinite(real):
            skipped.append({"strategy_id": sid, "reason": "launch-month signal undefined"})
            continue
        if len(cand) < min_candidates:
            skipped.append({"strategy_id": sid, "reason": f"fewer than {min_candidates} candidate placebo months"})
            continue
        rng = np.random.default_rng([seed, pos])
        draws = cand[rng.integers(0, len(cand), size=replications)]
        rows.append({
            "strategy_id": sid,
            "signal_real": real,
            "placebo_mean": float(draws.mean()),
            "lift": float(real - draws.mean()),
            "p_value": resampling_p(int(np.sum(draws >= real)), replications),
            "n_candidates": len(cand),
        })
    per = pd.DataFrame(rows, columns=["strategy_id", "signal_real", "placebo_mean", "lift", "p_value", "n_candidates"])
    skip = pd.DataFrame(skipped, columns=["strategy_id", "reason"])
    if len(per) < 2:
        raise InsufficientDataError(f"placebo test needs at least 2 testable strategies, got {len(per)}")
    test = stats.ttest_1samp(per["lift"].to_numpy(), 0.0)
    pv = per["p_value"].to_numpy()
    return PlaceboResult(per, skip, float(per["lift"].mean()), float(test.statistic), float(test.pvalue),
                         float(np.mean(pv < 0.10)), float(np.mean(pv < 0.05)), replications)
