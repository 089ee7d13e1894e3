"""Peer (leave-one-out) and external-index benchmarks and relative outcomes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .data import AnalysisSample, DailySeries, StrategyMeta, WindowSpec, window_bounds
from .errors import DataError, EstimationError, InsufficientDataError
from .metrics import TRADING_DAYS, annualized_return

RELATIVE_KINDS = ("loo_simple", "loo_prebeta", "bm_simple", "jensen_1f", "jensen_2f")

INDEX_IDS = {
    "msci_acwi": "MSCI_ACWI",
    "us_treasury": "BBG_US_TREASURY",
    "us_high_yield": "BBG_US_HY",
    "us_ig_corp": "BBG_US_IG_CORP",
    "commodity_tr": "BBG_COMMODITY_TR",
    "usd_index": "JPM_USD_INDEX",
}


# ------------------------------------------------------------------ LOO peers


def _bucket_totals(sample: AnalysisSample, live_only: bool) -> dict:
    """Per bucket, the daily cross-sectional sum and count of available returns."""
    key = ("bucket_totals", live_only)
    if key in sample.cache:
        return sample.cache[key]
    mat = sample.matrix
    values = mat.values
    if live_only:
        values = values.copy()
        for j, sid in enumerate(mat.ids):
            values[mat.dates < sample.meta(sid).live_day, j] = np.nan
    totals = {}
    for bucket, ids in sample.bucket_members().items():
        cols = [mat.column(s) for s in ids]
        block = values[:, cols]
        present = ~np.isnan(block)
        totals[bucket] = (np.where(present, block, 0.0).sum(axis=1), present.sum(axis=1))
    sample.cache[key] = (values, totals)
    return sample.cache[key]


@dataclass(frozen=True, eq=False)
class LOOBenchmark:
    strategy_id: str
    live_only: bool
    aligned: np.ndarray  # LOO return on each of the strategy's own dates, NaN where undefined
    peer_counts: np.ndarray  # n_{b,t} including the strategy itself when present
    own_dates: np.ndarray = field(repr=False)

    @property
    def mask(self) -> np.ndarray:
        return ~np.isnan(self.aligned)

    @property
    def dates(self) -> np.ndarray:
        return self.own_dates[self.mask]

    @property
    def loo_returns(self) -> np.ndarray:
        return self.aligned[self.mask]

    @property
    def dropped_dates(self) -> np.ndarray:
        return self.own_dates[~self.mask]


def loo_daily(sample: AnalysisSample, strategy_id: str, live_only: bool = False) -> LOOBenchmark:
    """Equal-weighted daily mean of the other strategies in the same bucket.

    Defined on the strategy's own observation dates; dates without any peer
    return are left undefined (NaN) rather than filled. With ``live_only``
    a peer only counts from its own live date onwards.
    """
    key = ("loo", strategy_id, live_only)
    if key in sample.cache:
        return sample.cache[key]
    meta = sample.meta(strategy_id)
    series = sample.series(strategy_id)
    if len(sample.bucket_members()[meta.bucket]) < 2:
        raise DataError(f"{strategy_id}: bucket {meta.bucket} has no peers; LOO benchmark undefined")
    values, totals = _bucket_totals(sample, live_only)
    sums, counts = totals[meta.bucket]
    mat = sample.matrix
    rows = mat.rows[strategy_id]
    own = values[rows, mat.column(strategy_id)]
    own_present = ~np.isnan(own)
    n = counts[rows]
    peers = n - own_present
    peer_sum = sums[rows] - np.where(own_present, own, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        loo = np.where(peers >= 1, peer_sum / np.maximum(peers, 1), np.nan)
    out = LOOBenchmark(strategy_id, live_only, loo, n, series.dates)
    sample.cache[key] = out
    return out


def bucket_mean(sample: AnalysisSample, bucket: str, live_only: bool = False) -> pd.Series:
    """Daily equal-weighted bucket average (all members) on the panel date grid."""
    _, totals = _bucket_totals(sample, live_only)
    sums, counts = totals[bucket]
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return pd.Series(mean, index=pd.DatetimeIndex(sample.matrix.dates))


def _window(sample, strategy_id, horizon, side):
    series = sample.series(strategy_id)
    start, stop = window_bounds(series, sample.meta(strategy_id).live_date, WindowSpec(horizon, side))
    return series, start, stop


def loo_window(sample, strategy_id, horizon, side, live_only=False) -> np.ndarray:
    """LOO returns inside a launch-relative window (undefined dates dropped)."""
    _, start, stop = _window(sample, strategy_id, horizon, side)
    vals = loo_daily(sample, strategy_id, live_only).aligned[start:stop]
    vals = vals[~np.isnan(vals)]
    if len(vals) < 2:
        raise InsufficientDataError(f"{strategy_id}: LOO benchmark undefined over the {side} {horizon} window")
    return vals


def loo_relative(sample, strategy_id, horizon, side, live_only=False, convention="compound") -> float:
    """Strategy annualised return minus the annualised LOO mean over the same window."""
    series, start, stop = _window(sample, strategy_id, horizon, side)
    own = annualized_return(series.returns[start:stop], convention)
    return own - annualized_return(loo_window(sample, strategy_id, horizon, side, live_only), convention)


@dataclass(frozen=True)
class PrebetaResult:
    strategy_id: str
    horizon: str
    beta: float
    alpha: float  # annualised mean abnormal return over the live window
    alpha_pre: float  # same construction over the pre window
    n_estimation: int


def prebeta_alpha(sample, strategy_id, horizon, live_only=False, convention="compound", min_obs=252) -> PrebetaResult:
    """Loading on the LOO benchmark fitted on the whole pro-forma history, held fixed live."""
    series = sample.series(strategy_id)
    k = series.launch_index(sample.meta(strategy_id).live_date)
    loo = loo_daily(sample, strategy_id, live_only).aligned
    ok = ~np.isnan(loo[:k])
    x, y = loo[:k][ok], series.returns[:k][ok]
    if len(x) < min_obs:
        raise InsufficientDataError(f"{strategy_id}: {len(x)} joint pro-forma observations < {min_obs}")
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if not sxx > 1e-300 * len(x):
        raise EstimationError(f"{strategy_id}: LOO benchmark has no variance over the pro-forma window")
    beta = float(xc @ (y - y.mean()) / sxx)

    def _alpha(side):
        _, start, stop = _window(sample, strategy_id, horizon, side)
        b = loo[start:stop]
        keep = ~np.isnan(b)
        return annualized_return(series.returns[start:stop][keep] - beta * b[keep], convention)

    return PrebetaResult(strategy_id, horizon, beta, _alpha("live"), _alpha("pre"), len(x))


# ---------------------------------------------------------- external indices


@dataclass(frozen=True)
class BenchmarkAssignment:
    strategy_id: str
    index_id: str
    rule_trace: str


def assign_benchmark(meta: StrategyMeta) -> BenchmarkAssignment:
    """Deterministic asset-class (and, for credit, carry) mapping to a total-return index."""
    ac = meta.asset_class
    if ac in ("equities", "multi_asset"):
        return BenchmarkAssignment(meta.strategy_id, INDEX_IDS["msci_acwi"], f"{ac} -> MSCI ACWI")
    if ac == "rates":
        return BenchmarkAssignment(meta.strategy_id, INDEX_IDS["us_treasury"], "rates -> US Treasury")
    if ac == "credit":
        if meta.role == "CarryShortConvexity" or meta.bucket == "Carry":
            return BenchmarkAssignment(meta.strategy_id, INDEX_IDS["us_high_yield"], "credit & carry/short-convexity -> US High Yield")
        return BenchmarkAssignment(meta.strategy_id, INDEX_IDS["us_ig_corp"], "credit & other -> US IG Corp")
    if ac == "commodities":
        return BenchmarkAssignment(meta.strategy_id, INDEX_IDS["commodity_tr"], "commodities -> Commodity TR")
    if ac == "fx":
        return BenchmarkAssignment(meta.strategy_id, INDEX_IDS["usd_index"], "fx -> USD Index")
    raise DataError(f"{meta.strategy_id}: unknown asset class {ac!r}")


@dataclass(frozen=True, eq=False)
class JensenResult:
    alpha_daily: float
    alpha: float  # x252, arithmetic
    betas: dict
    r2: float
    residuals: np.ndarray
    n: int


def jensen(returns, benchmark, convexity=None, min_obs: int = 30) -> JensenResult:
    """OLS of strategy returns on an intercept, the benchmark and optionally the convexity factor.

    Inputs must already be date-aligned arrays of equal length.
    """
    y = np.asarray(returns, dtype=float)
    cols = {"bm": np.asarray(benchmark, dtype=float)}
    if convexity is not None:
        cols["cvx"] = np.asarray(convexity, dtype=float)
    n = len(y)
    if any(len(c) != n for c in cols.values()):
        raise DataError("jensen inputs must be aligned and of equal length")
    if n < min_obs:
        raise InsufficientDataError(f"jensen regression needs >= {min_obs} joint observations, got {n}")
    X = np.column_stack([np.ones(n), *cols.values()])
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise EstimationError("jensen regression design is rank deficient (constant benchmark?)")
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(resid @ resid) / sst if sst > 0 else 1.0
    return JensenResult(
        alpha_daily=float(coef[0]),
        alpha=float(coef[0] * TRADING_DAYS),
        betas=dict(zip(cols, map(float, coef[1:]))),
        r2=r2,
        residuals=resid,
        n=n,
    )


def _align_index(series: DailySeries, start: int, stop: int, index: pd.Series, what: str, strict: bool):
    dates = pd.DatetimeIndex(series.dates[start:stop])
    bm = index.reindex(dates)
    missing = bm.isna().to_numpy()
    if strict and missing.any():
        raise DataError(f"{series.strategy_id}: index {index.name} has gaps inside the {what} window")
    keep = ~missing
    return series.returns[start:stop][keep], bm.to_numpy()[keep], dates[keep]


def _index_series(index_returns: pd.DataFrame, meta: StrategyMeta) -> pd.Series:
    idx = assign_benchmark(meta).index_id
    if idx not in index_returns.columns:
        raise DataError(f"{meta.strategy_id}: benchmark index {idx} not present in the index file")
    return index_returns[idx].dropna()


@dataclass(frozen=True)
class RelativeOutcome:
    strategy_id: str
    horizon: str
    kind: str
    pre_value: float
    live_value: float
    decay: float
    betas: dict = field(default_factory=dict)


def loo_outcome(sample, strategy_id, horizon, live_only=False, convention="compound") -> RelativeOutcome:
    pre = loo_relative(sample, strategy_id, horizon, "pre", live_only, convention)
    live = loo_relative(sample, strategy_id, horizon, "live", live_only, convention)
    return RelativeOutcome(strategy_id, horizon, "loo_simple", pre, live, live - pre)


def prebeta_outcome(sample, strategy_id, horizon, live_only=False, convention="compound") -> RelativeOutcome:
    res = prebeta_alpha(sample, strategy_id, horizon, live_only, convention)
    return RelativeOutcome(strategy_id, horizon, "loo_prebeta", res.alpha_pre, res.alpha,
                           res.alpha - res.alpha_pre, {"loo": res.beta})


def bm_relative_decay(sample, strategy_id, horizon, index_returns: pd.DataFrame, convention="compound") -> RelativeOutcome:
    """Strategy minus assigned-index annualised return per window, live minus pre."""
    meta = sample.meta(strategy_id)
    series = sample.series(strategy_id)
    index = _index_series(index_returns, meta)
    vals = {}
    for side in ("pre", "live"):
        start, stop = window_bounds(series, meta.live_date, WindowSpec(horizon, side))
        r, b, _ = _align_index(series, start, stop, index, f"{side} {horizon}", strict=True)
        vals[side] = annualized_return(r, convention) - annualized_return(b, convention)
    return RelativeOutcome(strategy_id, horizon, "bm_simple", vals["pre"], vals["live"], vals["live"] - vals["pre"])


def jensen_outcome(sample, strategy_id, horizon, index_returns: pd.DataFrame, convexity: pd.Series | None = None) -> RelativeOutcome:
    """Jensen alpha (x252) over the pre and live windows; two-factor when ``convexity`` is given."""
    meta = sample.meta(strategy_id)
    series = sample.series(strategy_id)
    index = _index_series(index_returns, meta)
    out, betas = {}, {}
    for side in ("pre", "live"):
        start, stop = window_bounds(series, meta.live_date, WindowSpec(horizon, side))
        r, b, dates = _align_index(series, start, stop, index, f"{side} {horizon}", strict=False)
        if convexity is not None:
            f = convexity.reindex(dates).to_numpy()
            keep = ~np.isnan(f)
            res = jensen(r[keep], b[keep], f[keep])
        else:
            res = jensen(r, b)
        out[side] = res.alpha
        betas.update({f"{side}_{k}": v for k, v in res.betas.items()})
        betas[f"{side}_r2"] = res.r2
    kind = "jensen_2f" if convexity is not None else "jensen_1f"
    return RelativeOutcome(strategy_id, horizon, kind, out["pre"], out["live"], out["live"] - out["pre"], betas)
