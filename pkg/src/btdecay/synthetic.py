"""Synthetic strategy universes with known bucket factors, skill and launch selection.

Every estimator in the package is checked against panels generated here, so the
generator keeps its ground truth (loadings, alphas, launch indices, planted
shifts) alongside the ingestion-format output.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .benchmarks import INDEX_IDS, assign_benchmark
from .data import ASSET_CLASSES, BUCKETS, DailySeries, StrategyMeta, write_panel
from .metrics import TRADING_DAYS
from .resampling import monthly_signals

# sample composition used as generator defaults
ASSET_CLASS_WEIGHTS = {"equities": 0.39, "rates": 0.14, "credit": 0.08, "commodities": 0.21, "fx": 0.11, "multi_asset": 0.07}
BUCKET_ROLE = {
    "Carry": "CarryShortConvexity",
    "Hedging": "HedgingDefensive",
    "Momentum": "ReturnSeeking",
    "MultiPremia": "MultiPremiaDiversifying",
    "Factor": "ReturnSeeking",
    "Value": "ReturnSeeking",
    "Liquidity": "CarryShortConvexity",
}
LAUNCH_RULES = ("selection", "peak")


@dataclass(frozen=True)
class UniverseConfig:
    n_buckets: int = 7
    strategies_per_bucket: int = 40
    days_total: int = 2016
    start_date: str = "2012-01-02"
    factor_persistence: float = 0.97
    factor_mean: float = 0.0002  # daily
    factor_vol: float = 0.002  # daily i.i.d. factor shock
    regime_vol: float = 0.0003  # stationary sd of the AR(1) regime component
    idio_vol: float = 0.006
    loading_mean: float = 1.0
    loading_spread: float = 0.3
    skill_mean: float = 0.0
    skill_spread: float = 0.0001  # daily alpha sd across strategies
    index_loading: float = 0.2
    selection_strength: float = 0.0
    planted_live_alpha_shift: float = 0.0  # annual decimal, applied from launch on
    catastrophe_fraction: float = 0.0
    catastrophe_shift: float = -0.20  # annual decimal, for the catastrophe subset
    launch_rule: str = "selection"
    min_pre_days: int = 504
    min_live_days: int = 504
    n_short_live: int = 0  # strategies truncated to fewer live days than the sample minimum
    short_live_days: int = 60
    n_institutions: int = 10
    seed: int = 42

    def validate(self) -> None:
        if not 1 <= self.n_buckets <= len(BUCKETS):
            raise ValueError(f"n_buckets must be in 1..{len(BUCKETS)}")
        if self.strategies_per_bucket < 2:
            raise ValueError("strategies_per_bucket must be at least 2 (peer benchmarks need n >= 2)")
        if not 0 <= self.factor_persistence < 1:
            raise ValueError("factor_persistence must lie in [0, 1)")
        if self.factor_vol <= 0 or self.regime_vol < 0 or self.idio_vol < 0:
            raise ValueError("factor_vol must be positive; regime_vol and idio_vol non-negative")
        if self.selection_strength < 0:
            raise ValueError("selection_strength must be >= 0")
        if self.launch_rule not in LAUNCH_RULES:
            raise ValueError(f"launch_rule must be one of {LAUNCH_RULES}")
        if self.min_pre_days < TRADING_DAYS or self.days_total - self.min_live_days <= self.min_pre_days:
            raise ValueError(
                f"infeasible launch window [{self.min_pre_days}, {self.days_total - self.min_live_days}]"
            )
        if self.n_short_live > self.n_strategies:
            raise ValueError("n_short_live exceeds the number of strategies")

    @property
    def n_strategies(self) -> int:
        return self.n_buckets * self.strategies_per_bucket


@dataclass(eq=False)
class Universe:
    config: UniverseConfig
    series: list
    meta: list
    index_returns: pd.DataFrame  # DatetimeIndex x index id
    vix: pd.DataFrame  # date, vix_3m, vix_1m
    factors: dict  # bucket -> daily factor returns
    truth: pd.DataFrame = field(repr=False)  # per strategy: loading, alpha, launch_index, planted shift

    def write(self, directory) -> dict:
        """Write returns.csv, meta.csv, benchmarks.csv and convexity.csv; returns the paths."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        paths = {k: d / f"{k}.csv" for k in ("returns", "meta", "benchmarks", "convexity")}
        write_panel(self.series, self.meta, paths["returns"], paths["meta"])
        long = self.index_returns.stack().rename("return").reset_index()
        long.columns = ["date", "index_id", "return"]
        long["date"] = long["date"].dt.strftime("%Y-%m-%d")
        long = long.sort_values(["index_id", "date"], kind="mergesort")[["index_id", "date", "return"]]
        long.to_csv(paths["benchmarks"], index=False, float_format="%.17g", lineterminator="\n")
        self.vix.to_csv(paths["convexity"], index=False, float_format="%.17g", lineterminator="\n")
        return paths


def _ar1(rng, n: int, rho: float, sd: float) -> np.ndarray:
    x = np.empty(n)
    x[0] = rng.normal(0.0, sd)
    shocks = rng.normal(0.0, sd * math.sqrt(1 - rho * rho), n)
    for t in range(1, n):
        x[t] = rho * x[t - 1] + shocks[t]
    return x


def _trailing_sum(x: np.ndarray, w: int) -> np.ndarray:
    """Sum of the ``w`` observations before each t (NaN for t < w)."""
    c = np.concatenate([[0.0], np.cumsum(x)])
    out = np.full(len(x), np.nan)
    out[w:] = c[w:-1] - c[: len(x) - w]
    return out


def selection_weights(factor: np.ndarray, lo: int, hi: int, strength: float) -> np.ndarray:
    """Launch probabilities over days ``lo..hi-1``, proportional to exp(s * z).

    ``z`` is the trailing twelve-month factor return standardized over the
    feasible days, so ``strength`` is in units of cross-time standard deviations.
    """
    trail = _trailing_sum(factor, TRADING_DAYS)[lo:hi]
    if strength == 0:
        return np.full(hi - lo, 1.0 / (hi - lo))
    sd = trail.std()
    z = (trail - trail.mean()) / sd if sd > 0 else np.zeros_like(trail)
    logits = strength * z
    w = np.exp(logits - logits.max())
    return w / w.sum()


def peak_launch(returns: np.ndarray, dates: np.ndarray, lo: int, hi: int, window_months: int = 36) -> int:
    """Launch at the month start in ``[lo, hi)`` whose trailing six-month signal most exceeds
    every signal of the preceding ``window_months`` months (peak picking)."""
    starts, sig = monthly_signals(returns, dates)
    best, best_k = -np.inf, None
    for j in range(window_months, len(starts)):
        if not lo <= starts[j] < hi or not np.isfinite(sig[j]):
            continue
        prior = sig[j - window_months:j]
        prior = prior[np.isfinite(prior)]
        margin = sig[j] - (prior.max() if len(prior) else -np.inf)
        if margin > best:
            best, best_k = margin, int(starts[j])
    if best_k is None:
        raise ValueError("no month start inside the feasible launch window")
    return best_k


def gen_universe(config: UniverseConfig = UniverseConfig()) -> Universe:
    """Draw a universe; identical configs give identical universes."""
    config.validate()
    c = config
    T = c.days_total
    dates = pd.bdate_range(c.start_date, periods=T)
    d64 = dates.to_numpy().astype("datetime64[D]")
    buckets = BUCKETS[: c.n_buckets]
    lo, hi = c.min_pre_days, T - c.min_live_days

    factors = {}
    for b_i, b in enumerate(buckets):
        rng = np.random.default_rng([c.seed, 0, b_i])
        regime = _ar1(rng, T, c.factor_persistence, c.regime_vol)
        factors[b] = c.factor_mean + regime + rng.normal(0.0, c.factor_vol, T)

    rng_idx = np.random.default_rng([c.seed, 1])
    index_ids = list(INDEX_IDS.values())
    idx = pd.DataFrame(rng_idx.normal(0.0002, 0.008, (T, len(index_ids))), index=dates, columns=index_ids)
    idx.index.name = "date"
    log_v1 = np.log(18.0) + _ar1(rng_idx, T, 0.98, 0.25)
    slope = 0.05 + _ar1(rng_idx, T, 0.95, 0.04)
    vix = pd.DataFrame({
        "date": dates.strftime("%Y-%m-%d"),
        "vix_3m": np.exp(log_v1 + slope),
        "vix_1m": np.exp(log_v1),
    })

    rng_meta = np.random.default_rng([c.seed, 2])
    n = c.n_strategies
    institutions = [f"INST_{chr(65 + k)}" for k in range(c.n_institutions)]
    acs = rng_meta.choice(ASSET_CLASSES, size=n, p=[ASSET_CLASS_WEIGHTS[a] for a in ASSET_CLASSES])
    insts = rng_meta.choice(institutions, size=n)
    short = set(rng_meta.choice(n, size=c.n_short_live, replace=False).tolist()) if c.n_short_live else set()
    catastrophe = set(rng_meta.choice(n, size=int(round(c.catastrophe_fraction * n)), replace=False).tolist())

    width = len(str(n))
    series, meta, truth = [], [], []
    for i in range(n):
        b = buckets[i // c.strategies_per_bucket]
        rng = np.random.default_rng([c.seed, 3, i])
        loading = c.loading_mean + c.loading_spread * rng.standard_normal()
        alpha = c.skill_mean + c.skill_spread * rng.standard_normal()
        ac = str(acs[i])
        sid = f"S{i:0{width}d}"
        m0 = StrategyMeta(sid, str(insts[i]), ac, b, BUCKET_ROLE[b], dt.date(2000, 1, 1))
        bm_id = assign_benchmark(m0).index_id
        r = loading * factors[b] + alpha + c.index_loading * idx[bm_id].to_numpy() + rng.normal(0.0, c.idio_vol, T)
        if c.launch_rule == "peak":
            k = peak_launch(r, d64, lo, hi)
        else:
            k = lo + int(rng.choice(hi - lo, p=selection_weights(factors[b], lo, hi, c.selection_strength)))
        shift = c.planted_live_alpha_shift + (c.catastrophe_shift if i in catastrophe else 0.0)
        r[k:] += shift / TRADING_DAYS
        stop = min(T, k + c.short_live_days) if i in short else T
        live_date = d64[k].astype(object)
        series.append(DailySeries(sid, d64[:stop], r[:stop]))
        meta.append(StrategyMeta(sid, m0.institution, ac, b, m0.role, live_date))
        truth.append({
            "strategy_id": sid, "bucket": b, "loading": loading, "alpha_daily": alpha,
            "launch_index": k, "live_shift": shift, "catastrophe": i in catastrophe, "short_live": i in short,
        })
    return Universe(c, series, meta, idx, vix, factors, pd.DataFrame(truth).set_index("strategy_id"))


def config_dict(config: UniverseConfig) -> dict:
    return asdict(config)
