"""Regime-extremity and launch-density channel variables, specifications and quintile bins."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .benchmarks import _bucket_totals, loo_window
from .data import AnalysisSample, StrategyMeta
from .errors import DataError, InsufficientDataError
from .metrics import TRADING_DAYS, annualized_return
from .specs import DesignSpec, run_spec

EXTREMITY_VARIANTS = ("full_bucket_mean", "loo_bucket_mean")


@dataclass(frozen=True)
class RegimeExtremity:
    strategy_id: str
    value: float
    bucket_mean_used: float
    variant: str
    zscore: float


def _bucket_series(sample: AnalysisSample, bucket: str, live_only: bool, exclude: str | None = None) -> np.ndarray:
    values, totals = _bucket_totals(sample, live_only)
    sums, counts = totals[bucket]
    if exclude is not None:
        own = values[:, sample.matrix.column(exclude)]
        present = ~np.isnan(own)
        sums = sums - np.where(present, own, 0.0)
        counts = counts - present
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return mean[~np.isnan(mean)]


def _rolling_annual(x: np.ndarray, convention: str) -> np.ndarray:
    w = TRADING_DAYS
    if len(x) < w:
        return np.array([])
    if convention == "arithmetic":
        c = np.concatenate([[0.0], np.cumsum(x)])
        return (c[w:] - c[:-w]) / w * TRADING_DAYS
    c = np.concatenate([[0.0], np.cumsum(np.log1p(x))])
    return np.expm1(c[w:] - c[:-w])


def bucket_regime_stats(sample: AnalysisSample, bucket: str, live_only: bool = False,
                        convention: str = "compound") -> tuple[float, float]:
    """Long-run annualised bucket mean and the stdev of its rolling one-year returns."""
    key = ("bucket_regime", bucket, live_only, convention)
    if key not in sample.cache:
        series = _bucket_series(sample, bucket, live_only)
        mu = annualized_return(series, convention)
        rolling = _rolling_annual(series, convention)
        sigma = float(np.std(rolling, ddof=1)) if len(rolling) > 1 else math.nan
        sample.cache[key] = (mu, sigma)
    return sample.cache[key]


def regime_extremity(sample: AnalysisSample, strategy_id: str, variant: str = "full_bucket_mean",
                     live_only: bool = False, convention: str = "compound") -> RegimeExtremity:
    """Annualised LOO peer return over the 12 pre-launch months minus the long-run bucket mean."""
    if variant not in EXTREMITY_VARIANTS:
        raise ValueError(f"variant must be one of {EXTREMITY_VARIANTS}")
    meta = sample.meta(strategy_id)
    try:
        pre = loo_window(sample, strategy_id, "12m", "pre", live_only)
    except InsufficientDataError as exc:
        raise InsufficientDataError(f"{strategy_id}: insufficient pre-launch peer data ({exc})") from None
    mu, sigma = bucket_regime_stats(sample, meta.bucket, live_only, convention)
    if variant == "loo_bucket_mean":
        mu = annualized_return(_bucket_series(sample, meta.bucket, live_only, exclude=strategy_id), convention)
    value = annualized_return(pre, convention) - mu
    z = value / sigma if sigma and sigma > 0 else math.nan
    return RegimeExtremity(strategy_id, value, mu, variant, z)


@dataclass(frozen=True)
class LaunchDensity:
    bucket: str
    year: int
    n_launches: int
    log_density: float


def launch_density(meta_list) -> dict[tuple[str, int], LaunchDensity]:
    """Launch counts per (bucket, launch year) and ``ln(1 + n)``."""
    counts = Counter((m.bucket, m.launch_year) for m in meta_list)
    return {
        key: LaunchDensity(key[0], key[1], n, math.log1p(n))
        for key, n in sorted(counts.items())
    }


def quintile_bins(frame: pd.DataFrame, value_col: str = "extremity", outcome_col: str = "decay",
                  n_bins: int = 5) -> pd.DataFrame:
    """Mean outcome with normal 95% CI per quantile bin of ``value_col``.

    Bins are formed by rank, ties broken by strategy id, so bin sizes differ
    by at most one.
    """
    df = frame[[value_col, outcome_col]].dropna()
    n = len(df)
    if n < n_bins:
        raise InsufficientDataError(f"quintile_bins needs at least {n_bins} strategies, got {n}")
    order = sorted(range(n), key=lambda i: (df[value_col].iloc[i], str(df.index[i])))
    bins = np.empty(n, dtype=int)
    bins[order] = np.arange(n) * n_bins // n
    rows = []
    for b in range(n_bins):
        vals = df[outcome_col].to_numpy()[bins == b]
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else math.nan
        rows.append({
            "bin": f"Q{b + 1}",
            "mean": mean,
            "ci_lo": mean - 1.96 * se,
            "ci_hi": mean + 1.96 * se,
            "n": len(vals),
            "value_lo": float(df[value_col].to_numpy()[bins == b].min()),
            "value_hi": float(df[value_col].to_numpy()[bins == b].max()),
        })
    return pd.DataFrame(rows)


def density_for(meta: StrategyMeta, table: dict) -> float:
    try:
        return table[(meta.bucket, meta.launch_year)].log_density
    except KeyError:
        raise DataError(f"{meta.strategy_id}: no launch-density cell for ({meta.bucket}, {meta.launch_year})") from None


def regime_specs(frame: pd.DataFrame, **overrides) -> dict:
    """Specifications (i) additive, (ii) with interaction, (iii) LOO-relative decay.

    All use bucket x launch-year FE and strategy-clustered SEs.
    """
    base = dict(extra=("extremity",), fe="bucket_year", **overrides)
    return {
        "i": run_spec(frame, DesignSpec("decay", label="regime:i", **base)),
        "ii": run_spec(frame, DesignSpec("decay", interactions=(("r_adj_pre", "extremity"),),
                                         label="regime:ii", **base)),
        "iii": run_spec(frame, DesignSpec("loo_rel_decay", label="regime:iii", **base)),
    }


def density_specs(frame: pd.DataFrame, **overrides) -> dict:
    """Specifications (A) additive, (B) with interaction, (C) LOO-relative decay; bucket FE only."""
    base = dict(extra=("log_density",), fe="bucket", **overrides)
    return {
        "A": run_spec(frame, DesignSpec("decay", label="density:A", **base)),
        "B": run_spec(frame, DesignSpec("decay", interactions=(("r_adj_pre", "log_density"),),
                                        label="density:B", **base)),
        "C": run_spec(frame, DesignSpec("loo_rel_decay", label="density:C", **base)),
    }
