"""Report tables built from outcome frames and estimation results.

Every builder returns a plain DataFrame; :func:`write_csv` fixes the float
format and line endings so repeated runs are byte-identical.
"""

from __future__ import annotations

import math

import numpy as np
import pandas as pd
from scipy import stats

from .data import AnalysisSample
from .econometrics import RegressionResult, wald_equality
from .errors import BtDecayError
from .metrics import TRADING_DAYS, VOL_TARGET, worse_fraction_binomial
from .resampling import month_index
from .specs import DECAY_OUTCOMES, KEY, LEVEL_OUTCOMES, decay_spec, levels_spec

FLOAT_FORMAT = "%.10g"

BENCHMARK_LABELS = {
    "raw": "None (raw)",
    "jensen": "Index Jensen alpha",
    "jensen_2f": "Index Jensen alpha (2-factor)",
    "loo": "LOO relative return",
    "loo_prebeta": "LOO pre-beta alpha",
    "bm": "Index relative return",
}


def write_csv(df: pd.DataFrame, path, index: bool = False) -> int:
    df.to_csv(path, index=index, float_format=FLOAT_FORMAT, lineterminator="\n")
    return len(df)


def stars(p: float) -> str:
    if not p == p:
        return ""
    return "***" if p < 0.01 else "**" if p < 0.05 else "*" if p < 0.10 else ""


def coef_row(res: RegressionResult, name: str = KEY) -> dict:
    c = res.coef(name)
    return {"beta": c["beta"], "se": c["se"], "t": c["t"], "p": c["p"], "stars": stars(c["p"]),
            "n": res.n, "r2": res.r_squared, "r2_within": res.r_squared_within,
            "fe_cells": res.fe_cell_count, "clusters": res.cluster_count}


# --------------------------------------------------------- descriptive tables


def sample_composition(sample: AnalysisSample) -> pd.DataFrame:
    """Counts and shares by institution and launch year."""
    meta = [m for m, _ in sample.members]
    n = len(meta)
    rows = []
    for dim, key in (("institution", lambda m: m.institution), ("launch_year", lambda m: str(m.launch_year))):
        counts = pd.Series([key(m) for m in meta]).value_counts().sort_index()
        rows += [{"dimension": dim, "group": g, "n": int(c), "share": c / n} for g, c in counts.items()]
    return pd.DataFrame(rows)


def pf_vs_live(frames: dict) -> pd.DataFrame:
    """Mean pro-forma, live and decay of vol-adjusted return, full sample and by asset class."""
    rows = []
    for h, f in frames.items():
        groups = [("All", f)] + [(ac, g) for ac, g in f.groupby("asset_class", sort=True)]
        for label, g in groups:
            d = g["decay"].to_numpy()
            t, p = (stats.ttest_1samp(d, 0.0) if len(d) > 1 else (math.nan, math.nan))
            rows.append({
                "horizon": h, "group": label, "n": len(g),
                "pre_mean": g["r_adj_pre"].mean(), "live_mean": g["r_adj_live"].mean(),
                "decay_mean": d.mean(), "t": float(t), "p": float(p), "stars": stars(float(p)),
            })
    return pd.DataFrame(rows)


def risk_table(frame: pd.DataFrame) -> pd.DataFrame:
    """Share of strategies with a worse live risk metric and the two-sided binomial p."""
    rows = []
    for metric in ("ann_vol", "mdd", "downside_dev", "cvar95", "sortino"):
        pre, live = frame[f"pre_{metric}"].to_numpy(), frame[f"live_{metric}"].to_numpy()
        ok = ~(np.isnan(pre) | np.isnan(live))
        worse = live[ok] < pre[ok] if metric == "sortino" else np.abs(live[ok]) > np.abs(pre[ok])
        frac, p = worse_fraction_binomial(worse.tolist())
        rows.append({"metric": metric, "n": int(ok.sum()), "pct_worse": frac, "p": p, "stars": stars(p)})
    return pd.DataFrame(rows)


def distribution_table(frames: dict) -> pd.DataFrame:
    """Distribution of benchmark-relative live returns (panel A) and decays (panel B), in pp p.a."""
    cols = {
        "A": {"raw": "r_adj_live", "bm": "bm_rel_live", "loo": "loo_rel_live"},
        "B": {"raw": "decay", "bm": "bm_rel_decay", "loo": "loo_rel_decay"},
    }
    rows = []
    for panel, spec in cols.items():
        for kind, col in spec.items():
            for h, f in frames.items():
                if col not in f.columns:
                    continue
                v = f[col].dropna().to_numpy() * 100
                if len(v) == 0:
                    continue
                rows.append({
                    "panel": panel, "benchmark": BENCHMARK_LABELS[kind], "horizon": h, "n": len(v),
                    "mean": v.mean(), "std": v.std(ddof=1) if len(v) > 1 else math.nan,
                    "p25": np.quantile(v, 0.25), "median": np.median(v), "p75": np.quantile(v, 0.75),
                    "pct_neg": float(np.mean(v < 0)),
                })
    return pd.DataFrame(rows)


def event_time_profile(sample: AnalysisSample, months_before: int = 24, months_after: int = 12) -> pd.DataFrame:
    """Equal-weighted event-time path around launch month 0.

    Each strategy's daily returns are scaled to the 10% volatility target
    using its full-history volatility, compounded to calendar months and
    indexed by month relative to the launch month.
    """
    span = np.arange(-months_before, months_after + 1)
    acc = np.zeros(len(span))
    cnt = np.zeros(len(span))
    for m, s in sample.members:
        vol = s.returns.std(ddof=1) * math.sqrt(TRADING_DAYS)
        if not vol > 0:
            continue
        r = s.returns * VOL_TARGET / vol
        month = month_index(s.dates)
        monthly = pd.Series(np.log1p(r)).groupby(month).sum()
        rel = monthly.index.to_numpy() - month[s.launch_index(m.live_date)]
        vals = np.expm1(monthly.to_numpy())
        keep = (rel >= -months_before) & (rel <= months_after)
        acc[rel[keep] + months_before] += vals[keep]
        cnt[rel[keep] + months_before] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = acc / cnt
    rolling = pd.Series(mean).rolling(6, min_periods=6).mean().to_numpy() * 12
    return pd.DataFrame({
        "event_month": span, "n": cnt.astype(int), "mean_return": mean,
        "cumulative": np.nancumsum(mean), "rolling_6m_annualized": rolling,
    })


# ------------------------------------------------------- regression tables


def benchmark_table(frames: dict, kinds, which: str = "levels", **overrides) -> pd.DataFrame:
    """Key-predictor coefficient for each benchmark kind, one row per (horizon, kind)."""
    fn, deps = (levels_spec, LEVEL_OUTCOMES) if which == "levels" else (decay_spec, DECAY_OUTCOMES)
    rows = []
    for h, f in frames.items():
        for kind in kinds:
            base = {"horizon": h, "benchmark": BENCHMARK_LABELS[kind], "dependent": deps[kind]}
            try:
                rows.append({**base, **coef_row(fn(f, kind, **overrides))})
            except BtDecayError as exc:
                rows.append({**base, "note": str(exc)})
    return pd.DataFrame(rows)


def channel_table(results_by_h: dict, regressors) -> pd.DataFrame:
    """Coefficient rows for channel specifications: one row per (spec, horizon, regressor)."""
    rows = []
    for h, results in results_by_h.items():
        for spec, res in results.items():
            for name in regressors:
                if name in res.params.index:
                    rows.append({"spec": spec, "horizon": h, "regressor": name, **coef_row(res, name)})
    return pd.DataFrame(rows)


def wald_table(frames: dict) -> pd.DataFrame:
    """Raw versus LOO-adjusted key coefficients on the matched sample, levels and decay."""
    rows = []
    for h, f in frames.items():
        for which, fn, a, b in (("levels", levels_spec, "r_adj_live", "loo_rel_live"),
                                ("decay", decay_spec, "decay", "loo_rel_decay")):
            matched = f.dropna(subset=[a, b])
            raw, adj = fn(matched, "raw"), fn(matched, "loo")
            z, p = wald_equality(raw, adj, KEY)
            rows.append({
                "horizon": h, "outcome": which, "beta_raw": raw.coef(KEY)["beta"], "se_raw": raw.coef(KEY)["se"],
                "beta_loo": adj.coef(KEY)["beta"], "se_loo": adj.coef(KEY)["se"], "n": raw.n,
                "z": z, "p": p, "construction": "independent-estimates (conservative)",
            })
    return pd.DataFrame(rows)


def classifier_wide(long: pd.DataFrame) -> pd.DataFrame:
    """Classifier report: one row per (group, outcome) with the five report metrics."""
    cols = ["group", "outcome", "base_rate", "auc", "top_decile_capture", "top_decile_rate", "lift"]
    return long[cols].sort_values(["group", "outcome"], kind="mergesort").reset_index(drop=True)
