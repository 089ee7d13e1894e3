"""Per-strategy outcome frame: the shared input of every regression and report."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import benchmarks as bm
from .channels import density_for, launch_density, regime_extremity
from .data import AnalysisSample, WindowSpec, window_bounds
from .errors import BtDecayError
from .metrics import TRADING_DAYS, annualize, vol_adjust, window_metrics

WINDOW_FIELDS = ("ann_return", "ann_vol", "vol_adj_return", "mdd", "cvar95", "downside_dev", "sortino")


@dataclass(frozen=True)
class FrameOptions:
    convention: str = "compound"
    live_only: bool = False
    extremity_variant: str = "full_bucket_mean"


def early_vol_adjusted(series, k: int, convention: str = "compound", min_obs: int = 21) -> float:
    """Vol-adjusted return over the pro-forma history excluding its final twelve months."""
    r = series.returns[: max(k - TRADING_DAYS, 0)]
    if len(r) < min_obs:
        return math.nan
    ann, vol = annualize(r, convention)
    return vol_adjust(ann, vol) if vol > 0 else math.nan


def _safe(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except BtDecayError:
        return None


def build_frame(sample: AnalysisSample, horizon: str, index_returns: pd.DataFrame | None = None,
                convexity: pd.Series | None = None, options: FrameOptions = FrameOptions()) -> pd.DataFrame:
    """One row per horizon-eligible strategy with every outcome, control and channel variable.

    Outcomes that cannot be computed for a strategy (missing index data,
    too little peer history) are left as NaN and drop out of the
    regressions that need them.
    """
    key = ("frame", horizon, options, id(index_returns), id(convexity))
    if key in sample.cache:
        return sample.cache[key]
    conv = options.convention
    density = launch_density([m for m, _ in sample.members])
    rows = []
    for sid in sample.eligible(horizon):
        meta, series = sample.meta(sid), sample.series(sid)
        k = series.launch_index(meta.live_date)
        p0, p1 = window_bounds(series, meta.live_date, WindowSpec(horizon, "pre"))
        l0, l1 = window_bounds(series, meta.live_date, WindowSpec(horizon, "live"))
        pre = window_metrics(series.returns[p0:p1], conv)
        live = window_metrics(series.returns[l0:l1], conv)
        row = {
            "strategy_id": sid,
            "institution": meta.institution,
            "asset_class": meta.asset_class,
            "bucket": meta.bucket,
            "role": meta.role,
            "launch_year": meta.launch_year,
            "r_adj_pre": pre.vol_adj_return,
            "r_adj_live": live.vol_adj_return,
            "decay": live.vol_adj_return - pre.vol_adj_return,
            "r_adj_early": early_vol_adjusted(series, k, conv),
            "sigma_pre_12m": float(np.std(series.returns[k - TRADING_DAYS:k], ddof=1) * math.sqrt(TRADING_DAYS))
            if k >= TRADING_DAYS else math.nan,
            "age_years": (meta.live_date - series.dates[0].astype(object)).days / 365.25,
            "log_density": density_for(meta, density),
        }
        for f in WINDOW_FIELDS:
            row[f"pre_{f}"] = getattr(pre, f)
            row[f"live_{f}"] = getattr(live, f)
        for name, value in meta.extra:
            row[f"extra_{name}"] = value

        out = _safe(bm.loo_outcome, sample, sid, horizon, options.live_only, conv)
        row.update(_outcome_cols("loo_rel", out))
        out = _safe(bm.prebeta_outcome, sample, sid, horizon, options.live_only, conv)
        row.update(_outcome_cols("loo_pb", out))
        if index_returns is not None:
            out = _safe(bm.bm_relative_decay, sample, sid, horizon, index_returns, conv)
            row.update(_outcome_cols("bm_rel", out))
            out = _safe(bm.jensen_outcome, sample, sid, horizon, index_returns)
            row.update(_outcome_cols("jensen", out))
            row["jensen_r2_live"] = out.betas.get("live_r2", math.nan) if out else math.nan
            if convexity is not None:
                out = _safe(bm.jensen_outcome, sample, sid, horizon, index_returns, convexity)
                row.update(_outcome_cols("jensen2", out))
        ext = _safe(regime_extremity, sample, sid, options.extremity_variant, options.live_only, conv)
        row["extremity"] = ext.value if ext else math.nan
        row["extremity_z"] = ext.zscore if ext else math.nan
        rows.append(row)
    frame = pd.DataFrame(rows).set_index("strategy_id") if rows else pd.DataFrame()
    sample.cache[key] = frame
    return frame


def _outcome_cols(prefix: str, out) -> dict:
    if out is None:
        return {f"{prefix}_pre": math.nan, f"{prefix}_live": math.nan, f"{prefix}_decay": math.nan}
    return {f"{prefix}_pre": out.pre_value, f"{prefix}_live": out.live_value, f"{prefix}_decay": out.decay}
