"""Window performance and risk metrics.

All quantities are computed strictly in-window from daily excess returns.
Annualisation uses 252 trading days; the return leg is compounded by default
with an arithmetic-mean alternative (``convention="arithmetic"``).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .errors import InsufficientDataError, UndefinedMetricError

TRADING_DAYS = 252
VOL_TARGET = 0.10
CONVENTIONS = ("compound", "arithmetic")

RISK_METRICS = ("ann_vol", "mdd", "downside_dev", "cvar95", "sortino")


def _returns(x) -> np.ndarray:
    return np.asarray(getattr(x, "returns", x), dtype=float)


def annualize(series, convention: str = "compound") -> tuple[float, float]:
    """Annualised return and volatility (sample stdev, ``T-1`` denominator)."""
    r = _returns(series)
    if len(r) < 2:
        raise InsufficientDataError("annualize needs at least 2 observations")
    return annualized_return(r, convention), float(np.std(r, ddof=1) * math.sqrt(TRADING_DAYS))


def annualized_return(r, convention: str = "compound") -> float:
    r = _returns(r)
    if convention == "compound":
        growth = float(np.prod(1.0 + r))
        if growth <= 0:
            return -1.0
        # log form keeps long windows from overflowing
        return math.expm1(math.log(growth) * TRADING_DAYS / len(r))
    if convention == "arithmetic":
        return float(np.mean(r) * TRADING_DAYS)
    raise ValueError(f"unknown annualization convention {convention!r}")


def vol_adjust(ann_return: float, ann_vol: float, target: float = VOL_TARGET) -> float:
    """Rescale an annualised return to the common volatility target."""
    if not ann_vol > 0:
        raise UndefinedMetricError("zero volatility: vol-adjusted return undefined")
    return ann_return * target / ann_vol


def vol_adjusted_rows(R: np.ndarray, convention: str = "compound", target: float = VOL_TARGET) -> np.ndarray:
    """Vol-adjusted return of each row of a 2-d return array (NaN where volatility is zero)."""
    R = np.asarray(R, dtype=float)
    n = R.shape[1]
    if convention == "compound":
        with np.errstate(invalid="ignore", divide="ignore"):
            logs = np.log1p(R).sum(axis=1)
        ann = np.where(np.isfinite(logs), np.expm1(logs * TRADING_DAYS / n), -1.0)
    elif convention == "arithmetic":
        ann = R.mean(axis=1) * TRADING_DAYS
    else:
        raise ValueError(f"unknown annualization convention {convention!r}")
    vol = R.std(axis=1, ddof=1) * math.sqrt(TRADING_DAYS)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(vol > 0, ann * target / vol, np.nan)


def max_drawdown(series) -> float:
    """Largest peak-to-trough NAV decline, NAV starting at 1 before the first return."""
    r = _returns(series)
    if len(r) < 1:
        raise InsufficientDataError("max_drawdown needs at least 1 observation")
    nav = np.concatenate([[1.0], np.cumprod(1.0 + r)])
    peak = np.maximum.accumulate(nav)
    return float(np.max((peak - nav) / peak))


def cvar95(series) -> float:
    """Mean of the ``ceil(0.05 T)`` worst daily returns as a loss magnitude, floored at 0."""
    r = _returns(series)
    n = len(r)
    if n < 20:
        raise InsufficientDataError(f"cvar95 needs at least 20 observations, got {n}")
    k = -(-n // 20)
    worst = np.sort(r)[:k]
    return max(0.0, float(-np.mean(worst)))


def downside_dev_and_sortino(series, convention: str = "compound") -> tuple[float, float]:
    """Annualised downside deviation and Sortino ratio.

    The Sortino ratio is NaN when there are no losing days.
    """
    r = _returns(series)
    if len(r) < 2:
        raise InsufficientDataError("downside deviation needs at least 2 observations")
    dd = float(np.sqrt(np.mean(np.minimum(r, 0.0) ** 2)) * math.sqrt(TRADING_DAYS))
    if dd == 0:
        return 0.0, math.nan
    return dd, annualized_return(r, convention) / dd


@dataclass(frozen=True)
class WindowMetrics:
    ann_return: float
    ann_vol: float
    vol_adj_return: float
    mdd: float
    cvar95: float
    downside_dev: float
    sortino: float

    def as_dict(self) -> dict:
        return asdict(self)


def window_metrics(series, convention: str = "compound", target: float = VOL_TARGET) -> WindowMetrics:
    r = _returns(series)
    ann_ret, ann_vol = annualize(r, convention)
    dd, sortino = downside_dev_and_sortino(r, convention)
    return WindowMetrics(
        ann_return=ann_ret,
        ann_vol=ann_vol,
        vol_adj_return=vol_adjust(ann_ret, ann_vol, target),
        mdd=max_drawdown(r),
        cvar95=cvar95(r) if len(r) >= 20 else math.nan,
        downside_dev=dd,
        sortino=sortino,
    )


@dataclass(frozen=True)
class RiskDeterioration:
    deltas: dict
    worse: dict  # metric -> bool, or None when the comparison is undefined


def risk_deterioration(pre: WindowMetrics, live: WindowMetrics) -> RiskDeterioration:
    """Live-minus-pre change per risk metric and whether live is worse."""
    deltas, worse = {}, {}
    for name in ("ann_vol", "mdd", "downside_dev", "cvar95"):
        a, b = abs(getattr(pre, name)), abs(getattr(live, name))
        deltas[name] = b - a
        worse[name] = None if (math.isnan(a) or math.isnan(b)) else bool(b > a)
    if math.isnan(pre.sortino) or math.isnan(live.sortino):
        deltas["sortino"], worse["sortino"] = math.nan, None
    else:
        deltas["sortino"] = live.sortino - pre.sortino
        worse["sortino"] = bool(live.sortino < pre.sortino)
    return RiskDeterioration(deltas, worse)


@dataclass(frozen=True)
class DecayRecord:
    strategy_id: str
    horizon: str
    pre: WindowMetrics
    live: WindowMetrics
    decay: float = field(init=False)
    risk: RiskDeterioration = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "decay", self.live.vol_adj_return - self.pre.vol_adj_return)
        object.__setattr__(self, "risk", risk_deterioration(self.pre, self.live))


def worse_fraction_binomial(flags) -> tuple[float, float]:
    """Fraction of ``True`` flags and the exact two-sided binomial p-value against 1/2."""
    flags = [bool(f) for f in flags if f is not None]
    n = len(flags)
    if n < 1:
        raise InsufficientDataError("binomial test needs at least one flag")
    k = sum(flags)
    return k / n, float(stats.binomtest(k, n, 0.5, alternative="two-sided").pvalue)
