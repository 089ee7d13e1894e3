"""Panel ingestion, inclusion rules and launch-relative windows.

Returns are held per strategy as a :class:`DailySeries` (sorted numpy arrays)
and, once validated, as a wide date x strategy matrix inside
:class:`AnalysisSample` for the cross-sectional work (peer benchmarks,
resampling).
"""

from __future__ import annotations

import datetime as dt
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from .errors import DataError, InsufficientDataError

ASSET_CLASSES = ("equities", "rates", "credit", "commodities", "fx", "multi_asset")
BUCKETS = ("Carry", "Hedging", "Momentum", "MultiPremia", "Factor", "Value", "Liquidity")
ROLES = ("ReturnSeeking", "CarryShortConvexity", "HedgingDefensive", "MultiPremiaDiversifying")

HORIZON_DAYS = {"6m": 126, "12m": 252}
HORIZONS = tuple(HORIZON_DAYS)

RETURNS_COLUMNS = ("strategy_id", "date", "excess_return")
META_COLUMNS = ("strategy_id", "institution", "asset_class", "bucket", "role", "live_date")


def _label_key(value: str) -> str:
    return re.sub(r"[\s_\-/]+", "", str(value).strip().casefold())


def normalize_label(value: str, choices: Sequence[str], field_name: str) -> str:
    """Map a free-text label onto its canonical member of ``choices``.

    Matching ignores case, surrounding whitespace and the separators
    ``- _ / space`` so that ``"Carry "``, ``"multi-asset"`` and
    ``"Carry/Short-Convexity"`` resolve. Unknown labels raise.
    """
    key = _label_key(value)
    for choice in choices:
        if _label_key(choice) == key:
            return choice
    raise DataError(f"unknown {field_name} label {value!r}; expected one of {list(choices)}")


@dataclass(frozen=True)
class StrategyMeta:
    strategy_id: str
    institution: str
    asset_class: str
    bucket: str
    role: str
    live_date: dt.date
    extra: tuple = ()  # optional numeric passthrough columns as (name, value) pairs

    @property
    def launch_year(self) -> int:
        return self.live_date.year

    @property
    def live_day(self) -> np.datetime64:
        return np.datetime64(self.live_date, "D")


@dataclass(frozen=True, eq=False)
class DailySeries:
    strategy_id: str
    dates: np.ndarray  # datetime64[D], strictly increasing
    returns: np.ndarray  # float64 daily excess returns

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        returns = np.asarray(self.returns, dtype=float)
        if dates.shape != returns.shape or dates.ndim != 1:
            raise DataError(f"{self.strategy_id}: dates and returns must be 1-d and equal length")
        if len(dates) > 1 and not np.all(dates[1:] > dates[:-1]):
            raise DataError(f"{self.strategy_id}: dates must be strictly increasing")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "returns", returns)

    def __len__(self) -> int:
        return len(self.returns)

    def launch_index(self, live_date) -> int:
        """Position of the first observation dated on or after ``live_date``."""
        return int(np.searchsorted(self.dates, np.datetime64(live_date, "D"), side="left"))

    def take(self, start: int, stop: int) -> "DailySeries":
        return DailySeries(self.strategy_id, self.dates[start:stop], self.returns[start:stop])


@dataclass(frozen=True)
class WindowSpec:
    horizon: str
    side: str

    def __post_init__(self):
        if self.horizon not in HORIZON_DAYS:
            raise ValueError(f"horizon must be one of {HORIZONS}, got {self.horizon!r}")
        if self.side not in ("pre", "live"):
            raise ValueError(f"side must be 'pre' or 'live', got {self.side!r}")

    @property
    def trading_days(self) -> int:
        return HORIZON_DAYS[self.horizon]


def window_bounds(series: DailySeries, live_date, spec: WindowSpec) -> tuple[int, int]:
    """Index bounds ``[start, stop)`` of a launch-relative window."""
    k = series.launch_index(live_date)
    n = spec.trading_days
    if spec.side == "pre":
        if k < n:
            raise InsufficientDataError(
                f"{series.strategy_id}: insufficient pre-launch observations ({k} < {n})"
            )
        return k - n, k
    if len(series) - k < n:
        raise InsufficientDataError(
            f"{series.strategy_id}: insufficient live observations ({len(series) - k} < {n})"
        )
    return k, k + n


def slice_window(series: DailySeries, live_date, spec: WindowSpec) -> DailySeries:
    """Last ``n`` observations before launch (pre) or first ``n`` from launch on (live)."""
    start, stop = window_bounds(series, live_date, spec)
    return series.take(start, stop)


@dataclass
class Exclusion:
    strategy_id: str
    reason: str


class AnalysisSample:
    """Validated panel: members in stable order plus per-horizon eligibility.

    Treat as immutable once built; the wide return matrix and the bucket
    membership map are computed lazily and cached.
    """

    def __init__(self, members, eligibility, exclusions=()):
        self.members: list[tuple[StrategyMeta, DailySeries]] = list(members)
        self.eligibility: dict[str, tuple[str, ...]] = dict(eligibility)
        self.exclusions: list[Exclusion] = list(exclusions)
        self._by_id = {m.strategy_id: i for i, (m, _) in enumerate(self.members)}
        self._matrix = None
        self.cache: dict = {}  # derived read-only artefacts (bucket totals, channel variables)

    def __len__(self) -> int:
        return len(self.members)

    @property
    def ids(self) -> list[str]:
        return [m.strategy_id for m, _ in self.members]

    def meta(self, strategy_id: str) -> StrategyMeta:
        return self.members[self._index(strategy_id)][0]

    def series(self, strategy_id: str) -> DailySeries:
        return self.members[self._index(strategy_id)][1]

    def _index(self, strategy_id: str) -> int:
        try:
            return self._by_id[strategy_id]
        except KeyError:
            raise DataError(f"strategy {strategy_id!r} is not in the analysis sample") from None

    def eligible(self, horizon: str) -> list[str]:
        return [sid for sid in self.ids if horizon in self.eligibility.get(sid, ())]

    def launch_year(self, strategy_id: str) -> int:
        return self.meta(strategy_id).launch_year

    def bucket_members(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for m, _ in self.members:
            out.setdefault(m.bucket, []).append(m.strategy_id)
        return out

    @property
    def matrix(self) -> "PanelMatrix":
        if self._matrix is None:
            self._matrix = PanelMatrix.from_members(self.members)
        return self._matrix


@dataclass
class PanelMatrix:
    """Dense date x strategy view of the sample (NaN where a strategy has no return)."""

    dates: np.ndarray  # union of all dates, datetime64[D]
    ids: list[str]
    values: np.ndarray  # shape (n_dates, n_strategies)
    rows: dict[str, np.ndarray] = field(repr=False)  # per strategy: row index of each own obs

    @classmethod
    def from_members(cls, members) -> "PanelMatrix":
        all_dates = np.unique(np.concatenate([s.dates for _, s in members])) if members else np.array([], "datetime64[D]")
        values = np.full((len(all_dates), len(members)), np.nan)
        rows = {}
        for j, (m, s) in enumerate(members):
            idx = np.searchsorted(all_dates, s.dates)
            values[idx, j] = s.returns
            rows[m.strategy_id] = idx
        return cls(all_dates, [m.strategy_id for m, _ in members], values, rows)

    def column(self, strategy_id: str) -> int:
        return self.ids.index(strategy_id)


def _in_window_vol_ok(r: np.ndarray) -> bool:
    return len(r) >= 2 and bool(np.std(r, ddof=1) > 0)


def validate_sample(
    series: Iterable[DailySeries],
    meta: Iterable[StrategyMeta],
    min_pre_days: int = 252,
    min_live_days: int = 126,
) -> AnalysisSample:
    """Apply the inclusion rules and record which horizons each member supports.

    Exclusions are collected on ``AnalysisSample.exclusions`` rather than raised.
    """
    by_id = {s.strategy_id: s for s in series}
    members, eligibility, exclusions = [], {}, []
    for m in meta:
        s = by_id.get(m.strategy_id)
        if s is None:
            exclusions.append(Exclusion(m.strategy_id, "no return series"))
            continue
        if len(s) < 2:
            exclusions.append(Exclusion(m.strategy_id, "fewer than 2 observations"))
            continue
        if not np.all(np.isfinite(s.returns)):
            exclusions.append(Exclusion(m.strategy_id, "non-finite returns"))
            continue
        k = s.launch_index(m.live_date)
        n_pre, n_live = k, len(s) - k
        if n_pre < min_pre_days:
            exclusions.append(Exclusion(m.strategy_id, f"insufficient pro-forma history ({n_pre} < {min_pre_days})"))
            continue
        if n_live < min_live_days:
            exclusions.append(Exclusion(m.strategy_id, f"insufficient live history ({n_live} < {min_live_days})"))
            continue
        horizons = []
        zero_vol = False
        for h, n in HORIZON_DAYS.items():
            if n_pre < n or n_live < n:
                continue
            if not (_in_window_vol_ok(s.returns[k - n:k]) and _in_window_vol_ok(s.returns[k:k + n])):
                zero_vol = True
                break
            horizons.append(h)
        if zero_vol:
            exclusions.append(Exclusion(m.strategy_id, "zero volatility"))
            continue
        if not horizons:
            exclusions.append(Exclusion(m.strategy_id, "no horizon with complete windows"))
            continue
        members.append((m, s))
        eligibility[m.strategy_id] = tuple(horizons)
    return AnalysisSample(members, eligibility, exclusions)


# --------------------------------------------------------------------- I/O


def _read_csv(path, required: Sequence[str]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    df.columns = [c.strip() for c in df.columns]
    missing = [c for c in required if c not in df.columns]
    if missing:
        raise DataError(f"{path.name}: missing columns {missing}")
    return df


def _parse_dates(values: pd.Series, what: str) -> pd.Series:
    try:
        return pd.to_datetime(values.str.strip(), format="ISO8601", errors="raise")
    except (ValueError, TypeError) as exc:
        raise DataError(f"malformed date in {what}: {exc}") from None


def _parse_numbers(values: pd.Series, what: str) -> np.ndarray:
    text = values.str.strip().to_numpy(dtype=str)
    try:
        # exact decimal parsing; pd.to_numeric can be off by an ulp
        return text.astype(float)
    except ValueError:
        for v in text:
            try:
                float(v)
            except ValueError:
                raise DataError(f"malformed number in {what}: {v!r}") from None
        raise


def load_meta(meta_path) -> list[StrategyMeta]:
    df = _read_csv(meta_path, META_COLUMNS)
    live = _parse_dates(df["live_date"], "meta live_date")
    if df["strategy_id"].duplicated().any():
        dup = df.loc[df["strategy_id"].duplicated(), "strategy_id"].iloc[0]
        raise DataError(f"duplicate strategy_id in meta: {dup!r}")
    extra_cols = [c for c in df.columns if c not in META_COLUMNS]
    out = []
    for i, row in df.iterrows():
        # blank optional cells mean "not supplied" for that strategy
        extra = tuple((c, float(_parse_numbers(pd.Series([row[c]]), f"meta column {c}")[0]))
                      for c in extra_cols if row[c].strip())
        out.append(
            StrategyMeta(
                strategy_id=row["strategy_id"].strip(),
                institution=row["institution"].strip(),
                asset_class=normalize_label(row["asset_class"], ASSET_CLASSES, "asset_class"),
                bucket=normalize_label(row["bucket"], BUCKETS, "bucket"),
                role=normalize_label(row["role"], ROLES, "role"),
                live_date=live.iloc[i].date(),
                extra=extra,
            )
        )
    return out


def load_returns(returns_path) -> list[DailySeries]:
    df = _read_csv(returns_path, RETURNS_COLUMNS)
    df["strategy_id"] = df["strategy_id"].str.strip()
    dates = _parse_dates(df["date"], "returns date").dt.normalize()
    r = _parse_numbers(df["excess_return"], "excess_return")
    if "risk_free" in df.columns:
        r = r - _parse_numbers(df["risk_free"], "risk_free")
    long = pd.DataFrame({"sid": df["strategy_id"], "date": dates, "r": r})
    dup = long.duplicated(["sid", "date"])
    if dup.any():
        first = long.loc[dup].iloc[0]
        raise DataError(f"duplicate (strategy_id, date) row: ({first.sid!r}, {first.date.date()})")
    long = long.sort_values(["sid", "date"], kind="mergesort")
    out = []
    for sid, grp in long.groupby("sid", sort=True):
        out.append(DailySeries(sid, grp["date"].to_numpy().astype("datetime64[D]"), grp["r"].to_numpy()))
    return out


def load_panel(returns_path, meta_path) -> tuple[list[DailySeries], list[StrategyMeta]]:
    """Read the long-format returns file and the one-row-per-strategy meta file.

    Every meta row must match a series and vice versa; the result keeps the
    meta file's row order.
    """
    series = load_returns(returns_path)
    meta = load_meta(meta_path)
    s_ids = {s.strategy_id for s in series}
    m_ids = {m.strategy_id for m in meta}
    orphans = sorted(s_ids - m_ids)
    if orphans:
        raise DataError(f"strategies in returns file without meta rows: {orphans}")
    missing = sorted(m_ids - s_ids)
    if missing:
        raise DataError(f"meta rows without return series: {missing}")
    by_id = {s.strategy_id: s for s in series}
    return [by_id[m.strategy_id] for m in meta], meta


def load_index_returns(path) -> pd.DataFrame:
    """External total-return indices, wide: DatetimeIndex x index_id."""
    df = _read_csv(path, ("index_id", "date", "return"))
    long = pd.DataFrame(
        {
            "index_id": df["index_id"].str.strip(),
            "date": _parse_dates(df["date"], "benchmark date").dt.normalize(),
            "r": _parse_numbers(df["return"], "benchmark return"),
        }
    )
    if long.duplicated(["index_id", "date"]).any():
        raise DataError("duplicate (index_id, date) rows in benchmark file")
    return long.pivot(index="date", columns="index_id", values="r").sort_index()


def load_convexity(path) -> pd.Series:
    """Convexity factor: daily change in log(vix_3m / vix_1m), first date dropped."""
    df = _read_csv(path, ("date", "vix_3m", "vix_1m"))
    dates = _parse_dates(df["date"], "convexity date").dt.normalize()
    v3 = _parse_numbers(df["vix_3m"], "vix_3m")
    v1 = _parse_numbers(df["vix_1m"], "vix_1m")
    if np.any(v3 <= 0) or np.any(v1 <= 0):
        raise DataError("VIX levels must be positive")
    s = pd.Series(np.log(v3 / v1), index=pd.DatetimeIndex(dates)).sort_index()
    if s.index.duplicated().any():
        raise DataError("duplicate dates in convexity file")
    return s.diff().iloc[1:].rename("f_cvx")


def write_panel(series: Sequence[DailySeries], meta: Sequence[StrategyMeta], returns_path, meta_path) -> None:
    """Write the ingestion formats; ``%.17g`` keeps the round trip lossless."""
    frames = [
        pd.DataFrame({"strategy_id": s.strategy_id, "date": s.dates.astype(str), "excess_return": s.returns})
        for s in series
    ]
    pd.concat(frames, ignore_index=True).to_csv(returns_path, index=False, float_format="%.17g", lineterminator="\n")
    rows = []
    for m in meta:
        row = {
            "strategy_id": m.strategy_id,
            "institution": m.institution,
            "asset_class": m.asset_class,
            "bucket": m.bucket,
            "role": m.role,
            "live_date": m.live_date.isoformat(),
        }
        row.update(dict(m.extra))
        rows.append(row)
    pd.DataFrame(rows).to_csv(meta_path, index=False, float_format="%.17g", lineterminator="\n")
