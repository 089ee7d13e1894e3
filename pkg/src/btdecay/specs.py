"""Named regression specifications on the per-strategy outcome frame.

The frame is one row per strategy (index = strategy_id) as produced by
:func:`btdecay.analysis.build_frame`.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .econometrics import RegressionResult, ols_fe, winsorize
from .errors import DataError, EstimationError

KEY = "r_adj_pre"
CONTROLS = ("r_adj_early", "sigma_pre_12m", "age_years")

LEVEL_OUTCOMES = {
    "raw": "r_adj_live",
    "jensen": "jensen_live",
    "jensen_2f": "jensen2_live",
    "loo": "loo_rel_live",
    "loo_prebeta": "loo_pb_live",
    "bm": "bm_rel_live",
}
DECAY_OUTCOMES = {
    "raw": "decay",
    "bm": "bm_rel_decay",
    "loo": "loo_rel_decay",
    "loo_prebeta": "loo_pb_decay",
    "jensen": "jensen_decay",
}


@dataclass(frozen=True)
class DesignSpec:
    dependent: str
    key_predictor: str = KEY
    controls: tuple = CONTROLS
    extra: tuple = ()  # further continuous regressors (e.g. extremity)
    interactions: tuple = ()  # pairs of column names, product of winsorised components
    fe: str = "bucket_year"  # bucket_year | bucket | none
    cluster: str = "strategy"  # strategy | institution
    winsor: tuple = (0.01, 0.99)
    label: str = ""

    @property
    def regressors(self) -> list[str]:
        return [self.key_predictor, *self.extra, *self.controls]


@dataclass
class Design:
    y: np.ndarray
    X: np.ndarray
    names: list
    fe_groups: list | None
    clusters: np.ndarray
    ids: list = field(default_factory=list)


def interaction_name(a: str, b: str) -> str:
    return f"{a}_x_{b}"


def design_matrices(frame: pd.DataFrame, spec: DesignSpec) -> Design:
    """Estimation sample and winsorised regressors for ``spec``.

    Rows with any missing input are dropped; winsorisation is applied on the
    estimation sample, before fixed effects are absorbed.
    """
    cols = [spec.dependent, *spec.regressors]
    missing = [c for c in cols if c not in frame.columns]
    if missing:
        raise DataError(f"frame lacks columns required by the specification: {missing}")
    df = frame.dropna(subset=cols)
    if len(df) < 3:
        raise EstimationError(f"only {len(df)} complete observations for {spec.dependent}")
    lo, hi = spec.winsor
    X = {c: winsorize(df[c].to_numpy(float), lo, hi) for c in spec.regressors}
    inter = []
    for a, b in spec.interactions:
        X[interaction_name(a, b)] = X[a] * X[b]
        inter.append(interaction_name(a, b))
    names = [spec.key_predictor, *spec.extra, *inter, *spec.controls]
    Xm = np.column_stack([X[n] for n in names])
    if spec.fe == "bucket_year":
        fe = [f"{b}|{y}" for b, y in zip(df["bucket"], df["launch_year"])]
    elif spec.fe == "bucket":
        fe = list(df["bucket"])
    elif spec.fe == "none":
        fe = None
    else:
        raise ValueError(f"unknown fixed-effects option {spec.fe!r}")
    if spec.cluster == "strategy":
        clusters = np.asarray(df.index, dtype=object)
    elif spec.cluster == "institution":
        clusters = df["institution"].to_numpy(dtype=object)
    else:
        raise ValueError(f"unknown cluster option {spec.cluster!r}")
    return Design(df[spec.dependent].to_numpy(float), Xm, names, fe, clusters, list(df.index))


def run_spec(frame: pd.DataFrame, spec: DesignSpec) -> RegressionResult:
    d = design_matrices(frame, spec)
    with warnings.catch_warnings():
        # strategy-level clustering is one observation per cluster by construction
        warnings.simplefilter("ignore", RuntimeWarning)
        return ols_fe(d.y, d.X, d.fe_groups, d.clusters, d.names, obs_ids=d.ids, label=spec.label or spec.dependent)


def levels_spec(frame: pd.DataFrame, benchmark_kind: str = "raw", **overrides) -> RegressionResult:
    """Live outcome on the horizon-matched pro-forma vol-adjusted return plus controls."""
    try:
        dep = LEVEL_OUTCOMES[benchmark_kind]
    except KeyError:
        raise ValueError(f"unknown levels benchmark kind {benchmark_kind!r}") from None
    return run_spec(frame, replace(DesignSpec(dep, label=f"levels:{benchmark_kind}"), **overrides))


def decay_spec(frame: pd.DataFrame, benchmark_kind: str = "raw", **overrides) -> RegressionResult:
    """Decay outcome (live minus pre of the same measure) on the same right-hand side."""
    try:
        dep = DECAY_OUTCOMES[benchmark_kind]
    except KeyError:
        raise ValueError(f"unknown decay benchmark kind {benchmark_kind!r}") from None
    return run_spec(frame, replace(DesignSpec(dep, label=f"decay:{benchmark_kind}"), **overrides))
