"""Regime-conditional haircut and the out-of-sample failure classifier."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import special, stats

from .errors import DataError, EstimationError

FAILURE_FLAGS = ("negative_return", "performance_decay", "severe_drawdown", "tail_loss")
OUTCOMES = (*FAILURE_FLAGS, "multiple_failures")
FEATURES = ("r_adj_pre", "pre_ann_vol", "pre_mdd", "pre_cvar95", "pre_downside_dev", "age_years")
MIN_GROUP_TRAIN = 8


@dataclass(frozen=True)
class HaircutParams:
    lambda0: float = 0.0
    lambda1: float = 0.137
    gamma: float = 5.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.lambda0, self.lambda1, self.gamma)):
            raise ValueError("haircut parameters must be finite")


def haircut(pf_return_pp: float, regime_z: float, params: HaircutParams = HaircutParams()) -> float:
    """Expected live return (pp p.a.) from the pro-forma return (pp p.a.) and the regime z-score."""
    if not (math.isfinite(pf_return_pp) and math.isfinite(regime_z)):
        raise ValueError("haircut inputs must be finite")
    return params.lambda0 + params.lambda1 * pf_return_pp - params.gamma * regime_z


# ------------------------------------------------------------------ labels


@dataclass(eq=False)
class FailureLabelSet:
    labels: pd.DataFrame  # index strategy_id: group, fold, one bool column per outcome
    thresholds: dict  # (group, flag) -> cut value estimated on the train fold

    def flags(self, strategy_id: str) -> dict:
        return self.labels.loc[strategy_id, list(OUTCOMES)].to_dict()


def time_split(frame: pd.DataFrame) -> pd.Series:
    """True for the train fold: launch year strictly before the full-sample median launch year."""
    median = float(np.median(frame["launch_year"].to_numpy()))
    return frame["launch_year"] < median


def label_failures(frame: pd.DataFrame, train_mask, group_col: str = "role") -> FailureLabelSet:
    """Elemental failure flags with quartile cuts from the train fold of each objective group.

    Flags use strict inequalities, so a value exactly at its cut is not flagged.
    """
    need = ["live_vol_adj_return", "decay", "live_mdd", "live_cvar95", group_col]
    missing = [c for c in need if c not in frame.columns]
    if missing:
        raise DataError(f"frame lacks columns needed for failure labels: {missing}")
    train = pd.Series(np.asarray(train_mask, dtype=bool), index=frame.index)
    out = pd.DataFrame(index=frame.index)
    out["group"] = frame[group_col]
    out["fold"] = np.where(train, "train", "test")
    out["negative_return"] = frame["live_vol_adj_return"] < 0
    for flag in FAILURE_FLAGS[1:]:
        out[flag] = False
    thresholds = {}
    for g, idx in frame.groupby(group_col, sort=True).groups.items():
        tr = frame.loc[idx][train.loc[idx]]
        if len(tr) < MIN_GROUP_TRAIN:
            raise DataError(f"group {g!r} has {len(tr)} train-fold strategies; at least {MIN_GROUP_TRAIN} needed")
        cuts = {
            "performance_decay": float(np.quantile(tr["decay"], 0.25)),
            "severe_drawdown": float(np.quantile(tr["live_mdd"], 0.75)),
            "tail_loss": float(np.quantile(tr["live_cvar95"], 0.75)),
        }
        rows = frame.loc[idx]
        out.loc[idx, "performance_decay"] = rows["decay"] < cuts["performance_decay"]
        out.loc[idx, "severe_drawdown"] = rows["live_mdd"] > cuts["severe_drawdown"]
        out.loc[idx, "tail_loss"] = rows["live_cvar95"] > cuts["tail_loss"]
        thresholds.update({(g, k): v for k, v in cuts.items()})
    for flag in FAILURE_FLAGS:
        out[flag] = out[flag].astype(bool)
    out["multiple_failures"] = out[list(FAILURE_FLAGS)].sum(axis=1) >= 2
    return FailureLabelSet(out, thresholds)


# -------------------------------------------------------------- classifier


@dataclass(eq=False)
class ClassifierModel:
    link: str
    names: list
    intercept: float
    coef: np.ndarray
    se: np.ndarray
    converged: bool
    flagged: str = ""  # "", "separation", "degenerate", "not converged"
    iterations: int = 0
    n: int = 0
    extra: dict = field(default_factory=dict)

    def score(self, X) -> np.ndarray:
        eta = self.intercept + np.asarray(X, dtype=float) @ self.coef
        return special.expit(eta) if self.link == "logit" else eta


def fit_classifier(X, y, link: str = "logit", names=None, tol: float = 1e-8, max_iter: int = 100,
                   ridge: float = 1e-8) -> ClassifierModel:
    """Linear probability model (identity link) or logit fitted by IRLS.

    The logit stops when the score (gradient) norm falls below ``tol``; a
    tiny ridge on the weighted normal matrix keeps Newton steps defined under
    separation, which is reported through ``flagged`` rather than raised.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    names = list(names) if names is not None else [f"x{j}" for j in range(p)]
    const = np.nonzero(np.ptp(X, axis=0) == 0)[0] if n else []
    if len(const):
        raise EstimationError(f"feature {names[const[0]]!r} is constant")
    Z = np.column_stack([np.ones(n), X])
    if link == "identity":
        beta, *_ = np.linalg.lstsq(Z, y, rcond=None)
        resid = y - Z @ beta
        dof = max(n - Z.shape[1], 1)
        cov = np.linalg.pinv(Z.T @ Z) * float(resid @ resid) / dof
        se = np.sqrt(np.clip(np.diag(cov), 0, None))
        return ClassifierModel(link, names, float(beta[0]), beta[1:], se[1:], True, "", 0, n,
                               {"intercept_se": float(se[0])})
    if link != "logit":
        raise ValueError("link must be 'identity' or 'logit'")
    ybar = y.mean() if n else 0.0
    if ybar in (0.0, 1.0):
        b0 = float(special.logit(np.clip(ybar, 1e-12, 1 - 1e-12)))
        return ClassifierModel(link, names, b0, np.zeros(p), np.full(p, np.nan), True, "degenerate", 0, n)
    beta = np.zeros(p + 1)
    beta[0] = special.logit(ybar)
    converged, it = False, 0
    for it in range(1, max_iter + 1):
        mu = special.expit(Z @ beta)
        grad = Z.T @ (y - mu)
        if np.linalg.norm(grad) < tol:
            converged = True
            break
        w = mu * (1 - mu)
        H = (Z * w[:, None]).T @ Z + ridge * np.eye(p + 1)
        beta = beta + np.linalg.solve(H, grad)
    mu = special.expit(Z @ beta)
    w = mu * (1 - mu)
    H = (Z * w[:, None]).T @ Z + ridge * np.eye(p + 1)
    se = np.sqrt(np.clip(np.diag(np.linalg.pinv(H)), 0, None))
    flag = ""
    if np.max(np.abs(Z @ beta)) > 30:
        flag = "separation"
    elif not converged:
        flag = "not converged"
    return ClassifierModel(link, names, float(beta[0]), beta[1:], se[1:], converged, flag, it, n,
                           {"intercept_se": float(se[0])})


# ------------------------------------------------------------------ metrics


def auc(scores, labels) -> float:
    """Probability that a random failure outranks a random non-failure (ties count one half)."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=bool)
    n1, n0 = int(y.sum()), int((~y).sum())
    if n1 == 0 or n0 == 0:
        return math.nan
    ranks = stats.rankdata(s)
    return float((ranks[y].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))


def auc_roc(scores, labels) -> float:
    """Trapezoidal area under the empirical ROC curve (thresholds at each distinct score)."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=bool)
    n1, n0 = int(y.sum()), int((~y).sum())
    if n1 == 0 or n0 == 0:
        return math.nan
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.concatenate([s[1:] != s[:-1], [True]])  # close each group of tied scores
    tp = np.cumsum(y)[last] / n1
    fp = np.cumsum(~y)[last] / n0
    tpr = np.concatenate([[0.0], tp])
    fpr = np.concatenate([[0.0], fp])
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))


def top_decile(scores, labels, ids=None, fraction: float = 0.10) -> dict:
    """Capture, rate and lift among the ``ceil(fraction * n)`` highest scores (ties by id)."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=bool)
    n = len(s)
    ids = np.arange(n).astype(str) if ids is None else np.asarray([str(i) for i in ids])
    k = math.ceil(fraction * n)
    order = sorted(range(n), key=lambda i: (-s[i], ids[i]))[:k]
    hits = int(y[order].sum())
    failures = int(y.sum())
    base = failures / n if n else math.nan
    rate = hits / k if k else math.nan
    return {
        "decile_size": k,
        "capture": hits / failures if failures else math.nan,
        "rate": rate,
        "lift": rate / base if base else math.nan,
        "base_rate": base,
    }


# -------------------------------------------------------- time-split report


def design(frame: pd.DataFrame, features=FEATURES, train_levels: dict | None = None) -> tuple[np.ndarray, list, dict]:
    """Feature matrix plus bucket and launch-year dummies.

    Dummy levels come from ``train_levels`` (or the frame itself) with the
    first level as reference; unseen levels contribute zeros.
    """
    cols = [frame[f].to_numpy(float) for f in features]
    names = list(features)
    levels = train_levels or {
        "bucket": sorted(frame["bucket"].unique()),
        "launch_year": sorted(frame["launch_year"].unique()),
    }
    for var, lv in levels.items():
        for level in lv[1:]:
            cols.append((frame[var] == level).to_numpy(float))
            names.append(f"{var}={level}")
    X = np.column_stack(cols) if cols else np.empty((len(frame), 0))
    return X, names, levels


def time_split_validate(frame: pd.DataFrame, link: str = "logit", features=FEATURES, group_col: str = "role",
                        outcomes=OUTCOMES) -> pd.DataFrame:
    """Train on launches before the median year, score the rest, one row per (group, outcome)."""
    need = [*features, "bucket", "launch_year", group_col]
    df = frame.dropna(subset=[c for c in need if c in frame.columns]).sort_index()
    train = time_split(df)
    labels = label_failures(df, train, group_col).labels
    rows = []
    for g in sorted(df[group_col].unique()):
        in_g = (df[group_col] == g).to_numpy()
        tr, te = in_g & train.to_numpy(), in_g & ~train.to_numpy()
        if not tr.any() or not te.any():
            raise DataError(f"group {g!r} has an empty train or test fold")
        Xtr, names, levels = design(df[tr], features)
        keep = np.ptp(Xtr, axis=0) > 0
        keep[: len(features)] = True  # user features are never silently dropped
        Xte, _, _ = design(df[te], features, levels)
        for k in outcomes:
            ytr = labels.loc[df.index[tr], k].to_numpy()
            yte = labels.loc[df.index[te], k].to_numpy()
            model = fit_classifier(Xtr[:, keep], ytr, link, [n for n, kp in zip(names, keep) if kp])
            score = model.score(Xte[:, keep])
            td = top_decile(score, yte, df.index[te])
            rows.append({
                "group": g,
                "outcome": k,
                "n_train": int(tr.sum()),
                "n_test": int(te.sum()),
                "failures_test": int(yte.sum()),
                "base_rate": td["base_rate"],
                "auc": auc(score, yte),
                "top_decile_capture": td["capture"],
                "top_decile_rate": td["rate"],
                "lift": td["lift"],
                "model_flag": model.flagged,
            })
    return pd.DataFrame(rows)
