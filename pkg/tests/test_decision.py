import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from btdecay.decision import (
    OUTCOMES, HaircutParams, auc, auc_roc, fit_classifier, haircut, label_failures, time_split,
    time_split_validate, top_decile,
)
from btdecay.errors import DataError


def pairwise_auc(s, y):
    pos, neg = s[y], s[~y]
    return float(np.mean([(p > q) + 0.5 * (p == q) for p in pos for q in neg]))


def test_haircut_worked_example():
    h = haircut(12, 1.5)
    assert abs(h - (0.137 * 12 - 5.0 * 1.5)) < 1e-12
    assert round(h, 2) == -5.86


@given(st.floats(-100, 100), st.floats(-100, 100), st.floats(-5, 5))
@settings(max_examples=200, deadline=None)
def test_haircut_linear_in_pf(a, b, z):
    p = HaircutParams(0.3, 0.137, 5.0)
    assert haircut(a + b, z, p) - haircut(a, z, p) == pytest.approx(0.137 * b, abs=1e-9)


def test_haircut_rejects_nonfinite():
    with pytest.raises(ValueError):
        haircut(math.nan, 1.0)
    with pytest.raises(ValueError):
        HaircutParams(gamma=math.inf)


@given(st.integers(0, 10_000), st.integers(2, 60), st.booleans())
@settings(max_examples=200, deadline=None)
def test_auc_implementations_agree(seed, n, discrete):
    rng = np.random.default_rng(seed)
    s = rng.integers(0, 4, n).astype(float) if discrete else rng.normal(size=n)
    y = rng.random(n) < 0.4
    if y.all() or not y.any():
        assert math.isnan(auc(s, y)) and math.isnan(auc_roc(s, y))
        return
    a = auc(s, y)
    assert abs(a - auc_roc(s, y)) < 1e-10
    assert abs(a - pairwise_auc(s, y)) < 1e-10


@given(st.integers(0, 10_000))
@settings(max_examples=100, deadline=None)
def test_metrics_invariant_to_monotone_transform(seed):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=50)
    y = rng.random(50) < 0.3
    ids = [f"S{i:02d}" for i in range(50)]
    t = np.exp(3 * s) + 7
    assert auc(s, y) == auc(t, y) or math.isnan(auc(s, y))
    a, b = top_decile(s, y, ids), top_decile(t, y, ids)
    for k in ("capture", "rate", "lift"):
        assert (a[k] == b[k]) or (math.isnan(a[k]) and math.isnan(b[k]))


def test_top_decile_closed_form():
    y = np.array([1] * 10 + [0] * 27, dtype=bool)
    td = top_decile(y.astype(float), y)
    assert td["decile_size"] == 4  # ceil(3.7)
    assert td["capture"] == pytest.approx(0.4) and td["rate"] == 1.0
    assert td["lift"] == pytest.approx(1 / (10 / 37))
    # ties at the cut are resolved by id
    td = top_decile(np.zeros(10), np.arange(10) == 0, ids=[f"{i}" for i in range(10)])
    assert td["decile_size"] == 1 and td["rate"] == 1.0


def test_random_scores_null_auc():
    vals = []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        vals.append(auc(rng.normal(size=1000), np.arange(1000) % 2 == 0))
    assert all(abs(v - 0.5) < 0.05 for v in vals)


def test_logit_recovers_planted_coefficients():
    rng = np.random.default_rng(11)
    n, beta = 4000, np.array([-0.5, 1.0, -0.7])
    X = rng.normal(size=(n, 2))
    y = rng.random(n) < 1 / (1 + np.exp(-(beta[0] + X @ beta[1:])))
    m = fit_classifier(X, y)
    assert m.converged and m.flagged == ""
    est = np.r_[m.intercept, m.coef]
    se = np.r_[m.extra["intercept_se"], m.se]
    assert np.all(np.abs(est - beta) < 3 * se)


def test_lpm_binary_regressor_is_difference_in_means():
    x = np.array([0, 0, 0, 1, 1, 1, 1], dtype=float)
    y = np.array([0, 1, 0, 1, 1, 0, 1], dtype=float)
    m = fit_classifier(x, y, "identity")
    assert m.coef[0] == pytest.approx(y[x == 1].mean() - y[x == 0].mean())
    assert m.intercept == pytest.approx(y[x == 0].mean())


def test_degenerate_and_separated_fits():
    X = np.arange(20, dtype=float)[:, None]
    m = fit_classifier(X, np.zeros(20))
    assert m.flagged == "degenerate" and np.all(m.coef == 0)
    sep = fit_classifier(X, X[:, 0] > 9.5)
    assert sep.flagged in ("separation", "not converged")
    with pytest.raises(Exception):
        fit_classifier(np.ones((10, 1)), np.arange(10) % 2)


def _label_frame(n=80, seed=0):
    rng = np.random.default_rng(seed)
    return pd.DataFrame({
        "live_vol_adj_return": rng.normal(size=n),
        "decay": rng.normal(size=n),
        "live_mdd": rng.random(n) * 0.3,
        "live_cvar95": rng.random(n) * 0.03,
        "role": np.where(np.arange(n) % 2 == 0, "ReturnSeeking", "HedgingDefensive"),
        "launch_year": 2010 + np.arange(n) % 8,
    }, index=[f"S{i:03d}" for i in range(n)])


def test_median_year_goes_to_test():
    f = _label_frame()
    train = time_split(f)
    med = np.median(f["launch_year"])
    assert not train[f["launch_year"] == med].any()
    assert train[f["launch_year"] < med].all()


def test_labels_use_train_fold_only():
    f = _label_frame()
    train = time_split(f)
    base = label_failures(f, train)
    g = f.copy()
    g.loc[~train, ["decay", "live_mdd", "live_cvar95"]] *= 50  # perturb the test fold
    again = label_failures(g, train)
    assert base.thresholds == again.thresholds


def test_labels_strict_at_threshold():
    f = _label_frame()
    train = time_split(f)
    ls = label_failures(f, train)
    cut = ls.thresholds[("ReturnSeeking", "severe_drawdown")]
    sid = f.index[(f["role"] == "ReturnSeeking") & ~train][0]
    f.loc[sid, "live_mdd"] = cut
    assert not label_failures(f, train).labels.loc[sid, "severe_drawdown"]
    lab = ls.labels
    assert (lab["multiple_failures"] == (lab[["negative_return", "performance_decay", "severe_drawdown",
                                              "tail_loss"]].sum(axis=1) >= 2)).all()


def test_small_group_is_an_error():
    f = _label_frame(n=30)
    with pytest.raises(DataError, match="train-fold"):
        label_failures(f, time_split(f))


def test_time_split_report_shape(small_frame):
    f = small_frame.copy()
    f["role"] = "ReturnSeeking"  # one pooled group keeps enough train strategies on the small universe
    f["launch_year"] = np.where(np.arange(len(f)) % 2 == 0, 2014, 2016)
    out = time_split_validate(f)
    assert list(out["outcome"]) == list(OUTCOMES)
    for col in ("base_rate", "auc", "top_decile_capture", "top_decile_rate", "lift"):
        assert col in out.columns
