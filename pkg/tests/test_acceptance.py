"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Tolerances are the ones the criteria state. Verdicts are also collected and
repeated in the terminal summary under "acceptance criteria".
"""

import math
import time
import warnings
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from btdecay import benchmarks as bm
from btdecay.analysis import build_frame
from btdecay.channels import regime_specs
from btdecay.cli import main
from btdecay.data import DailySeries, StrategyMeta, load_convexity, validate_sample
from btdecay.decision import (
    OUTCOMES, auc, auc_roc, fit_classifier, haircut, time_split_validate,
)
from btdecay.econometrics import hc1_se, ols_dummy, ols_fe
from btdecay.metrics import cvar95, max_drawdown, worse_fraction_binomial
from btdecay.reporting import classifier_wide
from btdecay.resampling import (
    BLOCK_SIZES, WEBB_WEIGHTS, BootstrapConfig, block_bootstrap_null, block_size_table, placebo_launch,
    wild_cluster_core,
)
from btdecay.specs import DECAY_OUTCOMES, KEY, LEVEL_OUTCOMES, decay_spec, levels_spec
from btdecay.synthetic import UniverseConfig, gen_universe
from conftest import record
from test_metrics import binom_two_sided, cvar_sort, mdd_scan

NO_WINSOR = (0.0, 1.0)


# 1 -------------------------------------------------------------------------


def test_criterion_01_decay_levels_identity(tmp_path):
    t0 = time.perf_counter()
    u = gen_universe(UniverseConfig(n_buckets=6, strategies_per_bucket=50, seed=42))
    paths = u.write(tmp_path)
    sample = validate_sample(u.series, u.meta)
    frame = build_frame(sample, "12m", u.index_returns, load_convexity(paths["convexity"]))
    gaps = {}
    # raw: the library's own decay column is live minus the key predictor itself
    lv = levels_spec(frame, "raw", winsor=NO_WINSOR).coef(KEY)["beta"]
    dc = decay_spec(frame, "raw", winsor=NO_WINSOR).coef(KEY)["beta"]
    gaps["raw"] = abs(dc - (lv - 1))
    # other kinds: the outcome minus the pro-forma vol-adjusted return on the same right-hand side
    for kind in [k for k in LEVEL_OUTCOMES if k != "raw"]:
        f = frame.assign(differenced=frame[LEVEL_OUTCOMES[kind]] - frame[KEY])
        lv = levels_spec(f, kind, winsor=NO_WINSOR).coef(KEY)["beta"]
        dc = decay_spec(f, "raw", dependent="differenced", winsor=NO_WINSOR).coef(KEY)["beta"]
        gaps[kind] = abs(dc - (lv - 1))
    elapsed = time.perf_counter() - t0
    worst = max(gaps.values())
    ok = record(1, worst < 1e-10 and elapsed < 10 and len(frame) == 300,
                f"max |b_decay - (b_levels - 1)| = {worst:.2e} over {len(gaps)} kinds, N = {len(frame)}, "
                f"{elapsed:.1f} s")
    assert ok


# 2 -------------------------------------------------------------------------


def test_criterion_02_loo_reconstruction():
    u = gen_universe(UniverseConfig(strategies_per_bucket=20, seed=2))
    sample = validate_sample(u.series, u.meta)
    rng = np.random.default_rng(2)
    mat = sample.matrix
    worst = 0.0
    for _ in range(1000):
        sid = sample.ids[int(rng.integers(len(sample)))]
        meta = sample.meta(sid)
        pos = int(rng.integers(len(sample.series(sid))))
        row = mat.rows[sid][pos]
        members = sample.bucket_members()[meta.bucket]
        n = int(np.sum(~np.isnan(mat.values[row, [mat.column(m) for m in members]])))
        loo = bm.loo_daily(sample, sid).aligned[pos]
        mean = bm.bucket_mean(sample, meta.bucket).iloc[row]
        r = sample.series(sid).returns[pos]
        worst = max(worst, abs((n - 1) * loo + r - n * mean))
    ok = record(2, worst < 1e-12, f"max |(n-1) LOO + r - n mean| = {worst:.2e} on 1000 cells")
    assert ok


# 3 -------------------------------------------------------------------------


def test_criterion_03_haircut(capsys):
    h = haircut(12, 1.5)
    main(["haircut", "--pf", "12", "--z", "1.5"])
    printed = capsys.readouterr().out.strip()
    # 0.137 * 12 - 5 * 1.5 = -5.856 exactly; the reported figure is at two decimals
    ok = record(3, round(h, 2) == -5.86 and abs(h + 5.856) < 1e-12 and printed == "-5.86",
                f"haircut(12, 1.5) = {h:.6f}, CLI prints {printed}")
    assert ok


# 4 -------------------------------------------------------------------------


def test_criterion_04_fe_oracle():
    rng = np.random.default_rng(4)
    worst_fe, worst_hc = 0.0, 0.0
    for _ in range(20):
        n = int(rng.integers(30, 201))
        cells = int(rng.integers(2, 13))
        p = int(rng.integers(1, 4))
        fe = rng.integers(0, cells, n)
        fe[:cells] = np.arange(cells)
        X = rng.normal(size=(n, p)) + 0.5 * fe[:, None]
        y = X @ rng.normal(size=p) + fe + rng.normal(size=n)
        cl = rng.integers(0, 9, n)
        a, b = ols_fe(y, X, fe, cl), ols_dummy(y, X, fe, cl)
        names = list(a.params.index)
        worst_fe = max(worst_fe, np.max(np.abs(a.params - b.params[names])), np.max(np.abs(a.bse - b.bse[names])))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            s = ols_fe(y, X, fe, np.arange(n))
        D = np.zeros((n, cells))
        D[np.arange(n), fe] = 1.0
        hc1 = hc1_se(np.column_stack([X, D]), s.residuals)[:p]
        worst_hc = max(worst_hc, np.max(np.abs(s.bse.to_numpy() - hc1)))
    ok = record(4, worst_fe < 1e-8 and worst_hc < 1e-10,
                f"demeaning vs dummies max gap {worst_fe:.2e}; singleton CR1 vs HC1 max gap {worst_hc:.2e}")
    assert ok


# 5 -------------------------------------------------------------------------


def _extremity_t(seed, strength):
    cfg = UniverseConfig(n_buckets=5, strategies_per_bucket=100, days_total=2016, factor_persistence=0.97,
                         selection_strength=strength, seed=seed)
    u = gen_universe(cfg)
    frame = build_frame(validate_sample(u.series, u.meta), "12m")
    c = regime_specs(frame)["iii"].coef("extremity")
    return c["beta"], c["t"]


@pytest.mark.slow
def test_criterion_05_planted_regime_effect():
    t0 = time.perf_counter()
    planted = [_extremity_t(seed, 1.5) for seed in range(20)]
    null = [_extremity_t(seed, 0.0) for seed in range(100, 120)]
    elapsed = time.perf_counter() - t0
    hits = sum(b > 0 and t > 2 for b, t in planted)
    quiet = sum(abs(t) < 2 for _, t in null)
    null_beta = float(np.mean([b for b, _ in null]))
    ok = record(5, hits >= 18 and quiet >= 18 and elapsed < 300,
                f"s=1.5: {hits}/20 positive with t>2; s=0: {quiet}/20 with |t|<2 "
                f"(mean null beta {null_beta:.2f}); {elapsed:.0f} s")
    assert ok


# 6 -------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_06_placebo_calibration():
    base = dict(n_buckets=5, strategies_per_bucket=100, days_total=2520, min_pre_days=900, min_live_days=300,
                seed=42)
    uniform = gen_universe(UniverseConfig(**base))
    res = placebo_launch(validate_sample(uniform.series, uniform.meta), replications=999, seed=42)
    r10, r05 = res.rejection_rate_10, res.rejection_rate_05
    peak = gen_universe(UniverseConfig(**base, launch_rule="peak"))
    pk = placebo_launch(validate_sample(peak.series, peak.meta), replications=999, seed=42)
    ok = record(6, abs(r10 - 0.10) <= 0.03 and abs(r05 - 0.05) <= 0.03 and pk.rejection_rate_05 > 0.90,
                f"uniform launches: {r10:.1%} / {r05:.1%} rejected at 10% / 5% "
                f"({len(res.per_strategy)} tested); peak-picking: {pk.rejection_rate_05:.1%} at 5%")
    assert ok


# 7 -------------------------------------------------------------------------


def test_criterion_07_wild_cluster_size():
    exact = abs(WEBB_WEIGHTS.mean()) < 1e-15 and abs(np.mean(WEBB_WEIGHTS ** 2) - 1) < 1e-15
    rejections = 0
    for run in range(200):
        rng = np.random.default_rng([7, run])
        n, G = 200, 10
        cl = np.repeat(np.arange(G), n // G)
        fe = rng.integers(0, 5, n)
        x = rng.normal(size=n) + rng.normal(size=G)[cl]
        z = rng.normal(size=n)
        y = 0.0 * x + 0.5 * z + fe * 0.2 + rng.normal(size=G)[cl] + rng.normal(size=n)
        res = wild_cluster_core(y, np.column_stack([x, z]), 0, cl, fe, BootstrapConfig(replications=399, seed=run))
        rejections += res.p_value < 0.05
    rate = rejections / 200
    ok = record(7, exact and 0.02 <= rate <= 0.09,
                f"5% rejection under the null: {rate:.1%} over 200 runs (10 clusters); "
                f"Webb mean 0 / variance 1 exact: {exact}")
    assert ok


# 8 -------------------------------------------------------------------------


def _iid_sample(seed, n_strategies=100, days=800, launch=400):
    rng = np.random.default_rng([8, seed])
    dates = pd.bdate_range("2014-01-01", periods=days).to_numpy().astype("datetime64[D]")
    series, meta = [], []
    for i in range(n_strategies):
        sid = f"S{i:03d}"
        series.append(DailySeries(sid, dates, rng.normal(0.0003, 0.006, days)))
        meta.append(StrategyMeta(sid, f"I{i % 10}", "equities", ("Carry", "Value")[i % 2], "ReturnSeeking",
                                 dates[launch].astype(object)))
    return validate_sample(series, meta)


@pytest.mark.slow
def test_criterion_08_block_bootstrap():
    sample = _iid_sample(0)
    full = block_bootstrap_null(sample, "12m", BootstrapConfig(replications=199, block_days=504))
    pass_count = 0
    for run in range(50):
        res = block_bootstrap_null(_iid_sample(run + 1), "12m",
                                   BootstrapConfig(replications=199, block_days=21, seed=run))
        pass_count += res.p_value > 0.05
    table = block_size_table(sample, "12m", BootstrapConfig(replications=199))
    shape_ok = list(table["block_days"]) == list(BLOCK_SIZES) and table["p_value"].notna().all()
    ok = record(8, full.p_value >= 0.99 and pass_count >= 45 and shape_ok,
                f"full-window block p = {full.p_value:.3f}; i.i.d. null p > 0.05 in {pass_count}/50 runs; "
                f"block sizes run: {list(table['block_days'])}")
    assert ok


# 9 -------------------------------------------------------------------------


def test_criterion_09_risk_oracles():
    rng = np.random.default_rng(9)
    gap_mdd = gap_cvar = gap_binom = 0.0
    for _ in range(100):
        r = rng.standard_t(5, int(rng.integers(20, 300))) * 0.01
        gap_mdd = max(gap_mdd, abs(max_drawdown(r) - mdd_scan(r)))
        gap_cvar = max(gap_cvar, abs(cvar95(r) - cvar_sort(r.tolist())))
        flags = rng.random(int(rng.integers(1, 300))) < rng.random()
        _, p = worse_fraction_binomial(flags.tolist())
        gap_binom = max(gap_binom, abs(p - binom_two_sided(int(flags.sum()), len(flags))))
    ok = record(9, max(gap_mdd, gap_cvar, gap_binom) < 1e-12,
                f"max gaps: MDD {gap_mdd:.1e}, CVaR95 {gap_cvar:.1e}, binomial p {gap_binom:.1e} (100 series each)")
    assert ok


# 10 ------------------------------------------------------------------------


def _pairwise(s, y):
    pos, neg = s[y][:, None], s[~y][None, :]
    return float(np.mean((pos > neg) + 0.5 * (pos == neg)))


def test_criterion_10_classifier():
    rng = np.random.default_rng(10)
    gap = 0.0
    for _ in range(200):
        n = int(rng.integers(10, 300))
        s = np.round(rng.normal(size=n), int(rng.integers(0, 3)))  # rounding creates ties
        y = rng.random(n) < 0.3
        if y.any() and not y.all():
            gap = max(gap, abs(_pairwise(s, y) - auc_roc(s, y)), abs(auc(s, y) - auc_roc(s, y)))

    beta = np.array([-0.5, 1.0, -0.7])
    est = []
    for rep in range(100):
        r = np.random.default_rng([10, rep])
        X = r.normal(size=(2000, 2))
        y = r.random(2000) < 1 / (1 + np.exp(-(beta[0] + X @ beta[1:])))
        m = fit_classifier(X, y)
        est.append(np.r_[m.intercept, m.coef])
    est = np.array(est)
    mc_se = est.std(axis=0, ddof=1) / math.sqrt(len(est))
    recovered = bool(np.all(np.abs(est.mean(axis=0) - beta) < 3 * mc_se))

    u = gen_universe(UniverseConfig(seed=42))
    frame = build_frame(validate_sample(u.series, u.meta), "12m")
    table = classifier_wide(time_split_validate(frame))
    shaped = (list(table.columns[2:]) == ["base_rate", "auc", "top_decile_capture", "top_decile_rate", "lift"]
              and all(set(g["outcome"]) == set(OUTCOMES) for _, g in table.groupby("group")))
    ok = record(10, gap < 1e-10 and recovered and shaped,
                f"AUC pairwise vs ROC max gap {gap:.1e}; logit mean error / MC SE = "
                f"{np.round(np.abs(est.mean(axis=0) - beta) / mc_se, 2).tolist()}; "
                f"report {table['group'].nunique()} groups x {len(OUTCOMES)} outcomes")
    assert ok


# 11 ------------------------------------------------------------------------


def _tree(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.mark.slow
def test_criterion_11_determinism(tmp_path):
    data = tmp_path / "data"
    assert main(["synth", "--out", str(data), "--seed", "42"]) == 0
    args = ["--returns", str(data / "returns.csv"), "--meta", str(data / "meta.csv"),
            "--benchmarks", str(data / "benchmarks.csv"), "--convexity", str(data / "convexity.csv"),
            "--seed", "7", "--replications", "99"]
    assert main(["report-all", *args, "--out", str(tmp_path / "a")]) == 0
    assert main(["report-all", *args, "--out", str(tmp_path / "b"), "--threads", "1"]) == 0
    a, b = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    differing = sorted(k for k in a.keys() | b.keys() if a.get(k) != b.get(k))
    ok = record(11, not differing and len(a) > 20, f"{len(a)} artefacts, {len(differing)} differ {differing[:3]}")
    assert ok
