import numpy as np
import pytest

from btdecay import benchmarks as bm
from btdecay.data import load_convexity, load_index_returns, load_panel, validate_sample
from btdecay.synthetic import (
    ASSET_CLASS_WEIGHTS, BUCKET_ROLE, UniverseConfig, gen_universe, peak_launch, selection_weights,
)


def test_same_config_same_universe():
    cfg = UniverseConfig(strategies_per_bucket=4, days_total=1300, min_live_days=300, seed=3)
    a, b = gen_universe(cfg), gen_universe(cfg)
    for s, t in zip(a.series, b.series):
        np.testing.assert_array_equal(s.returns, t.returns)
    assert a.meta == b.meta
    c = gen_universe(UniverseConfig(strategies_per_bucket=4, days_total=1300, min_live_days=300, seed=4))
    assert not np.array_equal(a.series[0].returns, c.series[0].returns)


def test_structure(small_universe):
    u = small_universe
    assert len(u.series) == u.config.n_strategies == 84
    assert [m.strategy_id for m in u.meta][:2] == ["S00", "S01"]
    for m in u.meta:
        assert m.role == BUCKET_ROLE[m.bucket]
    lo, hi = u.config.min_pre_days, u.config.days_total - u.config.min_live_days
    assert u.truth["launch_index"].between(lo, hi - 1).all()
    assert sum(ASSET_CLASS_WEIGHTS.values()) == pytest.approx(1.0)


def test_write_and_reload(tmp_path, small_universe):
    paths = small_universe.write(tmp_path)
    series, meta = load_panel(paths["returns"], paths["meta"])
    assert meta == small_universe.meta
    for s, t in zip(series, small_universe.series):
        np.testing.assert_array_equal(s.returns, t.returns)
    idx = load_index_returns(paths["benchmarks"])
    ref = small_universe.index_returns
    np.testing.assert_array_equal(idx[ref.columns].to_numpy(), ref.to_numpy())
    assert len(load_convexity(paths["convexity"])) == small_universe.config.days_total - 1


def test_zero_idio_loo_closed_form():
    cfg = UniverseConfig(n_buckets=2, strategies_per_bucket=5, days_total=1300, min_live_days=300,
                         idio_vol=0.0, index_loading=0.0, skill_spread=0.0002, seed=5)
    u = gen_universe(cfg)
    sample = validate_sample(u.series, u.meta)
    for sid in sample.ids[:4]:
        tr = u.truth
        b = tr.loc[sid, "bucket"]
        peers = tr[(tr["bucket"] == b) & (tr.index != sid)]
        k = int(tr.loc[sid, "launch_index"])
        f = u.factors[b][k:k + 252]
        expected = 252 * ((tr.loc[sid, "loading"] - peers["loading"].mean()) * f.mean()
                          + tr.loc[sid, "alpha_daily"] - peers["alpha_daily"].mean())
        got = bm.loo_relative(sample, sid, "12m", "live", convention="arithmetic")
        assert got == pytest.approx(expected, abs=1e-12)


def test_short_live_truncation():
    u = gen_universe(UniverseConfig(strategies_per_bucket=4, days_total=1300, min_live_days=300,
                                    n_short_live=3, seed=6))
    sample = validate_sample(u.series, u.meta, min_live_days=126)
    assert len(sample.exclusions) == 3
    assert all("live" in e.reason for e in sample.exclusions)


def test_selection_weights():
    f = np.random.default_rng(0).normal(size=1000)
    flat = selection_weights(f, 300, 700, 0.0)
    np.testing.assert_allclose(flat, 1 / 400)
    w = selection_weights(f, 300, 700, 2.0)
    assert w.sum() == pytest.approx(1.0)
    trail = np.array([f[t - 252:t].sum() for t in range(300, 700)])
    assert np.argmax(w) == np.argmax(trail)


def test_peak_launch_picks_a_signal_peak():
    dates = np.arange(np.datetime64("2010-01-04"), np.datetime64("2018-01-01")).astype("datetime64[D]")
    rng = np.random.default_rng(1)
    r = rng.normal(0, 0.01, len(dates))
    k = peak_launch(r, dates, 900, len(dates) - 300)
    assert 900 <= k < len(dates) - 300
    assert dates[k].astype(object).day == 1 or dates[k - 1].astype("datetime64[M]") != dates[k].astype("datetime64[M]")


def test_invalid_config():
    with pytest.raises(ValueError):
        gen_universe(UniverseConfig(strategies_per_bucket=1))
    with pytest.raises(ValueError):
        gen_universe(UniverseConfig(days_total=900))
    with pytest.raises(ValueError):
        gen_universe(UniverseConfig(launch_rule="random"))


def test_planted_live_shift_moves_mean_decay():
    from btdecay.analysis import build_frame

    base = dict(strategies_per_bucket=10, seed=11)
    frames = []
    for shift in (0.0, -0.02):
        u = gen_universe(UniverseConfig(**base, planted_live_alpha_shift=shift))
        frames.append(build_frame(validate_sample(u.series, u.meta), "12m"))
    diff = (frames[1]["decay"] - frames[0]["decay"]).to_numpy()
    # same draws, so the gap is the shift in vol-adjusted units (about 10% annual vol here)
    assert -0.025 < diff.mean() < -0.015
    assert np.all(diff < 0)
