import datetime as dt

import numpy as np
import pandas as pd
import pytest

from btdecay.analysis import build_frame
from btdecay.data import DailySeries, StrategyMeta, validate_sample
from btdecay.synthetic import UniverseConfig, gen_universe


def make_sample(n_buckets=3, per_bucket=6, days=800, launch=500, seed=0, ragged=False):
    """Small hand-built panel on a business-day calendar with i.i.d. returns."""
    rng = np.random.default_rng(seed)
    dates = pd.bdate_range("2015-01-01", periods=days).to_numpy().astype("datetime64[D]")
    buckets = ["Carry", "Momentum", "Value", "Hedging", "Factor"][:n_buckets]
    series, meta = [], []
    for b, bucket in enumerate(buckets):
        for j in range(per_bucket):
            sid = f"{bucket[:3]}{j:02d}"
            start = int(rng.integers(0, 60)) if ragged else 0
            r = rng.normal(0.0003, 0.006, days - start)
            series.append(DailySeries(sid, dates[start:], r))
            meta.append(StrategyMeta(sid, f"I{j % 4}", "equities", bucket, "ReturnSeeking",
                                     dates[launch].astype(dt.date)))
    return validate_sample(series, meta)


@pytest.fixture(scope="session")
def small_universe():
    return gen_universe(UniverseConfig(strategies_per_bucket=12, days_total=1600, min_pre_days=504,
                                       min_live_days=504, seed=7))


@pytest.fixture(scope="session")
def small_sample(small_universe):
    u = small_universe
    return validate_sample(u.series, u.meta)


@pytest.fixture(scope="session")
def small_frame(small_universe, small_sample):
    return build_frame(small_sample, "12m", small_universe.index_returns)


# acceptance criteria record their verdict here; printed once at the end of the run
ACCEPTANCE: dict = {}


def record(number: int, passed: bool, detail: str) -> bool:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
