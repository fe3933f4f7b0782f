import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for `oracles`

from ctbench.market_data import ReturnMatrix, WindowSplit

DATA_DIR = Path(__file__).parent / "data"
FIXTURE5 = DATA_DIR / "fixture5"

HOUR_NS = np.timedelta64(1, "h").astype("timedelta64[ns]")
T0 = np.datetime64("2021-01-01T00:00:00", "ns")


def hourly_timestamps(length, start=T0):
    return start + HOUR_NS * np.arange(length)


def make_returns(values, start=T0, assets=None):
    values = np.asarray(values, dtype=np.float64)
    if assets is None:
        assets = tuple(f"A{i:02d}" for i in range(values.shape[0]))
    return ReturnMatrix(tuple(assets), hourly_timestamps(values.shape[1], start), values)


def make_split(values, window, step, start=T0, assets=None):
    """Full matrix -> one split with train = first `window` columns."""
    full = make_returns(values, start, assets)
    return WindowSplit(window, window, step,
                       full.columns(0, window), full.columns(window, window + step))


def planted_stat_arb_market(seed, n=20, train=4000, test=360, theta=0.10,
                            sigma_eq=0.004, sigma_m=0.008):
    """Returns = one common factor + increments of exact mean-reverting
    spreads, the planted market for the residual-trading task."""
    rng = np.random.default_rng(seed)
    total = train + test + 1
    b = np.exp(-theta)
    x = np.empty((n, total))
    x[:, 0] = rng.standard_normal(n) * sigma_eq
    innovation_sd = sigma_eq * np.sqrt(1.0 - b * b)
    for t in range(1, total):
        x[:, t] = x[:, t - 1] * b + innovation_sd * rng.standard_normal(n)
    market = rng.standard_normal(total - 1) * sigma_m
    beta = rng.uniform(0.7, 1.3, size=n)
    returns = beta[:, None] * market[None, :] + np.diff(x, axis=1)
    return make_split(returns, train, test)


@pytest.fixture(scope="session")
def fixture5_dir():
    assert FIXTURE5.is_dir(), "bundled candle fixture missing"
    return FIXTURE5


@pytest.fixture(scope="session")
def fixture5_returns(fixture5_dir):
    from ctbench.market_data import load_ohlc, log_returns
    return log_returns(load_ohlc(fixture5_dir))
