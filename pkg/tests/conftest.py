"""Shared fixtures: tiny bar builders and session-scoped planted markets."""

import sys
from datetime import date, timedelta
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from indexcast.market_data import BarSeries
from indexcast.synthetic import SyntheticMarketSpec, generate_synthetic_market


def weekday_calendar(start: date, n: int) -> tuple:
    days = []
    current = start
    while len(days) < n:
        if current.weekday() < 5:
            days.append(current)
        current += timedelta(days=1)
    return tuple(days)


def make_bars(symbol: str, closes, start=date(2021, 1, 4), volumes=None) -> BarSeries:
    closes = np.asarray(closes, dtype=float)
    n = len(closes)
    opens = np.concatenate([[closes[0]], closes[:-1]])
    highs = np.maximum(opens, closes) * 1.001
    lows = np.minimum(opens, closes) * 0.999
    if volumes is None:
        volumes = np.full(n, 1000.0)
    return BarSeries(
        symbol=symbol,
        dates=weekday_calendar(start, n),
        open=opens,
        high=highs,
        low=lows,
        close=closes,
        volume=np.asarray(volumes, dtype=float),
    )


def trending_closes(n: int, seed: int = 0, drift: float = 0.0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    steps = rng.normal(loc=drift, scale=0.01, size=n)
    return 100.0 * np.exp(np.cumsum(steps))


@pytest.fixture(scope="session")
def small_market(tmp_path_factory):
    """Fast planted market shared by integration tests (zero noise)."""
    spec = SyntheticMarketSpec(
        n_indices=2,
        stocks_per_index=8,
        n_clusters=4,
        noise=0.0,
        n_days=240,
        seed=11,
    )
    return generate_synthetic_market(spec, tmp_path_factory.mktemp("small_market"))


@pytest.fixture(scope="session")
def leadlag_market(tmp_path_factory):
    """Market with planted lead-lag pairs for influence-sign tests."""
    spec = SyntheticMarketSpec(
        n_indices=1,
        stocks_per_index=24,
        n_clusters=4,
        n_lead_lag_pairs=5,
        noise=0.1,
        n_days=220,
        seed=23,
    )
    return generate_synthetic_market(spec, tmp_path_factory.mktemp("leadlag_market"))
