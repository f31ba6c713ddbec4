"""Feature frame and indicator tests against standalone oracles."""

import numpy as np
import pytest

from conftest import make_bars, trending_closes
from indexcast import indicators as ind
from indexcast.errors import InputError, InsufficientHistoryError
from indexcast.features import (
    CLASSIC_FEATURES,
    SIGNAL_FEATURES,
    WARMUP_DAYS,
    FeatureProfile,
    compute_features,
    supervised_matrices,
)
from indexcast.market_data import label_series, movement_label
from oracles import rsi_step_oracle


def test_profile_compositions():
    assert len(CLASSIC_FEATURES) == 23
    assert len(SIGNAL_FEATURES) == 11
    assert set(SIGNAL_FEATURES) < set(CLASSIC_FEATURES)
    assert all(name.endswith("_S") for name in SIGNAL_FEATURES)


def test_rising_closes_give_positive_movement_signal():
    bars = make_bars("AAA", np.linspace(100, 140, 40))
    frame = compute_features(bars, FeatureProfile.SIGNAL)
    col = frame.names.index("CPCPY_S")
    assert (frame.vectors[:, col] == 1.0).all()
    assert len(frame.dates) == 40 - WARMUP_DAYS


def test_constant_series_ties_map_to_plus_one():
    bars = make_bars("AAA", np.full(40, 100.0))
    frame = compute_features(bars, FeatureProfile.SIGNAL)
    for name in ("V_S", "CPOP_S", "CPCPY_S"):
        col = frame.names.index(name)
        assert (frame.vectors[:, col] == 1.0).all(), name


def test_rsi_matches_step_oracle():
    closes = np.array(
        [44.34, 44.09, 44.15, 43.61, 44.33, 44.83, 45.10, 45.42, 45.84, 46.08,
         45.89, 46.03, 45.61, 46.28, 46.28, 46.00, 46.03, 46.41, 46.22, 45.64]
    )
    ours = ind.wilder_rsi(closes, period=14)
    expected = rsi_step_oracle(closes, period=14)
    for t in range(14, len(closes)):
        assert ours[t] == pytest.approx(expected[t], abs=1e-9)
    assert np.isnan(ours[:14]).all()


def test_signal_features_are_binary_everywhere():
    for seed in range(5):
        bars = make_bars(
            "AAA",
            trending_closes(80, seed=seed),
            volumes=np.random.default_rng(seed).uniform(500, 5000, 80),
        )
        frame = compute_features(bars, FeatureProfile.SIGNAL)
        assert set(np.unique(frame.vectors)) <= {-1.0, 1.0}
        classic = compute_features(bars, FeatureProfile.CLASSIC)
        for name in SIGNAL_FEATURES:
            col = classic.names.index(name)
            assert set(np.unique(classic.vectors[:, col])) <= {-1.0, 1.0}


def test_label_feature_consistency():
    bars = make_bars("AAA", trending_closes(60, seed=9))
    frame = compute_features(bars, FeatureProfile.SIGNAL)
    col = frame.names.index("CPCPY_S")
    for i, day in enumerate(frame.dates):
        assert movement_label(bars, day) == int(frame.vectors[i, col])


def test_feature_determinism():
    bars = make_bars("AAA", trending_closes(50, seed=4))
    a = compute_features(bars, FeatureProfile.CLASSIC)
    b = compute_features(bars, FeatureProfile.CLASSIC)
    assert np.array_equal(a.vectors, b.vectors)
    assert a.dates == b.dates


def test_insufficient_history():
    bars = make_bars("AAA", trending_closes(20, seed=1))
    with pytest.raises(InsufficientHistoryError):
        compute_features(bars, FeatureProfile.SIGNAL)


def test_indicator_edge_rules():
    # flat prices: degenerate denominators take their neutral values
    flat = np.full(60, 100.0)
    assert ind.cci(flat, flat, flat)[30] == 0.0
    assert ind.wilder_rsi(flat)[30] == 50.0
    slow_k, slow_d = ind.stochastic_slow(flat, flat, flat)
    assert slow_k[30] == pytest.approx(50.0, abs=1e-9)
    assert slow_d[30] == pytest.approx(50.0, abs=1e-9)
    assert ind.mfi(flat, flat, flat, np.full(60, 10.0))[30] == 50.0


def test_supervised_matrices_shift_and_errors():
    closes = trending_closes(45, seed=2)
    bars = make_bars("AAA", closes)
    frame = compute_features(bars, FeatureProfile.CLASSIC)
    labels = label_series(bars)
    targets = frame.dates[5:10]
    X, y = supervised_matrices(frame, labels, targets)
    assert X.shape == (5, 23)
    for row, day in enumerate(targets):
        idx = frame.index_of(day)
        assert np.array_equal(X[row], frame.vectors[idx - 1])
        assert y[row] == labels[day]
    with pytest.raises(InsufficientHistoryError):
        supervised_matrices(frame, labels, [frame.dates[0]])
    with pytest.raises(InputError):
        supervised_matrices(frame, labels, [])
