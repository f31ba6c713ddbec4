"""Index aggregation and single-day forecasting."""

from dataclasses import replace
from datetime import date

import numpy as np
import pytest

from indexcast.config import RunConfig
from indexcast.errors import ForecastStageError, InputError, WindowError
from indexcast.forecast import (
    DataAudit,
    PipelineState,
    aggregate_index_label,
    forecast_day,
)
from indexcast.relations import PredictionNetwork
from oracles import aggregate_oracle


def tiny_network(weights):
    stocks = tuple(sorted(s for _, s in weights))
    return PredictionNetwork(
        index_nodes=("IX",),
        stock_nodes=stocks,
        stock_index_edges=dict(weights),
        stock_stock_edges={},
        lam=0.5,
    )


# -- aggregation -------------------------------------------------------------------

def test_aggregate_unanimous():
    net = tiny_network({("IX", "A"): 0.5, ("IX", "B"): 0.5})
    assert aggregate_index_label(net, {"A": 1, "B": 1}, "IX") == 1
    assert aggregate_index_label(net, {"A": -1, "B": -1}, "IX") == -1


def test_aggregate_weighted_example():
    net = tiny_network({("IX", "A"): 0.6, ("IX", "B"): 0.4})
    assert aggregate_index_label(net, {"A": 1, "B": -1}, "IX") == 1


def test_aggregate_tie_maps_to_rise():
    net = tiny_network({("IX", "A"): 0.5, ("IX", "B"): 0.5})
    assert aggregate_index_label(net, {"A": 1, "B": -1}, "IX") == 1


def test_aggregate_matches_loop_oracle():
    rng = np.random.default_rng(8)
    for _ in range(300):
        n = int(rng.integers(1, 9))
        stocks = [f"S{i}" for i in range(n)]
        weights = {("IX", s): float(rng.uniform(0.01, 1.0)) for s in stocks}
        labels = {s: int(rng.choice([-1, 1])) for s in stocks}
        net = tiny_network(weights)
        expected = aggregate_oracle({s: weights[("IX", s)] for s in stocks}, labels)
        assert aggregate_index_label(net, labels, "IX") == expected


def test_aggregate_scale_invariance():
    rng = np.random.default_rng(9)
    for _ in range(100):
        n = int(rng.integers(1, 6))
        stocks = [f"S{i}" for i in range(n)]
        weights = {("IX", s): float(rng.uniform(0.01, 1.0)) for s in stocks}
        labels = {s: int(rng.choice([-1, 1])) for s in stocks}
        base = aggregate_index_label(tiny_network(weights), labels, "IX")
        scale = float(rng.uniform(0.1, 50.0))
        scaled = {k: w * scale for k, w in weights.items()}
        assert aggregate_index_label(tiny_network(scaled), labels, "IX") == base


def test_aggregate_errors():
    net = tiny_network({("IX", "A"): 1.0})
    with pytest.raises(InputError, match="A"):
        aggregate_index_label(net, {}, "IX")
    with pytest.raises(InputError, match="constituents"):
        aggregate_index_label(net, {"A": 1}, "ZZ")


def test_aggregate_locality_ignores_non_constituents():
    net = tiny_network({("IX", "A"): 0.7, ("IX", "B"): 0.3})
    labels = {"A": 1, "B": -1, "C": -1}
    base = aggregate_index_label(net, labels, "IX")
    intervened = dict(labels, C=1)  # non-constituent flip
    assert aggregate_index_label(net, intervened, "IX") == base


# -- audit --------------------------------------------------------------------------

def test_audit_flags_lookahead():
    audit = DataAudit()
    audit.record_feature_access(date(2021, 1, 5), date(2021, 1, 6))
    assert not audit.violations
    audit.record_feature_access(date(2021, 1, 6), date(2021, 1, 6))
    assert len(audit.violations) == 1
    audit.record_truth_access(date(2021, 1, 6), date(2021, 1, 6))
    assert len(audit.violations) == 1
    audit.record_truth_access(date(2021, 1, 5), date(2021, 1, 6))
    assert len(audit.violations) == 2


# -- forecast_day ---------------------------------------------------------------------

def market_config(market, **overrides) -> RunConfig:
    spec = market.truth["spec"]
    base = RunConfig(
        bars_path=str(market.bars_path),
        manifest_path=str(market.manifest_path),
        constituents_per_index=spec["stocks_per_index"],
        train_days=120,
        validation_days=20,
        k_clusters=spec["n_clusters"],
        k_neighbors=5,
        seed=3,
    )
    return replace(base, **overrides)


def test_forecast_day_produces_labels_and_diagnostics(small_market):
    cfg = market_config(small_market)
    state = PipelineState.from_config(cfg)
    anchor = state.calendar[-1]
    forecast = forecast_day(state, anchor)
    assert set(forecast.index_labels) == {"IX0", "IX1"}
    assert set(forecast.stock_labels) == set(state.manifest.all_stocks())
    assert forecast.seed_labels.labels
    diag = forecast.diagnostics
    assert set(diag["index_weighted_sums"]) == {"IX0", "IX1"}
    assert diag["seed_count"] == len(forecast.seed_labels.labels)
    assert "network" in diag["timings"] and "gcn" in diag["timings"]
    assert not state.audit.violations


def test_forecast_day_deterministic_across_states(small_market):
    cfg = market_config(small_market)
    state_a = PipelineState.from_config(cfg)
    state_b = PipelineState.from_config(cfg)
    anchor = state_a.calendar[-1]
    fa = forecast_day(state_a, anchor)
    fb = forecast_day(state_b, anchor)
    assert fa.index_labels == fb.index_labels
    assert fa.stock_labels == fb.stock_labels
    assert fa.seed_labels.labels == fb.seed_labels.labels


def test_forecast_day_early_anchor_propagates_window_error(small_market):
    cfg = market_config(small_market)
    state = PipelineState.from_config(cfg)
    with pytest.raises(ForecastStageError) as err:
        forecast_day(state, state.calendar[50])
    assert err.value.stage == "network"
    assert isinstance(err.value.cause, WindowError)


def test_realized_index_movement_matches_truth(small_market):
    cfg = market_config(small_market)
    state = PipelineState.from_config(cfg)
    truth_labels = small_market.truth["index_labels"]
    for ix in ("IX0", "IX1"):
        for offset in range(-30, 0):
            day = state.calendar[offset]
            idx = state.day_index(day)
            got = state.realized_index_movement(ix, day, day)
            assert got == truth_labels[ix][idx - 1]
    assert not state.audit.violations


def test_variant_forecasts_run(small_market):
    anchorless = market_config(small_market)
    state = PipelineState.from_config(anchorless)
    anchor = state.calendar[-1]
    for variant in (
        "random_seed_selection",
        "most_predictable_only",
        "cluster_on_prediction_network",
        "indices_as_nodes",
    ):
        cfg = market_config(small_market, variant=variant)
        state.reset_runtime(cfg)
        forecast = forecast_day(state, anchor)
        assert set(forecast.index_labels) == {"IX0", "IX1"}, variant
        assert not state.audit.violations, variant
