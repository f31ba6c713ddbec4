"""Graph-based multi-index movement forecasting.

Builds a heterogeneous stock-index graph from daily bar data, injects
cluster-selected predicted seed labels, trains a two-layer graph
convolutional model, and aggregates stock predictions into per-index
movement forecasts, with a walk-forward evaluation harness.
"""

__version__ = "0.1.0"

from .config import RunConfig, load_config
from .evaluation import EvaluationReport, ablation_run, lambda_sweep, macro_f1, walk_forward
from .forecast import DailyForecast, PipelineState, aggregate_index_label, forecast_day
from .market_data import BarSeries, UniverseManifest, load_bars, load_manifest
from .relations import PredictionNetwork, build_prediction_network, prune_edges
from .synthetic import SyntheticMarketSpec, generate_synthetic_market

__all__ = [
    "BarSeries",
    "DailyForecast",
    "EvaluationReport",
    "PipelineState",
    "PredictionNetwork",
    "RunConfig",
    "SyntheticMarketSpec",
    "UniverseManifest",
    "ablation_run",
    "aggregate_index_label",
    "build_prediction_network",
    "forecast_day",
    "generate_synthetic_market",
    "lambda_sweep",
    "load_bars",
    "load_config",
    "load_manifest",
    "macro_f1",
    "prune_edges",
    "walk_forward",
]
