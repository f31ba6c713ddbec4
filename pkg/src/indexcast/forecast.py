"""Single prediction-day orchestration and index label aggregation.

Per anchor day: (re)build or reuse the prediction network per the rebuild
cadence, cluster current stock states, inject per-cluster seed labels,
train the graph model on the seeded rows, predict every stock's movement,
and propagate predictions to each index through its membership weights.
Every feature access is stamped against the anchor day so walk-forward
runs can prove no lookahead occurred.
"""

import logging
import time
from dataclasses import dataclass, field
from datetime import date
from typing import Optional

import numpy as np

from .clustering import build_similarity_network, cluster_graph_nodes, spectral_clustering
from .config import RunConfig
from .errors import ForecastStageError, InputError
from .features import FeatureProfile, compute_features
from .gcn import (
    normalized_adjacency,
    normalized_adjacency_with_indices,
    predict_stock_labels,
    train_gcn,
)
from .market_data import (
    BarSeries,
    index_level_series,
    label_series,
    load_bars,
    load_manifest,
    rolling_windows,
)
from .relations import build_prediction_network
from .seeding import SeedLabels, inject_seed_labels, score_stocks
from .util import derived_seed, sign_label

logger = logging.getLogger(__name__)


class DataAudit:
    """Stamps every data access against the anchor day it served.

    Feature (and training-label) accesses must predate the anchor;
    realized-truth accesses must be exactly at the anchor.
    """

    def __init__(self):
        self.violations = []
        self.feature_accesses = 0
        self.truth_accesses = 0

    def record_feature_access(self, day: date, anchor: date) -> None:
        self.feature_accesses += 1
        if day >= anchor:
            self.violations.append(
                f"feature access at {day} is not before anchor {anchor}"
            )

    def record_truth_access(self, day: date, anchor: date) -> None:
        self.truth_accesses += 1
        if day != anchor:
            self.violations.append(
                f"truth access at {day} does not match anchor {anchor}"
            )

    def summary(self) -> dict:
        return {
            "feature_accesses": self.feature_accesses,
            "truth_accesses": self.truth_accesses,
            "violations": list(self.violations),
        }


@dataclass(frozen=True)
class DailyForecast:
    day: date
    stock_labels: dict
    index_labels: dict
    seed_labels: SeedLabels
    diagnostics: dict = field(default_factory=dict)


def aggregate_index_label(network, stock_labels: dict, index_id: str) -> int:
    """Sign of the membership-weighted sum of constituent labels (0 -> +1)."""
    label, _ = _aggregate_with_sum(network, stock_labels, index_id)
    return label


def _aggregate_with_sum(network, stock_labels: dict, index_id: str) -> tuple:
    total = 0.0
    found = False
    for (ix, s), w in network.stock_index_edges.items():
        if ix != index_id:
            continue
        found = True
        if s not in stock_labels:
            raise InputError(f"no predicted label for constituent {s} of {index_id}")
        total += w * stock_labels[s]
    if not found:
        raise InputError(f"index {index_id} has no constituents in the network")
    if not np.isfinite(total):
        raise InputError(f"non-finite weighted sum for index {index_id}")
    return sign_label(total), total


class PipelineState:
    """Loaded data plus caches shared across forecast days.

    The relation cache (correlations / influence records per build day) is
    independent of lambda and the seed-selection variant, so sweeps and
    ablations can share one state via `reset_runtime`.
    """

    def __init__(self, bars: dict, manifest, config: RunConfig):
        self.bars = bars
        self.manifest = manifest
        self.config = config
        self.calendar = next(iter(bars.values())).dates if bars else ()
        for series in bars.values():
            if series.dates != self.calendar:
                raise InputError("bar series are not aligned to one calendar")
        self.audit = DataAudit()
        stocks = manifest.all_stocks()
        missing = [s for s in stocks if s not in bars]
        if missing:
            raise InputError(f"bars missing for constituents: {missing[:5]}")
        self.frames_classic = {
            s: compute_features(bars[s], FeatureProfile.CLASSIC) for s in stocks
        }
        self.frames_signal = {
            s: compute_features(bars[s], FeatureProfile.SIGNAL) for s in stocks
        }
        self.labels = {s: label_series(bars[s]) for s in stocks}
        self.relation_cache: dict = {}
        self._network = None
        self._network_built_idx: Optional[int] = None
        self._index_frames: Optional[dict] = None
        self._level_cache: dict = {}

    @classmethod
    def from_config(cls, config: RunConfig) -> "PipelineState":
        bars = load_bars(config.bars_path)
        manifest = load_manifest(config.manifest_path)
        manifest.validate(config.constituents_per_index)
        return cls(bars, manifest, config)

    def reset_runtime(self, config: RunConfig) -> None:
        """Fresh audit/network for a new run while keeping data caches."""
        self.config = config
        self.audit = DataAudit()
        self._network = None
        self._network_built_idx = None

    # -- audited data accessors -------------------------------------------

    def day_index(self, day: date) -> int:
        lo, hi = 0, len(self.calendar)
        while lo < hi:
            mid = (lo + hi) // 2
            if self.calendar[mid] < day:
                lo = mid + 1
            else:
                hi = mid
        if lo >= len(self.calendar) or self.calendar[lo] != day:
            raise InputError(f"{day} is not a trading day of the loaded calendar")
        return lo

    def signal_row(self, ticker: str, day: date, anchor: date) -> np.ndarray:
        self.audit.record_feature_access(day, anchor)
        return self.frames_signal[ticker].row(day)

    def close_price(self, ticker: str, day: date, anchor: date) -> float:
        self.audit.record_feature_access(day, anchor)
        return float(self.bars[ticker].close[self.bars[ticker].index_of(day)])

    def stamp_training_windows(self, anchor: date) -> None:
        """Audit-stamp the supervised windows used by model fits at `anchor`.

        Window days are the prediction targets; the features they pair with
        sit one day earlier still, so stamping the targets is conservative.
        """
        train_days, val_days = rolling_windows(
            self.calendar, anchor, self.config.train_days, self.config.validation_days
        )
        for d in (*train_days, *val_days):
            self.audit.record_feature_access(d, anchor)
        prev_day = self.calendar[self.day_index(anchor) - 1]
        self.audit.record_feature_access(prev_day, anchor)

    def realized_index_movement(self, index_id: str, day: date, anchor: date) -> int:
        self.audit.record_truth_access(day, anchor)
        spec = next(ix for ix in self.manifest.indices if ix.index_id == index_id)
        idx = self.day_index(day)
        if idx == 0:
            raise InputError(f"{day} has no predecessor for index movement")
        levels = self._levels(spec)
        return sign_label(levels[idx] - levels[idx - 1])

    def realized_stock_movement(self, ticker: str, day: date, anchor: date) -> int:
        self.audit.record_truth_access(day, anchor)
        return self.labels[ticker][day]

    def _levels(self, spec) -> np.ndarray:
        if spec.index_id not in self._level_cache:
            self._level_cache[spec.index_id] = index_level_series(
                spec, self.bars, self.manifest.market_caps
            )
        return self._level_cache[spec.index_id]

    # -- network lifecycle --------------------------------------------------

    def ensure_network(self, anchor_day: date):
        anchor_idx = self.day_index(anchor_day)
        cadence = self.config.effective_rebuild_days
        if (
            self._network is None
            or anchor_idx - self._network_built_idx >= cadence
        ):
            self._network = self._build_network(anchor_day)
            self._network_built_idx = anchor_idx
        return self._network

    def _build_network(self, anchor_day: date):
        cfg = self.config
        split = rolling_windows(
            self.calendar, anchor_day, cfg.train_days, cfg.validation_days
        )
        self.stamp_training_windows(anchor_day)
        prev_day = self.calendar[self.day_index(anchor_day) - 1]
        prices = {
            s: self.close_price(s, prev_day, anchor_day)
            for s in self.manifest.all_stocks()
        }
        return build_prediction_network(
            self.manifest,
            self.frames_classic,
            self.labels,
            split,
            cfg.blend_lambda,
            prices,
            built_on=anchor_day,
            margin_config=cfg.margin,
            prune_mode=cfg.prune_mode,
            influence_top_k=cfg.influence_top_k,
            n_jobs=cfg.n_jobs,
            relation_cache=self.relation_cache,
        )

    # -- index pseudo-features for the indices-as-nodes variant -------------

    def index_signal_frames(self) -> dict:
        """Signal feature frames for index nodes, from index level series.

        The pseudo bar series prices every field at the index level and
        sums constituent volume; indicators degrade gracefully where
        high/low information is absent.
        """
        if self._index_frames is None:
            frames = {}
            for spec in self.manifest.indices:
                levels = self._levels(spec)
                volume = np.sum(
                    [self.bars[s].volume for s in spec.constituents], axis=0
                )
                pseudo = BarSeries(
                    symbol=spec.index_id,
                    dates=self.calendar,
                    open=levels.copy(),
                    high=levels.copy(),
                    low=levels.copy(),
                    close=levels.copy(),
                    volume=volume,
                )
                frames[spec.index_id] = compute_features(pseudo, FeatureProfile.SIGNAL)
            self._index_frames = frames
        return self._index_frames


def _select_seeds(state: PipelineState, network, anchor_day: date, config: RunConfig):
    """Variant dispatch for the seed-selection stage; returns (seeds, info)."""
    universe = network.stock_nodes
    k = min(config.k_clusters, len(universe))
    variant = config.variant
    state.stamp_training_windows(anchor_day)

    if variant == "random_seed_selection":
        rng = np.random.default_rng(derived_seed(config.seed, "random-seeds", anchor_day))
        chosen = sorted(rng.choice(len(universe), size=k, replace=False))
        tickers = [universe[i] for i in chosen]
        scored = score_stocks(
            tickers, state.frames_classic, state.labels, anchor_day, config,
            n_jobs=config.n_jobs,
        )
        labels, provenance = {}, {}
        for rank, t in enumerate(sorted(tickers)):
            score, pred = scored[t]
            if score is None:
                continue
            labels[t] = pred
            provenance[t] = (rank, score)
        return SeedLabels(labels, provenance), {"selection": "random", "k": k}

    if variant == "most_predictable_only":
        scored = score_stocks(
            universe, state.frames_classic, state.labels, anchor_day, config,
            n_jobs=config.n_jobs,
        )
        ranked = sorted(
            (t for t in universe if scored[t][0] is not None),
            key=lambda t: (-scored[t][0], t),
        )[:k]
        labels = {t: scored[t][1] for t in ranked}
        provenance = {t: (rank, scored[t][0]) for rank, t in enumerate(ranked)}
        return SeedLabels(labels, provenance), {"selection": "top-score", "k": k}

    prev_day = state.calendar[state.day_index(anchor_day) - 1]
    if variant == "cluster_on_prediction_network":
        clusters = cluster_graph_nodes(
            network.stock_nodes,
            network.stock_stock_edges,
            k,
            seed=derived_seed(config.seed, "cluster", anchor_day),
        )
    else:
        vectors = {
            t: state.signal_row(t, prev_day, anchor_day) for t in universe
        }
        sn = build_similarity_network(vectors, min(config.k_neighbors, len(universe) - 1))
        clusters = spectral_clustering(
            sn, k, seed=derived_seed(config.seed, "cluster", anchor_day)
        )
    seeds = inject_seed_labels(
        network, clusters, state.frames_classic, state.labels, anchor_day, config,
        n_jobs=config.n_jobs,
    )
    sizes = [len(clusters.members(c)) for c in range(clusters.k_clusters)]
    return seeds, {"selection": "clustered", "k": k, "cluster_sizes": sizes}


def forecast_day(state: PipelineState, anchor_day: date, config: Optional[RunConfig] = None) -> DailyForecast:
    """Run the full per-day pipeline; raises ForecastStageError on failure."""
    if config is not None and config is not state.config:
        state.config = config
    config = state.config
    timings = {}
    diagnostics = {}

    def staged(stage, fn):
        start = time.perf_counter()
        try:
            result = fn()
        except Exception as e:  # noqa: BLE001 - stage tagging is the contract
            raise ForecastStageError(stage, anchor_day, e) from e
        timings[stage] = time.perf_counter() - start
        return result

    network = staged("network", lambda: state.ensure_network(anchor_day))
    seeds, selection_info = staged(
        "seed_selection", lambda: _select_seeds(state, network, anchor_day, config)
    )
    if not seeds.labels:
        raise ForecastStageError(
            "seed_selection", anchor_day, InputError("no usable seed labels")
        )
    diagnostics["seed_selection"] = selection_info
    prev_day = state.calendar[state.day_index(anchor_day) - 1]

    def train_and_predict():
        gcn_config = _day_gcn_config(config, anchor_day)
        if config.variant == "indices_as_nodes":
            adj = normalized_adjacency_with_indices(network)
            index_frames = state.index_signal_frames()
            rows = []
            for node in adj.nodes:
                if node in index_frames:
                    state.audit.record_feature_access(prev_day, anchor_day)
                    rows.append(index_frames[node].row(prev_day))
                else:
                    rows.append(state.signal_row(node, prev_day, anchor_day))
            X = np.stack(rows)
            params, losses = train_gcn(adj, X, seeds, gcn_config)
            all_labels = predict_stock_labels(params, adj, X)
            stock_labels = {t: all_labels[t] for t in network.stock_nodes}
            index_labels = {ix: all_labels[ix] for ix in network.index_nodes}
            sums = {ix: float(index_labels[ix]) for ix in network.index_nodes}
        else:
            adj = normalized_adjacency(network)
            X = np.stack(
                [state.signal_row(t, prev_day, anchor_day) for t in adj.nodes]
            )
            params, losses = train_gcn(adj, X, seeds, gcn_config)
            stock_labels = predict_stock_labels(params, adj, X)
            index_labels = {}
            sums = {}
            for ix in network.index_nodes:
                label, total = _aggregate_with_sum(network, stock_labels, ix)
                index_labels[ix] = label
                sums[ix] = total
        return stock_labels, index_labels, sums, losses

    stock_labels, index_labels, sums, losses = staged("gcn", train_and_predict)

    seed_hits = 0
    for t in seeds.labels:
        realized = state.realized_stock_movement(t, anchor_day, anchor_day)
        seed_hits += seeds.labels[t] == realized
    diagnostics.update(
        {
            "index_weighted_sums": sums,
            "seed_count": len(seeds.labels),
            "seed_accuracy_vs_realized": (
                seed_hits / len(seeds.labels) if seeds.labels else None
            ),
            "gcn_loss_first": losses[0] if losses else None,
            "gcn_loss_last": losses[-1] if losses else None,
            "network_built_on": (
                network.built_on.isoformat() if network.built_on else None
            ),
            "timings": timings,
        }
    )
    return DailyForecast(
        day=anchor_day,
        stock_labels=stock_labels,
        index_labels=index_labels,
        seed_labels=seeds,
        diagnostics=diagnostics,
    )


def _day_gcn_config(config: RunConfig, anchor_day: date):
    from dataclasses import replace

    return replace(
        config.gcn, seed=derived_seed(config.gcn.seed, "gcn", anchor_day)
    )
