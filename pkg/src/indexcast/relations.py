"""Stock-stock and stock-index relation measures and the prediction network.

Stock-stock edge weights blend two measures over the training window: the
Pearson correlation of the two movement-label series, and an "influence"
score — the average validation-accuracy gain from predicting each stock
with the pair's averaged feature vectors instead of its own.  Stock-index
edges carry the constituent's share of its index (log-cap or price
weighted).  The assembled graph is pruned from the lightest edge upward
until the next removal would disconnect the stock subgraph.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from datetime import date
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from .errors import DegenerateModelError, DisconnectedGraphError, InputError
from .features import supervised_matrices
from .margin import MarginConfig, classification_accuracy, train_margin_classifier

logger = logging.getLogger(__name__)

PRUNE_STOP_AT_FIRST_BRIDGE = "stop_at_first_bridge"
PRUNE_SKIP_BRIDGES = "skip_bridges"


def pearson_correlation(y_i, y_j) -> float:
    """Pearson coefficient of two movement-label series (0 if degenerate)."""
    value, _ = pearson_correlation_flagged(y_i, y_j)
    return value


def pearson_correlation_flagged(y_i, y_j) -> tuple:
    """(coefficient, degenerate) where degenerate marks a constant series."""
    a = np.asarray(y_i, dtype=np.float64)
    b = np.asarray(y_j, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise InputError("label series must be 1-d and of equal length")
    if len(a) < 2:
        raise InputError("need at least 2 observations")
    da = a - a.mean()
    db = b - b.mean()
    va = da @ da
    vb = db @ db
    if va == 0.0 or vb == 0.0:
        return 0.0, True
    value = float((da @ db) / math.sqrt(va * vb))
    return min(1.0, max(-1.0, value)), False


def combine_edge_weight(correlation: float, influence: float, lam: float) -> float:
    """Blend: lam * influence + (1 - lam) * correlation."""
    if not 0.0 < lam < 1.0:
        raise InputError(f"lambda must be in (0,1), got {lam}")
    return lam * influence + (1.0 - lam) * correlation


def index_edge_weights(manifest, prices: dict) -> dict:
    """Per-index constituent weights, normalized to sum to 1 per index.

    Cap-weighted indices use log10 of the market cap; price-weighted use
    the latest price.
    """
    from .market_data import WeightScheme

    weights = {}
    for ix in manifest.indices:
        raw = {}
        for s in ix.constituents:
            if ix.weighting is WeightScheme.CAP_WEIGHTED:
                cap = manifest.market_caps.get(s)
                if cap is None or cap <= 1.0:
                    raise InputError(
                        f"stock {s}: market cap must exceed 1 for cap weighting"
                    )
                raw[s] = math.log10(cap)
            else:
                price = prices.get(s)
                if price is None or price <= 0.0:
                    raise InputError(f"stock {s}: price must be positive")
                raw[s] = float(price)
        total = sum(raw.values())
        for s, w in raw.items():
            weights[(ix.index_id, s)] = w / total
    return weights


@dataclass(frozen=True)
class InfluenceRecord:
    pair: tuple
    acc_raw_i: float
    acc_raw_j: float
    acc_proc_i: float
    acc_proc_j: float
    degenerate_i: bool = False
    degenerate_j: bool = False

    @property
    def influence(self) -> float:
        term_i = 0.0 if self.degenerate_i else self.acc_proc_i - self.acc_raw_i
        term_j = 0.0 if self.degenerate_j else self.acc_proc_j - self.acc_raw_j
        return 0.5 * (term_i + term_j)


def influence(
    frame_i,
    frame_j,
    labels_i: dict,
    labels_j: dict,
    split: tuple,
    config: MarginConfig = MarginConfig(),
) -> InfluenceRecord:
    """Accuracy gain from averaging the pair's feature vectors (one pair)."""
    train_days, val_days = split
    Xi_tr, yi_tr = supervised_matrices(frame_i, labels_i, train_days)
    Xj_tr, yj_tr = supervised_matrices(frame_j, labels_j, train_days)
    Xi_va, yi_va = supervised_matrices(frame_i, labels_i, val_days)
    Xj_va, yj_va = supervised_matrices(frame_j, labels_j, val_days)
    raw_i, deg_raw_i = _safe_accuracy(Xi_tr, yi_tr, Xi_va, yi_va, config)
    raw_j, deg_raw_j = _safe_accuracy(Xj_tr, yj_tr, Xj_va, yj_va, config)
    Xp_tr = 0.5 * (Xi_tr + Xj_tr)
    Xp_va = 0.5 * (Xi_va + Xj_va)
    proc_i, deg_proc_i = _safe_accuracy(Xp_tr, yi_tr, Xp_va, yi_va, config)
    proc_j, deg_proc_j = _safe_accuracy(Xp_tr, yj_tr, Xp_va, yj_va, config)
    return InfluenceRecord(
        pair=(frame_i.symbol, frame_j.symbol),
        acc_raw_i=raw_i,
        acc_raw_j=raw_j,
        acc_proc_i=proc_i,
        acc_proc_j=proc_j,
        degenerate_i=deg_raw_i or deg_proc_i,
        degenerate_j=deg_raw_j or deg_proc_j,
    )


def _safe_accuracy(X_tr, y_tr, X_va, y_va, config) -> tuple:
    try:
        model = train_margin_classifier(X_tr, y_tr, config)
    except DegenerateModelError:
        return 0.0, True
    return classification_accuracy(model, X_va, y_va), False


@dataclass(frozen=True)
class PredictionNetwork:
    """Heterogeneous graph of index and (deduplicated) stock nodes."""

    index_nodes: tuple
    stock_nodes: tuple
    stock_index_edges: dict  # {(index_id, ticker): weight}
    stock_stock_edges: dict  # {(ticker_a, ticker_b) sorted: weight}
    lam: float
    built_on: Optional[date] = None
    diagnostics: dict = field(default_factory=dict)

    def stock_weight(self, a: str, b: str) -> Optional[float]:
        if a == b:
            return None
        return self.stock_stock_edges.get((min(a, b), max(a, b)))

    def index_constituents(self, index_id: str) -> tuple:
        return tuple(
            sorted(s for (ix, s) in self.stock_index_edges if ix == index_id)
        )

    def validate(self) -> None:
        for (a, b) in self.stock_stock_edges:
            if a == b:
                raise InputError(f"self-edge on {a}")
            if (a, b) != (min(a, b), max(a, b)):
                raise InputError(f"edge key ({a},{b}) not canonically ordered")
        for ix in self.index_nodes:
            total = sum(w for (i, _), w in self.stock_index_edges.items() if i == ix)
            if abs(total - 1.0) > 1e-9:
                raise InputError(f"index {ix}: edge weights sum to {total}, not 1")
        if not _is_connected(self.stock_nodes, self.stock_stock_edges):
            raise DisconnectedGraphError("stock subgraph is not connected")

    def to_json(self) -> str:
        payload = {
            "index_nodes": list(self.index_nodes),
            "stock_nodes": list(self.stock_nodes),
            "stock_index_edges": [
                [ix, s, w] for (ix, s), w in sorted(self.stock_index_edges.items())
            ],
            "stock_stock_edges": [
                [a, b, w] for (a, b), w in sorted(self.stock_stock_edges.items())
            ],
            "lambda": self.lam,
            "built_on": self.built_on.isoformat() if self.built_on else None,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PredictionNetwork":
        raw = json.loads(text)
        return cls(
            index_nodes=tuple(raw["index_nodes"]),
            stock_nodes=tuple(raw["stock_nodes"]),
            stock_index_edges={(ix, s): w for ix, s, w in raw["stock_index_edges"]},
            stock_stock_edges={(a, b): w for a, b, w in raw["stock_stock_edges"]},
            lam=raw["lambda"],
            built_on=date.fromisoformat(raw["built_on"]) if raw["built_on"] else None,
        )


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def _is_connected(nodes, edges) -> bool:
    if len(nodes) <= 1:
        return True
    uf = _UnionFind(nodes)
    components = len(nodes)
    for a, b in edges:
        if uf.union(a, b):
            components -= 1
    return components == 1


def _sorted_edges(edges: dict) -> list:
    """Ascending by weight, ties broken by the lexicographic node pair."""
    return sorted(edges, key=lambda pair: (edges[pair], pair))


def prune_edges(network: PredictionNetwork, mode: str = PRUNE_STOP_AT_FIRST_BRIDGE) -> PredictionNetwork:
    """Drop stock-stock edges in ascending weight order while connectivity holds.

    Default mode stops outright at the first edge whose removal would
    disconnect the stock subgraph.  That is equivalent to removing the
    longest prefix of the ascending edge order whose removal keeps the
    graph connected (removing more edges never restores connectivity), so
    the prefix length is found by bisection.  ``skip_bridges`` instead
    skips unremovable edges and keeps scanning.
    """
    nodes = network.stock_nodes
    edges = network.stock_stock_edges
    if not _is_connected(nodes, edges):
        raise DisconnectedGraphError("prune_edges requires a connected stock subgraph")
    order = _sorted_edges(edges)
    if mode == PRUNE_STOP_AT_FIRST_BRIDGE:
        removed = _max_removable_prefix(nodes, edges, order)
        kept = {pair: edges[pair] for pair in order[removed:]}
    elif mode == PRUNE_SKIP_BRIDGES:
        kept = dict(edges)
        for pair in order:
            trial = {p: w for p, w in kept.items() if p != pair}
            if _is_connected(nodes, trial):
                kept = trial
    else:
        raise InputError(f"unknown prune mode {mode!r}")
    return PredictionNetwork(
        index_nodes=network.index_nodes,
        stock_nodes=nodes,
        stock_index_edges=network.stock_index_edges,
        stock_stock_edges=kept,
        lam=network.lam,
        built_on=network.built_on,
        diagnostics=network.diagnostics,
    )


def _max_removable_prefix(nodes, edges, order) -> int:
    def connected_without_prefix(k: int) -> bool:
        survivors = order[k:]
        return _is_connected(nodes, survivors)

    lo, hi = 0, len(order)  # invariant: prefix lo is removable
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if connected_without_prefix(mid):
            lo = mid
        else:
            hi = mid - 1
    return lo


def correlation_matrix(label_vectors: dict) -> tuple:
    """Pairwise movement correlations; returns ({pair: corr}, degenerate count)."""
    tickers = sorted(label_vectors)
    corr = {}
    degenerate = 0
    for i, a in enumerate(tickers):
        for b in tickers[i + 1 :]:
            value, flag = pearson_correlation_flagged(label_vectors[a], label_vectors[b])
            corr[(a, b)] = value
            degenerate += flag
    return corr, degenerate


def _pair_influences(pairs, stacked, margin_config) -> list:
    Xtr, ytr, Xva, yva, raw_acc, raw_deg = stacked
    out = []
    for i, j in pairs:
        Xp_tr = 0.5 * (Xtr[i] + Xtr[j])
        Xp_va = 0.5 * (Xva[i] + Xva[j])
        proc_i, dpi = _safe_accuracy(Xp_tr, ytr[i], Xp_va, yva[i], margin_config)
        proc_j, dpj = _safe_accuracy(Xp_tr, ytr[j], Xp_va, yva[j], margin_config)
        out.append(
            (
                i,
                j,
                proc_i,
                proc_j,
                bool(raw_deg[i] or dpi),
                bool(raw_deg[j] or dpj),
            )
        )
    return out


def influence_sweep(
    frames: dict,
    labels: dict,
    split: tuple,
    margin_config: MarginConfig = MarginConfig(),
    top_k: Optional[int] = None,
    correlations: Optional[dict] = None,
    n_jobs: int = 1,
) -> dict:
    """InfluenceRecord for every unordered stock pair (or the top_k by |corr|).

    Raw single-stock accuracies are computed once per stock and shared
    across the pairs that reference them; the averaged-feature models are
    trained per pair.
    """
    tickers = sorted(frames)
    train_days, val_days = split
    Xtr, ytr, Xva, yva = [], [], [], []
    for t in tickers:
        a, b = supervised_matrices(frames[t], labels[t], train_days)
        c, d = supervised_matrices(frames[t], labels[t], val_days)
        Xtr.append(a)
        ytr.append(b)
        Xva.append(c)
        yva.append(d)
    Xtr = np.stack(Xtr)
    ytr = np.stack(ytr)
    Xva = np.stack(Xva)
    yva = np.stack(yva)

    raw = [
        _safe_accuracy(Xtr[i], ytr[i], Xva[i], yva[i], margin_config)
        for i in range(len(tickers))
    ]
    raw_acc = np.array([r[0] for r in raw])
    raw_deg = np.array([r[1] for r in raw])

    all_pairs = [
        (i, j) for i in range(len(tickers)) for j in range(i + 1, len(tickers))
    ]
    if top_k is not None and top_k < len(all_pairs):
        if correlations is None:
            raise InputError("top_k capping requires precomputed correlations")
        ranked = sorted(
            all_pairs,
            key=lambda p: (
                -abs(correlations[(tickers[p[0]], tickers[p[1]])]),
                p,
            ),
        )
        selected = set(ranked[:top_k])
    else:
        selected = set(all_pairs)

    work = sorted(selected)
    stacked = (Xtr, ytr, Xva, yva, raw_acc, raw_deg)
    if n_jobs == 1 or len(work) < 32:
        results = _pair_influences(work, stacked, margin_config)
    else:
        from joblib import effective_n_jobs

        n_chunks = max(1, min(len(work), 4 * effective_n_jobs(n_jobs)))
        chunks = np.array_split(np.arange(len(work)), n_chunks)
        parts = Parallel(n_jobs=n_jobs)(
            delayed(_pair_influences)([work[i] for i in chunk], stacked, margin_config)
            for chunk in chunks
            if len(chunk)
        )
        results = [r for part in parts for r in part]

    records = {}
    for i, j, proc_i, proc_j, deg_i, deg_j in results:
        a, b = tickers[i], tickers[j]
        records[(a, b)] = InfluenceRecord(
            pair=(a, b),
            acc_raw_i=float(raw_acc[i]),
            acc_raw_j=float(raw_acc[j]),
            acc_proc_i=proc_i,
            acc_proc_j=proc_j,
            degenerate_i=deg_i,
            degenerate_j=deg_j,
        )
    for i, j in all_pairs:
        key = (tickers[i], tickers[j])
        if key not in records:
            # pair skipped by the top_k cap: influence contribution is zero
            records[key] = InfluenceRecord(
                pair=key,
                acc_raw_i=float(raw_acc[i]),
                acc_raw_j=float(raw_acc[j]),
                acc_proc_i=float(raw_acc[i]),
                acc_proc_j=float(raw_acc[j]),
                degenerate_i=bool(raw_deg[i]),
                degenerate_j=bool(raw_deg[j]),
            )
    return records


def build_prediction_network(
    manifest,
    frames: dict,
    labels: dict,
    split: tuple,
    lam: float,
    prices: dict,
    built_on: Optional[date] = None,
    margin_config: MarginConfig = MarginConfig(),
    prune_mode: str = PRUNE_STOP_AT_FIRST_BRIDGE,
    influence_top_k: Optional[int] = None,
    n_jobs: int = 1,
    relation_cache: Optional[dict] = None,
) -> PredictionNetwork:
    """Assemble and prune the full heterogeneous graph for one build day.

    `relation_cache`, when supplied, memoizes the lambda-independent
    correlation / influence measures keyed by build day so that sweeps
    over lambda reuse them.
    """
    if not 0.0 < lam < 1.0:
        raise InputError(f"lambda must be in (0,1), got {lam}")
    stocks = manifest.all_stocks()
    missing = [s for s in stocks if s not in frames]
    if missing:
        raise InputError(f"no feature frames for constituents: {missing[:5]}")

    cache_key = built_on
    cached = relation_cache.get(cache_key) if relation_cache is not None else None
    if cached is None:
        train_days, _ = split
        label_vectors = {
            s: np.array([labels[s][d] for d in train_days], dtype=np.float64)
            for s in stocks
        }
        correlations, degenerate_pairs = correlation_matrix(label_vectors)
        records = influence_sweep(
            {s: frames[s] for s in stocks},
            labels,
            split,
            margin_config=margin_config,
            top_k=influence_top_k,
            correlations=correlations,
            n_jobs=n_jobs,
        )
        cached = (correlations, records, degenerate_pairs)
        if relation_cache is not None:
            relation_cache[cache_key] = cached
    correlations, records, degenerate_pairs = cached

    stock_stock = {
        pair: combine_edge_weight(correlations[pair], records[pair].influence, lam)
        for pair in correlations
    }
    network = PredictionNetwork(
        index_nodes=tuple(ix.index_id for ix in manifest.indices),
        stock_nodes=stocks,
        stock_index_edges=index_edge_weights(manifest, prices),
        stock_stock_edges=stock_stock,
        lam=lam,
        built_on=built_on,
        diagnostics={
            "degenerate_correlation_pairs": int(degenerate_pairs),
            "edges_before_prune": len(stock_stock),
        },
    )
    pruned = prune_edges(network, mode=prune_mode)
    pruned.diagnostics["edges_after_prune"] = len(pruned.stock_stock_edges)
    pruned.validate()
    logger.info(
        "built network on %s: %d stocks, %d->%d stock edges",
        built_on,
        len(stocks),
        len(stock_stock),
        len(pruned.stock_stock_edges),
    )
    return pruned
