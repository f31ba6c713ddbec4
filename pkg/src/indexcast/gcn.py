"""Two-layer graph convolutional classifier over the stock graph.

Forward pass: Y = softmax(P . relu(P X W0) . W1) with P the
self-loop-augmented, symmetrically normalized adjacency of the stock
subgraph.  Training minimizes cross-entropy summed over the seeded rows
plus an L2 penalty, by full-batch adaptive-moment gradient steps from a
Glorot-uniform start.  Class 0 encodes a rise (+1), class 1 a fall (-1).
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, InputError

logger = logging.getLogger(__name__)

HIDDEN_CHANNELS = 4
OUTPUT_CLASSES = 2
LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    epochs: int = 200
    dropout_rate: float = 0.5
    l2_coefficient: float = 5e-4
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise InputError("learning_rate must be positive")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InputError("dropout_rate must be in [0, 1)")
        if self.epochs < 1:
            raise InputError("epochs must be >= 1")


@dataclass(frozen=True)
class GcnParams:
    w0: np.ndarray  # (n_features, HIDDEN_CHANNELS)
    w1: np.ndarray  # (HIDDEN_CHANNELS, OUTPUT_CLASSES)

    def __post_init__(self):
        if not (np.isfinite(self.w0).all() and np.isfinite(self.w1).all()):
            raise InputError("non-finite parameter entries")
        if self.w0.shape[1] != self.w1.shape[0]:
            raise InputError("hidden dimensions of w0 and w1 disagree")


@dataclass(frozen=True)
class NormalizedAdjacency:
    matrix: np.ndarray
    nodes: tuple

    def __post_init__(self):
        n = len(self.nodes)
        if self.matrix.shape != (n, n):
            raise InputError("adjacency shape does not match node count")


def normalized_adjacency(network) -> NormalizedAdjacency:
    """Propagation matrix over the stock subgraph (index nodes excluded).

    Negative blended edge weights are clamped to zero before the self-loop
    augmented symmetric normalization, so node degrees stay positive.
    """
    nodes = tuple(network.stock_nodes)
    weights = {
        pair: max(0.0, w) for pair, w in network.stock_stock_edges.items()
    }
    return _normalize(nodes, weights)


def normalized_adjacency_with_indices(network) -> NormalizedAdjacency:
    """Variant used by the indices-as-ordinary-nodes ablation: index nodes
    join the graph with their stock-index edges as adjacency entries."""
    nodes = tuple(network.index_nodes) + tuple(network.stock_nodes)
    weights = {pair: max(0.0, w) for pair, w in network.stock_stock_edges.items()}
    for (ix, s), w in network.stock_index_edges.items():
        key = (min(ix, s), max(ix, s))
        weights[key] = max(0.0, w)
    return _normalize(nodes, weights)


def _normalize(nodes: tuple, weights: dict) -> NormalizedAdjacency:
    n = len(nodes)
    index = {t: i for i, t in enumerate(nodes)}
    A = np.zeros((n, n))
    for (a, b), w in weights.items():
        if a == b:
            raise InputError(f"self-edge on {a}")
        A[index[a], index[b]] = w
        A[index[b], index[a]] = w
    if not np.isfinite(A).all():
        raise InputError("non-finite edge weight")
    A_tilde = A + np.eye(n)
    inv_sqrt = 1.0 / np.sqrt(A_tilde.sum(axis=1))
    P = inv_sqrt[:, None] * A_tilde * inv_sqrt[None, :]
    return NormalizedAdjacency(matrix=0.5 * (P + P.T), nodes=nodes)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def gcn_forward(
    adj: NormalizedAdjacency,
    X: np.ndarray,
    params: GcnParams,
    dropout_mask: np.ndarray = None,
    dropout_rate: float = 0.0,
) -> np.ndarray:
    """Row-stochastic class probabilities, one row per node."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != len(adj.nodes):
        raise InputError("feature rows do not match adjacency nodes")
    if X.shape[1] != params.w0.shape[0]:
        raise InputError("feature width does not match w0")
    hidden = np.maximum(adj.matrix @ X @ params.w0, 0.0)
    if dropout_mask is not None:
        hidden = hidden * dropout_mask / (1.0 - dropout_rate)
    logits = adj.matrix @ hidden @ params.w1
    return _softmax_rows(logits)


def seed_matrix(nodes: tuple, seeds) -> tuple:
    """(one-hot label matrix, row mask) for the seeded nodes."""
    Z = np.zeros((len(nodes), OUTPUT_CLASSES))
    mask = np.zeros(len(nodes), dtype=bool)
    index = {t: i for i, t in enumerate(nodes)}
    for ticker, label in seeds.labels.items():
        if ticker not in index:
            raise InputError(f"seeded stock {ticker} is not a graph node")
        row = index[ticker]
        Z[row, 0 if label > 0 else 1] = 1.0
        mask[row] = True
    return Z, mask


def masked_cross_entropy(
    Y: np.ndarray, nodes: tuple, seeds, l2_coefficient: float, params: GcnParams
) -> float:
    """Cross-entropy over seeded rows plus an L2 penalty on both layers."""
    Z, mask = seed_matrix(nodes, seeds)
    ce = -np.sum(Z[mask] * np.log(np.maximum(Y[mask], LOG_FLOOR)))
    reg = 0.5 * l2_coefficient * (np.sum(params.w0 ** 2) + np.sum(params.w1 ** 2))
    return float(ce + reg)


def _loss_and_grads(
    w0, w1, adj_matrix, X, Z, mask, l2, dropout_mask=None, dropout_rate=0.0
):
    PX = adj_matrix @ X
    pre = PX @ w0
    hidden = np.maximum(pre, 0.0)
    if dropout_mask is not None:
        scale = dropout_mask / (1.0 - dropout_rate)
        dropped = hidden * scale
    else:
        scale = None
        dropped = hidden
    PH = adj_matrix @ dropped
    logits = PH @ w1
    Y = _softmax_rows(logits)
    ce = -np.sum(Z[mask] * np.log(np.maximum(Y[mask], LOG_FLOOR)))
    loss = ce + 0.5 * l2 * (np.sum(w0 ** 2) + np.sum(w1 ** 2))

    G = (Y - Z) * mask[:, None]  # d loss / d logits
    grad_w1 = PH.T @ G + l2 * w1
    d_dropped = adj_matrix @ (G @ w1.T)
    d_hidden = d_dropped * scale if scale is not None else d_dropped
    d_pre = d_hidden * (pre > 0)
    grad_w0 = PX.T @ d_pre + l2 * w0
    return loss, grad_w0, grad_w1, Y


def train_gcn(
    adj: NormalizedAdjacency, X: np.ndarray, seeds, config: TrainConfig
) -> tuple:
    """Fit the two-layer model to the seeded rows.

    Returns (GcnParams, per-epoch loss list).  A fresh dropout mask is
    drawn each epoch from the seeded generator; weights start Glorot
    uniform from the same generator.
    """
    X = np.asarray(X, dtype=np.float64)
    Z, mask = seed_matrix(adj.nodes, seeds)
    if not mask.any():
        raise InputError("no seed labels provided")
    if len(set(seeds.labels.values())) < 2:
        logger.warning("seed set is single-class; training will be one-sided")
    rng = np.random.default_rng(config.seed)
    w0 = glorot_uniform(rng, X.shape[1], HIDDEN_CHANNELS)
    w1 = glorot_uniform(rng, HIDDEN_CHANNELS, OUTPUT_CLASSES)

    m0 = np.zeros_like(w0)
    v0 = np.zeros_like(w0)
    m1 = np.zeros_like(w1)
    v1 = np.zeros_like(w1)
    losses = []
    for epoch in range(config.epochs):
        if config.dropout_rate > 0.0:
            dropout_mask = (
                rng.random((X.shape[0], HIDDEN_CHANNELS)) >= config.dropout_rate
            ).astype(np.float64)
        else:
            dropout_mask = None
        loss, g0, g1, _ = _loss_and_grads(
            w0, w1, adj.matrix, X, Z, mask, config.l2_coefficient,
            dropout_mask, config.dropout_rate,
        )
        if not np.isfinite(loss):
            raise DivergenceError(epoch, config.learning_rate)
        losses.append(float(loss))
        t = epoch + 1
        for w, g, m, v in ((w0, g0, m0, v0), (w1, g1, m1, v1)):
            m *= config.beta1
            m += (1 - config.beta1) * g
            v *= config.beta2
            v += (1 - config.beta2) * g * g
            m_hat = m / (1 - config.beta1 ** t)
            v_hat = v / (1 - config.beta2 ** t)
            w -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return GcnParams(w0=w0, w1=w1), losses


def predict_stock_labels(params: GcnParams, adj: NormalizedAdjacency, X: np.ndarray) -> dict:
    """Hard labels per node: argmax row class, ties resolved to +1 (rise)."""
    Y = gcn_forward(adj, X, params)
    return {
        node: (1 if Y[i, 0] >= Y[i, 1] else -1) for i, node in enumerate(adj.nodes)
    }
