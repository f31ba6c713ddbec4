"""Current-state similarity graph and spectral partitioning of the stocks.

The similarity network is an RBF k-nearest-neighbor graph over each
stock's latest signal feature vector, union-symmetrized.  Clustering uses
the symmetric normalized Laplacian: the eigenvectors of the smallest
k eigenvalues are stacked, row-normalized, and grouped by k-means
(k-means++ seeding, 50 restarts, deterministic RNG, best inertia kept).
"""

from dataclasses import dataclass

import numpy as np

from .errors import InputError

KMEANS_RESTARTS = 50
KMEANS_MAX_ITER = 300


@dataclass(frozen=True)
class SimilarityNetwork:
    nodes: tuple
    edges: dict  # {(a, b) sorted: similarity in (0, 1]}
    k_neighbors: int

    def weight_matrix(self) -> np.ndarray:
        index = {t: i for i, t in enumerate(self.nodes)}
        W = np.zeros((len(self.nodes), len(self.nodes)))
        for (a, b), w in self.edges.items():
            W[index[a], index[b]] = w
            W[index[b], index[a]] = w
        return W


@dataclass(frozen=True)
class ClusterAssignment:
    assignment: dict  # {ticker: cluster id}
    k_clusters: int

    def __post_init__(self):
        ids = set(self.assignment.values())
        if ids and (min(ids) < 0 or max(ids) >= self.k_clusters):
            raise InputError("cluster id out of range")
        if len(ids) != self.k_clusters:
            raise InputError("empty cluster in assignment")

    def members(self, cluster_id: int) -> tuple:
        return tuple(sorted(t for t, c in self.assignment.items() if c == cluster_id))


def rbf_similarity(x_i: np.ndarray, x_j: np.ndarray, gamma: float) -> float:
    x_i = np.asarray(x_i, dtype=np.float64)
    x_j = np.asarray(x_j, dtype=np.float64)
    if x_i.shape != x_j.shape:
        raise InputError("feature vectors differ in dimension")
    if gamma <= 0:
        raise InputError(f"gamma must be positive, got {gamma}")
    d = x_i - x_j
    return float(np.exp(-gamma * (d @ d)))


def median_gamma(vectors: np.ndarray) -> float:
    """1 / median pairwise squared distance (1.0 when all points coincide)."""
    sq = _pairwise_sq_dists(vectors)
    upper = sq[np.triu_indices(len(vectors), k=1)]
    med = float(np.median(upper)) if upper.size else 0.0
    return 1.0 / med if med > 0 else 1.0


def _pairwise_sq_dists(X: np.ndarray) -> np.ndarray:
    norms = (X * X).sum(axis=1)
    sq = norms[:, None] + norms[None, :] - 2.0 * (X @ X.T)
    return np.maximum(sq, 0.0)


def build_similarity_network(
    vectors: dict, k_neighbors: int, gamma: float = None
) -> SimilarityNetwork:
    """Union-symmetrized RBF kNN graph over {ticker: feature vector}."""
    tickers = sorted(vectors)
    n = len(tickers)
    if n < k_neighbors + 1:
        raise InputError(f"need at least {k_neighbors + 1} stocks, have {n}")
    X = np.stack([np.asarray(vectors[t], dtype=np.float64) for t in tickers])
    if gamma is None:
        gamma = median_gamma(X)
    if gamma <= 0:
        raise InputError(f"gamma must be positive, got {gamma}")
    sim = np.exp(-gamma * _pairwise_sq_dists(X))
    edges = {}
    for i, t in enumerate(tickers):
        # k most similar others, enumerated by (similarity, ticker); a tie
        # with the k-th pick keeps every equally-similar candidate
        candidates = sorted(
            (j for j in range(n) if j != i), key=lambda j: (-sim[i, j], tickers[j])
        )
        cutoff = sim[i, candidates[k_neighbors - 1]]
        for rank, j in enumerate(candidates):
            if rank >= k_neighbors and sim[i, j] < cutoff:
                break
            key = (min(t, tickers[j]), max(t, tickers[j]))
            edges[key] = float(sim[min(i, j), max(i, j)])
    return SimilarityNetwork(nodes=tuple(tickers), edges=edges, k_neighbors=k_neighbors)


def normalized_laplacian(W: np.ndarray) -> np.ndarray:
    """Symmetric normalized Laplacian I - D^(-1/2) W D^(-1/2)."""
    degrees = W.sum(axis=1)
    inv_sqrt = np.where(degrees > 0, 1.0 / np.sqrt(np.where(degrees > 0, degrees, 1.0)), 0.0)
    L = np.eye(len(W)) - inv_sqrt[:, None] * W * inv_sqrt[None, :]
    return 0.5 * (L + L.T)


def spectral_embedding(W: np.ndarray, k: int) -> tuple:
    """Row-normalized matrix of the k smallest-eigenvalue eigenvectors.

    Returns (embedding, eigenvalues).  Eigenvector signs are fixed so the
    entry of largest magnitude is positive, for reproducibility.
    """
    L = normalized_laplacian(W)
    eigenvalues, eigenvectors = np.linalg.eigh(L)
    U = eigenvectors[:, :k].copy()
    for col in range(U.shape[1]):
        pivot = np.argmax(np.abs(U[:, col]))
        if U[pivot, col] < 0:
            U[:, col] = -U[:, col]
    norms = np.linalg.norm(U, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    return U / safe[:, None], eigenvalues


def spectral_clustering(sn: SimilarityNetwork, k_clusters: int, seed: int = 0) -> ClusterAssignment:
    n = len(sn.nodes)
    if k_clusters < 1 or k_clusters > n:
        raise InputError(f"k_clusters must be in [1, {n}], got {k_clusters}")
    if k_clusters == 1:
        return ClusterAssignment({t: 0 for t in sn.nodes}, 1)
    W = sn.weight_matrix()
    embedding, _ = spectral_embedding(W, k_clusters)
    labels = kmeans(embedding, k_clusters, seed=seed)
    # canonical cluster ids: order of first appearance over sorted tickers
    remap = {}
    assignment = {}
    for t, lbl in zip(sn.nodes, labels):
        if lbl not in remap:
            remap[lbl] = len(remap)
        assignment[t] = remap[lbl]
    return ClusterAssignment(assignment, k_clusters)


def cluster_graph_nodes(
    nodes: tuple, edges: dict, k_clusters: int, seed: int = 0
) -> ClusterAssignment:
    """Spectral clustering of an arbitrary weighted graph (negative weights
    clamped to zero), used by the prediction-network clustering variant."""
    sn_edges = {pair: max(0.0, w) for pair, w in edges.items()}
    sn = SimilarityNetwork(nodes=tuple(sorted(nodes)), edges=sn_edges, k_neighbors=0)
    return spectral_clustering(sn, k_clusters, seed=seed)


def kmeans(
    X: np.ndarray,
    k: int,
    seed: int = 0,
    restarts: int = KMEANS_RESTARTS,
    max_iter: int = KMEANS_MAX_ITER,
) -> np.ndarray:
    """Lloyd's algorithm with k-means++ seeding; best of `restarts` by inertia."""
    n = len(X)
    if k > n:
        raise InputError(f"k={k} exceeds {n} points")
    rng = np.random.default_rng(seed)
    best_labels = None
    best_inertia = np.inf
    for _ in range(restarts):
        centers = _kmeanspp_init(X, k, rng)
        labels = np.zeros(n, dtype=np.int64)
        for _ in range(max_iter):
            d = _pairwise_sq_dists_to(X, centers)
            new_labels = d.argmin(axis=1)
            for c in range(k):
                mask = new_labels == c
                if mask.any():
                    centers[c] = X[mask].mean(axis=0)
                else:
                    # re-seat an empty cluster at the point farthest from its center
                    far = int(d[np.arange(n), new_labels].argmax())
                    centers[c] = X[far]
                    new_labels[far] = c
                    d[far, :] = 0.0  # keep later empty clusters from re-picking it
            if np.array_equal(new_labels, labels):
                break
            labels = new_labels
        inertia = float(
            np.sum((X - centers[labels]) ** 2)
        )
        if inertia < best_inertia - 1e-12:
            best_inertia = inertia
            best_labels = labels.copy()
    return best_labels


def _kmeanspp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    centers = np.empty((k, X.shape[1]))
    first = int(rng.integers(n))
    centers[0] = X[first]
    closest = ((X - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = closest.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centers[c] = X[idx]
        closest = np.minimum(closest, ((X - centers[c]) ** 2).sum(axis=1))
    return centers


def _pairwise_sq_dists_to(X: np.ndarray, centers: np.ndarray) -> np.ndarray:
    return (
        (X * X).sum(axis=1)[:, None]
        - 2.0 * X @ centers.T
        + (centers * centers).sum(axis=1)[None, :]
    )
