"""Random-forest movement classifier on quantile-binned features.

Classic bagged trees: each tree trains on a bootstrap sample drawn from a
per-tree seeded generator, split search examines a random feature subset
per node and picks the best Gini-impurity reduction over quantile-binned
thresholds, and the forest predicts by majority vote with ties going to
+1.  The builder is numba-compiled; binning caps the split-search cost so
the daily retraining loop over hundreds of stocks stays cheap.
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DegenerateModelError, InputError, InsufficientHistoryError

MAX_BINS = 32
MIN_TRAIN_DAYS = 30


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 6
    seed: int = 0
    min_train_days: int = MIN_TRAIN_DAYS


@njit(cache=True, nogil=True, inline="always")
def _next_state(state):
    state ^= state << 13
    state &= 0xFFFFFFFFFFFFFFFF
    state ^= state >> 7
    state ^= state << 17
    state &= 0xFFFFFFFFFFFFFFFF
    return state


@njit(cache=True, nogil=True)
def _build_trees(
    codes,  # (n, F) uint8 bin codes
    y01,  # (n,) uint8, 1 for +1 class
    n_bins,  # (F,) number of bins per feature
    seeds,  # (T,) uint64 per-tree seeds
    max_depth,
    m_feats,
    node_feat,  # (T, max_nodes) int16 out
    node_cut,  # (T, max_nodes) int16 out: go left iff code <= cut
    node_left,  # (T, max_nodes) int16 out
    node_vote,  # (T, max_nodes) int8 out
):
    n, F = codes.shape
    T = seeds.shape[0]
    order = np.empty(n, np.int64)
    feat_buf = np.empty(F, np.int64)
    hist = np.empty((MAX_BINS, 2), np.int64)
    stack = np.empty((2 * max_depth + 4, 4), np.int64)
    for t in range(T):
        state = seeds[t] | np.uint64(1)
        for i in range(n):
            state = _next_state(state)
            order[i] = np.int64(state % np.uint64(n))
        next_node = 1
        stack[0, 0] = 0
        stack[0, 1] = 0
        stack[0, 2] = n
        stack[0, 3] = 0
        top = 1
        while top > 0:
            top -= 1
            node = stack[top, 0]
            lo = stack[top, 1]
            hi = stack[top, 2]
            depth = stack[top, 3]
            cnt = hi - lo
            pos = 0
            for i in range(lo, hi):
                pos += y01[order[i]]
            node_left[t, node] = -1
            node_feat[t, node] = -1
            node_vote[t, node] = 1 if 2 * pos >= cnt else -1
            if depth >= max_depth or pos == 0 or pos == cnt or cnt < 2:
                continue
            for j in range(F):
                feat_buf[j] = j
            for j in range(m_feats):
                state = _next_state(state)
                k = j + np.int64(state % np.uint64(F - j))
                tmp = feat_buf[j]
                feat_buf[j] = feat_buf[k]
                feat_buf[k] = tmp
            parent = 1.0 - (pos / cnt) ** 2 - ((cnt - pos) / cnt) ** 2
            best_gain = 1e-12
            best_f = -1
            best_cut = -1
            for j in range(m_feats):
                f = feat_buf[j]
                nb = n_bins[f]
                if nb < 2:
                    continue
                for b in range(nb):
                    hist[b, 0] = 0
                    hist[b, 1] = 0
                for i in range(lo, hi):
                    idx = order[i]
                    hist[codes[idx, f], y01[idx]] += 1
                ln = 0
                lp = 0
                for b in range(nb - 1):
                    ln += hist[b, 0] + hist[b, 1]
                    lp += hist[b, 1]
                    if ln == 0 or ln == cnt:
                        continue
                    rn = cnt - ln
                    rp = pos - lp
                    gl = 1.0 - (lp / ln) ** 2 - ((ln - lp) / ln) ** 2
                    gr = 1.0 - (rp / rn) ** 2 - ((rn - rp) / rn) ** 2
                    gain = parent - (ln * gl + rn * gr) / cnt
                    if gain > best_gain:
                        best_gain = gain
                        best_f = f
                        best_cut = b
            if best_f < 0:
                continue
            i = lo
            j2 = hi - 1
            while i <= j2:
                if codes[order[i], best_f] <= best_cut:
                    i += 1
                else:
                    tmp = order[i]
                    order[i] = order[j2]
                    order[j2] = tmp
                    j2 -= 1
            mid = i
            node_feat[t, node] = best_f
            node_cut[t, node] = best_cut
            node_left[t, node] = next_node
            next_node += 2
            stack[top, 0] = node_left[t, node]
            stack[top, 1] = lo
            stack[top, 2] = mid
            stack[top, 3] = depth + 1
            top += 1
            stack[top, 0] = node_left[t, node] + 1
            stack[top, 1] = mid
            stack[top, 2] = hi
            stack[top, 3] = depth + 1
            top += 1


@njit(cache=True, nogil=True)
def _vote(codes, node_feat, node_cut, node_left, node_vote):
    T = node_feat.shape[0]
    n = codes.shape[0]
    out = np.zeros(n, np.int64)
    for t in range(T):
        for i in range(n):
            node = 0
            while node_feat[t, node] >= 0:
                if codes[i, node_feat[t, node]] <= node_cut[t, node]:
                    node = node_left[t, node]
                else:
                    node = node_left[t, node] + 1
            out[i] += node_vote[t, node]
    return out


def _quantile_cuts(column: np.ndarray, max_bins: int) -> np.ndarray:
    """Interior cut points; bin code = count of cuts <= value."""
    uniq = np.unique(column)
    if uniq.size <= 1:
        return np.empty(0)
    if uniq.size <= max_bins:
        return (uniq[:-1] + uniq[1:]) / 2.0
    qs = np.quantile(column, np.linspace(0.0, 1.0, max_bins + 1)[1:-1])
    return np.unique(qs)


class ForestModel:
    """Trained forest; `predict` majority-votes the trees, ties to +1."""

    def __init__(self, cuts, node_feat, node_cut, node_left, node_vote, config):
        self.cuts = cuts
        self.node_feat = node_feat
        self.node_cut = node_cut
        self.node_left = node_left
        self.node_vote = node_vote
        self.config = config

    @property
    def n_trees(self) -> int:
        return self.node_feat.shape[0]

    def _encode(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != len(self.cuts):
            raise InputError(
                f"expected {len(self.cuts)} features, got {X.shape[1]}"
            )
        codes = np.empty(X.shape, dtype=np.uint8)
        for f in range(X.shape[1]):
            codes[:, f] = np.searchsorted(self.cuts[f], X[:, f], side="right")
        return codes

    def predict(self, X: np.ndarray) -> np.ndarray:
        votes = _vote(
            self._encode(X), self.node_feat, self.node_cut, self.node_left, self.node_vote
        )
        return np.where(votes >= 0, 1, -1)


def train_forest(X: np.ndarray, y: np.ndarray, config: ForestConfig = ForestConfig()) -> ForestModel:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or len(X) != len(y):
        raise InputError("feature matrix and labels disagree in length")
    if len(X) < config.min_train_days:
        raise InsufficientHistoryError(
            f"need at least {config.min_train_days} training days, have {len(X)}"
        )
    if np.unique(y).size < 2:
        raise DegenerateModelError("training window contains a single class")

    n, F = X.shape
    cuts = [_quantile_cuts(X[:, f], MAX_BINS) for f in range(F)]
    codes = np.empty((n, F), dtype=np.uint8)
    n_bins = np.empty(F, dtype=np.int64)
    for f in range(F):
        codes[:, f] = np.searchsorted(cuts[f], X[:, f], side="right")
        n_bins[f] = len(cuts[f]) + 1
    y01 = (y > 0).astype(np.uint8)
    m_feats = math.ceil(math.sqrt(F))

    T = config.n_trees
    max_nodes = 2 ** (config.max_depth + 1)
    node_feat = np.full((T, max_nodes), -1, dtype=np.int16)
    node_cut = np.zeros((T, max_nodes), dtype=np.int16)
    node_left = np.full((T, max_nodes), -1, dtype=np.int16)
    node_vote = np.zeros((T, max_nodes), dtype=np.int8)
    seeds = np.array(
        [
            (config.seed * 0x9E3779B97F4A7C15 + (t + 1) * 0xBF58476D1CE4E5B9) % 2**64
            for t in range(T)
        ],
        dtype=np.uint64,
    )
    _build_trees(
        codes, y01, n_bins, seeds, config.max_depth, m_feats,
        node_feat, node_cut, node_left, node_vote,
    )
    return ForestModel(cuts, node_feat, node_cut, node_left, node_vote, config)
