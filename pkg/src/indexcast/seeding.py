"""Per-cluster seed-label selection and injection.

For every cluster, a forest is trained per member stock on the rolling
train window; each is scored on the validation window, the most
predictable member wins (ties to the lexicographically smaller ticker),
and its own forest's prediction for the anchor day becomes that stock's
seed label.  Clusters whose members all fail training are skipped.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .errors import DegenerateModelError, InputError
from .features import supervised_matrices
from .forest import ForestConfig, ForestModel, train_forest
from .market_data import rolling_windows
from .util import derived_seed

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SeedLabels:
    labels: dict  # {ticker: +1 | -1}
    provenance: dict = field(default_factory=dict)  # {ticker: (cluster, score)}


def predictability_score(model: ForestModel, X_val: np.ndarray, y_val: np.ndarray) -> float:
    """Fraction of correct day-ahead predictions over the validation window."""
    if len(X_val) == 0:
        raise InputError("empty validation window")
    return float(np.mean(model.predict(X_val) == np.asarray(y_val)))


def _fit_and_score(ticker, frame, labels, train_days, val_days, anchor_prev_row, config):
    X_tr, y_tr = supervised_matrices(frame, labels, train_days)
    X_va, y_va = supervised_matrices(frame, labels, val_days)
    try:
        model = train_forest(X_tr, y_tr, config)
    except DegenerateModelError:
        return ticker, None, None
    score = predictability_score(model, X_va, y_va)
    prediction = int(model.predict(anchor_prev_row[None, :])[0])
    return ticker, score, prediction


def score_stocks(
    tickers,
    frames: dict,
    labels: dict,
    anchor_day,
    config,
    n_jobs: int = 1,
) -> dict:
    """Train + score a forest per stock; {ticker: (score, anchor prediction)}.

    Stocks whose training window is single-class are flagged with None.
    Forest seeds derive from (global seed, anchor, ticker) so results are
    identical regardless of worker scheduling.
    """
    calendar = _shared_calendar(frames, tickers)
    train_days, val_days = rolling_windows(
        calendar, anchor_day, config.train_days, config.validation_days
    )
    jobs = []
    for t in sorted(tickers):
        frame = frames[t]
        idx = frame.index_of(anchor_day)
        if idx == 0:
            raise InputError(f"{t}: no feature day before anchor {anchor_day}")
        fc = ForestConfig(
            n_trees=config.forest.n_trees,
            max_depth=config.forest.max_depth,
            seed=derived_seed(config.forest.seed, "forest", anchor_day, t),
            min_train_days=config.forest.min_train_days,
        )
        jobs.append(
            (t, frame, labels[t], train_days, val_days, frame.vectors[idx - 1], fc)
        )
    if n_jobs == 1 or len(jobs) < 4:
        results = [_fit_and_score(*j) for j in jobs]
    else:
        results = Parallel(n_jobs=n_jobs, prefer="threads")(
            delayed(_fit_and_score)(*j) for j in jobs
        )
    return {t: (score, pred) for t, score, pred in results}


def _shared_calendar(frames: dict, tickers) -> tuple:
    first = frames[next(iter(sorted(tickers)))]
    return first.dates


def inject_seed_labels(
    network,
    clusters,
    frames: dict,
    labels: dict,
    anchor_day,
    config,
    n_jobs: int = 1,
) -> SeedLabels:
    """Run the per-cluster selection over the network's clustered stocks."""
    members = sorted(clusters.assignment)
    unknown = [t for t in members if t not in network.stock_nodes]
    if unknown:
        raise InputError(f"clustered stocks missing from network: {unknown[:5]}")
    scored = score_stocks(members, frames, labels, anchor_day, config, n_jobs=n_jobs)

    seed_labels = {}
    provenance = {}
    for cluster_id in range(clusters.k_clusters):
        best_ticker = None
        best_score = -1.0
        for t in clusters.members(cluster_id):
            score, _ = scored[t]
            if score is None:
                continue
            if score > best_score:
                best_ticker, best_score = t, score
        if best_ticker is None:
            logger.warning(
                "cluster %d skipped: every member has a single-class window", cluster_id
            )
            continue
        _, prediction = scored[best_ticker]
        seed_labels[best_ticker] = prediction
        provenance[best_ticker] = (cluster_id, best_score)
    return SeedLabels(labels=seed_labels, provenance=provenance)
