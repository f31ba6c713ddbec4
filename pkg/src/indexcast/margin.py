"""Deterministic soft-margin linear classifier for the influence pass.

L2-regularized squared-hinge linear SVM solved in the primal with L-BFGS
on per-window standardized features.  There is no randomness in the
solver, so fits are bit-reproducible regardless of call order.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import DegenerateModelError, InputError


@dataclass(frozen=True)
class MarginConfig:
    c: float = 1.0
    max_iter: int = 200
    tol: float = 1e-10
    seed: int = 0  # kept for config parity; the solver draws no randomness


class MarginClassifier:
    """Fitted linear decision rule; predictions are in {-1, +1}."""

    def __init__(self, weights: np.ndarray, bias: float, mean: np.ndarray, scale: np.ndarray):
        self.weights = weights
        self.bias = bias
        self.mean = mean
        self.scale = scale

    def decision(self, X: np.ndarray) -> np.ndarray:
        Z = (np.atleast_2d(X) - self.mean) / self.scale
        return Z @ self.weights + self.bias

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.where(self.decision(X) >= 0, 1, -1)


def train_margin_classifier(
    X: np.ndarray, y: np.ndarray, config: MarginConfig = MarginConfig()
) -> MarginClassifier:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or len(X) != len(y):
        raise InputError("feature matrix and labels disagree in length")
    classes = np.unique(y)
    if classes.size < 2:
        raise DegenerateModelError("training window contains a single class")
    if not np.isin(classes, (-1, 1)).all():
        raise InputError(f"labels must be in {{-1,+1}}, got {classes}")
    if np.count_nonzero(y > 0) < 2 or np.count_nonzero(y < 0) < 2:
        raise DegenerateModelError("need at least 2 examples of each class")

    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0.0] = 1.0
    Z = (X - mean) / scale
    n, d = Z.shape
    c = config.c

    def objective(wb):
        w, b = wb[:d], wb[d]
        viol = np.maximum(1.0 - y * (Z @ w + b), 0.0)
        loss = 0.5 * (w @ w) + c * (viol @ viol)
        grad_w = w - 2.0 * c * ((y * viol) @ Z)
        grad_b = -2.0 * c * (y * viol).sum()
        return loss, np.concatenate([grad_w, [grad_b]])

    res = minimize(
        objective,
        np.zeros(d + 1),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": config.max_iter, "ftol": config.tol, "gtol": 1e-9},
    )
    wb = res.x
    return MarginClassifier(weights=wb[:d], bias=float(wb[d]), mean=mean, scale=scale)


def classification_accuracy(model: MarginClassifier, X: np.ndarray, y: np.ndarray) -> float:
    if len(X) == 0:
        raise InputError("empty evaluation window")
    return float(np.mean(model.predict(X) == np.asarray(y)))
