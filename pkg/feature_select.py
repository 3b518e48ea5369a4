"""Standardisation, L2 logistic regression and top-k feature selection."""
import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import pandas as pd
from scipy.special import expit

from checklist import FeatureMatrix, Labels
from errors import ConfigurationError, TrainingError

log = logging.getLogger(__name__)

MAX_HALVINGS = 40


@dataclass(frozen=True)
class TrainHyper:
    learning_rate: float = 1.0
    l2_strength: float = 1e-3
    max_epochs: int = 2000
    tolerance: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be > 0")
        if self.tolerance <= 0:
            raise ConfigurationError("tolerance must be > 0")


@dataclass(frozen=True)
class LRModel:
    weights: np.ndarray
    bias: float
    feature_means: np.ndarray
    feature_sds: np.ndarray
    feature_names: Tuple[str, ...] = ()

    def decision_function(self, values: np.ndarray) -> np.ndarray:
        Z = (np.asarray(values, dtype=np.float64) - self.feature_means) / self.feature_sds
        return Z @ self.weights + self.bias

    def predict_proba(self, values: np.ndarray) -> np.ndarray:
        return expit(self.decision_function(values))

    def predict(self, values: np.ndarray) -> np.ndarray:
        return (self.predict_proba(values) >= 0.5).astype(np.int8)

    def to_dict(self):
        return {
            "weights": self.weights.tolist(),
            "bias": float(self.bias),
            "feature_means": self.feature_means.tolist(),
            "feature_sds": self.feature_sds.tolist(),
            "feature_names": list(self.feature_names),
        }


def standardize(X: FeatureMatrix) -> Tuple[FeatureMatrix, np.ndarray, np.ndarray]:
    """Zero-mean, unit population-sd columns; constant columns are dropped."""
    means = X.values.mean(axis=0)
    sds = X.values.std(axis=0)
    keep = sds > 0
    if not keep.all():
        dropped = [name for name, ok in zip(X.feature_names, keep) if not ok]
        log.info(f"Standardize: dropping {len(dropped)} constant column(s): {', '.join(dropped)}")
    if not keep.any():
        raise TrainingError("every feature is constant; nothing to standardize")
    Z = (X.values[:, keep] - means[keep]) / sds[keep]
    names = tuple(name for name, ok in zip(X.feature_names, keep) if ok)
    return FeatureMatrix(Z, names), means[keep], sds[keep]


def logistic_loss_grad(weights, bias, Z, y, l2_strength) -> Tuple[float, np.ndarray, float]:
    """Mean log loss + (l2/2)||w||^2, with its gradient in (w, b)."""
    scores = Z @ weights + bias
    loss = np.mean(np.logaddexp(0.0, scores) - y * scores) + 0.5 * l2_strength * weights @ weights
    residual = expit(scores) - y
    grad_w = Z.T @ residual / len(y) + l2_strength * weights
    grad_b = residual.mean()
    return float(loss), grad_w, float(grad_b)


def _as_arrays(Z, y):
    values = Z.values if isinstance(Z, FeatureMatrix) else np.asarray(Z, dtype=np.float64)
    labels = y.y if isinstance(y, Labels) else np.asarray(y)
    return values, labels.astype(np.float64)


def train_logistic(Z, y, hyper: TrainHyper, feature_means=None, feature_sds=None) -> LRModel:
    """Full-batch gradient descent; a step that raises the loss is retried at half the rate."""
    values, labels = _as_arrays(Z, y)
    n, d = values.shape
    weights = np.zeros(d)
    bias = 0.0
    lr = hyper.learning_rate
    loss, grad_w, grad_b = logistic_loss_grad(weights, bias, values, labels, hyper.l2_strength)

    for epoch in range(hyper.max_epochs):
        grad_norm = np.sqrt(grad_w @ grad_w + grad_b * grad_b)
        if grad_norm <= hyper.tolerance:
            log.debug(f"Logistic regression converged after {epoch} epochs")
            break
        for _ in range(MAX_HALVINGS):
            cand_w = weights - lr * grad_w
            cand_b = bias - lr * grad_b
            cand = logistic_loss_grad(cand_w, cand_b, values, labels, hyper.l2_strength)
            if not np.isfinite(cand[0]):
                raise TrainingError(f"logistic regression diverged at epoch {epoch}")
            if cand[0] <= loss:
                break
            lr *= 0.5
        else:
            log.debug("Logistic regression step size underflowed; stopping")
            break
        weights, bias = cand_w, cand_b
        loss, grad_w, grad_b = cand

    names = Z.feature_names if isinstance(Z, FeatureMatrix) else ()
    return LRModel(
        weights=weights,
        bias=float(bias),
        feature_means=np.zeros(d) if feature_means is None else np.asarray(feature_means, dtype=np.float64),
        feature_sds=np.ones(d) if feature_sds is None else np.asarray(feature_sds, dtype=np.float64),
        feature_names=tuple(names),
    )


def fit_logistic(X: FeatureMatrix, y, hyper: TrainHyper) -> LRModel:
    """Standardize then train; the model scores raw feature rows."""
    Z, means, sds = standardize(X)
    return train_logistic(Z, y, hyper, feature_means=means, feature_sds=sds)


def select_top_k(model: LRModel, k: int) -> List[int]:
    d = len(model.weights)
    if k > d:
        raise ConfigurationError(f"cannot select {k} features out of {d}")
    magnitude = np.abs(model.weights)
    order = np.lexsort((np.arange(d), -magnitude))
    return [int(j) for j in order[:k]]


def select_features(X: FeatureMatrix, y, k: int, hyper: TrainHyper) -> Tuple[List[int], pd.DataFrame, LRModel]:
    """Top-k columns of X by |standardized LR coefficient|, plus the selection manifest."""
    model = fit_logistic(X, y, hyper)
    k = min(k, len(model.weights))
    top = select_top_k(model, k)
    names = [model.feature_names[j] for j in top]
    manifest = pd.DataFrame({
        "rank": range(1, len(top) + 1),
        "feature_name": names,
        "coefficient": [float(model.weights[j]) for j in top],
    })
    log.info(f"Selected features: {', '.join(names)}")
    return [X.index_of(name) for name in names], manifest, model
