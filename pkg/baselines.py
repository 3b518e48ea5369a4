"""Comparison models: dummy, unit weighting, SETS checklists and a small MLP.

The mean-threshold ILP baseline is solver.solve_fixed_thresholds and the
logistic regression baseline is feature_select.fit_logistic.
"""
import logging
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np
from scipy.special import expit

from checklist import (
    Checklist,
    ConceptRule,
    FeatureMatrix,
    Labels,
    ObjectiveWeights,
    counts_from_predictions,
    objective_value,
)
from errors import DegenerateModelError, StructuralError, TrainingError
from feature_select import MAX_HALVINGS, TrainHyper, standardize, train_logistic

log = logging.getLogger(__name__)


def _labels_array(y) -> np.ndarray:
    return (y.y if isinstance(y, Labels) else np.asarray(y)).astype(np.float64)


# --------------------------------------------------------------------------
# Dummy


@dataclass(frozen=True)
class DummyClassifier:
    constant: int

    def predict(self, values: np.ndarray) -> np.ndarray:
        return np.full(len(values), self.constant, dtype=np.int8)

    def predict_proba(self, values: np.ndarray) -> np.ndarray:
        return np.full(len(values), float(self.constant))


def dummy_fit_predict(y_train) -> DummyClassifier:
    y = _labels_array(y_train)
    if y.size == 0:
        raise StructuralError("dummy classifier needs at least one training label")
    positives = int(y.sum())
    return DummyClassifier(1 if positives > y.size - positives else 0)


# --------------------------------------------------------------------------
# Unit weighting


@dataclass(frozen=True)
class UnitWeightingConfig:
    beta: float = 0.1
    weights: ObjectiveWeights = field(default_factory=ObjectiveWeights)

    def __post_init__(self):
        if self.beta < 0:
            raise StructuralError("beta must be >= 0")


def binarize_at(X: FeatureMatrix, thresholds) -> FeatureMatrix:
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if thresholds.shape != (X.d,):
        raise StructuralError(f"{thresholds.size} thresholds for {X.d} features")
    if not np.isfinite(thresholds).all():
        raise StructuralError("binarization thresholds must be finite")
    return FeatureMatrix((X.values > thresholds[None, :]).astype(np.float64), X.feature_names)


def checklist_from_weights(weights, thresholds, binary_X: FeatureMatrix, y, config: UnitWeightingConfig) -> Checklist:
    """Sign-threshold LR weights into rules, then pick M by training objective."""
    weights = np.asarray(weights, dtype=np.float64)
    active = np.flatnonzero(np.abs(weights) > config.beta)
    if active.size == 0:
        raise DegenerateModelError(
            f"every logistic weight lies within [-{config.beta:g}, {config.beta:g}]; try a smaller beta"
        )
    rules = tuple(ConceptRule(int(j), float(thresholds[j]), negated=bool(weights[j] < 0)) for j in active)
    binary = binary_X.values[:, active]
    satisfied = np.where(weights[active] < 0, 1.0 - binary, binary).sum(axis=1)
    labels = _labels_array(y)

    best_m, best_objective = 1, np.inf
    for m_required in range(1, len(rules) + 1):
        counts = counts_from_predictions(labels, satisfied >= m_required)
        objective = objective_value(counts, len(rules), m_required, config.weights)
        if objective < best_objective:
            best_m, best_objective = m_required, objective
    return Checklist(rules, best_m)


def unit_weighting(binary_X: FeatureMatrix, y, lr_hyper: TrainHyper, config: UnitWeightingConfig, thresholds) -> Checklist:
    Z, _, _ = standardize(binary_X)
    model = train_logistic(Z, y, lr_hyper)
    weights = np.zeros(binary_X.d)
    for name, w in zip(Z.feature_names, model.weights):
        weights[binary_X.index_of(name)] = w
    checklist = checklist_from_weights(weights, np.asarray(thresholds, dtype=np.float64), binary_X, y, config)
    log.info(f"Unit weighting: N={checklist.n_rules}, M={checklist.m_required}")
    return checklist


# --------------------------------------------------------------------------
# SETS: logistic regression over sigmoid((x - phi) / tau) features


@dataclass(frozen=True)
class SetsModel:
    phi: np.ndarray
    tau: float
    weights: np.ndarray
    bias: float
    scale: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.tau <= 0:
            raise StructuralError("SETS temperature must be > 0")
        if not np.isfinite(self.phi).all():
            raise StructuralError("SETS thresholds must be finite")

    def features(self, values: np.ndarray) -> np.ndarray:
        return sets_features(values, self.phi, self.tau, self.scale)

    def predict_proba(self, values: np.ndarray) -> np.ndarray:
        return expit(self.features(values) @ self.weights + self.bias)

    def to_dict(self):
        return {
            "phi": self.phi.tolist(),
            "tau": self.tau,
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "scale": None if self.scale is None else self.scale.tolist(),
        }


def sets_features(values, phi, tau, scale=None) -> np.ndarray:
    width = tau if scale is None else tau * np.asarray(scale, dtype=np.float64)
    return expit((np.asarray(values, dtype=np.float64) - phi) / width)


def sets_loss_grad(phi, weights, bias, values, y, tau, l2_strength, scale=None) -> Tuple[float, np.ndarray, np.ndarray, float]:
    """Log loss of the SETS model with its gradient in (phi, w, b)."""
    width = tau if scale is None else tau * np.asarray(scale, dtype=np.float64)
    S = expit((values - phi) / width)
    scores = S @ weights + bias
    n = len(y)
    loss = np.mean(np.logaddexp(0.0, scores) - y * scores) + 0.5 * l2_strength * weights @ weights
    residual = expit(scores) - y
    grad_w = S.T @ residual / n + l2_strength * weights
    grad_b = residual.mean()
    # d S_ij / d phi_j = -S_ij (1 - S_ij) / width_j
    grad_phi = -(residual[:, None] * S * (1.0 - S)).sum(axis=0) * weights / (n * width)
    return float(loss), grad_phi, grad_w, float(grad_b)


def sets_train(
    X: FeatureMatrix,
    y,
    tau: float,
    hyper: TrainHyper,
    scale=None,
    init_phi=None,
    freeze_phi: bool = False,
) -> SetsModel:
    """Joint gradient descent on thresholds and LR parameters, with step halving."""
    if tau <= 0:
        raise StructuralError("tau must be > 0")
    values = X.values
    labels = _labels_array(y)
    phi = values.mean(axis=0) if init_phi is None else np.asarray(init_phi, dtype=np.float64).copy()
    weights = np.zeros(X.d)
    bias = 0.0
    lr = hyper.learning_rate
    loss, g_phi, g_w, g_b = sets_loss_grad(phi, weights, bias, values, labels, tau, hyper.l2_strength, scale)
    if freeze_phi:
        g_phi = np.zeros_like(g_phi)

    for epoch in range(hyper.max_epochs):
        grad_norm = np.sqrt(g_phi @ g_phi + g_w @ g_w + g_b * g_b)
        if grad_norm <= hyper.tolerance:
            break
        for _ in range(MAX_HALVINGS):
            cand_phi = phi - lr * g_phi
            cand_w = weights - lr * g_w
            cand_b = bias - lr * g_b
            cand = sets_loss_grad(cand_phi, cand_w, cand_b, values, labels, tau, hyper.l2_strength, scale)
            if not np.isfinite(cand[0]):
                raise TrainingError(f"SETS training diverged at epoch {epoch}")
            if cand[0] <= loss:
                break
            lr *= 0.5
        else:
            break
        phi, weights, bias = cand_phi, cand_w, cand_b
        loss, g_phi, g_w, g_b = cand
        if freeze_phi:
            g_phi = np.zeros_like(g_phi)

    return SetsModel(
        phi=phi, tau=float(tau), weights=weights, bias=float(bias),
        scale=None if scale is None else np.asarray(scale, dtype=np.float64),
    )


def sets_to_checklist(model: SetsModel, X: FeatureMatrix, y, config: UnitWeightingConfig, lr_hyper: TrainHyper = TrainHyper()) -> Checklist:
    return unit_weighting(binarize_at(X, model.phi), y, lr_hyper, config, model.phi)


# --------------------------------------------------------------------------
# MLP


@dataclass(frozen=True)
class MlpHyper:
    hidden: int = 32
    epochs: int = 200
    batch_size: int = 64
    learning_rate: float = 0.05
    l2_strength: float = 0.0
    seed: int = 0


@dataclass
class MlpModel:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: float

    def params(self):
        return [self.w1, self.b1, self.w2, np.array([self.b2])]

    def to_dict(self):
        return {"w1": self.w1.tolist(), "b1": self.b1.tolist(), "w2": self.w2.tolist(), "b2": self.b2}


def mlp_forward(model: MlpModel, Z: np.ndarray):
    pre = Z @ model.w1 + model.b1
    hidden = np.maximum(pre, 0.0)
    return pre, hidden, hidden @ model.w2 + model.b2


def mlp_loss_grad(model: MlpModel, Z: np.ndarray, y: np.ndarray, l2_strength: float = 0.0):
    """Mean log loss and gradients (w1, b1, w2, b2)."""
    pre, hidden, scores = mlp_forward(model, Z)
    n = len(y)
    loss = np.mean(np.logaddexp(0.0, scores) - y * scores)
    loss += 0.5 * l2_strength * (np.sum(model.w1 ** 2) + model.w2 @ model.w2)
    residual = (expit(scores) - y) / n
    g_w2 = hidden.T @ residual + l2_strength * model.w2
    g_b2 = residual.sum()
    back = np.outer(residual, model.w2) * (pre > 0)
    g_w1 = Z.T @ back + l2_strength * model.w1
    g_b1 = back.sum(axis=0)
    return float(loss), (g_w1, g_b1, g_w2, float(g_b2))


def mlp_init(d: int, hidden: int, rng: np.random.Generator) -> MlpModel:
    """He-scaled random weights; identical hidden units would never separate."""
    return MlpModel(
        w1=rng.normal(0.0, np.sqrt(2.0 / d), size=(d, hidden)),
        b1=np.full(hidden, 0.01),
        w2=rng.normal(0.0, np.sqrt(1.0 / hidden), size=hidden),
        b2=0.0,
    )


def mlp_train(Z, y, hyper: MlpHyper) -> MlpModel:
    values = Z.values if isinstance(Z, FeatureMatrix) else np.asarray(Z, dtype=np.float64)
    labels = _labels_array(y)
    rng = np.random.default_rng(hyper.seed)
    model = mlp_init(values.shape[1], hyper.hidden, rng)
    n = len(labels)
    batch = max(1, min(hyper.batch_size, n))
    for epoch in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            loss, (g_w1, g_b1, g_w2, g_b2) = mlp_loss_grad(model, values[idx], labels[idx], hyper.l2_strength)
            if not np.isfinite(loss):
                raise TrainingError(f"MLP training diverged at epoch {epoch}")
            model.w1 = model.w1 - hyper.learning_rate * g_w1
            model.b1 = model.b1 - hyper.learning_rate * g_b1
            model.w2 = model.w2 - hyper.learning_rate * g_w2
            model.b2 = model.b2 - hyper.learning_rate * g_b2
        if epoch % 50 == 0:
            log.debug(f"MLP epoch {epoch}: batch loss {loss:.4f}")
    return model


def mlp_score(model: MlpModel, rows) -> np.ndarray:
    rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    return expit(mlp_forward(model, rows)[2])
