"""M-of-N predictive checklists over thresholded continuous features.

A checklist predicts positive for a row when at least ``m_required`` of its
rules hold.  A rule on feature j holds when ``x_j > threshold``; a value
equal to the threshold does not satisfy the rule.
"""
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from errors import StructuralError


@dataclass(frozen=True)
class FeatureMatrix:
    values: np.ndarray
    feature_names: Tuple[str, ...]

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise StructuralError(f"feature matrix must be 2-D, got shape {values.shape}")
        n, d = values.shape
        if n < 1 or d < 1:
            raise StructuralError(f"feature matrix needs n >= 1 and d >= 1, got {n}x{d}")
        names = tuple(str(name) for name in self.feature_names)
        if len(names) != d:
            raise StructuralError(f"{len(names)} feature names for {d} columns")
        if len(set(names)) != d:
            raise StructuralError("feature names must be unique")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.values).all())

    def require_finite(self):
        if not self.is_finite():
            raise StructuralError("feature matrix contains missing or non-finite values")

    def select(self, columns: Sequence[int]) -> "FeatureMatrix":
        columns = list(columns)
        return FeatureMatrix(self.values[:, columns], tuple(self.feature_names[j] for j in columns))

    def index_of(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise StructuralError(f"unknown feature '{name}'") from None


@dataclass(frozen=True)
class Labels:
    y: np.ndarray
    pos_indices: np.ndarray = field(init=False)
    neg_indices: np.ndarray = field(init=False)

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.ndim != 1 or y.size < 1:
            raise StructuralError("labels must be a non-empty 1-D array")
        if not np.isin(y, (0, 1)).all():
            raise StructuralError("labels must be 0 or 1")
        y = y.astype(np.int8)
        y.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "pos_indices", np.flatnonzero(y == 1))
        object.__setattr__(self, "neg_indices", np.flatnonzero(y == 0))

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def is_positive(self) -> np.ndarray:
        return self.y == 1


@dataclass(frozen=True)
class ConceptRule:
    feature_index: int
    threshold: float
    # Complement rules ("x <= t") only come out of unit weighting.
    negated: bool = False

    def __post_init__(self):
        if int(self.feature_index) < 0:
            raise StructuralError(f"negative feature index {self.feature_index}")
        if not np.isfinite(self.threshold):
            raise StructuralError(f"rule threshold must be finite, got {self.threshold}")
        object.__setattr__(self, "feature_index", int(self.feature_index))
        object.__setattr__(self, "threshold", float(self.threshold))

    def describe(self, feature_names: Optional[Sequence[str]] = None) -> str:
        name = feature_names[self.feature_index] if feature_names else f"x{self.feature_index}"
        op = "<=" if self.negated else ">"
        return f"{name} {op} {self.threshold:.6g}"


@dataclass(frozen=True)
class Checklist:
    rules: Tuple[ConceptRule, ...]
    m_required: int

    def __post_init__(self):
        rules = tuple(self.rules)
        m = int(self.m_required)
        if not 1 <= m <= len(rules):
            raise StructuralError(f"need 1 <= M <= N, got M={m}, N={len(rules)}")
        features = [rule.feature_index for rule in rules]
        if len(set(features)) != len(features):
            raise StructuralError("a checklist holds at most one rule per feature")
        object.__setattr__(self, "rules", rules)
        object.__setattr__(self, "m_required", m)

    @property
    def n_rules(self) -> int:
        return len(self.rules)

    @property
    def feature_indices(self) -> Tuple[int, ...]:
        return tuple(rule.feature_index for rule in self.rules)

    def to_text(self, feature_names: Optional[Sequence[str]] = None) -> str:
        lines = [rule.describe(feature_names) for rule in self.rules]
        lines.append(f"{self.m_required} of {self.n_rules} required")
        return "\n".join(lines) + "\n"

    def to_dict(self, feature_names: Optional[Sequence[str]] = None) -> Dict:
        rules = []
        for rule in self.rules:
            entry = {
                "feature_index": rule.feature_index,
                "threshold": rule.threshold,
                "negated": rule.negated,
            }
            if feature_names:
                entry["feature_name"] = feature_names[rule.feature_index]
            rules.append(entry)
        return {"rules": rules, "m_required": self.m_required, "n_rules": self.n_rules}

    @classmethod
    def from_dict(cls, data: Dict) -> "Checklist":
        rules = tuple(
            ConceptRule(entry["feature_index"], entry["threshold"], bool(entry.get("negated", False)))
            for entry in data["rules"]
        )
        return cls(rules, int(data["m_required"]))


@dataclass(frozen=True)
class ObjectiveWeights:
    lam: float = 1.0
    eps_n: float = 0.0
    eps_m: float = 0.0

    def __post_init__(self):
        for name in ("lam", "eps_n", "eps_m"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value < 0:
                raise StructuralError(f"objective weight {name} must be finite and >= 0, got {value}")
            object.__setattr__(self, name, value)

    @classmethod
    def with_default_eps(cls, lam: float, d: int) -> "ObjectiveWeights":
        """eps_N = eps_M = min(1, lambda) / (4d): size penalties stay below one mistake."""
        eps = min(1.0, float(lam)) / (4 * max(int(d), 1))
        return cls(lam, eps, eps)


@dataclass(frozen=True)
class EvalCounts:
    l_plus: int
    l_minus: int
    tp: int
    fp: int
    tn: int
    fn: int


def _check_rules(rules: Sequence[ConceptRule], d: int):
    for rule in rules:
        if rule.feature_index >= d:
            raise StructuralError(f"rule on feature {rule.feature_index} but the row has {d} values")


def apply_concepts(row, rules: Sequence[ConceptRule]) -> np.ndarray:
    row = np.asarray(row, dtype=np.float64)
    _check_rules(rules, row.shape[-1])
    out = np.zeros(len(rules), dtype=np.int8)
    for k, rule in enumerate(rules):
        value = row[rule.feature_index]
        out[k] = value <= rule.threshold if rule.negated else value > rule.threshold
    return out


def concept_matrix(values: np.ndarray, rules: Sequence[ConceptRule]) -> np.ndarray:
    """Row-wise apply_concepts for an n x d array, returned as n x N int8."""
    values = np.asarray(values, dtype=np.float64)
    _check_rules(rules, values.shape[1])
    out = np.zeros((values.shape[0], len(rules)), dtype=np.int8)
    for k, rule in enumerate(rules):
        column = values[:, rule.feature_index]
        out[:, k] = column <= rule.threshold if rule.negated else column > rule.threshold
    return out


def predict(checklist: Checklist, row) -> int:
    return int(apply_concepts(row, checklist.rules).sum() >= checklist.m_required)


def predict_matrix(checklist: Checklist, values: np.ndarray) -> np.ndarray:
    return (concept_matrix(values, checklist.rules).sum(axis=1) >= checklist.m_required).astype(np.int8)


def counts_from_predictions(y: np.ndarray, y_hat: np.ndarray) -> EvalCounts:
    y = np.asarray(y).astype(bool)
    y_hat = np.asarray(y_hat).astype(bool)
    if y.shape != y_hat.shape:
        raise StructuralError(f"{y.size} labels but {y_hat.size} predictions")
    tp = int(np.sum(y & y_hat))
    fn = int(np.sum(y & ~y_hat))
    fp = int(np.sum(~y & y_hat))
    tn = int(np.sum(~y & ~y_hat))
    return EvalCounts(l_plus=fn, l_minus=fp, tp=tp, fp=fp, tn=tn, fn=fn)


def evaluate_counts(checklist: Checklist, X: FeatureMatrix, y: Labels) -> EvalCounts:
    if X.n != y.n:
        raise StructuralError(f"feature matrix has {X.n} rows but there are {y.n} labels")
    return counts_from_predictions(y.y, predict_matrix(checklist, X.values))


def objective_from_counts(l_plus, l_minus, n_rules, m_required, weights: ObjectiveWeights):
    """l+ + lambda l- + eps_N N + eps_M M; works on scalars and numpy arrays alike.

    The solver's bounds go through this same expression so that equal
    integer inputs always produce bit-identical floats.
    """
    return l_plus + weights.lam * l_minus + weights.eps_n * n_rules + weights.eps_m * m_required


def objective_value(counts: EvalCounts, n_rules: int, m_required: int, weights: ObjectiveWeights) -> float:
    return float(objective_from_counts(counts.l_plus, counts.l_minus, n_rules, m_required, weights))


def add_negated_features(X: FeatureMatrix) -> FeatureMatrix:
    """Append a negated copy of every column so "x > t" rules can express "x < -t"."""
    values = np.hstack([X.values, -X.values])
    names = X.feature_names + tuple(f"neg_{name}" for name in X.feature_names)
    return FeatureMatrix(values, names)
