"""Test-split metrics, operating points, fold aggregation and report tables."""
import logging
from dataclasses import asdict, dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.metrics import (
    accuracy_score,
    confusion_matrix,
    precision_recall_curve,
    precision_score,
    recall_score,
)

from artifacts import atomic_write_csv, atomic_write_text
from errors import StructuralError, UndefinedMetricError
from plots import threshold_chart_svg

log = logging.getLogger(__name__)

METRIC_NAMES = ("accuracy", "precision", "recall", "specificity")
SIZE_NAMES = ("n_rules", "m_required")
CLIP_LOW, CLIP_HIGH = -0.1, 1.1


@dataclass(frozen=True)
class MetricSet:
    accuracy: float
    precision: float
    recall: float
    specificity: float
    n_rules: Optional[int] = None
    m_required: Optional[int] = None

    def __post_init__(self):
        for name in METRIC_NAMES:
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise StructuralError(f"{name}={value} lies outside [0, 1]")

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> "MetricSet":
        return cls(**{key: data.get(key) for key in METRIC_NAMES + SIZE_NAMES})


@dataclass(frozen=True)
class FoldAggregate:
    means: Dict[str, float]
    stds: Dict[str, float]
    n_folds: int

    def to_dict(self) -> Dict:
        return {"means": self.means, "stds": self.stds, "n_folds": self.n_folds}


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def classification_metrics(y, y_hat, n_rules: Optional[int] = None, m_required: Optional[int] = None) -> MetricSet:
    y = np.asarray(y)
    y_hat = np.asarray(y_hat)
    if y.size == 0:
        raise StructuralError("cannot score an empty prediction set")
    if not (np.isin(y, (0, 1)).all() and np.isin(y_hat, (0, 1)).all()):
        raise StructuralError("labels and predictions must be 0 or 1")
    tn, fp, _, _ = confusion_matrix(y, y_hat, labels=[0, 1]).ravel()
    return MetricSet(
        accuracy=float(accuracy_score(y, y_hat)),
        precision=float(precision_score(y, y_hat, zero_division=0)),
        recall=float(recall_score(y, y_hat, zero_division=0)),
        specificity=_ratio(int(tn), int(tn + fp)),
        n_rules=n_rules,
        m_required=m_required,
    )


def operating_points(scores, y) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(thresholds, precision, recall) for "score >= t" at every distinct score, descending."""
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(y)
    if scores.shape != y.shape:
        raise StructuralError(f"{scores.size} scores but {y.size} labels")
    if not np.isfinite(scores).all():
        raise StructuralError("scores must be finite")
    n_pos = int((y == 1).sum())
    if n_pos == 0 or n_pos == y.size:
        raise UndefinedMetricError("precision/recall trade-offs need both classes in the labels")

    precision, recall, thresholds = precision_recall_curve(y, scores)
    # drop the appended (precision 1, recall 0) end point; thresholds ascend
    return thresholds[::-1], precision[:-1][::-1], recall[:-1][::-1]


def _check_target(target: float):
    if not 0.0 < target < 1.0:
        raise StructuralError(f"target must lie strictly between 0 and 1, got {target}")


def precision_at_recall(scores, y, target_recall: float) -> float:
    _check_target(target_recall)
    _, precision, recall = operating_points(scores, y)
    ok = np.flatnonzero(recall >= target_recall)
    if ok.size == 0:
        log.warning(f"No operating point reaches recall {target_recall:.3f}; reporting precision 0")
        return 0.0
    lowest = recall[ok].min()
    return float(precision[ok][recall[ok] == lowest].max())


def recall_at_precision(scores, y, target_precision: float) -> float:
    _check_target(target_precision)
    _, precision, recall = operating_points(scores, y)
    ok = np.flatnonzero(precision >= target_precision)
    if ok.size == 0:
        log.warning(f"No operating point reaches precision {target_precision:.3f}; reporting recall 0")
        return 0.0
    lowest = precision[ok].min()
    return float(recall[ok][precision[ok] == lowest].max())


def aggregate_folds(per_fold: Sequence[MetricSet]) -> FoldAggregate:
    if not per_fold:
        raise StructuralError("need at least one fold to aggregate")
    means, stds = {}, {}
    for name in METRIC_NAMES + SIZE_NAMES:
        values = [getattr(m, name) for m in per_fold]
        if any(v is None for v in values):
            continue
        # sorted so the float sum does not depend on fold order
        column = np.sort(np.asarray(values, dtype=np.float64))
        means[name] = float(column.mean())
        stds[name] = float(column.std())
    return FoldAggregate(means, stds, len(per_fold))


def _normalize(value: float, low: float, high: float) -> float:
    if not np.isfinite(value):
        return np.nan
    span = high - low
    return 0.0 if span == 0 else (value - low) / span


def threshold_comparison_frame(
    mip_thresholds: Mapping[str, float],
    sets_phi: Mapping[str, float],
    column_means: Mapping[str, float],
    column_ranges: Mapping[str, Tuple[float, float]],
) -> pd.DataFrame:
    """Min-max normalized MIP thresholds, SETS thresholds and means per feature."""
    known = set(column_means)
    unknown = sorted((set(mip_thresholds) | set(sets_phi) | set(column_ranges)) - known)
    if unknown:
        raise StructuralError(f"thresholds given for unknown feature(s): {', '.join(unknown)}")
    missing = sorted(known - set(column_ranges))
    if missing:
        raise StructuralError(f"no training range for feature(s): {', '.join(missing)}")

    records = []
    for name in column_means:
        low, high = column_ranges[name]
        row = {
            "feature_name": name,
            "mip_t_norm": _normalize(mip_thresholds.get(name, np.nan), low, high),
            "sets_t_norm": _normalize(sets_phi.get(name, np.nan), low, high),
            "mean_norm": _normalize(column_means[name], low, high),
        }
        clipped = []
        for key in ("mip_t_norm", "sets_t_norm", "mean_norm"):
            value = row[key]
            if np.isfinite(value) and not CLIP_LOW <= value <= CLIP_HIGH:
                row[key] = float(np.clip(value, CLIP_LOW, CLIP_HIGH))
                clipped.append(key.split("_")[0])
        if clipped:
            log.warning(f"{name}: {', '.join(clipped)} threshold outside the training range, clipped")
        row["clipped"] = ";".join(clipped)
        records.append(row)
    return pd.DataFrame.from_records(
        records, columns=["feature_name", "mip_t_norm", "sets_t_norm", "mean_norm", "clipped"]
    )


def export_threshold_comparison(mip_thresholds, sets_phi, column_means, column_ranges, out_path) -> pd.DataFrame:
    """Write ``<out_path>.csv`` and ``<out_path>.svg``; returns the table."""
    frame = threshold_comparison_frame(mip_thresholds, sets_phi, column_means, column_ranges)
    out_path = str(out_path)
    atomic_write_csv(out_path + ".csv", frame)
    atomic_write_text(out_path + ".svg", threshold_chart_svg(frame))
    log.info(f"Threshold comparison written to {out_path}.csv/.svg")
    return frame


def _pm(agg: FoldAggregate, name: str, scale: float = 1.0, digits: int = 3) -> str:
    if name not in agg.means:
        return "-"
    return f"{agg.means[name] * scale:.{digits}f} ± {agg.stds[name] * scale:.{digits}f}"


def render_metrics_table(aggregates: Mapping[str, FoldAggregate]) -> str:
    """Method rows with accuracy in percent and the other rates as fractions."""
    header = ["Method", "Accuracy (%)", "Precision", "Recall", "Specificity", "N", "M"]
    rows = [header]
    for label, agg in aggregates.items():
        rows.append([
            label,
            _pm(agg, "accuracy", 100.0, 2),
            _pm(agg, "precision"),
            _pm(agg, "recall"),
            _pm(agg, "specificity"),
            _pm(agg, "n_rules", digits=1),
            _pm(agg, "m_required", digits=2),
        ])
    return _format_rows(rows)


@dataclass(frozen=True)
class OperatingPointRow:
    label: str
    checklist_precision: float
    checklist_recall: float
    scored_precision_at_recall: float
    scored_recall_at_precision: float


def render_operating_table(rows: Sequence[OperatingPointRow]) -> str:
    """Checklist operating points next to the score-based model evaluated at them."""
    header = ["Scores vs checklist", "Checklist P", "Checklist R", "P@R", "R@P"]
    lines = [header]
    for row in rows:
        lines.append([
            row.label,
            f"{row.checklist_precision:.3f}",
            f"{row.checklist_recall:.3f}",
            f"{row.scored_precision_at_recall:.3f}",
            f"{row.scored_recall_at_precision:.3f}",
        ])
    return _format_rows(lines)


def _format_rows(rows: List[List[str]]) -> str:
    widths = [max(len(row[c]) for row in rows) for c in range(len(rows[0]))]
    out = []
    for i, row in enumerate(rows):
        out.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if i == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out) + "\n"
