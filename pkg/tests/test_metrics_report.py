import numpy as np
import pandas as pd
import pytest

from checklist import Checklist, ConceptRule, FeatureMatrix, Labels, evaluate_counts, predict_matrix
from errors import StructuralError, UndefinedMetricError
from metrics_report import (
    FoldAggregate,
    MetricSet,
    OperatingPointRow,
    aggregate_folds,
    classification_metrics,
    export_threshold_comparison,
    operating_points,
    precision_at_recall,
    recall_at_precision,
    render_metrics_table,
    render_operating_table,
    threshold_comparison_frame,
)


def test_all_negative_predictor():
    y = np.array([1] * 37 + [0] * 63)
    metrics = classification_metrics(y, np.zeros(100, dtype=int))
    assert metrics.accuracy == pytest.approx(0.63)
    assert (metrics.precision, metrics.recall, metrics.specificity) == (0.0, 0.0, 1.0)


def test_perfect_predictions():
    y = np.array([1, 0, 0, 1])
    metrics = classification_metrics(y, y, n_rules=2, m_required=1)
    assert (metrics.accuracy, metrics.precision, metrics.recall, metrics.specificity) == (1.0, 1.0, 1.0, 1.0)
    assert (metrics.n_rules, metrics.m_required) == (2, 1)


def test_half_right():
    metrics = classification_metrics([1, 0, 1, 0], [1, 1, 0, 0])
    assert metrics.to_dict() == {
        "accuracy": 0.5, "precision": 0.5, "recall": 0.5, "specificity": 0.5,
        "n_rules": None, "m_required": None,
    }


def test_empty_or_non_binary_input():
    with pytest.raises(StructuralError):
        classification_metrics([], [])
    with pytest.raises(StructuralError):
        classification_metrics([0, 2], [0, 1])


def test_metric_set_range_and_dict_form():
    with pytest.raises(StructuralError):
        MetricSet(1.2, 0.0, 0.0, 0.0)
    metrics = MetricSet(0.9, 0.8, 0.7, 0.6, 3, 2)
    assert MetricSet.from_dict(metrics.to_dict()) == metrics


def test_metrics_agree_with_checklist_counts(rng):
    values = rng.normal(size=(40, 2))
    y = Labels(rng.integers(0, 2, size=40))
    checklist = Checklist((ConceptRule(0, 0.0), ConceptRule(1, 0.3)), 1)
    counts = evaluate_counts(checklist, FeatureMatrix(values, ("a", "b")), y)
    metrics = classification_metrics(y.y, predict_matrix(checklist, values))
    assert metrics.accuracy == pytest.approx((counts.tp + counts.tn) / 40)
    assert metrics.recall == pytest.approx(counts.tp / (counts.tp + counts.fn))


def test_operating_points_merge_tied_scores():
    thresholds, precision, recall = operating_points([0.9, 0.5, 0.5, 0.1], [1, 1, 0, 0])
    assert thresholds.tolist() == [0.9, 0.5, 0.1]
    assert precision.tolist() == pytest.approx([1.0, 2 / 3, 0.5])
    assert recall.tolist() == [0.5, 1.0, 1.0]


def test_perfect_ranking():
    scores, y = [0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]
    assert precision_at_recall(scores, y, 0.5) == 1.0
    assert precision_at_recall(scores, y, 0.99) == 1.0
    assert recall_at_precision(scores, y, 0.9) == 1.0


def test_scores_equal_to_labels():
    y = np.array([1, 0, 1, 0, 0])
    assert precision_at_recall(y, y, 0.8) == 1.0
    assert recall_at_precision(y, y, 0.8) == 1.0


def test_unreachable_precision_reports_zero(caplog):
    assert recall_at_precision([0.9, 0.1], [0, 1], 0.9) == 0.0
    assert "reporting recall 0" in caplog.text


def test_single_class_is_undefined():
    with pytest.raises(UndefinedMetricError):
        precision_at_recall([0.1, 0.2], [0, 0], 0.5)


@pytest.mark.parametrize("target", [0.0, 1.0, 1.5])
def test_targets_must_be_interior(target):
    with pytest.raises(StructuralError):
        recall_at_precision([0.1, 0.2], [0, 1], target)


def test_operating_points_reject_bad_scores():
    with pytest.raises(StructuralError):
        operating_points([0.1, np.nan], [0, 1])
    with pytest.raises(StructuralError):
        operating_points([0.1], [0, 1])


def test_aggregate_single_fold():
    agg = aggregate_folds([MetricSet(0.8, 0.5, 0.4, 0.9, 4, 2)])
    assert agg.means["accuracy"] == 0.8 and agg.stds["accuracy"] == 0.0
    assert agg.means["n_rules"] == 4.0
    assert agg.n_folds == 1


def test_aggregate_two_folds_population_std():
    agg = aggregate_folds([MetricSet(0.6, 0.0, 0.0, 1.0), MetricSet(0.7, 0.0, 0.0, 1.0)])
    assert agg.means["accuracy"] == pytest.approx(0.65)
    assert agg.stds["accuracy"] == pytest.approx(0.05)
    assert "n_rules" not in agg.means


def test_aggregate_ignores_fold_order(rng):
    folds = [MetricSet(*rng.uniform(size=4)) for _ in range(5)]
    assert aggregate_folds(folds) == aggregate_folds(folds[::-1])


def test_aggregate_needs_a_fold():
    with pytest.raises(StructuralError):
        aggregate_folds([])


def test_threshold_frame_normalizes_and_clips(caplog):
    frame = threshold_comparison_frame(
        {"HR": 0.0},
        {"HR": -5.0, "Temp": 37.0},
        {"HR": 5.0, "Temp": 37.0},
        {"HR": (0.0, 10.0), "Temp": (36.0, 38.0)},
    )
    hr = frame.set_index("feature_name").loc["HR"]
    assert (hr.mip_t_norm, hr.sets_t_norm, hr.mean_norm) == (0.0, -0.1, 0.5)
    assert hr.clipped == "sets"
    temp = frame.set_index("feature_name").loc["Temp"]
    assert np.isnan(temp.mip_t_norm)
    assert temp.sets_t_norm == 0.5 and temp.clipped == ""
    assert "outside the training range" in caplog.text


def test_threshold_frame_constant_column():
    frame = threshold_comparison_frame({"a": 3.0}, {}, {"a": 3.0}, {"a": (3.0, 3.0)})
    assert frame.mip_t_norm.tolist() == [0.0] and frame.mean_norm.tolist() == [0.0]


def test_threshold_frame_unknown_feature():
    with pytest.raises(StructuralError):
        threshold_comparison_frame({"nope": 1.0}, {}, {"a": 0.0}, {"a": (0.0, 1.0)})


def test_export_writes_table_and_chart(tmp_path):
    out = tmp_path / "figures" / "thresholds_fold_0"
    export_threshold_comparison({"a": 0.5}, {"a": 0.25}, {"a": 0.5}, {"a": (0.0, 1.0)}, out)
    frame = pd.read_csv(str(out) + ".csv")
    assert frame.feature_name.tolist() == ["a"]
    assert (tmp_path / "figures" / "thresholds_fold_0.svg").read_text().startswith("<svg")


def test_render_tables():
    agg = FoldAggregate({"accuracy": 0.65, "precision": 0.5}, {"accuracy": 0.05, "precision": 0.1}, 2)
    table = render_metrics_table({"MIP checklist": agg})
    assert "65.00 ± 5.00" in table
    assert "0.500 ± 0.100" in table
    lines = render_operating_table([OperatingPointRow("LR", 0.5, 0.25, 0.75, 0.125)]).splitlines()
    assert lines[0].startswith("Scores vs checklist")
    assert lines[2].split() == ["LR", "0.500", "0.250", "0.750", "0.125"]
