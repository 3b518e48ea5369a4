import numpy as np
import pytest

from checklist import FeatureMatrix
from errors import ConfigurationError, DataError, FormatError, StructuralError
from ingest import (
    FoldSpec,
    PatientRecord,
    SummaryRow,
    build_folds,
    fold_manifest,
    impute_and_clean,
    load_patient_dir,
    parse_psv,
    split_fold,
    summaries_to_frame,
    summarize_patient,
    summarize_series,
)


def test_parse_single_row():
    record = parse_psv(b"HR|O2Sat|SepsisLabel\n80|97|0\n", "p1")
    assert record.n_hours == 1
    assert record.variable_names == ("HR", "O2Sat")
    assert record.hourly_values.tolist() == [[80.0, 97.0]]
    assert record.sepsis_labels.tolist() == [0]


def test_parse_nan_marker():
    record = parse_psv(b"HR|O2Sat|SepsisLabel\nNaN|97|0\n")
    assert np.isnan(record.column("HR")[0])
    assert record.unparseable_cells == 0


def test_parse_garbage_cell_becomes_missing(caplog):
    record = parse_psv(b"HR|O2Sat|SepsisLabel\nabc|97|0\n", "p9")
    assert np.isnan(record.column("HR")[0])
    assert record.unparseable_cells == 1
    assert "unparseable" in caplog.text


def test_parse_missing_label_column():
    with pytest.raises(FormatError):
        parse_psv(b"HR|O2Sat\n80|97\n")


def test_parse_empty_file():
    with pytest.raises(FormatError):
        parse_psv(b"")


@pytest.mark.parametrize("values,expected", [
    ([1.0, np.nan, 3.0], (2.0, 1.0, 3.0)),
    ([5.0], (5.0, 0.0, 5.0)),
])
def test_summarize_series(values, expected):
    assert summarize_series(np.array(values)) == pytest.approx(expected)


def test_summarize_series_all_missing():
    assert all(np.isnan(v) for v in summarize_series(np.array([np.nan, np.nan])))


def test_summarize_patient_layout():
    record = PatientRecord(
        patient_id="p1",
        variable_names=("HR", "Age", "ICULOS"),
        hourly_values=np.array([[80.0, 60.0, 1.0], [90.0, 60.0, 2.0]]),
        sepsis_labels=np.array([0, 1]),
    )
    row = summarize_patient(record)
    assert row.label == 1
    assert set(row.features) == {"HR_mean", "HR_sd", "HR_last", "Age"}
    assert row.features["HR_sd"] == pytest.approx(5.0)
    assert "ICULOS" in summarize_patient(record, include_timing=True).features


def test_record_round_trip_reproduces_summaries():
    content = b"HR|SepsisLabel\n2|0\nNaN|0\n6|0\n4|0\n"
    row = summarize_patient(parse_psv(content, "p"))
    assert row.features["HR_mean"] == pytest.approx(4.0)
    assert row.features["HR_sd"] == pytest.approx(np.sqrt(8 / 3))
    assert row.features["HR_last"] == pytest.approx(4.0)


def _rows(n_pos, n_neg):
    rows = [SummaryRow(f"pos{i:03d}", {"a": float(i)}, 1) for i in range(n_pos)]
    rows += [SummaryRow(f"neg{i:03d}", {"a": float(i)}, 0) for i in range(n_neg)]
    return rows


def test_fold_counts_follow_rounding_rule():
    spec = FoldSpec(5, 2200, 0.37, seed=7)
    assert (spec.n_pos, spec.n_neg) == (814, 1386)


def test_single_fold_takes_everyone():
    rows = _rows(5, 5)
    folds = build_folds(rows, FoldSpec(1, 10, 0.5, seed=1))
    assert sorted(folds[0]) == sorted(r.patient_id for r in rows)


def test_folds_are_deterministic_and_disjoint_in_negatives():
    rows = _rows(30, 100)
    spec = FoldSpec(4, 20, 0.4, seed=3)
    folds = build_folds(rows, spec)
    assert folds == build_folds(rows, spec)
    negatives = [pid for fold in folds for pid in fold if pid.startswith("neg")]
    assert len(negatives) == len(set(negatives)) == 4 * 12
    for fold in folds:
        assert len(fold) == 20
        assert len(set(fold)) == 20
        assert sum(pid.startswith("pos") for pid in fold) == 8


def test_other_seed_keeps_the_size_contract():
    rows = _rows(30, 100)
    folds = build_folds(rows, FoldSpec(4, 20, 0.4, seed=99))
    assert all(sum(pid.startswith("pos") for pid in fold) == 8 and len(fold) == 20 for fold in folds)


def test_fold_shortfall_is_named():
    with pytest.raises(ConfigurationError, match="positives"):
        build_folds(_rows(3, 100), FoldSpec(2, 20, 0.4, seed=1))


def test_fold_manifest_splits_every_member():
    rows = _rows(30, 100)
    folds = build_folds(rows, FoldSpec(2, 20, 0.4, seed=3))
    labels = {r.patient_id: r.label for r in rows}
    manifest = fold_manifest(folds, labels, 0.25, seed=3)
    assert len(manifest) == 40
    test = manifest[(manifest.fold_id == 0) & (manifest.split == "test")]
    assert sum(pid.startswith("pos") for pid in test.patient_id) == 2
    assert len(test) == 5


def test_impute_fit_and_apply():
    X = FeatureMatrix(np.array([[1.0, np.nan], [np.nan, np.nan], [3.0, np.nan]]), ("a", "b"))
    filled, stats = impute_and_clean(X)
    assert filled.feature_names == ("a",)
    assert filled.values.ravel().tolist() == [1.0, 2.0, 3.0]
    assert stats.dropped == ("b",)
    assert filled.is_finite()

    test = FeatureMatrix(np.array([[np.nan, 4.0]]), ("a", "b"))
    applied, _ = impute_and_clean(test, stats)
    assert applied.values.tolist() == [[2.0]]


def test_impute_rejects_other_columns():
    _, stats = impute_and_clean(FeatureMatrix(np.ones((2, 1)), ("a",)))
    with pytest.raises(StructuralError):
        impute_and_clean(FeatureMatrix(np.ones((2, 1)), ("z",)), stats)


def test_impute_all_missing_is_data_error():
    with pytest.raises(DataError):
        impute_and_clean(FeatureMatrix(np.full((2, 2), np.nan), ("a", "b")))


def test_load_patient_dir(cohort_dir):
    rows = load_patient_dir(cohort_dir, n_workers=2)
    assert len(rows) == 60
    assert sum(r.label for r in rows) == 24
    assert [r.patient_id for r in rows] == sorted(r.patient_id for r in rows)


def test_load_patient_dir_empty(tmp_path):
    with pytest.raises(ConfigurationError):
        load_patient_dir(tmp_path)


def test_load_patient_dir_tolerates_few_bad_files(cohort_dir):
    (cohort_dir / "zzbroken.psv").write_bytes(b"HR|O2Sat\n1|2\n")
    assert len(load_patient_dir(cohort_dir)) == 60


def test_load_patient_dir_too_many_bad_files(tmp_path):
    (tmp_path / "ok.psv").write_bytes(b"HR|SepsisLabel\n1|0\n")
    (tmp_path / "bad.psv").write_bytes(b"")
    with pytest.raises(DataError):
        load_patient_dir(tmp_path)


def test_summary_frame_layout():
    rows = [SummaryRow("a", {"x": 1.0, "y_sd": np.nan}, 1), SummaryRow("b", {"x": 2.0, "y_sd": 0.5}, 0)]
    frame = summaries_to_frame(rows)
    assert list(frame.columns) == ["patient_id", "x", "y_sd", "y"]
    assert frame.y.tolist() == [1, 0]
    assert np.isnan(frame.loc[0, "y_sd"]) and frame.loc[1, "y_sd"] == 0.5


def test_split_is_stratified_and_seeded():
    labels = {f"p{i:02d}": int(i < 8) for i in range(20)}
    ids = sorted(labels)
    train, test = split_fold(ids, labels, 0.25, np.random.default_rng(4))
    assert sorted(train + test) == ids
    assert len(test) == 5 and sum(labels[p] for p in test) == 2
    assert (train, test) == split_fold(ids, labels, 0.25, np.random.default_rng(4))


def test_split_needs_two_of_each_class():
    labels = {"a": 1, "b": 0, "c": 0, "d": 0}
    with pytest.raises(ConfigurationError):
        split_fold(sorted(labels), labels, 0.5, np.random.default_rng(0))
