import numpy as np
import pytest

from checklist import (
    Checklist,
    ConceptRule,
    EvalCounts,
    FeatureMatrix,
    Labels,
    ObjectiveWeights,
    add_negated_features,
    apply_concepts,
    concept_matrix,
    evaluate_counts,
    objective_value,
    predict,
    predict_matrix,
)
from errors import StructuralError


def test_equality_does_not_satisfy_rule():
    assert apply_concepts([5.0], [ConceptRule(0, 5.0)]).tolist() == [0]


def test_apply_concepts_mixed():
    rules = [ConceptRule(0, 5.0), ConceptRule(1, 0.0)]
    assert apply_concepts([7.2, -1.0], rules).tolist() == [1, 0]


def test_apply_concepts_empty_rules():
    assert apply_concepts([3.0], []).tolist() == []


def test_apply_concepts_out_of_range():
    with pytest.raises(StructuralError):
        apply_concepts([1.0], [ConceptRule(1, 0.0)])


def test_predict_examples():
    checklist = Checklist((ConceptRule(0, 0.5), ConceptRule(1, 0.5), ConceptRule(2, 0.5)), 2)
    assert predict(checklist, [1, 1, 0]) == 1
    assert predict(Checklist((ConceptRule(0, 0.0),), 1), [-1.0]) == 0
    assert predict(Checklist(checklist.rules, 3), [1, 1, 1]) == 1


def test_strictness_perturbation():
    rule = ConceptRule(0, 2.5)
    assert apply_concepts([2.5 + 1e-9], [rule]).tolist() == [1]
    assert apply_concepts([2.5 - 1e-9], [rule]).tolist() == [0]
    assert apply_concepts([2.5], [rule]).tolist() == [0]


def test_predict_non_increasing_in_m(rng):
    values = rng.normal(size=(50, 4))
    rules = tuple(ConceptRule(j, 0.0) for j in range(4))
    previous = None
    for m in range(1, 5):
        current = predict_matrix(Checklist(rules, m), values)
        if previous is not None:
            assert (current <= previous).all()
        previous = current


def test_rules_outside_range_add_nothing_or_one(rng):
    values = rng.normal(size=(30, 2))
    above = concept_matrix(values, [ConceptRule(0, values[:, 0].max() + 1)])
    below = concept_matrix(values, [ConceptRule(1, values[:, 1].min() - 1)])
    assert above.sum() == 0
    assert (below == 1).all()


def test_checklist_invariants():
    with pytest.raises(StructuralError):
        Checklist((ConceptRule(0, 1.0),), 2)
    with pytest.raises(StructuralError):
        Checklist((ConceptRule(0, 1.0),), 0)
    with pytest.raises(StructuralError):
        Checklist((ConceptRule(0, 1.0), ConceptRule(0, 2.0)), 1)


def test_evaluate_counts_example():
    # rows chosen so the predictions are [1, 0, 0, 1]
    X = FeatureMatrix(np.array([[1.0], [0.0], [0.0], [1.0]]), ("a",))
    y = Labels(np.array([1, 1, 0, 0]))
    counts = evaluate_counts(Checklist((ConceptRule(0, 0.5),), 1), X, y)
    assert counts == EvalCounts(l_plus=1, l_minus=1, tp=1, fp=1, tn=1, fn=1)


def test_always_true_rule_predicts_all_positive():
    X = FeatureMatrix(np.array([[1.0], [2.0], [3.0]]), ("a",))
    y = Labels(np.array([1, 0, 0]))
    counts = evaluate_counts(Checklist((ConceptRule(0, 0.0),), 1), X, y)
    assert (counts.l_plus, counts.l_minus) == (0, 2)


def test_evaluate_counts_dimension_mismatch():
    X = FeatureMatrix(np.zeros((3, 1)), ("a",))
    with pytest.raises(StructuralError):
        evaluate_counts(Checklist((ConceptRule(0, 0.0),), 1), X, Labels(np.array([0, 1])))


def test_count_identities_hold(rng):
    for _ in range(20):
        values = rng.normal(size=(25, 3))
        y = Labels(rng.integers(0, 2, size=25))
        checklist = Checklist(tuple(ConceptRule(j, float(rng.normal())) for j in range(3)), int(rng.integers(1, 4)))
        counts = evaluate_counts(checklist, FeatureMatrix(values, ("a", "b", "c")), y)
        assert counts.l_plus + counts.tp == len(y.pos_indices)
        assert counts.l_minus + counts.tn == len(y.neg_indices)


@pytest.mark.parametrize("l_plus,l_minus,weights,n,m,expected", [
    (2, 3, ObjectiveWeights(1.0, 0.0, 0.0), 5, 2, 5.0),
    (0, 0, ObjectiveWeights(4.0, 0.01, 0.01), 4, 2, 0.06),
    (1, 2, ObjectiveWeights(0.5, 0.0, 0.0), 3, 1, 2.0),
])
def test_objective_value(l_plus, l_minus, weights, n, m, expected):
    counts = EvalCounts(l_plus, l_minus, 0, l_minus, 0, l_plus)
    assert objective_value(counts, n, m, weights) == pytest.approx(expected)


def test_objective_weights_reject_negative():
    with pytest.raises(StructuralError):
        ObjectiveWeights(lam=-1.0)


def test_default_eps_stays_below_one_mistake():
    weights = ObjectiveWeights.with_default_eps(2.0, 10)
    assert weights.eps_n == weights.eps_m == pytest.approx(1 / 40)
    assert weights.eps_n * 10 + weights.eps_m * 10 < 1.0


def test_labels_partition():
    y = Labels(np.array([1, 0, 1]))
    assert y.pos_indices.tolist() == [0, 2]
    assert y.neg_indices.tolist() == [1]
    with pytest.raises(StructuralError):
        Labels(np.array([0, 2]))


def test_feature_matrix_rejects_duplicate_names():
    with pytest.raises(StructuralError):
        FeatureMatrix(np.zeros((2, 2)), ("a", "a"))


def test_text_and_dict_forms():
    checklist = Checklist((ConceptRule(0, 100.5), ConceptRule(1, 38.25)), 1)
    text = checklist.to_text(("HR_mean", "Temp_last"))
    assert text.splitlines() == ["HR_mean > 100.5", "Temp_last > 38.25", "1 of 2 required"]
    assert Checklist.from_dict(checklist.to_dict(("HR_mean", "Temp_last"))) == checklist


def test_negated_features_flip_direction():
    X = FeatureMatrix(np.array([[1.0], [3.0]]), ("a",))
    both = add_negated_features(X)
    assert both.feature_names == ("a", "neg_a")
    # "neg_a > -2" is "a < 2"
    assert concept_matrix(both.values, [ConceptRule(1, -2.0)]).ravel().tolist() == [1, 0]
