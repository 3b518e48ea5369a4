import numpy as np
import pytest

from baselines import (
    MlpHyper,
    SetsModel,
    UnitWeightingConfig,
    binarize_at,
    checklist_from_weights,
    dummy_fit_predict,
    mlp_init,
    mlp_loss_grad,
    mlp_score,
    mlp_train,
    sets_loss_grad,
    sets_to_checklist,
    sets_train,
    unit_weighting,
)
from checklist import ConceptRule, FeatureMatrix, Labels, concept_matrix, evaluate_counts
from errors import DegenerateModelError, StructuralError
from feature_select import TrainHyper, logistic_loss_grad, train_logistic


@pytest.mark.parametrize("y,constant", [
    ([0] * 63 + [1] * 37, 0),
    ([1, 1, 1], 1),
    ([0, 1, 1, 0], 0),
])
def test_dummy_majority(y, constant):
    model = dummy_fit_predict(np.array(y))
    assert model.constant == constant
    assert model.predict(np.zeros((4, 2))).tolist() == [constant] * 4


def test_dummy_needs_labels():
    with pytest.raises(StructuralError):
        dummy_fit_predict(np.array([]))


def test_binarize_matches_rules(rng):
    values = rng.normal(size=(20, 3))
    thresholds = np.array([0.0, 0.5, -0.5])
    binary = binarize_at(FeatureMatrix(values, ("a", "b", "c")), thresholds)
    rules = [ConceptRule(j, t) for j, t in enumerate(thresholds)]
    np.testing.assert_array_equal(binary.values, concept_matrix(values, rules))


def test_binarize_rejects_bad_thresholds():
    X = FeatureMatrix(np.zeros((2, 2)), ("a", "b"))
    with pytest.raises(StructuralError):
        binarize_at(X, [0.0])
    with pytest.raises(StructuralError):
        binarize_at(X, [0.0, np.inf])


def _binary_problem():
    binary = FeatureMatrix(np.array([[1.0, 0.0, 1.0], [1.0, 1.0, 0.0], [0.0, 1.0, 1.0], [0.0, 0.0, 0.0]]), ("a", "b", "c"))
    return binary, Labels(np.array([1, 0, 0, 1]))


def test_weights_become_signed_rules():
    binary, y = _binary_problem()
    checklist = checklist_from_weights([0.8, -0.6, 0.05], [0.5, 0.5, 0.5], binary, y, UnitWeightingConfig(beta=0.1))
    assert checklist.n_rules == 2
    assert [r.feature_index for r in checklist.rules] == [0, 1]
    assert [r.negated for r in checklist.rules] == [False, True]


def test_zero_beta_keeps_nonzero_weights():
    binary, y = _binary_problem()
    checklist = checklist_from_weights([0.8, -0.6, 0.05], [0.5, 0.5, 0.5], binary, y, UnitWeightingConfig(beta=0.0))
    assert checklist.n_rules == 3


def test_all_small_weights_is_degenerate():
    binary, y = _binary_problem()
    with pytest.raises(DegenerateModelError):
        checklist_from_weights([0.05, -0.05, 0.0], [0.5, 0.5, 0.5], binary, y, UnitWeightingConfig(beta=0.1))


def test_negative_beta_rejected():
    with pytest.raises(StructuralError):
        UnitWeightingConfig(beta=-0.1)


@pytest.mark.parametrize("seed", range(10))
def test_sets_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    values = rng.normal(size=(25, 3))
    y = rng.integers(0, 2, size=25).astype(float)
    phi, weights, bias = rng.normal(size=3), rng.normal(size=3), float(rng.normal())
    scale = rng.uniform(0.5, 2.0, size=3) if seed % 2 else None
    _, g_phi, g_w, g_b = sets_loss_grad(phi, weights, bias, values, y, 0.7, 1e-2, scale)
    h = 1e-6

    def loss(p, w, b):
        return sets_loss_grad(p, w, b, values, y, 0.7, 1e-2, scale)[0]

    for j in range(3):
        step = np.zeros(3)
        step[j] = h
        assert (loss(phi + step, weights, bias) - loss(phi - step, weights, bias)) / (2 * h) == pytest.approx(g_phi[j], rel=1e-4, abs=1e-8)
        assert (loss(phi, weights + step, bias) - loss(phi, weights - step, bias)) / (2 * h) == pytest.approx(g_w[j], rel=1e-4, abs=1e-8)
    assert (loss(phi, weights, bias + h) - loss(phi, weights, bias - h)) / (2 * h) == pytest.approx(g_b, rel=1e-4, abs=1e-8)


def test_frozen_thresholds_reduce_to_logistic_regression(rng):
    values = rng.normal(size=(40, 2))
    y = (values[:, 0] + rng.normal(scale=0.5, size=40) > 0).astype(int)
    hyper = TrainHyper(max_epochs=300)
    sets = sets_train(FeatureMatrix(values, ("a", "b")), y, 1.0, hyper, init_phi=np.zeros(2), freeze_phi=True)
    plain = train_logistic(1.0 / (1.0 + np.exp(-values)), y, hyper)
    assert sets.phi.tolist() == [0.0, 0.0]
    np.testing.assert_allclose(sets.weights, plain.weights, atol=1e-6)
    assert sets.bias == pytest.approx(plain.bias, abs=1e-6)


def test_sets_learns_separating_threshold():
    X = FeatureMatrix(np.array([[1.0], [2.0], [3.0], [4.0]]), ("a",))
    y = Labels(np.array([0, 0, 1, 1]))
    model = sets_train(X, y, 0.5, TrainHyper(max_epochs=500))
    assert 2.0 < model.phi[0] < 3.0
    checklist = sets_to_checklist(model, X, y, UnitWeightingConfig())
    counts = evaluate_counts(checklist, X, y)
    assert counts.l_plus == counts.l_minus == 0


def test_sets_at_means_matches_unit_weighting(rng):
    values = rng.normal(size=(60, 3))
    y = Labels((values[:, 0] - values[:, 2] > 0).astype(int))
    X = FeatureMatrix(values, ("a", "b", "c"))
    means = values.mean(axis=0)
    model = SetsModel(phi=means, tau=1.0, weights=np.zeros(3), bias=0.0)
    config = UnitWeightingConfig()
    expected = unit_weighting(binarize_at(X, means), y, TrainHyper(), config, means)
    assert sets_to_checklist(model, X, y, config) == expected


def test_large_temperature_approaches_plain_logistic_regression(rng):
    # sigmoid(u) ~ 0.5 + u / 4 for small u, so rescaled LR weights fit almost as well
    values = rng.normal(size=(80, 2))
    y = (values[:, 0] + rng.normal(scale=0.7, size=80) > 0).astype(float)
    plain = train_logistic(values, y, TrainHyper(l2_strength=0.0))
    plain_loss = logistic_loss_grad(plain.weights, plain.bias, values, y, 0.0)[0]
    tau = 50.0
    weights = 4 * tau * plain.weights
    bias = plain.bias - 0.5 * weights.sum()
    sets_loss = sets_loss_grad(np.zeros(2), weights, bias, values, y, tau, 0.0)[0]
    assert sets_loss == pytest.approx(plain_loss, rel=0.05)


def test_sets_rejects_bad_temperature():
    with pytest.raises(StructuralError):
        SetsModel(phi=np.zeros(1), tau=0.0, weights=np.zeros(1), bias=0.0)


@pytest.mark.parametrize("seed", range(10))
def test_mlp_gradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    Z = rng.normal(size=(12, 3))
    y = rng.integers(0, 2, size=12).astype(float)
    model = mlp_init(3, 4, rng)
    _, grads = mlp_loss_grad(model, Z, y, 1e-2)
    h = 1e-6
    for param, grad in zip(model.params()[:3], grads[:3]):
        flat, flat_grad = param.reshape(-1), np.asarray(grad).reshape(-1)
        for k in range(flat.size):
            saved = flat[k]
            flat[k] = saved + h
            up = mlp_loss_grad(model, Z, y, 1e-2)[0]
            flat[k] = saved - h
            down = mlp_loss_grad(model, Z, y, 1e-2)[0]
            flat[k] = saved
            assert (up - down) / (2 * h) == pytest.approx(flat_grad[k], rel=1e-3, abs=1e-7)


def test_mlp_learns_xor():
    Z = np.array([[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]])
    y = np.array([0, 1, 1, 0])
    accuracies = []
    for seed in range(5):
        model = mlp_train(Z, y, MlpHyper(hidden=8, epochs=2000, batch_size=4, learning_rate=0.5, seed=seed))
        accuracies.append(((mlp_score(model, Z) >= 0.5) == y).mean())
    assert max(accuracies) == 1.0


def test_mlp_is_deterministic_given_seed(rng):
    Z = rng.normal(size=(30, 3))
    y = (Z[:, 0] > 0).astype(int)
    hyper = MlpHyper(hidden=4, epochs=10, batch_size=8, seed=5)
    a, b = mlp_train(Z, y, hyper), mlp_train(Z, y, hyper)
    np.testing.assert_array_equal(mlp_score(a, Z), mlp_score(b, Z))
