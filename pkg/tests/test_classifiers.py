import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize
from sklearn.exceptions import ConvergenceWarning

from src.config.settings import SoftmaxTrainConfig, SvmTrainConfig
from src.errors import ConfigError, InsufficientClassesError, UntrainedModelError
from src.utils.classifiers import (
    LinearBoundary,
    MulticlassSvm,
    SoftmaxModel,
    coding_matrix,
    dual_objective,
    hamming_distances,
    model_from_json,
    model_to_json,
    posterior,
    predict,
    predict_multiclass,
    score,
    softmax_loss_and_gradient,
    train_binary_svm,
    train_multiclass_svm,
    train_softmax,
)
from src.utils.datasets import LabeledSet

FOUR_CLASS_MATRIX = np.array([
    [1, 1, 1, 0, 0, 0],
    [-1, 0, 0, 1, 1, 0],
    [0, -1, 0, -1, 0, 1],
    [0, 0, -1, 0, -1, -1],
])

TIGHT = SvmTrainConfig(kkt_tolerance=1e-8)


def blobs(rng, n, separation=3.0, spread=1.0, dim=2):
    X = np.concatenate([
        rng.normal(separation / 2, spread, size=(n // 2, dim)),
        rng.normal(-separation / 2, spread, size=(n - n // 2, dim)),
    ])
    y = np.concatenate([np.ones(n // 2), -np.ones(n - n // 2)]).astype(int)
    return LabeledSet(X, y)


def qp_oracle(data: LabeledSet, C: float) -> float:
    """Soft-margin dual (implicit bias) solved by bound-constrained quasi-Newton"""
    y = data.labels.astype(float)
    Q = np.outer(y, y) * (data.features @ data.features.T + 1.0)

    def negative_dual(a):
        return 0.5 * a @ Q @ a - a.sum(), Q @ a - 1.0

    result = minimize(
        negative_dual, np.zeros(len(y)), jac=True, method="L-BFGS-B",
        bounds=[(0.0, C)] * len(y), options={"maxiter": 20000, "ftol": 1e-15, "gtol": 1e-12},
    )
    return -result.fun


# ---------------------------------------------------------------------------
# binary SVM
# ---------------------------------------------------------------------------

def test_symmetric_pair():
    data = LabeledSet(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([1, -1]))
    boundary = train_binary_svm(data, SvmTrainConfig())
    np.testing.assert_allclose(boundary.weights, [1.0, 0.0], atol=1e-9)
    assert boundary.bias == pytest.approx(0.0, abs=1e-9)
    assert score(boundary, [2.0, 0.0]) == pytest.approx(2.0)
    assert boundary.converged


def test_bias_is_a_penalised_constant_feature():
    data = blobs(np.random.default_rng(3), 30, separation=1.5)
    data = LabeledSet(data.features + 4.0, data.labels)
    boundary = train_binary_svm(data, TIGHT)
    ay = boundary.dual_coefficients * data.labels
    np.testing.assert_allclose(boundary.weights, ay @ data.features, atol=1e-9)
    assert boundary.bias == pytest.approx(ay.sum(), abs=1e-9)
    x = np.array([4.5, 3.0])
    expected = (x @ boundary.weights + boundary.bias) / np.linalg.norm(boundary.weights)
    assert score(boundary, x) == pytest.approx(expected)


def test_duplicates_do_not_move_the_boundary():
    X = np.array([[1.0, 0.0], [-1.0, 0.0]])
    single = train_binary_svm(LabeledSet(X, np.array([1, -1])), TIGHT)
    doubled = train_binary_svm(LabeledSet(np.vstack([X, X]), np.array([1, -1, 1, -1])), TIGHT)
    np.testing.assert_allclose(doubled.weights, single.weights, atol=1e-6)
    assert doubled.bias == pytest.approx(single.bias, abs=1e-6)


def test_separable_blobs_reach_full_training_accuracy():
    data = blobs(np.random.default_rng(0), 40, separation=6.0, spread=0.5)
    boundary = train_binary_svm(data, SvmTrainConfig(slack_penalty=1.0, kkt_tolerance=1e-7))
    predicted = np.where(boundary.score(data.features) > 0, 1, -1)
    assert np.all(predicted == data.labels)
    assert dual_objective(boundary.dual_coefficients, data.features, data.labels) == \
        pytest.approx(qp_oracle(data, 1.0), rel=1e-4)


@pytest.mark.parametrize("instance", range(20))
def test_dual_objective_matches_qp_oracle(instance):
    rng = np.random.default_rng(100 + instance)
    n = int(rng.integers(6, 51))
    data = blobs(rng, n, separation=rng.uniform(0.5, 4.0), dim=int(rng.integers(2, 6)))
    C = float(rng.choice([0.5, 1.0, 2.0]))
    boundary = train_binary_svm(data, SvmTrainConfig(slack_penalty=C, kkt_tolerance=1e-7))
    ours = dual_objective(boundary.dual_coefficients, data.features, data.labels)
    assert ours == pytest.approx(qp_oracle(data, C), rel=1e-4)


def test_warm_start_reaches_the_same_optimum():
    rng = np.random.default_rng(7)
    data = blobs(rng, 40, separation=2.0)
    order = rng.permutation(40)
    data = LabeledSet(data.features[order], data.labels[order])
    head = LabeledSet(data.features[:20], data.labels[:20])
    warm = train_binary_svm(data, TIGHT, warm_start=train_binary_svm(head, TIGHT))
    cold = train_binary_svm(data, TIGHT)
    assert dual_objective(warm.dual_coefficients, data.features, data.labels) == \
        pytest.approx(dual_objective(cold.dual_coefficients, data.features, data.labels), rel=1e-6)


def test_iteration_cap_warns():
    data = blobs(np.random.default_rng(3), 40, separation=1.0)
    with pytest.warns(ConvergenceWarning):
        boundary = train_binary_svm(data, SvmTrainConfig(max_iterations=1))
    assert not boundary.converged


def test_single_class_rejected():
    with pytest.raises(InsufficientClassesError):
        train_binary_svm(LabeledSet(np.ones((3, 2)), np.ones(3, dtype=int)), SvmTrainConfig())


def test_score_examples():
    assert score(LinearBoundary(np.array([1.0, 0.0]), 0.0), [2.0, 0.0]) == pytest.approx(2.0)
    assert score(LinearBoundary(np.array([3.0, 0.0]), 0.0), [2.0, 0.0]) == pytest.approx(2.0)
    assert score(LinearBoundary(np.array([1.0, 1.0]), -1.0), [0.5, 0.5]) == pytest.approx(0.0)
    with pytest.raises(UntrainedModelError):
        score(LinearBoundary(np.zeros(2), 1.0), [1.0, 1.0])


@given(
    st.lists(st.floats(-2, 2), min_size=3, max_size=3).filter(lambda w: np.linalg.norm(w) > 0.5),
    st.floats(-1, 1),
    st.lists(st.floats(-2, 2), min_size=3, max_size=3),
    st.floats(1e-3, 1e3),
)
def test_score_is_scale_invariant(w, b, x, scale):
    base = LinearBoundary(np.array(w), b)
    scaled = LinearBoundary(scale * np.array(w), scale * b)
    assert scaled.score(x) == pytest.approx(base.score(x), abs=1e-12, rel=1e-12)


# ---------------------------------------------------------------------------
# one-vs-one
# ---------------------------------------------------------------------------

def test_coding_matrix_structure():
    np.testing.assert_array_equal(coding_matrix(4), FOUR_CLASS_MATRIX)
    np.testing.assert_array_equal(coding_matrix(2), [[1], [-1]])
    M = coding_matrix(10)
    assert M.shape == (10, 45)
    assert np.all((M == 1).sum(axis=0) == 1) and np.all((M == -1).sum(axis=0) == 1)
    assert len({tuple(row) for row in M}) == 10


def test_hamming_examples():
    assert hamming_distances([1, 1, 1, -1, 1, -1], FOUR_CLASS_MATRIX)[0] == 0.0
    assert hamming_distances([1, 1, 1, -1, 0, -1], FOUR_CLASS_MATRIX)[1] == pytest.approx(2.5)
    assert hamming_distances([1, 1, 1, -1, -1, 0], FOUR_CLASS_MATRIX)[1] == pytest.approx(3.0)


def identity_model(L: int, class_count: int) -> MulticlassSvm:
    """Component l scores coordinate l of the input, so inputs are score vectors"""
    return MulticlassSvm(
        boundaries=tuple(LinearBoundary(np.eye(L)[ell], 0.0) for ell in range(L)),
        coding_matrix=coding_matrix(class_count),
        class_count=class_count,
    )


def brute_force_decode(signs, matrix):
    distances = []
    for row in matrix:
        d = 0.0
        for m, s in zip(row, signs):
            if m == 0:
                continue
            d += 0.5 if s == 0 else (0.0 if m * s > 0 else 1.0)
        distances.append(d)
    best = min(distances)
    return distances.index(best)


def test_decoder_agrees_with_exhaustive_evaluation():
    model = identity_model(6, 4)
    for pattern in itertools.product((-1.0, 0.0, 1.0), repeat=6):
        predicted, scores = predict_multiclass(model, np.array(pattern))
        np.testing.assert_array_equal(scores, pattern)
        assert predicted == brute_force_decode(pattern, FOUR_CLASS_MATRIX)


def test_ties_go_to_the_lowest_class():
    predicted, _ = predict_multiclass(identity_model(6, 4), np.zeros(6))
    assert predicted == 0


def test_multiclass_on_four_blobs():
    rng = np.random.default_rng(4)
    centers = np.array([[3, 3], [3, -3], [-3, 3], [-3, -3]], dtype=float)
    labels = np.repeat(np.arange(4), 15)
    data = LabeledSet(centers[labels] + 0.3 * rng.standard_normal((60, 2)), labels)
    model = train_multiclass_svm(data, SvmTrainConfig(), class_count=4)
    assert len(model.boundaries) == 6 and model.trained
    assert np.all(predict(model, data.features) == labels)
    again = train_multiclass_svm(data, SvmTrainConfig(), class_count=4, warm_start=model)
    assert all(a is b for a, b in zip(again.boundaries, model.boundaries))


def test_two_class_multiclass_reduces_to_binary():
    data = blobs(np.random.default_rng(5), 30, separation=5.0)
    labels = np.where(data.labels > 0, 0, 1)
    model = train_multiclass_svm(LabeledSet(data.features, labels), SvmTrainConfig(), class_count=2)
    assert len(model.boundaries) == 1
    assert np.all(predict(model, data.features) == labels)


def test_missing_pairs_stay_untrained():
    data = LabeledSet(np.array([[1.0, 0.0], [-1.0, 0.0]]), np.array([0, 1]))
    model = train_multiclass_svm(data, SvmTrainConfig(), class_count=3)
    assert model.boundaries[0] is not None
    assert model.boundaries[1] is None and model.boundaries[2] is None
    with pytest.raises(UntrainedModelError):
        predict_multiclass(model, [1.0, 0.0])


def test_multiclass_needs_two_classes():
    with pytest.raises(InsufficientClassesError):
        train_multiclass_svm(LabeledSet(np.ones((2, 2)), np.zeros(2, dtype=int)), SvmTrainConfig())


# ---------------------------------------------------------------------------
# softmax
# ---------------------------------------------------------------------------

def test_zero_model_posterior_is_uniform():
    np.testing.assert_allclose(posterior(SoftmaxModel.zeros(4, 3), np.ones(3)), np.full(4, 0.25))


def test_posterior_shift_invariance():
    rng = np.random.default_rng(0)
    model = SoftmaxModel(rng.standard_normal((3, 4)), rng.standard_normal(3))
    shifted = SoftmaxModel(model.weights, model.bias + 17.0)
    x = rng.standard_normal(4)
    np.testing.assert_allclose(posterior(shifted, x), posterior(model, x), rtol=1e-12)


@given(st.lists(st.floats(-20, 20), min_size=4, max_size=4))
def test_posterior_is_a_distribution(x):
    model = SoftmaxModel(np.arange(12, dtype=float).reshape(3, 4) / 10, np.array([0.1, -0.2, 0.3]))
    p = posterior(model, np.array(x))
    assert np.all(p >= 0)
    assert p.sum() == pytest.approx(1.0, abs=1e-9)


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    data = LabeledSet(rng.uniform(0, 1, (12, 5)), rng.integers(0, 3, 12))
    model = SoftmaxModel(rng.standard_normal((3, 5)), rng.standard_normal(3))
    _, grad_w, grad_b = softmax_loss_and_gradient(model, data, weight_decay=0.01)
    h = 1e-6
    numeric_w = np.zeros_like(grad_w)
    for idx in np.ndindex(*model.weights.shape):
        plus, minus = model.weights.copy(), model.weights.copy()
        plus[idx] += h
        minus[idx] -= h
        numeric_w[idx] = (
            softmax_loss_and_gradient(SoftmaxModel(plus, model.bias), data, 0.01)[0]
            - softmax_loss_and_gradient(SoftmaxModel(minus, model.bias), data, 0.01)[0]
        ) / (2 * h)
    numeric_b = np.zeros_like(grad_b)
    for c in range(3):
        plus, minus = model.bias.copy(), model.bias.copy()
        plus[c] += h
        minus[c] -= h
        numeric_b[c] = (
            softmax_loss_and_gradient(SoftmaxModel(model.weights, plus), data, 0.01)[0]
            - softmax_loss_and_gradient(SoftmaxModel(model.weights, minus), data, 0.01)[0]
        ) / (2 * h)
    np.testing.assert_allclose(grad_w, numeric_w, rtol=1e-5, atol=1e-9)
    np.testing.assert_allclose(grad_b, numeric_b, rtol=1e-5, atol=1e-9)


def test_one_sample_per_class_is_memorized():
    data = LabeledSet(np.eye(3), np.arange(3))
    model = train_softmax(data, None, SoftmaxTrainConfig(learning_rate=0.5, epochs=2000, batch_size=3))
    assert np.all(predict(model, data.features) == data.labels)
    assert posterior(model, data.features).max(axis=1).min() > 0.99


def test_full_batch_loss_is_nonincreasing():
    rng = np.random.default_rng(2)
    data = LabeledSet(rng.uniform(0, 1, (60, 5)), rng.integers(0, 3, 60))
    model = train_softmax(data, None, SoftmaxTrainConfig(learning_rate=0.1, momentum=0.0, epochs=50, batch_size=60))
    assert np.all(np.diff(model.training_loss) <= 1e-12)


def test_warm_start_continues_training():
    rng = np.random.default_rng(3)
    data = LabeledSet(rng.uniform(0, 1, (30, 4)), np.tile(np.arange(3), 10))
    cfg = SoftmaxTrainConfig(learning_rate=0.1, momentum=0.0, epochs=5, batch_size=30)
    first = train_softmax(data, None, cfg, class_count=3)
    second = train_softmax(data, first, cfg, class_count=3)
    assert second.training_loss[0] < first.training_loss[0]


def test_softmax_errors():
    data = LabeledSet(np.eye(2), np.array([0, 1]))
    with pytest.raises(ConfigError):
        train_softmax(data, None, SoftmaxTrainConfig.model_construct(learning_rate=0.0))
    with pytest.raises(InsufficientClassesError):
        train_softmax(LabeledSet(np.eye(2), np.array([1, 1])), None, SoftmaxTrainConfig())


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------

def test_json_snapshots_preserve_predictions():
    rng = np.random.default_rng(6)
    labels = np.repeat(np.arange(3), 10)
    data = LabeledSet(np.eye(3)[labels] * 3 + 0.2 * rng.standard_normal((30, 3)), labels)
    svm = train_multiclass_svm(data, SvmTrainConfig(), class_count=3, classes=["a", "b", "c"])
    soft = train_softmax(data, None, SoftmaxTrainConfig(epochs=20, batch_size=10), class_count=3)
    for model in (svm, soft, svm.boundaries[0]):
        restored = model_from_json(model_to_json(model))
        if isinstance(model, LinearBoundary):
            np.testing.assert_allclose(restored.score(data.features), model.score(data.features))
        else:
            np.testing.assert_array_equal(predict(restored, data.features), predict(model, data.features))
    assert model_from_json(model_to_json(svm)).classes == ("a", "b", "c")


def test_no_convergence_warning_on_easy_data():
    data = blobs(np.random.default_rng(8), 20, separation=8.0, spread=0.2)
    with warnings.catch_warnings():
        warnings.simplefilter("error", ConvergenceWarning)
        train_binary_svm(data, SvmTrainConfig())
