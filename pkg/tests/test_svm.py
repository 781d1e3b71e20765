import math

import numpy as np
import pytest

from app.errors import DimensionMismatch, EmptyInput, InvalidParameter, NonFinite, SingleClass, UntrainedModel
from app.svm import (
    couple_pairwise,
    fit_sigmoid,
    fit_standardizer,
    predict,
    predict_class,
    predict_proba,
    rbf_kernel,
    train_svc,
    train_svr,
)

CENTERS = {"jp2k": (-5.0, -5.0), "jpeg": (-5.0, 5.0), "wn": (5.0, -5.0), "gblur": (5.0, 5.0)}


def _blobs(names, per_class=50, spread=0.5, seed=0):
    rng = np.random.default_rng(seed)
    X, labels = [], []
    for name in names:
        X.append(rng.normal(CENTERS[name], spread, size=(per_class, 2)))
        labels += [name] * per_class
    return np.vstack(X), labels


def test_standardizer_centres_and_scales():
    rng = np.random.default_rng(1)
    X = rng.normal(3.0, 4.0, size=(40, 11))
    X[:, 5] = 2.5
    std = fit_standardizer(X)
    Z = std.apply(X)
    assert np.allclose(Z.mean(axis=0), 0.0, atol=1e-10)
    assert np.allclose(np.delete(Z, 5, axis=1).var(axis=0), 1.0, atol=1e-10)
    assert np.all(Z[:, 5] == 0.0)
    assert np.allclose(std.unapply(Z), X, atol=1e-12)

    with pytest.raises(EmptyInput):
        fit_standardizer(X[:1])
    with pytest.raises(DimensionMismatch):
        std.apply(X[:, :10])


def test_rbf_kernel_values():
    assert rbf_kernel([1.0, 2.0], [1.0, 2.0], 3.0) == 1.0
    assert rbf_kernel([0.0, 0.0], [1.0, 1.0], 0.5) == pytest.approx(math.exp(-1.0), abs=1e-15)
    a, b = np.array([0.3, -1.0, 2.0]), np.array([1.0, 0.5, 0.0])
    value = rbf_kernel(a, b, 0.7)
    assert 0.0 < value <= 1.0
    assert value == rbf_kernel(b, a, 0.7)
    with pytest.raises(DimensionMismatch):
        rbf_kernel([1.0], [1.0, 2.0], 1.0)


def test_svc_separates_two_blobs():
    X, labels = _blobs(["wn", "gblur"])
    model = train_svc(X, labels, C=1.0, gamma=0.5)
    assert predict_class(model, X) == labels
    assert all(gap <= 1e-3 for gap in model.kkt_gaps)


def test_svc_four_blobs_held_out_accuracy_and_probabilities():
    names = list(CENTERS)
    X, labels = _blobs(names, seed=2)
    X_test, labels_test = _blobs(names, per_class=25, seed=3)
    model = train_svc(X, labels, C=1.0, gamma=0.5, classes=names)

    predicted = predict_class(model, X_test)
    accuracy = np.mean([p == t for p, t in zip(predicted, labels_test)])
    assert accuracy >= 0.95

    probs = predict_proba(model, X_test)
    assert probs.shape == (100, 4)
    assert np.all(probs >= 0.0) and np.all(probs <= 1.0)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    deep = predict_proba(model, np.array(CENTERS["wn"]))
    assert deep[names.index("wn")] > 0.9


def test_svc_ignores_training_order():
    names = list(CENTERS)
    X, labels = _blobs(names, per_class=20, spread=1.5, seed=4)
    perm = np.random.default_rng(5).permutation(len(labels))
    a = train_svc(X, labels, C=2.0, gamma=0.25, classes=names)
    b = train_svc(X[perm], [labels[i] for i in perm], C=2.0, gamma=0.25, classes=names)

    queries = np.random.default_rng(6).uniform(-8, 8, size=(30, 2))
    assert np.allclose(predict_proba(a, queries), predict_proba(b, queries), atol=1e-6)


def test_svc_label_swap_mirrors_decisions():
    X, labels = _blobs(["wn", "gblur"], spread=2.5, seed=7)
    swapped = ["gblur" if v == "wn" else "wn" for v in labels]
    a = train_svc(X, labels, C=1.0, gamma=0.5)
    b = train_svc(X, swapped, C=1.0, gamma=0.5)

    queries = np.random.default_rng(8).uniform(-8, 8, size=(20, 2))
    assert np.allclose(a.decision_values(queries), -b.decision_values(queries), atol=1e-6)
    assert np.allclose(predict_proba(a, queries), predict_proba(b, queries)[:, ::-1], atol=1e-6)


def test_svc_errors():
    X, labels = _blobs(["wn"])
    with pytest.raises(SingleClass):
        train_svc(X, labels, C=1.0, gamma=1.0)
    bad = np.array([[0.0, np.nan], [1.0, 1.0]])
    with pytest.raises(NonFinite):
        train_svc(bad, ["wn", "gblur"], C=1.0, gamma=1.0)
    with pytest.raises(UntrainedModel):
        predict_proba(None, X)


def test_sigmoid_fit_orders_scores():
    rng = np.random.default_rng(9)
    scores = rng.normal(size=200)
    positive = scores + 0.3 * rng.normal(size=200) > 0
    A, B = fit_sigmoid(scores, positive)
    assert A < 0


def test_pairwise_coupling_is_a_distribution():
    r = np.array([[0.0, 0.9, 0.8], [0.1, 0.0, 0.6], [0.2, 0.4, 0.0]])
    p = couple_pairwise(r)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(p >= 0)
    assert np.argmax(p) == 0
    uniform = couple_pairwise(np.full((4, 4), 0.5))
    assert np.allclose(uniform, 0.25, atol=1e-6)


def test_svr_constant_targets():
    X = np.linspace(0, 1, 20).reshape(-1, 1)
    model = train_svr(X, np.full(20, 3.5), C=8.0, gamma=1.0, nu=0.5)
    assert np.allclose(predict(model, np.linspace(-0.5, 1.5, 9).reshape(-1, 1)), 3.5, atol=1e-3)


def test_svr_fits_noiseless_line():
    x = np.linspace(0, 1, 50)
    # C is the total box budget: 8 per sample here.
    model = train_svr(x.reshape(-1, 1), 2.0 * x, C=8.0 * 50, gamma=1.0, nu=0.5)
    x_test = np.random.default_rng(10).uniform(0, 1, 200)
    rmse = np.sqrt(np.mean((predict(model, x_test.reshape(-1, 1)) - 2.0 * x_test) ** 2))
    assert rmse <= 0.05
    assert model.kkt_gap <= 1e-3


def test_svr_nu_property():
    rng = np.random.default_rng(11)
    x = rng.uniform(-3, 3, 80)
    y = np.sin(x) + 0.2 * rng.normal(size=80)
    n = x.size
    for nu in (0.2, 0.5, 0.8):
        model = train_svr(x.reshape(-1, 1), y, C=10.0, gamma=0.5, nu=nu)
        assert np.all(np.abs(model.coef) <= model.C / n + 1e-12)
        assert model.n_support / n >= nu - 2.0 / n
        assert model.margin_errors / n <= nu + 2.0 / n


def test_svr_duplicated_training_set_predicts_the_same():
    rng = np.random.default_rng(12)
    x = rng.uniform(0, 2, 30)
    y = np.cos(2 * x) + 0.1 * rng.normal(size=30)
    X = x.reshape(-1, 1)
    single = train_svr(X, y, C=30.0, gamma=2.0, nu=0.5, tol=1e-10)
    double = train_svr(np.vstack([X, X]), np.r_[y, y], C=30.0, gamma=2.0, nu=0.5, tol=1e-10)

    queries = np.linspace(0, 2, 25).reshape(-1, 1)
    assert np.allclose(predict(single, queries), predict(double, queries), atol=1e-6)


def test_svr_input_checks():
    with pytest.raises(NonFinite):
        train_svr(np.array([[0.0], [1.0]]), [0.0, np.inf], C=1.0, gamma=1.0)
    with pytest.raises(UntrainedModel):
        predict(None, [[0.0]])


def test_hyperparameters_out_of_range_raise_invalid_parameter():
    X, labels = _blobs(("wn", "gblur"), per_class=10)
    y = np.arange(X.shape[0], dtype=float)
    with pytest.raises(InvalidParameter):
        rbf_kernel([0.0], [1.0], gamma=0.0)
    with pytest.raises(InvalidParameter):
        train_svc(X, labels, C=0.0, gamma=0.5)
    with pytest.raises(InvalidParameter):
        train_svr(X, y, C=1.0, gamma=0.5, nu=1.0)
    with pytest.raises(InvalidParameter):
        train_svr(X, y, C=1.0, gamma=-1.0, nu=0.5)
