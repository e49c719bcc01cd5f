import logging
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obfubench import classifiers as clf
from obfubench.classifiers import (
    MODEL_KINDS,
    Model,
    TrainConfig,
    TrainingError,
    cross_validate,
    fit,
    gradient_check,
    load_model,
    model_from_dict,
    model_to_dict,
    predict,
    predict_matrix,
    save_model,
    stratified_kfold,
)
from obfubench.errors import DataError
from obfubench.features import FeatureVector


def toy(seed=0, n=20):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal(0.0, 1.0, (n, 2)), rng.normal(10.0, 1.0, (n, 2))])
    return X, ["low"] * n + ["high"] * n


def blobs(n_per=12, k=3, dim=6, seed=0):
    rng = np.random.default_rng(seed)
    centers = rng.normal(0, 3, (k, dim))
    X = np.vstack([c + rng.normal(0, 0.5, (n_per, dim)) for c in centers])
    y = [f"c{i}" for i in range(k) for _ in range(n_per)]
    return [FeatureVector(x, lab, f"s{j}") for j, (x, lab) in enumerate(zip(X, y))]


@pytest.mark.parametrize(
    "kwargs",
    [{"model": "knn"}, {"k_folds": 1}, {"max_epochs": 0}, {"learning_rate": 0}, {"l2_reg": -1}, {"hidden_units": 0}],
)
def test_config_validation(kwargs):
    with pytest.raises(DataError):
        TrainConfig(**kwargs)


def test_test_fraction():
    assert TrainConfig(k_folds=5).test_fraction_per_fold == 0.2


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_toy_set_is_learned(kind):
    X, y = toy()
    model = fit(X, y, TrainConfig(model=kind))
    assert model.epochs_run <= 1000
    assert predict_matrix(model, X) == y


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_training_is_bit_reproducible(kind):
    X, y = toy(3)
    a = fit(X, y, TrainConfig(model=kind, seed=5))
    b = fit(X, y, TrainConfig(model=kind, seed=5))
    assert a.params.keys() == b.params.keys()
    for name in a.params:
        assert a.params[name].tobytes() == b.params[name].tobytes()


def test_mlp_seed_matters():
    X, y = toy()
    a = fit(X, y, TrainConfig(model="mlp", seed=1, max_epochs=1))
    b = fit(X, y, TrainConfig(model="mlp", seed=2, max_epochs=1))
    assert not np.array_equal(a.params["W1"], b.params["W1"])


def test_mlp_init_range():
    p = clf.init_params("mlp", 16, 3, 10, seed=0)
    assert np.abs(p["W1"]).max() <= 1 / np.sqrt(16)
    assert np.abs(p["W2"]).max() <= 1 / np.sqrt(10)


def test_logreg_loss_non_increasing():
    X, y = toy()
    model = fit(X, y, TrainConfig(model="logreg"))
    hist = np.array(model.loss_history)
    assert np.all(np.diff(hist) <= 1e-12)


def test_huge_l2_shrinks_to_majority():
    X, y = toy()
    X, y = X[:35], y[:35]  # 20 low, 15 high
    model = fit(X, y, TrainConfig(model="logreg", l2_reg=1e9))
    assert np.abs(model.params["W"]).max() < 1e-6
    assert set(predict_matrix(model, X)) == {"low"}


def test_single_class_rejected():
    X, _ = toy()
    with pytest.raises(DataError, match="2 distinct"):
        fit(X, ["a"] * len(X), TrainConfig())


def test_nan_loss_reports_epoch():
    X, y = toy()
    with pytest.raises(TrainingError, match="epoch"):
        fit(X * 1e200, y, TrainConfig(model="logreg", learning_rate=1e10))


def test_zero_model_predicts_first_label():
    model = Model("logreg", ["x", "y", "z"], {"W": np.zeros((4, 3)), "b": np.zeros(3)})
    assert predict_matrix(model, np.ones((5, 4))) == ["x"] * 5


def test_argmax_invariances():
    vectors = blobs()
    model = clf.train(vectors, TrainConfig(model="logreg"))
    base = predict(model, vectors)
    scaled = Model("logreg", model.labels, {"W": model.params["W"] * 3.5, "b": model.params["b"] * 3.5})
    shifted = Model("logreg", model.labels, {"W": model.params["W"], "b": model.params["b"] + 7.0})
    assert predict(scaled, vectors) == base
    assert predict(shifted, vectors) == base


def test_dimension_mismatch():
    model = clf.train(blobs(dim=6), TrainConfig(max_epochs=5))
    with pytest.raises(DataError, match="dimension"):
        predict_matrix(model, np.zeros((2, 7)))


# -- gradient checks ---------------------------------------------------------


def _batch(n=5, d=4, c=3, seed=0):
    rng = np.random.default_rng(seed)
    return rng.normal(size=(n, d)), [int(v) for v in rng.integers(0, c, n)], c


def test_gradient_check_logreg():
    X, y, c = _batch()
    assert gradient_check("logreg", X, y, n_classes=c) <= 1e-4


@pytest.mark.parametrize("hidden", [1, 5])
def test_gradient_check_mlp(hidden):
    X, y, c = _batch(seed=1)
    assert gradient_check("mlp", X, y, n_classes=c, hidden_units=hidden, seed=3) <= 1e-4


def test_gradient_check_svm_at_generic_point():
    X, y, c = _batch(seed=2)
    assert gradient_check("svm", X, y, n_classes=c) <= 1e-4


@pytest.mark.parametrize("eps", [0.0, -1e-5])
def test_gradient_check_rejects_bad_epsilon(eps):
    X, y, c = _batch()
    with pytest.raises(DataError):
        gradient_check("logreg", X, y, eps)


# -- folds -------------------------------------------------------------------


def _check_partition(labels, k, seed):
    folds = stratified_kfold(labels, k, seed)
    n = len(labels)
    tests = [t for _, t in folds]
    assert sorted(i for t in tests for i in t) == list(range(n))
    for train, test in folds:
        assert not set(train) & set(test) and len(train) + len(test) == n
    total = Counter(labels)
    for test in tests:
        got = Counter(labels[i] for i in test)
        for lab, n_c in total.items():
            assert abs(got.get(lab, 0) - n_c / k) < 1.0 + 1e-9


def test_balanced_folds():
    labels = ["a", "b"] * 5
    folds = stratified_kfold(labels, 5, 0)
    for _, test in folds:
        assert sorted(labels[i] for i in test) == ["a", "b"]


def test_fold_sizes_for_1554_files():
    labels = [f"L{i % 14}" for i in range(1554)]
    sizes = sorted(len(t) for _, t in stratified_kfold(labels, 5, 0))
    assert sizes == [310, 311, 311, 311, 311]


@settings(max_examples=100, deadline=None)
@given(n=st.integers(2, 120), k=st.integers(2, 10), n_classes=st.integers(1, 6), seed=st.integers(0, 2**32))
def test_partition_property(n, k, n_classes, seed):
    k = min(k, n)
    rng = np.random.default_rng(seed)
    labels = [f"c{v}" for v in rng.integers(0, n_classes, n)]
    _check_partition(labels, k, seed)


def test_folds_deterministic():
    labels = [f"c{i % 4}" for i in range(40)]
    assert stratified_kfold(labels, 5, 9) == stratified_kfold(labels, 5, 9)
    assert stratified_kfold(labels, 5, 9) != stratified_kfold(labels, 5, 10)


def test_k_larger_than_n():
    with pytest.raises(DataError, match="exceeds"):
        stratified_kfold(["a", "b", "c"], 4, 0)


def test_small_class_warns(caplog):
    with caplog.at_level(logging.WARNING):
        stratified_kfold(["a"] * 10 + ["b"] * 2, 5, 0)
    assert "not strict" in caplog.text


def test_cross_validate_predicts_every_sample():
    vectors = blobs()
    cv = cross_validate(vectors, TrainConfig(model="logreg", k_folds=4))
    assert len(cv.models) == 4
    assert all(cv.predictions)
    assert cv.last_model is cv.models[-1]
    assert np.mean([p == v.label for p, v in zip(cv.predictions, vectors)]) == 1.0


# -- persistence -------------------------------------------------------------


@pytest.mark.parametrize("kind", MODEL_KINDS)
def test_model_roundtrip(tmp_path, kind):
    vectors = blobs()
    model = clf.train(vectors, TrainConfig(model=kind, max_epochs=20))
    path = tmp_path / "m" / "model.json"
    save_model(model, path, TrainConfig(model=kind))
    back = load_model(path)
    assert back.labels == model.labels and back.kind == kind
    for name in model.params:
        assert np.array_equal(back.params[name], model.params[name])
    assert predict(back, vectors) == predict(model, vectors)


@pytest.mark.parametrize(
    "patch, message",
    [({"format": "other"}, "not a model"), ({"version": 99}, "version"), ({"kind": "tree"}, "kind")],
)
def test_model_file_validation(patch, message):
    doc = model_to_dict(clf.train(blobs(), TrainConfig(max_epochs=2)))
    doc.update(patch)
    with pytest.raises(DataError, match=message):
        model_from_dict(doc)


def test_unreadable_model(tmp_path):
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(DataError):
        load_model(tmp_path / "bad.json")
