import json

import numpy as np
import pytest

from gnnuplift import _kernels
from gnnuplift._kernels import _pykernels
from gnnuplift.errors import ShapeError
from gnnuplift.evaluation import roc_auc
from gnnuplift.teacher import (
    SOFT_EPS,
    GbdtModel,
    GbdtParams,
    Tree,
    augment,
    fit_gbdt,
    predict_soft,
    training_curve,
)


def test_constant_target_has_no_trees(rng):
    x = rng.random((50, 3))
    model = fit_gbdt(x, np.full(50, 3.0))
    assert model.trees == []
    np.testing.assert_array_equal(model.predict_raw(x), 3.0)


def test_single_row_model():
    model = fit_gbdt(np.array([[0.3, 1.0]]), np.array([2.5]))
    assert model.base_score == 2.5 and model.trees == []


def test_noiseless_monotone_signal_converges(rng):
    x = rng.random((500, 3))
    y = x[:, 0].copy()
    model = fit_gbdt(x, y, GbdtParams(max_depth=3, n_rounds=100, learning_rate=0.1))
    assert np.mean((model.predict_raw(x) - y) ** 2) < 0.01


def test_training_mse_non_increasing(rng):
    x = rng.random((400, 4))
    y = np.sin(4 * x[:, 0]) + x[:, 1] * x[:, 2] + 0.1 * rng.normal(size=400)
    model = fit_gbdt(x, y, GbdtParams(n_rounds=60))
    curve = training_curve(model, x, y)
    assert np.all(np.diff(curve) <= 1e-12)
    assert len(model.trees) <= 60


def test_tree_shape_limits(rng):
    x = rng.random((300, 2))
    y = x[:, 0] * 10 + rng.normal(size=300)
    params = GbdtParams(max_depth=2, min_samples_leaf=8, n_rounds=5)
    model = fit_gbdt(x, y, params)
    for tree in model.trees:
        assert tree.n_leaves <= 4
        leaf_of = _pykernels.predict_tree(
            x, tree.feature, tree.threshold, tree.left, tree.right, np.arange(tree.value.size, dtype=float)
        )
        _, counts = np.unique(leaf_of, return_counts=True)
        assert counts.min() >= 8


def test_binary_soft_labels_clamped_and_ranked(rng):
    x = rng.random((1000, 2))
    y = (x[:, 0] > 0.5).astype(float)
    model = fit_gbdt(x, y)
    assert model.binary_target
    soft = predict_soft(model, x).y_hat
    assert soft.min() >= SOFT_EPS and soft.max() <= 1 - SOFT_EPS
    assert roc_auc(soft, y) >= 0.95


def test_clamp_rule_on_raw_overshoot():
    model = GbdtModel(base_score=1.3, learning_rate=0.1, max_depth=3, n_rounds=1, n_features=1,
                      binary_target=True)
    assert predict_soft(model, np.zeros((2, 1))).y_hat.tolist() == [1 - 1e-6] * 2
    model.binary_target = False
    assert predict_soft(model, np.zeros((1, 1))).y_hat[0] == 1.3


def test_prediction_pure_and_shape_checked(rng):
    x = rng.random((100, 3))
    model = fit_gbdt(x, x[:, 1] + rng.normal(size=100) * 0.1)
    np.testing.assert_array_equal(predict_soft(model, x).y_hat, predict_soft(model, x).y_hat)
    with pytest.raises(ShapeError):
        predict_soft(model, x[:, :2])


def test_json_round_trip_exact(tmp_path, rng):
    x = rng.random((200, 3))
    model = fit_gbdt(x, np.exp(x[:, 0]) + rng.normal(size=200), GbdtParams(n_rounds=20))
    path = tmp_path / "m.json"
    model.save(path)
    back = GbdtModel.load(path)
    assert back.predict_raw(x).tobytes() == model.predict_raw(x).tobytes()
    assert json.loads(path.read_text())["format"] == "gnnuplift.gbdt/1"


def test_teacher_sees_treatment(synthetic_small):
    xa = augment(synthetic_small.x, synthetic_small.t)
    assert xa.shape == (synthetic_small.n, synthetic_small.d + 1)
    np.testing.assert_array_equal(xa[:, -1], synthetic_small.t)


def test_fit_identical_across_backends(monkeypatch, rng):
    ck = pytest.importorskip("gnnuplift._kernels._ckernels")
    x = rng.random((400, 5))
    y = np.sin(3 * x[:, 0]) + x[:, 1] + 0.2 * rng.normal(size=400)
    monkeypatch.setattr(_kernels, "best_split_sorted", ck.best_split_sorted)
    monkeypatch.setattr(_kernels, "predict_tree", ck.predict_tree)
    a = fit_gbdt(x, y).to_dict()
    monkeypatch.setattr(_kernels, "best_split_sorted", _pykernels.best_split_sorted)
    monkeypatch.setattr(_kernels, "predict_tree", _pykernels.predict_tree)
    b = fit_gbdt(x, y).to_dict()
    assert json.dumps(a) == json.dumps(b)
