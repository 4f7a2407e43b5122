import json

import numpy as np
import pytest

from gnnuplift.cate import CausalWeights, DmlConfig, dml_fit_feature, fold_ids, multi_head_cate, residualize
from gnnuplift.errors import ConfigError
from gnnuplift.teacher import GbdtParams, SoftLabels


def partially_linear(seed, n=5000, d=5, theta=2.0, j=0):
    """y = theta * x_j + g(x_-j) + N(0, 0.01^2), with x_j independent of the controls."""
    rng = np.random.default_rng(seed)
    x = rng.random((n, d))
    others = [k for k in range(d) if k != j]
    g = np.sin(3 * x[:, others[0]]) + x[:, others[1]] ** 2
    return x, theta * x[:, j] + g + rng.normal(0, 0.01, n)


def ols_slope(x, y):
    design = np.column_stack([np.ones_like(x), x])
    return np.linalg.lstsq(design, y, rcond=None)[0][1]


def test_fold_ids_balanced():
    f = fold_ids(11, 3, seed=0)
    assert sorted(np.bincount(f).tolist()) == [3, 4, 4]
    np.testing.assert_array_equal(f, fold_ids(11, 3, seed=0))


def test_residualize_pure_noise_controls(rng):
    n = 2000
    values = rng.normal(2.0, 1.0, n)
    controls = rng.normal(size=(n, 4))
    r = residualize(values, controls, DmlConfig())
    centered = values - values.mean()
    assert abs(r.mean() - centered.mean()) < 0.05
    assert np.corrcoef(r, centered)[0, 1] > 0.99


def test_residualize_exact_linear_fit(rng):
    n = 2000
    controls = rng.normal(size=(n, 3))
    r = residualize(controls[:, 0].copy(), controls, DmlConfig(ridge_lambda=1e-6))
    assert np.linalg.norm(r) / np.sqrt(n) < 0.05


def test_residualize_leave_one_out_and_errors():
    values = np.array([1.0, 2.0, 4.0])
    controls = np.array([[0.0], [1.0], [3.0]])
    r = residualize(values, controls, DmlConfig(n_folds=3))
    assert r.shape == (3,) and np.all(np.isfinite(r))
    with pytest.raises(ConfigError):
        residualize(values, controls, DmlConfig(n_folds=4))


def test_residualize_out_of_fold(rng):
    # a perfectly memorizable target: in-sample fit would give ~0 residuals with a gbdt
    x = rng.random((200, 2))
    v = rng.normal(size=200)
    r = residualize(v, x, DmlConfig(nuisance="gbdt", gbdt=GbdtParams(n_rounds=50, min_samples_leaf=1)))
    assert np.std(r) > 0.5


@pytest.mark.parametrize("nuisance", ["ridge", "gbdt"])
def test_constant_mode_recovers_theta(nuisance):
    x, y = partially_linear(seed=1)
    cfg = DmlConfig(final_stage="constant", nuisance=nuisance, seed=1)
    head = dml_fit_feature(0, x, SoftLabels(y), cfg)
    assert 1.9 <= head.coef[0] <= 2.1
    assert abs(head.coef[0] - ols_slope(x[:, 0], y)) < 0.1


def test_null_feature_and_permutation_oracle():
    x, y = partially_linear(seed=2)
    cfg = DmlConfig(final_stage="constant")
    assert abs(dml_fit_feature(3, x, y, cfg).coef[0]) <= 0.05
    xp = x.copy()
    xp[:, 0] = np.random.default_rng(0).permutation(xp[:, 0])
    assert abs(dml_fit_feature(0, xp, y, cfg).coef[0]) <= 0.05


def test_duplicate_feature_is_degenerate(rng):
    x = rng.random((1000, 3))
    x[:, 2] = x[:, 0]
    head = dml_fit_feature(0, x, x[:, 1] + x[:, 0], DmlConfig())
    assert head.degenerate
    assert np.all(head.theta == 0)


def test_orthogonality_first_order_condition():
    x, y = partially_linear(seed=3)
    head = dml_fit_feature(0, x, y, DmlConfig(final_stage="constant"))
    r = head.y_res - head.coef[0] * head.t_res
    cosine = abs(r @ head.t_res) / (np.linalg.norm(r) * np.linalg.norm(head.t_res))
    assert cosine <= 1e-6


def test_scale_equivariance():
    x, y = partially_linear(seed=4)
    cfg = DmlConfig(final_stage="constant")
    base = dml_fit_feature(0, x, y, cfg).coef[0]
    xs = x.copy()
    xs[:, 0] *= 3.5
    assert dml_fit_feature(0, xs, y, cfg).coef[0] == pytest.approx(base / 3.5, rel=1e-9)


def test_linear_mode_recovers_heterogeneity(rng):
    n = 5000
    x = rng.random((n, 3))
    y = (1.0 + 2.0 * x[:, 1]) * x[:, 0] + x[:, 2] + rng.normal(0, 0.01, n)
    head = dml_fit_feature(0, x, y, DmlConfig(final_stage="linear"))
    # basis [1, x1, x2]: expect theta(x) = 1 + 2 x1
    np.testing.assert_allclose(head.coef, [1.0, 2.0, 0.0], atol=0.1)


def test_multi_head_symmetry(rng):
    n = 5000
    x = rng.random((n, 2))
    cw = multi_head_cate(x, x[:, 0] + x[:, 1], DmlConfig(final_stage="constant"))
    assert abs(cw.theta_mean[0] - cw.theta_mean[1]) < 0.1
    np.testing.assert_allclose(cw.theta_mean, cw.w.mean(axis=0))


def test_constant_soft_labels_give_zero_weights(rng):
    x = rng.random((2000, 4))
    cw = multi_head_cate(x, np.full(2000, 0.3), DmlConfig())
    assert np.all(np.abs(cw.theta_mean) <= 0.05)


def test_parallel_equals_sequential(rng):
    x = rng.random((800, 5))
    y = x @ np.arange(5.0) + np.sin(x[:, 0] * 4)
    a = multi_head_cate(x, y, DmlConfig(n_jobs=1))
    b = multi_head_cate(x, y, DmlConfig(n_jobs=4))
    assert a.w.tobytes() == b.w.tobytes()


def test_head_independence_under_feature_permutation(rng):
    x = rng.random((800, 4))
    y = 2 * x[:, 0] - x[:, 2] + x[:, 1] * x[:, 3]
    cfg = DmlConfig(final_stage="constant")
    perm = np.array([2, 0, 3, 1])
    a = multi_head_cate(x, y, cfg)
    b = multi_head_cate(x[:, perm], y, cfg)
    np.testing.assert_allclose(b.w[:, np.argsort(perm)], a.w, rtol=1e-10, atol=1e-12)


def test_degenerate_head_does_not_abort(rng):
    x = rng.random((500, 3))
    x[:, 1] = x[:, 0]
    cw = multi_head_cate(x, x[:, 2], DmlConfig())
    assert cw.degenerate[0] and cw.degenerate[1] and not cw.degenerate[2]


def test_export_and_reload(tmp_path, rng):
    x = rng.random((300, 3))
    cw = multi_head_cate(x, x[:, 0] * x[:, 1], DmlConfig())
    cw.save(tmp_path / "w.json", tmp_path / "w.csv", ["a", "b", "c"])
    summary = json.loads((tmp_path / "w.json").read_text())
    assert summary["feature_names"] == ["a", "b", "c"] and len(summary["theta_mean"]) == 3
    assert summary["config"]["final_stage"] == "linear"
    assert (tmp_path / "w.csv").read_text().splitlines()[0] == "a,b,c"
    back = CausalWeights.load(tmp_path / "w.json", x)
    np.testing.assert_array_equal(back.w, cw.w)


def test_needs_two_features(rng):
    with pytest.raises(ConfigError):
        multi_head_cate(rng.random((10, 1)), np.zeros(10))
