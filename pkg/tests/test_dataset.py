import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnnuplift.dataset import (
    ColumnMapping,
    Dataset,
    LoadReport,
    SyntheticConfig,
    baseline,
    generate_synthetic,
    load_csv,
    potential_outcome,
    propensity,
    split,
    to_csv,
    true_effect,
)
from gnnuplift.errors import ConfigError, DataError, SchemaError


def test_propensity_untrimmed_midpoint():
    x = np.array([[0.5, 0.5, 0.3, 0.0, 0.0]])
    assert propensity(x)[0] == pytest.approx(math.sin(math.pi / 4), abs=1e-12)
    assert propensity(x)[0] == pytest.approx(0.70711, abs=1e-5)


@pytest.mark.parametrize("x2", [0.0, 0.37, 1.0])
def test_propensity_floor_when_x1_zero(x2):
    assert propensity(np.array([[0.0, x2, 0.5, 0.5, 0.5]]))[0] == 0.1


def test_outcome_by_hand():
    x = np.array([[0.5, 0.5, 0.9, 0.0, 0.0]])
    expected = math.sin(math.pi / 4) + 0.5 * 0.5
    y = potential_outcome(x, 1, sigma=0.0)
    assert y[0] == pytest.approx(expected, abs=1e-12)
    assert y[0] == pytest.approx(0.95711, abs=1e-5)


def test_generator_formulas_and_determinism():
    cfg = SyntheticConfig(n=300, d=6, sigma=0.0, seed=4)
    a, b = generate_synthetic(cfg), generate_synthetic(cfg)
    for f in ("x", "t", "y", "tau_true"):
        assert getattr(a, f).tobytes() == getattr(b, f).tobytes()
    np.testing.assert_array_equal(a.tau_true, (a.x[:, 0] + a.x[:, 1]) / 2)
    np.testing.assert_allclose(a.y, baseline(a.x) + (a.t - 0.5) * true_effect(a.x), atol=0, rtol=0)
    assert np.all((a.x >= 0) & (a.x < 1))


def test_generator_different_seeds_differ():
    a = generate_synthetic(SyntheticConfig(n=50, seed=1))
    b = generate_synthetic(SyntheticConfig(n=50, seed=2))
    assert not np.array_equal(a.x, b.x)


@pytest.mark.parametrize("kw", [dict(n=10, d=4), dict(n=0, d=5), dict(n=10, eta=0.5), dict(n=10, sigma=-1)])
def test_generator_rejects_bad_config(kw):
    with pytest.raises(ConfigError):
        generate_synthetic(SyntheticConfig(**kw))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.49), st.integers(0, 2**32))
def test_propensity_always_within_trim(eta, seed):
    x = np.random.default_rng(seed).random((200, 5))
    e = propensity(x, eta)
    assert np.all(e >= eta) and np.all(e <= 1 - eta)


def test_noise_is_standard_normal():
    ds = generate_synthetic(SyntheticConfig(n=20000, d=5, sigma=1.0, seed=3))
    eps = ds.y - potential_outcome(ds.x, ds.t)
    assert abs(eps.mean()) < 0.03
    assert abs(eps.std() - 1.0) < 0.03


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_csv_identity(tmp_path):
    p = _write(tmp_path / "c.csv", "f0,f1,f2,treatment,conversion\n1,2,3,1,1\n4,5,6,0,0\n7,8,9,1,0\n")
    ds = load_csv(p, ColumnMapping(features=("f0", "f1", "f2")))
    assert (ds.n, ds.d) == (3, 3)
    np.testing.assert_array_equal(ds.t, [1, 0, 1])
    np.testing.assert_array_equal(ds.y, [1, 0, 0])
    assert ds.tau_true is None
    assert ds.feature_names == ("f0", "f1", "f2")


def test_load_csv_non_binary_treatment_names_row(tmp_path):
    lines = ["f0,treatment,conversion"] + [f"{i},{i % 2},0" for i in range(6)] + ["9,2,0"]
    p = _write(tmp_path / "c.csv", "\n".join(lines) + "\n")
    with pytest.raises(DataError, match="row 7"):
        load_csv(p)


def test_load_csv_drops_nan_rows(tmp_path):
    p = _write(tmp_path / "c.csv", "f0,f1,treatment,conversion\n1,2,1,1\n1,NaN,0,0\n3,4,0,1\n")
    ds, report = load_csv(p, with_report=True)
    assert ds.n == 2
    assert report.rows_dropped == 1 and report.rows_read == 3
    assert json.loads(report.to_json()) == {"rows_read": 3, "rows_dropped": 1}


def test_load_csv_missing_column(tmp_path):
    p = _write(tmp_path / "c.csv", "f0,treatment\n1,1\n")
    with pytest.raises(SchemaError, match="conversion"):
        load_csv(p)


def test_criteo_default_mapping(tmp_path):
    header = [f"f{j}" for j in range(12)] + ["treatment", "conversion", "visit", "exposure"]
    row = [str(0.1 * j) for j in range(12)] + ["1", "0", "1", "0"]
    p = _write(tmp_path / "criteo.csv", ",".join(header) + "\n" + ",".join(row) + "\n")
    assert load_csv(p, ColumnMapping.criteo()).d == 12
    assert load_csv(p).d == 12  # visit/exposure ignored by default


def test_csv_round_trip_is_exact(tmp_path, synthetic_small):
    p = tmp_path / "d.csv"
    to_csv(synthetic_small, p)
    back = load_csv(p, ColumnMapping.export())
    assert back.x.tobytes() == synthetic_small.x.tobytes()
    assert back.y.tobytes() == synthetic_small.y.tobytes()
    assert back.tau_true.tobytes() == synthetic_small.tau_true.tobytes()
    assert p.read_text().splitlines()[0] == "f0,f1,f2,f3,f4,treatment,outcome,tau_true"


def _toy(n):
    return Dataset(x=np.arange(n, dtype=float)[:, None], t=np.arange(n) % 2, y=np.zeros(n))


def test_split_sizes_and_partition():
    ds = _toy(10)
    tr, te = split(ds, 0.8, seed=3)
    assert (tr.n, te.n) == (8, 2)
    assert sorted(np.concatenate([tr.x[:, 0], te.x[:, 0]])) == list(range(10))


def test_split_deterministic_and_carries_tau(synthetic_small):
    a = split(synthetic_small, 0.5, seed=9)
    b = split(synthetic_small, 0.5, seed=9)
    np.testing.assert_array_equal(a[0].x, b[0].x)
    assert a[1].tau_true is not None and a[1].tau_true.shape == (a[1].n,)


def test_split_empty_side():
    with pytest.raises(ConfigError):
        split(_toy(1), 0.5, seed=0)
    with pytest.raises(ConfigError):
        split(_toy(5), 1.0, seed=0)


def test_dataset_invariants():
    with pytest.raises(DataError):
        Dataset(x=np.array([[np.inf]]), t=np.array([0]), y=np.array([0.0]))
    with pytest.raises(DataError):
        Dataset(x=np.zeros((2, 1)), t=np.array([0, 2]), y=np.zeros(2))
    with pytest.raises(DataError):
        _toy(4).subset(np.array([0, 2])).require_both_groups()
