import math

import numpy as np
import pytest

from gnnuplift.errors import CycleError
from gnnuplift.structure import (
    BicScorer, DagStructure, HillClimbOptions, all_dags, bic_local, bic_total, hill_climb,
    is_acyclic, to_gcn_adjacency,
)


def chain_data(seed, m=2000, coef=1.0, noise=0.2):
    rng = np.random.default_rng(seed)
    x0 = rng.normal(size=m)
    x1 = coef * x0 + noise * rng.normal(size=m)
    x2 = coef * x1 + noise * rng.normal(size=m)
    return np.column_stack([x0, x1, x2])


def random_dag(rng, d, p=0.4):
    order = rng.permutation(d)
    adj = np.zeros((d, d), dtype=bool)
    for a in range(d):
        for b in range(a + 1, d):
            if rng.random() < p:
                adj[order[a], order[b]] = True
    return adj


def test_local_score_matches_gaussian_mle(rng):
    m = 1000
    z = rng.normal(size=(m, 1))
    s2 = np.var(z[:, 0])  # denominator M
    expected = -(m / 2) * (math.log(2 * math.pi * s2) + 1) - (math.log(m) / 2) * 2
    assert bic_local(0, [], z) == pytest.approx(expected, rel=1e-12)


def test_local_score_floor_for_copied_parent(rng):
    z = rng.normal(size=(200, 1))
    data = np.hstack([z, z])
    s = bic_local(1, [0], data)
    m = 200
    assert math.isfinite(s)
    assert s == pytest.approx(-(m / 2) * (math.log(2 * math.pi * 1e-12) + 1) - (math.log(m) / 2) * 3)


def test_collinear_parents_use_ridge_fallback(rng):
    z = rng.normal(size=(100, 1))
    data = np.hstack([z, 2 * z, rng.normal(size=(100, 1))])
    scorer = BicScorer(data)
    assert math.isfinite(scorer.local(2, [0, 1]))
    assert (2, (0, 1)) in scorer.flagged


def test_noise_parent_is_penalized():
    gains = []
    for seed in range(20):
        data = np.random.default_rng(seed).normal(size=(2000, 2))
        gains.append(bic_local(0, [1], data) - bic_local(0, [], data))
    assert np.median(gains) < 0
    # expected value -(ln M)/2 + 1/2
    assert abs(np.median(gains) + math.log(2000) / 2) < 2


def test_decomposability_and_cache_transparency(rng):
    data = rng.normal(size=(300, 5))
    scorer = BicScorer(data)
    for _ in range(30):
        adj = random_dag(rng, 5)
        total = bic_total(adj, data, scorer)
        fresh = sum(bic_local(c, np.flatnonzero(adj[:, c]), data) for c in range(5))
        assert total == pytest.approx(fresh, abs=1e-9)
    empty = np.zeros((5, 5), dtype=bool)
    assert bic_total(empty, data) == pytest.approx(sum(bic_local(c, [], data) for c in range(5)))


def test_single_family_change_changes_total_by_local_delta(rng):
    data = rng.normal(size=(300, 4))
    a = np.zeros((4, 4), dtype=bool)
    a[0, 1] = True
    b = a.copy()
    b[2, 3] = True
    delta = bic_local(3, [2], data) - bic_local(3, [], data)
    assert bic_total(b, data) - bic_total(a, data) == pytest.approx(delta, abs=1e-9)


def test_cyclic_graph_rejected(rng):
    adj = np.zeros((3, 3), dtype=bool)
    adj[0, 1] = adj[1, 2] = adj[2, 0] = True
    with pytest.raises(CycleError):
        bic_total(adj, rng.normal(size=(50, 3)))
    with pytest.raises(CycleError):
        DagStructure(np.eye(2, dtype=bool), 0.0, np.zeros(2))


def test_single_column_gives_empty_graph(rng):
    g = hill_climb(rng.normal(size=(50, 1)))
    assert g.iterations == 0 and not g.adj.any()


def test_enumeration_count():
    assert sum(1 for _ in all_dags(3)) == 25


def skeleton(adj):
    return {(int(a), int(b)) for a, b in np.argwhere(np.triu(adj | adj.T))}


def test_chain_recovery_matches_enumeration():
    hits = 0
    for seed in range(5):
        data = chain_data(seed)
        scorer = BicScorer(data)
        scored = [(bic_total(a, data, scorer), a) for a in all_dags(3)]
        top = max(s for s, _ in scored)
        top_class = [a for s, a in scored if s >= top - 1e-6]
        assert all(skeleton(a) == {(0, 1), (1, 2)} for a in top_class)
        g = hill_climb(data)
        hits += g.skeleton() == {(0, 1), (1, 2)} and g.score >= top - 1e-6
    assert hits >= 4


def test_independent_columns_give_few_edges():
    counts = [int(hill_climb(np.random.default_rng(s).normal(size=(2000, 5))).adj.sum()) for s in range(5)]
    assert sum(c <= 1 for c in counts) >= 4


def test_trace_strictly_increasing_and_acyclic(rng):
    for seed in range(10):
        r = np.random.default_rng(seed)
        d = int(r.integers(2, 7))
        mix = r.normal(size=(d, d)) * (r.random((d, d)) < 0.4)
        data = r.normal(size=(300, d)) @ (np.eye(d) + np.triu(mix, 1))
        g = hill_climb(data, restarts=2, seed=seed)
        assert np.all(np.diff(g.trace) > 0)
        assert is_acyclic(g.adj)
        assert g.score >= bic_total(np.zeros((d, d), bool), data) - 1e-9
        assert g.score == pytest.approx(np.sum(g.local_scores))
        assert g.adj.sum(axis=0).max(initial=0) <= 5


def test_relabeling_invariance(rng):
    data = rng.normal(size=(200, 4))
    adj = random_dag(rng, 4)
    perm = rng.permutation(4)
    relabeled = adj[np.ix_(perm, perm)]
    assert bic_total(relabeled, data[:, perm]) == pytest.approx(bic_total(adj, data), abs=1e-9)


def test_parent_cap(rng):
    z = rng.normal(size=(2000, 7))
    data = np.column_stack([z, z.sum(axis=1) + 0.1 * rng.normal(size=2000)])
    g = hill_climb(data, max_parents=3)
    assert g.adj.sum(axis=0).max() <= 3


def test_restarts_never_worse(rng):
    data = chain_data(3, m=500)
    a = hill_climb(data)
    b = hill_climb(data, restarts=4, seed=1)
    assert b.score >= a.score


def test_save_load_and_edge_list(tmp_path):
    g = hill_climb(chain_data(0), node_names=("a", "b", "c"))
    g.save(tmp_path / "g.json", tmp_path / "g.txt")
    back = DagStructure.load(tmp_path / "g.json")
    np.testing.assert_array_equal(back.adj, g.adj)
    lines = (tmp_path / "g.txt").read_text().splitlines()
    assert len(lines) == 2 and all(" -> " in ln for ln in lines)


def test_adjacency_empty_graph():
    np.testing.assert_array_equal(to_gcn_adjacency(np.zeros((4, 4), bool)).a_norm, np.eye(4))


def test_adjacency_two_nodes():
    adj = np.array([[0, 1], [0, 0]], dtype=bool)
    np.testing.assert_allclose(to_gcn_adjacency(adj).a_norm, [[0.5, 0.5], [0.5, 0.5]], atol=1e-15)


def test_adjacency_path():
    adj = np.zeros((3, 3), dtype=bool)
    adj[0, 1] = adj[1, 2] = True
    a = to_gcn_adjacency(adj).a_norm
    assert a[0, 2] == 0
    assert a[0, 1] == pytest.approx(1 / math.sqrt(6), abs=1e-15)
    assert round(a[0, 1], 5) == 0.40825


def test_adjacency_invariants(rng):
    for _ in range(20):
        d = int(rng.integers(1, 10))
        a = to_gcn_adjacency(random_dag(rng, d)).a_norm
        assert np.max(np.abs(a - a.T)) <= 1e-12
        assert np.all(a >= 0) and np.all(np.diag(a) > 0)
        eig = np.linalg.eigvalsh(a)
        assert eig.min() >= -1 - 1e-9 and eig.max() <= 1 + 1e-9


def test_adjacency_csv_round_trip(tmp_path, rng):
    from gnnuplift.structure import GcnAdjacency
    a = to_gcn_adjacency(random_dag(rng, 6))
    a.save_csv(tmp_path / "a.csv")
    np.testing.assert_array_equal(GcnAdjacency.load_csv(tmp_path / "a.csv").a_norm, a.a_norm)
