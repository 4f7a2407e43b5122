"""Bayesian-network structure learning with a linear-Gaussian BIC score.

The local score of a node given its parents regresses the node on
``[1, parents]`` by ordinary least squares::

    sigma2 = RSS / M                       (floored at 1e-12)
    local  = -(M / 2) (ln(2 pi sigma2) + 1) - (ln M / 2) (|parents| + 2)

and the graph score is the sum of local scores. Hill climbing applies the
single-edge addition, deletion or reversal with the largest positive score
gain until none remains.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from gnnuplift._random import make_rng
from gnnuplift.errors import ConfigError, CycleError

SIGMA2_FLOOR = 1e-12
RIDGE_FALLBACK = 1e-8
MIN_GAIN = 1e-9


def topological_order(adj: np.ndarray) -> Optional[list]:
    """Kahn's algorithm; returns None when ``adj`` has a cycle."""
    adj = np.asarray(adj, dtype=bool)
    indeg = adj.sum(axis=0).astype(int)
    ready = [v for v in range(adj.shape[0]) if indeg[v] == 0]
    order = []
    while ready:
        u = ready.pop(0)
        order.append(u)
        for v in np.flatnonzero(adj[u]):
            indeg[v] -= 1
            if indeg[v] == 0:
                ready.append(int(v))
    return order if len(order) == adj.shape[0] else None


def is_acyclic(adj: np.ndarray) -> bool:
    adj = np.asarray(adj, dtype=bool)
    return not np.any(np.diag(adj)) and topological_order(adj) is not None


def reachability(adj: np.ndarray) -> np.ndarray:
    """``R[u, v]`` is True iff there is a directed path of length >= 1 from u to v."""
    r = np.asarray(adj, dtype=bool).copy()
    for k in range(r.shape[0]):
        r |= r[:, k, None] & r[None, k, :]
    return r


def _ols_rss(y: np.ndarray, design: np.ndarray) -> tuple[float, bool]:
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    flagged = rank < design.shape[1]
    if flagged:
        gram = design.T @ design
        gram[np.diag_indices_from(gram)] += RIDGE_FALLBACK
        coef = np.linalg.solve(gram, design.T @ y)
    resid = y - design @ coef
    return float(resid @ resid), flagged


def bic_local(child: int, parents: Sequence[int], data: np.ndarray) -> float:
    """Linear-Gaussian BIC of one family; see the module docstring."""
    return BicScorer(data).local(child, parents)


class BicScorer:
    """Family scores with a cache keyed by ``(child, sorted parents)``."""

    def __init__(self, data):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ConfigError("data must be a 2-d matrix")
        self.m = self.data.shape[0]
        self.cache: dict = {}
        self.flagged: set = set()

    def local(self, child: int, parents: Sequence[int]) -> float:
        key = (int(child), tuple(sorted(int(p) for p in parents)))
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        m = self.m
        k = len(key[1])
        if m < k + 3:
            raise ConfigError(f"need at least {k + 3} rows to score {k} parents, have {m}")
        design = np.column_stack([np.ones(m), self.data[:, list(key[1])]])
        rss, flagged = _ols_rss(self.data[:, child], design)
        if flagged:
            self.flagged.add(key)
        sigma2 = max(rss / m, SIGMA2_FLOOR)
        score = -0.5 * m * (math.log(2.0 * math.pi * sigma2) + 1.0) - 0.5 * math.log(m) * (k + 2)
        self.cache[key] = score
        return score

    def local_scores(self, adj: np.ndarray) -> np.ndarray:
        adj = np.asarray(adj, dtype=bool)
        return np.array([self.local(c, np.flatnonzero(adj[:, c])) for c in range(adj.shape[0])])


@dataclass
class DagStructure:
    """Directed acyclic graph over ``d`` nodes; ``adj[p, c]`` means ``p -> c``."""

    adj: np.ndarray
    score: float
    local_scores: np.ndarray
    trace: list = field(default_factory=list)
    iterations: int = 0
    node_names: tuple = ()

    def __post_init__(self):
        self.adj = np.asarray(self.adj, dtype=bool)
        if np.any(np.diag(self.adj)):
            raise CycleError("self-edges are not allowed")
        if not self.node_names:
            self.node_names = tuple(f"f{j}" for j in range(self.adj.shape[0]))

    @property
    def d(self) -> int:
        return self.adj.shape[0]

    def edges(self) -> list:
        return [(int(p), int(c)) for p, c in zip(*np.nonzero(self.adj))]

    def skeleton(self) -> set:
        return {tuple(sorted(e)) for e in self.edges()}

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.node_names),
            "adj": self.adj.astype(int).tolist(),
            "score": float(self.score),
            "local_scores": [float(v) for v in self.local_scores],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DagStructure":
        return cls(
            adj=np.asarray(d["adj"], dtype=bool),
            score=float(d["score"]),
            local_scores=np.asarray(d["local_scores"], dtype=np.float64),
            node_names=tuple(d.get("nodes", ())),
        )

    def edge_list(self) -> str:
        names = self.node_names
        return "".join(f"{names[p]} -> {names[c]}\n" for p, c in self.edges())

    def save(self, json_path, edges_path=None) -> None:
        Path(json_path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")
        if edges_path is not None:
            Path(edges_path).write_text(self.edge_list(), encoding="utf-8")

    @classmethod
    def load(cls, json_path) -> "DagStructure":
        return cls.from_dict(json.loads(Path(json_path).read_text(encoding="utf-8")))


def bic_total(g, data, scorer: Optional[BicScorer] = None) -> float:
    adj = g.adj if isinstance(g, DagStructure) else np.asarray(g, dtype=bool)
    if not is_acyclic(adj):
        raise CycleError("bic_total requires an acyclic graph")
    scorer = scorer or BicScorer(data)
    return float(np.sum(scorer.local_scores(adj)))


@dataclass(frozen=True)
class HillClimbOptions:
    max_iters: int = 1000
    restarts: int = 0
    seed: int = 0
    max_parents: int = 5
    restart_edge_prob: float = 0.2


def _random_dag(d: int, rng: np.random.Generator, p: float, cap: int) -> np.ndarray:
    order = rng.permutation(d)
    adj = np.zeros((d, d), dtype=bool)
    for a in range(d):
        for b in range(a + 1, d):
            u, v = order[a], order[b]
            if rng.random() < p and adj[:, v].sum() < cap:
                adj[u, v] = True
    return adj


def _climb(adj: np.ndarray, scorer: BicScorer, opts: HillClimbOptions, on_step=None):
    d = adj.shape[0]
    parents = [list(np.flatnonzero(adj[:, c])) for c in range(d)]
    local = [scorer.local(c, parents[c]) for c in range(d)]
    trace = [float(np.sum(local))]
    it = 0
    while it < opts.max_iters:
        reach = reachability(adj)
        best_gain, best = MIN_GAIN, None

        # additions u -> v
        for u in range(d):
            for v in range(d):
                if u == v or adj[u, v] or adj[v, u] or reach[v, u]:
                    continue
                if len(parents[v]) >= opts.max_parents:
                    continue
                gain = scorer.local(v, parents[v] + [u]) - local[v]
                if gain > best_gain:
                    best_gain, best = gain, ("add", u, v)
        # deletions u -> v
        for u in range(d):
            for v in range(d):
                if not adj[u, v]:
                    continue
                gain = scorer.local(v, [p for p in parents[v] if p != u]) - local[v]
                if gain > best_gain:
                    best_gain, best = gain, ("delete", u, v)
        # reversals u -> v  =>  v -> u
        for u in range(d):
            for v in range(d):
                if not adj[u, v] or len(parents[u]) >= opts.max_parents:
                    continue
                others = [w for w in np.flatnonzero(adj[u]) if w != v]
                if any(reach[w, v] for w in others):
                    continue
                gain = (
                    scorer.local(v, [p for p in parents[v] if p != u]) - local[v]
                    + scorer.local(u, parents[u] + [v]) - local[u]
                )
                if gain > best_gain:
                    best_gain, best = gain, ("reverse", u, v)

        if best is None:
            break
        kind, u, v = best
        if kind == "add":
            adj[u, v] = True
        elif kind == "delete":
            adj[u, v] = False
        else:
            adj[u, v] = False
            adj[v, u] = True
        for c in {u, v}:
            parents[c] = list(np.flatnonzero(adj[:, c]))
            local[c] = scorer.local(c, parents[c])
        trace.append(float(np.sum(local)))
        it += 1
        if on_step is not None:
            on_step(adj.copy(), trace[-1])
    return adj, np.asarray(local), trace, it


def hill_climb(data, opts: HillClimbOptions | None = None, node_names=(), on_step=None,
               **kwargs) -> DagStructure:
    """Greedy BIC hill climbing over DAGs.

    Restart 0 starts from the empty graph; restart ``r > 0`` starts from a
    random DAG (seeded random topological order, edge probability 0.2). The
    best-scoring result over all restarts is returned, earliest on ties.
    Within a step, ties between equal gains go to the first move in the
    order add < delete < reverse, then source index, then target index.

    ``on_step(adj, score)``, when given, is called after every applied move.
    """
    opts = opts or HillClimbOptions(**kwargs)
    data = np.asarray(data, dtype=np.float64)
    m, d = data.shape
    if d < 1:
        raise ConfigError("need at least one column")
    if m < 5:
        raise ConfigError(f"need at least 5 rows, have {m}")
    scorer = BicScorer(data)
    rng = make_rng(opts.seed)
    best = None
    for r in range(opts.restarts + 1):
        if r == 0 or d == 1:
            start = np.zeros((d, d), dtype=bool)
        else:
            start = _random_dag(d, rng, opts.restart_edge_prob, opts.max_parents)
        adj, local, trace, it = _climb(start, scorer, opts, on_step)
        cand = DagStructure(adj, float(np.sum(local)), local, trace, it, tuple(node_names))
        if best is None or cand.score > best.score:
            best = cand
    return best


def all_dags(d: int):
    """Every DAG on ``d`` labelled nodes (25 for d=3). Exponential; small d only."""
    pairs = list(itertools.combinations(range(d), 2))
    for states in itertools.product((0, 1, 2), repeat=len(pairs)):
        adj = np.zeros((d, d), dtype=bool)
        for (a, b), s in zip(pairs, states):
            if s == 1:
                adj[a, b] = True
            elif s == 2:
                adj[b, a] = True
        if is_acyclic(adj):
            yield adj


@dataclass(frozen=True)
class GcnAdjacency:
    """Symmetrically normalized adjacency ``D^-1/2 (A + I) D^-1/2``."""

    a_norm: np.ndarray

    @property
    def d(self) -> int:
        return self.a_norm.shape[0]

    @classmethod
    def identity(cls, d: int) -> "GcnAdjacency":
        return cls(np.eye(d))

    def save_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            for row in self.a_norm:
                wr.writerow([repr(float(v)) for v in row])

    @classmethod
    def load_csv(cls, path) -> "GcnAdjacency":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = [[float(v) for v in r] for r in csv.reader(fh) if r]
        return cls(np.asarray(rows, dtype=np.float64))


def to_gcn_adjacency(g) -> GcnAdjacency:
    adj = g.adj if isinstance(g, DagStructure) else np.asarray(g, dtype=bool)
    a_hat = (adj | adj.T).astype(np.float64) + np.eye(adj.shape[0])
    inv_sqrt = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return GcnAdjacency(a_hat * inv_sqrt[:, None] * inv_sqrt[None, :])
