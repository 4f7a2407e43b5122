"""Knowledge-distillation teacher: a small least-squares gradient booster.

The teacher is fit on ``[X, t]`` against the observed outcome and its
predictions become the soft labels that replace ``y`` as the target of the
per-feature CATE heads. Binary outcomes are boosted with squared error as
well (the booster predicts the probability directly) and the emitted soft
labels are clamped to ``[1e-6, 1 - 1e-6]``.

Trees are stored as flat arrays (``feature[k] == -1`` marks a leaf) so the
traversal can run in the compiled kernel.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gnnuplift import _kernels
from gnnuplift.errors import ConfigError, ShapeError

SOFT_EPS = 1e-6
FORMAT = "gnnuplift.gbdt/1"


@dataclass(frozen=True)
class GbdtParams:
    n_rounds: int = 100
    max_depth: int = 3
    learning_rate: float = 0.1
    min_samples_leaf: int = 8
    max_candidates: int = 64
    seed: int = 0  # accepted for interface symmetry; fitting uses no randomness

    def validate(self) -> None:
        if self.n_rounds < 1 or self.max_depth < 1:
            raise ConfigError("n_rounds and max_depth must be positive")
        if not 0 < self.learning_rate <= 1:
            raise ConfigError(f"learning_rate must lie in (0, 1], got {self.learning_rate}")
        if self.min_samples_leaf < 1 or self.max_candidates < 1:
            raise ConfigError("min_samples_leaf and max_candidates must be positive")


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return _kernels.predict_tree(
            x, self.feature, self.threshold, self.left, self.right, self.value
        )

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.asarray(d["feature"], dtype=np.int64),
            threshold=np.asarray(d["threshold"], dtype=np.float64),
            left=np.asarray(d["left"], dtype=np.int64),
            right=np.asarray(d["right"], dtype=np.int64),
            value=np.asarray(d["value"], dtype=np.float64),
        )


@dataclass
class GbdtModel:
    base_score: float
    learning_rate: float
    max_depth: int
    n_rounds: int
    n_features: int
    binary_target: bool = False
    trees: list = field(default_factory=list)

    def predict_raw(self, x) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_features:
            raise ShapeError(
                f"model was trained on {self.n_features} columns, got input of shape {x.shape}"
            )
        out = np.full(x.shape[0], self.base_score)
        for tree in self.trees:
            out = out + self.learning_rate * tree.predict(x)
        return out

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "base_score": self.base_score,
            "learning_rate": self.learning_rate,
            "max_depth": self.max_depth,
            "n_rounds": self.n_rounds,
            "n_features": self.n_features,
            "binary_target": self.binary_target,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GbdtModel":
        if d.get("format") != FORMAT:
            raise ConfigError(f"unsupported model format {d.get('format')!r}")
        return cls(
            base_score=float(d["base_score"]),
            learning_rate=float(d["learning_rate"]),
            max_depth=int(d["max_depth"]),
            n_rounds=int(d["n_rounds"]),
            n_features=int(d["n_features"]),
            binary_target=bool(d["binary_target"]),
            trees=[Tree.from_dict(t) for t in d["trees"]],
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "GbdtModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class SoftLabels:
    y_hat: np.ndarray

    def __len__(self) -> int:
        return self.y_hat.shape[0]


def augment(x, t) -> np.ndarray:
    """Append the treatment indicator as the last column (the teacher sees ``t``)."""
    return np.column_stack([np.asarray(x, dtype=np.float64), np.asarray(t, dtype=np.float64)])


def _is_binary(target: np.ndarray) -> bool:
    return bool(np.all((target == 0.0) | (target == 1.0)))


def _grow_tree(x, resid, order, params: GbdtParams) -> Tree:
    n, p = x.shape
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.ones(n, dtype=bool), 0)]
    while stack:
        node, in_node, depth = stack.pop()
        r_node = resid[in_node]
        value[node] = float(np.mean(r_node))
        n_node = r_node.shape[0]
        if depth >= params.max_depth or n_node < 2 * params.min_samples_leaf:
            continue
        total = float(np.cumsum(r_node)[-1])
        ss = float(np.dot(r_node, r_node))
        parent = total * total / n_node
        best_score, best_f, best_thr = -np.inf, -1, 0.0
        for f in range(p):
            idx = order[f][in_node[order[f]]]
            score, thr = _kernels.best_split_sorted(
                x[idx, f], resid[idx], params.min_samples_leaf, params.max_candidates
            )
            if score > best_score:
                best_score, best_f, best_thr = score, f, thr
        if best_f < 0 or not best_score - parent > 1e-12 * ss:
            continue
        go_left = x[:, best_f] <= best_thr
        lchild, rchild = new_node(), new_node()
        feature[node], threshold[node] = best_f, best_thr
        left[node], right[node] = lchild, rchild
        # right pushed first so the left subtree gets the lower node ids
        stack.append((rchild, in_node & ~go_left, depth + 1))
        stack.append((lchild, in_node & go_left, depth + 1))

    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        value=np.asarray(value, dtype=np.float64),
    )


def fit_gbdt(x_aug, target, params: GbdtParams | None = None) -> GbdtModel:
    """Greedy least-squares boosting of depth-limited regression trees.

    Each round fits one tree to the current residuals, choosing the split
    that maximizes variance reduction (ties: lowest feature index, then
    lowest threshold). A constant target yields a model with no trees.
    """
    params = params or GbdtParams()
    params.validate()
    x = np.ascontiguousarray(x_aug, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if x.ndim != 2 or target.shape != (x.shape[0],) or x.shape[0] < 1:
        raise ShapeError(f"incompatible shapes x={x.shape}, target={target.shape}")
    n = x.shape[0]
    model = GbdtModel(
        base_score=float(target[0]) if n == 1 else float(np.mean(target)),
        learning_rate=params.learning_rate,
        max_depth=params.max_depth,
        n_rounds=params.n_rounds,
        n_features=x.shape[1],
        binary_target=_is_binary(target),
    )
    if n < 2 or np.all(target == target[0]):
        return model

    order = [np.argsort(x[:, f], kind="stable") for f in range(x.shape[1])]
    pred = np.full(n, model.base_score)
    for _ in range(params.n_rounds):
        tree = _grow_tree(x, target - pred, order, params)
        if tree.n_leaves < 2:
            break
        model.trees.append(tree)
        pred = pred + params.learning_rate * tree.predict(x)
    return model


def predict_soft(model: GbdtModel, x_aug) -> SoftLabels:
    y_hat = model.predict_raw(x_aug)
    if model.binary_target:
        y_hat = np.clip(y_hat, SOFT_EPS, 1.0 - SOFT_EPS)
    return SoftLabels(y_hat=y_hat)


def training_curve(model: GbdtModel, x_aug, target) -> np.ndarray:
    """Training MSE after 0, 1, ..., len(trees) boosting rounds."""
    x = np.ascontiguousarray(x_aug, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    pred = np.full(x.shape[0], model.base_score)
    out = [float(np.mean((target - pred) ** 2))]
    for tree in model.trees:
        pred = pred + model.learning_rate * tree.predict(x)
        out.append(float(np.mean((target - pred) ** 2)))
    return np.asarray(out)
