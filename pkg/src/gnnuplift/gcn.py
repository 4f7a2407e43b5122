"""Graph convolutional S-learner over per-sample feature graphs.

Every sample is a graph with one node per feature. Node ``j`` carries
``[x_j, w_j]`` (value and causal weight; only ``[x_j]`` when weighting is
off), standardized with training-split statistics. The network is::

    H0      = node features                               (d, m)
    H_{l+1} = LeakyReLU(A_norm @ H_l @ W_l)               l = 0 .. L-1
    pooled  = mean over nodes of H_L                      (h,)
    z       = [pooled, t]
    y_hat   = LeakyReLU(z @ V1 + b1) @ v2 + b2

Uplift is the S-learner difference ``mu1(x) - mu0(x)`` where ``mu_t`` is the
forward pass with the treatment input set to ``t``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from gnnuplift._random import make_rng
from gnnuplift.errors import ConfigError, NumericError, ShapeError
from gnnuplift.structure import GcnAdjacency

logger = logging.getLogger(__name__)

FORMAT = "gnnuplift.gcn/1"


@dataclass(frozen=True)
class GcnParams:
    layers: int = 2
    hidden: int = 16
    readout_hidden: int = 16
    leaky_slope: float = 0.01
    lr: float = 0.01
    momentum: float = 0.9
    epochs: int = 300
    batch: int = 64
    l2: float = 1e-4
    seed: int = 0

    def validate(self) -> None:
        if self.layers < 1 or self.hidden < 1 or self.readout_hidden < 1:
            raise ConfigError("layers, hidden and readout_hidden must be positive")
        if self.epochs < 0 or self.batch < 1:
            raise ConfigError("epochs must be >= 0 and batch >= 1")
        if not self.lr > 0 or self.l2 < 0:
            raise ConfigError("lr must be > 0 and l2 >= 0")


@dataclass(frozen=True)
class NodeStats:
    """Per-channel standardization statistics from the training split.

    Statistics pool every sample and every node of a channel, so the
    per-feature level differences of the causal weights survive.
    """

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, nodes: np.ndarray) -> "NodeStats":
        mean = nodes.mean(axis=(0, 1))
        std = nodes.std(axis=(0, 1))
        std = np.where(std > 0, std, 1.0)
        return cls(mean, std)

    def apply(self, nodes: np.ndarray) -> np.ndarray:
        return (nodes - self.mean) / self.std


def raw_node_features(x, w=None) -> np.ndarray:
    """Stack ``x`` (n, d) and optional causal weights (n, d) into (n, d, m)."""
    x = np.asarray(x, dtype=np.float64)
    if w is None:
        return x[:, :, None].copy()
    w = np.asarray(w, dtype=np.float64)
    if w.shape != x.shape:
        raise ShapeError(f"causal weights have shape {w.shape}, features {x.shape}")
    return np.stack([x, w], axis=2)


def _leaky(z, slope):
    return np.where(z > 0, z, slope * z)


def _leaky_grad(z, slope):
    return np.where(z > 0, 1.0, slope)


def _glorot(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


@dataclass
class GcnModel:
    params: dict
    a_norm: np.ndarray
    hp: GcnParams
    stats: Optional[NodeStats] = None
    uses_weights: bool = True
    loss_history: list = field(default_factory=list)

    @property
    def n_layers(self) -> int:
        return sum(1 for k in self.params if k.startswith("W"))

    @property
    def in_dim(self) -> int:
        return self.params["W0"].shape[0]

    @classmethod
    def init(cls, d: int, m: int, a_norm, hp: GcnParams, uses_weights: bool = True) -> "GcnModel":
        hp.validate()
        a_norm = np.asarray(a_norm.a_norm if isinstance(a_norm, GcnAdjacency) else a_norm, dtype=np.float64)
        if a_norm.shape != (d, d):
            raise ShapeError(f"adjacency is {a_norm.shape}, expected ({d}, {d})")
        rng = make_rng(hp.seed)
        params = {}
        dims = [m] + [hp.hidden] * hp.layers
        for l in range(hp.layers):
            params[f"W{l}"] = _glorot(rng, dims[l], dims[l + 1])
        params["V1"] = _glorot(rng, hp.hidden + 1, hp.readout_hidden)
        params["b1"] = np.zeros(hp.readout_hidden)
        params["v2"] = _glorot(rng, hp.readout_hidden, 1)[:, 0]
        params["b2"] = np.zeros(1)
        return cls(params=params, a_norm=a_norm, hp=hp, uses_weights=uses_weights)

    def copy(self) -> "GcnModel":
        return GcnModel(
            params={k: v.copy() for k, v in self.params.items()},
            a_norm=self.a_norm.copy(),
            hp=self.hp,
            stats=self.stats,
            uses_weights=self.uses_weights,
            loss_history=list(self.loss_history),
        )

    # -- persistence ------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "dims": {k: list(v.shape) for k, v in self.params.items()},
            "params": {k: v.tolist() for k, v in self.params.items()},
            "a_norm": self.a_norm.tolist(),
            "stats": None if self.stats is None else {
                "mean": self.stats.mean.tolist(), "std": self.stats.std.tolist()
            },
            "uses_weights": self.uses_weights,
            "hyperparameters": asdict(self.hp),
            "seed": self.hp.seed,
            "loss_history": self.loss_history,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GcnModel":
        if d.get("format") != FORMAT:
            raise ConfigError(f"unsupported model format {d.get('format')!r}")
        stats = d.get("stats")
        return cls(
            params={k: np.asarray(v, dtype=np.float64) for k, v in d["params"].items()},
            a_norm=np.asarray(d["a_norm"], dtype=np.float64),
            hp=GcnParams(**d["hyperparameters"]),
            stats=None if stats is None else NodeStats(np.asarray(stats["mean"]), np.asarray(stats["std"])),
            uses_weights=bool(d["uses_weights"]),
            loss_history=list(d.get("loss_history", [])),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "GcnModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    # -- numerics ---------------------------------------------------------
    def _check(self, nodes: np.ndarray) -> None:
        d = self.a_norm.shape[0]
        if nodes.ndim != 3 or nodes.shape[1] != d or nodes.shape[2] != self.in_dim:
            raise ShapeError(
                f"node features must have shape (n, {d}, {self.in_dim}), got {nodes.shape}"
            )

    def forward_batch(self, nodes: np.ndarray, t) -> tuple[np.ndarray, dict]:
        """Batched forward pass on already-standardized node features (B, d, m)."""
        nodes = np.asarray(nodes, dtype=np.float64)
        self._check(nodes)
        slope = self.hp.leaky_slope
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (nodes.shape[0],))
        h = nodes
        props, pre = [], []
        for l in range(self.n_layers):
            p = np.matmul(self.a_norm, h)
            z = p @ self.params[f"W{l}"]
            props.append(p)
            pre.append(z)
            h = _leaky(z, slope)
        pooled = h.mean(axis=1)
        zr = np.column_stack([pooled, t])
        a1 = zr @ self.params["V1"] + self.params["b1"]
        h1 = _leaky(a1, slope)
        y_hat = h1 @ self.params["v2"] + self.params["b2"][0]
        cache = {"props": props, "pre": pre, "zr": zr, "a1": a1, "h1": h1}
        return y_hat, cache

    def backward_batch(self, cache: dict, g_y: np.ndarray) -> dict:
        """Gradients of ``sum(g_y * y_hat)`` with respect to every parameter."""
        slope = self.hp.leaky_slope
        P = self.params
        grads = {}
        h1, a1, zr = cache["h1"], cache["a1"], cache["zr"]
        grads["v2"] = h1.T @ g_y
        grads["b2"] = np.array([g_y.sum()])
        g_a1 = np.outer(g_y, P["v2"]) * _leaky_grad(a1, slope)
        grads["V1"] = zr.T @ g_a1
        grads["b1"] = g_a1.sum(axis=0)
        g_pooled = (g_a1 @ P["V1"].T)[:, :-1]
        d = self.a_norm.shape[0]
        g_h = np.broadcast_to(g_pooled[:, None, :] / d, (g_pooled.shape[0], d, g_pooled.shape[1]))
        for l in reversed(range(self.n_layers)):
            p, z = cache["props"][l], cache["pre"][l]
            g_z = g_h * _leaky_grad(z, slope)
            grads[f"W{l}"] = p.reshape(-1, p.shape[2]).T @ g_z.reshape(-1, g_z.shape[2])
            if l > 0:
                g_p = g_z @ P[f"W{l}"].T
                g_h = np.matmul(self.a_norm.T, g_p)
        return grads

    def forward(self, node_features: np.ndarray, t) -> tuple[float, dict]:
        """Single-sample forward pass on a (d, m) standardized node matrix."""
        y, cache = self.forward_batch(np.asarray(node_features)[None], np.atleast_1d(t))
        return float(y[0]), cache

    def node_tensor(self, x, w=None) -> np.ndarray:
        """Standardized node features for rows of ``x`` using the stored training stats."""
        nodes = raw_node_features(x, w if self.uses_weights else None)
        return nodes if self.stats is None else self.stats.apply(nodes)


def gcn_forward(model: GcnModel, node_features: np.ndarray, t):
    return model.forward(node_features, t)


def _resolve_weights(weights, x):
    if weights is None:
        return None
    if hasattr(weights, "transform"):
        if weights.w.shape == x.shape:
            return weights.w
        return weights.transform(x)
    return np.asarray(weights, dtype=np.float64)


def fit(train, weights, a, hp: GcnParams | None = None) -> GcnModel:
    """Train by minibatch SGD with momentum on the mean squared error.

    ``weights`` is a :class:`~gnnuplift.cate.CausalWeights`, an (n, d)
    matrix, or None for the plain (unweighted) baseline.
    """
    hp = hp or GcnParams()
    hp.validate()
    if train.n < 1:
        raise ConfigError("training set is empty")
    w = _resolve_weights(weights, train.x)
    if w is not None and w.shape[0] != train.n:
        raise ShapeError(f"causal weights have {w.shape[0]} rows, training set has {train.n}")
    raw = raw_node_features(train.x, w)
    stats = NodeStats.fit(raw)
    nodes = stats.apply(raw)
    model = GcnModel.init(train.d, nodes.shape[2], a, hp, uses_weights=w is not None)
    model.stats = stats
    t = train.t.astype(np.float64)
    y = train.y
    rng = make_rng(hp.seed + 1)
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    decayed = [k for k in model.params if k.startswith(("W", "V", "v"))]
    n = train.n
    for epoch in range(hp.epochs):
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, hp.batch)):
            idx = order[start:start + hp.batch]
            y_hat, cache = model.forward_batch(nodes[idx], t[idx])
            resid = y_hat - y[idx]
            loss = float(resid @ resid) / idx.size
            grads = model.backward_batch(cache, 2.0 * resid / idx.size)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                gnorm = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
                raise NumericError(
                    f"non-finite loss at epoch {epoch}, batch {b} (loss={loss}, grad-norm={gnorm})"
                )
            for k in decayed:
                grads[k] = grads[k] + hp.l2 * model.params[k]
            for k, g in grads.items():
                velocity[k] = hp.momentum * velocity[k] + g
                model.params[k] = model.params[k] - hp.lr * velocity[k]
            total += loss * idx.size
        model.loss_history.append(total / n)
        if epoch % 50 == 0:
            logger.debug("epoch %d loss %.6g", epoch, total / n)
    return model


def predict(model: GcnModel, x, t, weights=None) -> np.ndarray:
    """Outcome predictions at the given treatment values."""
    nodes = model.node_tensor(x, _resolve_weights(weights, np.asarray(x)) if model.uses_weights else None)
    y_hat, _ = model.forward_batch(nodes, t)
    return y_hat


@dataclass
class UpliftScores:
    tau_hat: np.ndarray
    mu0: np.ndarray
    mu1: np.ndarray
    d_tilde_1: np.ndarray
    d_tilde_0: np.ndarray
    treated_idx: np.ndarray
    control_idx: np.ndarray


def predict_uplift(model: GcnModel, ds, weights=None) -> UpliftScores:
    """S-learner uplift ``mu1 - mu0`` plus imputed effects for each group.

    ``d_tilde_1 = y - mu0`` over treated rows and ``d_tilde_0 = mu1 - y``
    over control rows; they are diagnostics, the score is ``tau_hat``.
    """
    if model.uses_weights and weights is None:
        raise ConfigError("model was trained with causal weights; pass them to predict_uplift")
    w = _resolve_weights(weights, ds.x) if model.uses_weights else None
    nodes = model.node_tensor(ds.x, w)
    n = ds.n
    mu1, _ = model.forward_batch(nodes, np.ones(n))
    mu0, _ = model.forward_batch(nodes, np.zeros(n))
    treated = np.flatnonzero(ds.t == 1)
    control = np.flatnonzero(ds.t == 0)
    return UpliftScores(
        tau_hat=mu1 - mu0,
        mu0=mu0,
        mu1=mu1,
        d_tilde_1=ds.y[treated] - mu0[treated],
        d_tilde_0=mu1[control] - ds.y[control],
        treated_idx=treated,
        control_idx=control,
    )


def sample_loss(model: GcnModel, node_features, t, y) -> float:
    y_hat, _ = model.forward(node_features, t)
    return (y_hat - y) ** 2


def analytic_grads(model: GcnModel, node_features, t, y) -> dict:
    y_hat, cache = model.forward_batch(np.asarray(node_features)[None], np.atleast_1d(t))
    return model.backward_batch(cache, 2.0 * (y_hat - y))


def gradient_check(model: GcnModel, sample, step: float = 1e-5) -> float:
    """Max relative error between backprop and central differences.

    ``sample`` is ``(node_features (d, m), t, y)``. The loss is the single
    sample squared error; the relative error uses the denominator
    ``max(|a|, |b|, 1e-8)``.
    """
    nodes, t, y = sample
    grads = analytic_grads(model, nodes, t, y)
    probe = model.copy()
    worst = 0.0
    for k, p in probe.params.items():
        flat = p.reshape(-1)
        g = grads[k].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = sample_loss(probe, nodes, t, y)
            flat[i] = orig - step
            down = sample_loss(probe, nodes, t, y)
            flat[i] = orig
            num = (up - down) / (2.0 * step)
            err = abs(num - g[i]) / max(abs(num), abs(g[i]), 1e-8)
            worst = max(worst, err)
    return worst
