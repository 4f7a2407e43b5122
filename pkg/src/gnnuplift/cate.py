"""Multi-head per-feature CATE via cross-fitted double machine learning.

Head ``j`` treats feature ``x_j`` as a continuous "treatment", the teacher's
soft label as the outcome, and every other feature as a control::

    T~ = x_j - E[x_j | x_-j]      (out-of-fold)
    Y~ = y_hat - E[y_hat | x_-j]  (out-of-fold)
    theta_j = argmin sum_i (Y~_i - theta_j(x_i) * T~_i)^2

In ``constant`` mode ``theta_j`` is a scalar. In ``linear`` mode
``theta_j(x) = [1, x_-j] @ beta_j``, solved from the weighted normal
equations ``(B' diag(T~^2) B + lambda I) beta = B' (T~ * Y~)``.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from gnnuplift._random import make_rng
from gnnuplift.errors import ConfigError, ShapeError
from gnnuplift.teacher import GbdtParams, SoftLabels, fit_gbdt

# relative cutoff on sum(T~^2) / sum((x_j - mean)^2); see is_degenerate
DEGENERATE_RTOL = 1e-8
DEGENERATE_ATOL = 1e-12


@dataclass(frozen=True)
class DmlConfig:
    n_folds: int = 2
    nuisance: str = "ridge"
    ridge_lambda: float = 1e-3
    final_stage: str = "linear"
    seed: int = 0
    gbdt: GbdtParams = field(default_factory=lambda: GbdtParams(n_rounds=50))
    n_jobs: int = 1

    def validate(self, n: Optional[int] = None) -> None:
        if self.n_folds < 2:
            raise ConfigError(f"n_folds must be >= 2, got {self.n_folds}")
        if n is not None and self.n_folds > n:
            raise ConfigError(f"n_folds={self.n_folds} exceeds the number of rows n={n}")
        if self.nuisance not in ("ridge", "gbdt"):
            raise ConfigError(f"unknown nuisance model {self.nuisance!r}")
        if not self.ridge_lambda > 0:
            raise ConfigError(f"ridge_lambda must be > 0, got {self.ridge_lambda}")
        if self.final_stage not in ("constant", "linear"):
            raise ConfigError(f"unknown final stage {self.final_stage!r}")

    def echo(self) -> dict:
        out = asdict(self)
        out.pop("n_jobs")
        return out


def fold_ids(n: int, n_folds: int, seed: int) -> np.ndarray:
    """Balanced fold labels from a seeded permutation."""
    folds = np.empty(n, dtype=np.int64)
    folds[make_rng(seed).permutation(n)] = np.arange(n) % n_folds
    return folds


def _ridge_fit_predict(xtr, ytr, xte, lam):
    ymean = ytr.mean()
    if xtr.shape[1] == 0:
        return np.full(xte.shape[0], ymean)
    xmean = xtr.mean(axis=0)
    xc = xtr - xmean
    gram = xc.T @ xc
    gram[np.diag_indices_from(gram)] += lam
    beta = np.linalg.solve(gram, xc.T @ (ytr - ymean))
    return ymean + (xte - xmean) @ beta


def residualize(values, controls, cfg: DmlConfig) -> np.ndarray:
    """Out-of-fold residuals ``values - E[values | controls]``.

    For every fold the nuisance model is fit on the other folds and predicts
    the held-out rows.
    """
    values = np.asarray(values, dtype=np.float64)
    controls = np.asarray(controls, dtype=np.float64)
    if controls.ndim == 1:
        controls = controls[:, None]
    n = values.shape[0]
    if controls.shape[0] != n:
        raise ShapeError(f"values has {n} rows, controls has {controls.shape[0]}")
    cfg.validate(n)
    folds = fold_ids(n, cfg.n_folds, cfg.seed)
    pred = np.empty(n)
    for k in range(cfg.n_folds):
        test = folds == k
        train = ~test
        if cfg.nuisance == "ridge":
            pred[test] = _ridge_fit_predict(
                controls[train], values[train], controls[test], cfg.ridge_lambda
            )
        else:
            model = fit_gbdt(controls[train], values[train], cfg.gbdt)
            pred[test] = model.predict_raw(controls[test])
    return values - pred


def _basis(x: np.ndarray, j: int, final_stage: str) -> np.ndarray:
    if final_stage == "constant":
        return np.ones((x.shape[0], 1))
    return np.column_stack([np.ones(x.shape[0]), np.delete(x, j, axis=1)])


@dataclass
class HeadResult:
    """Fitted head ``j``: coefficients over the final-stage basis plus diagnostics."""

    j: int
    coef: np.ndarray
    theta: np.ndarray
    t_res: np.ndarray
    y_res: np.ndarray
    degenerate: bool

    def theta_fn(self, x: np.ndarray, final_stage: str) -> np.ndarray:
        return _basis(np.asarray(x, dtype=np.float64), self.j, final_stage) @ self.coef


def is_degenerate(t_res: np.ndarray, treatment: np.ndarray) -> bool:
    """True when the controls explain the feature almost entirely.

    The cutoff is relative to the feature's own centered sum of squares so a
    ridge nuisance (which never reproduces a duplicate column exactly) still
    trips it.
    """
    sst = float(np.sum((treatment - treatment.mean()) ** 2))
    return float(t_res @ t_res) < max(DEGENERATE_ATOL, DEGENERATE_RTOL * sst)


def dml_fit_feature(j: int, x, y_soft, cfg: DmlConfig | None = None) -> HeadResult:
    cfg = cfg or DmlConfig()
    x = np.asarray(x, dtype=np.float64)
    y = y_soft.y_hat if isinstance(y_soft, SoftLabels) else np.asarray(y_soft, dtype=np.float64)
    n, d = x.shape
    if d < 2:
        raise ConfigError("per-feature DML needs at least one control column (d >= 2)")
    if y.shape != (n,):
        raise ShapeError(f"soft labels have shape {y.shape}, expected ({n},)")
    controls = np.delete(x, j, axis=1)
    t_res = residualize(x[:, j], controls, cfg)
    y_res = residualize(y, controls, cfg)
    basis = _basis(x, j, cfg.final_stage)
    if is_degenerate(t_res, x[:, j]):
        coef = np.zeros(basis.shape[1])
        return HeadResult(j, coef, np.zeros(n), t_res, y_res, True)
    if cfg.final_stage == "constant":
        coef = np.array([float(y_res @ t_res) / float(t_res @ t_res)])
    else:
        weighted = basis * (t_res * t_res)[:, None]
        lhs = basis.T @ weighted
        lhs[np.diag_indices_from(lhs)] += cfg.ridge_lambda
        coef = np.linalg.solve(lhs, basis.T @ (t_res * y_res))
    return HeadResult(j, coef, basis @ coef, t_res, y_res, False)


@dataclass
class CausalWeights:
    """Per-sample per-feature causal weights and the heads that produced them.

    Attributes:
        w: matrix (n, d), ``w[i, j] = theta_j(x_i)``.
        theta_mean: column means of ``w``.
        coef: list of per-head final-stage coefficient vectors.
        degenerate: per-head degenerate-treatment flags.
        final_stage: ``"constant"`` or ``"linear"`` (the heterogeneity basis).
    """

    w: np.ndarray
    theta_mean: np.ndarray
    coef: list
    degenerate: list
    final_stage: str
    config: dict = field(default_factory=dict)

    @property
    def heterogeneity_basis(self) -> str:
        return "intercept" if self.final_stage == "constant" else "intercept+other_features"

    def transform(self, x) -> np.ndarray:
        """Causal weights for new rows (e.g. a test split)."""
        x = np.asarray(x, dtype=np.float64)
        d = len(self.coef)
        if x.ndim != 2 or x.shape[1] != d:
            raise ShapeError(f"expected {d} feature columns, got shape {x.shape}")
        out = np.empty_like(x)
        for j, c in enumerate(self.coef):
            out[:, j] = _basis(x, j, self.final_stage) @ np.asarray(c)
        return out

    def summary(self, feature_names=None) -> dict:
        names = list(feature_names) if feature_names is not None else [
            f"f{j}" for j in range(len(self.coef))
        ]
        return {
            "feature_names": names,
            "theta_mean": [float(v) for v in self.theta_mean],
            "degenerate": [bool(v) for v in self.degenerate],
            "final_stage": self.final_stage,
            "heterogeneity_basis": self.heterogeneity_basis,
            "coef": [[float(v) for v in c] for c in self.coef],
            "config": self.config,
        }

    def save(self, json_path, csv_path=None, feature_names=None) -> None:
        Path(json_path).write_text(json.dumps(self.summary(feature_names), indent=1), encoding="utf-8")
        if csv_path is not None:
            names = self.summary(feature_names)["feature_names"]
            with Path(csv_path).open("w", newline="", encoding="utf-8") as fh:
                wr = csv.writer(fh, lineterminator="\n")
                wr.writerow(names)
                for row in self.w:
                    wr.writerow([repr(float(v)) for v in row])

    @classmethod
    def load(cls, json_path, x=None) -> "CausalWeights":
        """Rebuild from the JSON summary; ``w`` is recomputed on ``x`` if given."""
        d = json.loads(Path(json_path).read_text(encoding="utf-8"))
        cw = cls(
            w=np.empty((0, len(d["coef"]))),
            theta_mean=np.asarray(d["theta_mean"]),
            coef=[np.asarray(c) for c in d["coef"]],
            degenerate=list(d["degenerate"]),
            final_stage=d["final_stage"],
            config=d.get("config", {}),
        )
        if x is not None:
            cw.w = cw.transform(x)
        return cw


def multi_head_cate(x, y_soft, cfg: DmlConfig | None = None) -> CausalWeights:
    """Run one independent DML head per feature and stack the results.

    Heads may run on a thread pool (``cfg.n_jobs > 1``); results are merged
    by feature index so the output does not depend on the schedule.
    """
    cfg = cfg or DmlConfig()
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    if d < 2:
        raise ConfigError("multi-head CATE needs d >= 2")
    cfg.validate(n)

    def head(j):
        return dml_fit_feature(j, x, y_soft, cfg)

    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.n_jobs) as pool:
            heads = list(pool.map(head, range(d)))
    else:
        heads = [head(j) for j in range(d)]

    w = np.column_stack([h.theta for h in heads])
    return CausalWeights(
        w=w,
        theta_mean=w.mean(axis=0),
        coef=[h.coef for h in heads],
        degenerate=[h.degenerate for h in heads],
        final_stage=cfg.final_stage,
        config=cfg.echo(),
    )
