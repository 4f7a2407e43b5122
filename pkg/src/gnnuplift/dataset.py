"""Tabular uplift datasets: synthetic generator, CSV ingestion and splitting.

The synthetic generator draws ``X ~ Unif(0, 1)^d`` and builds a randomized
trial with a trimmed sinusoidal propensity, a Friedman-style baseline and a
treatment effect ``(x1 + x2) / 2``::

    e(x)   = trim_eta(sin(pi x1 x2)),  trim(v) = max(eta, min(v, 1 - eta))
    W      ~ Bernoulli(e(X))
    tau(x) = (x1 + x2) / 2
    b(x)   = sin(pi x1 x2) + 2 (x1 - 0.5)^2 + x4 + 0.5 x5
    Y      = b(X) + (W - 0.5) tau(X) + sigma * eps,  eps ~ N(0, 1)

(``x1`` is column 0.) Draw order for a given seed: the ``n x d`` uniform
matrix, then ``n`` uniforms for the treatment coin flips, then the
Box-Muller normals for ``eps``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from gnnuplift._random import RNG_ALGORITHM, box_muller, make_rng
from gnnuplift.errors import ConfigError, DataError, SchemaError


@dataclass(frozen=True)
class Dataset:
    """Column-major uplift data.

    Attributes:
        x: feature matrix, shape (n, d), finite.
        t: binary treatment indicator, shape (n,), dtype int8.
        y: outcome, shape (n,).
        tau_true: true individual effect for synthetic data, else None.
        feature_names: one name per column of ``x``.
        seed: seed the data was generated (or shuffled) with.
    """

    x: np.ndarray
    t: np.ndarray
    y: np.ndarray
    tau_true: Optional[np.ndarray] = None
    feature_names: tuple = ()
    seed: int = 0
    rng_algorithm: str = RNG_ALGORITHM

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise DataError(f"x must be a non-empty 2-d matrix, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DataError("x contains non-finite values")
        n, d = x.shape
        t = np.asarray(self.t)
        if t.shape != (n,):
            raise DataError(f"t must have shape ({n},), got {t.shape}")
        if not np.all((t == 0) | (t == 1)):
            raise DataError("t must be binary (0/1)")
        y = np.asarray(self.y, dtype=np.float64)
        if y.shape != (n,):
            raise DataError(f"y must have shape ({n},), got {y.shape}")
        tau = self.tau_true
        if tau is not None:
            tau = np.asarray(tau, dtype=np.float64)
            if tau.shape != (n,):
                raise DataError(f"tau_true must have shape ({n},), got {tau.shape}")
        names = tuple(self.feature_names) or tuple(f"f{j}" for j in range(d))
        if len(names) != d:
            raise DataError(f"expected {d} feature names, got {len(names)}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", t.astype(np.int8))
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "tau_true", tau)
        object.__setattr__(self, "feature_names", names)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def is_synthetic(self) -> bool:
        return self.tau_true is not None

    def subset(self, rows: np.ndarray) -> "Dataset":
        rows = np.asarray(rows)
        return replace(
            self,
            x=self.x[rows],
            t=self.t[rows],
            y=self.y[rows],
            tau_true=None if self.tau_true is None else self.tau_true[rows],
        )

    def require_both_groups(self) -> None:
        n_t = int(self.t.sum())
        if n_t == 0 or n_t == self.n:
            raise DataError(
                f"both treatment groups must be non-empty (treated={n_t}, control={self.n - n_t})"
            )


@dataclass(frozen=True)
class SyntheticConfig:
    n: int
    d: int = 5
    sigma: float = 1.0
    eta: float = 0.1
    seed: int = 0

    def validate(self) -> None:
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if self.d < 5:
            raise ConfigError(f"d must be >= 5 (baseline uses x4 and x5), got {self.d}")
        if not self.sigma >= 0:
            raise ConfigError(f"sigma must be >= 0, got {self.sigma}")
        if not 0 < self.eta < 0.5:
            raise ConfigError(f"eta must lie in (0, 0.5), got {self.eta}")


def trim(v, eta: float = 0.1):
    return np.maximum(eta, np.minimum(v, 1.0 - eta))


def propensity(x: np.ndarray, eta: float = 0.1) -> np.ndarray:
    x = np.atleast_2d(x)
    return trim(np.sin(np.pi * x[:, 0] * x[:, 1]), eta)


def true_effect(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    return (x[:, 0] + x[:, 1]) / 2.0


def baseline(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    return np.sin(np.pi * x[:, 0] * x[:, 1]) + 2.0 * (x[:, 0] - 0.5) ** 2 + x[:, 3] + 0.5 * x[:, 4]


def potential_outcome(x: np.ndarray, w, noise=0.0, sigma: float = 0.0) -> np.ndarray:
    """Outcome for treatment value(s) ``w`` given features and standard-normal noise."""
    return baseline(x) + (np.asarray(w, dtype=np.float64) - 0.5) * true_effect(x) + sigma * noise


def generate_synthetic(cfg: SyntheticConfig) -> Dataset:
    cfg.validate()
    rng = make_rng(cfg.seed)
    x = rng.random((cfg.n, cfg.d))
    e = propensity(x, cfg.eta)
    w = (rng.random(cfg.n) < e).astype(np.int8)
    eps = box_muller(rng, cfg.n)
    y = potential_outcome(x, w, eps, cfg.sigma)
    return Dataset(
        x=x,
        t=w,
        y=y,
        tau_true=true_effect(x),
        feature_names=tuple(f"f{j}" for j in range(cfg.d)),
        seed=cfg.seed,
    )


@dataclass(frozen=True)
class ColumnMapping:
    """Which CSV columns hold features, treatment and outcome.

    ``features=None`` means every column that is not the treatment, outcome,
    or one of ``ignore``, in file order.
    """

    features: Optional[Sequence[str]] = None
    treatment: str = "treatment"
    outcome: str = "conversion"
    tau_true: Optional[str] = None
    ignore: Sequence[str] = ("visit", "exposure", "id")

    @classmethod
    def criteo(cls) -> "ColumnMapping":
        return cls(features=tuple(f"f{j}" for j in range(12)))

    @classmethod
    def export(cls) -> "ColumnMapping":
        """Mapping for files written by :func:`to_csv`."""
        return cls(outcome="outcome", tau_true="tau_true")


@dataclass
class LoadReport:
    rows_read: int = 0
    rows_dropped: int = 0
    dropped_rows: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({"rows_read": self.rows_read, "rows_dropped": self.rows_dropped})


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        return math.nan


def load_csv(path, schema: Optional[ColumnMapping] = None, *, with_report: bool = False):
    """Read a header-first comma-separated file into a :class:`Dataset`.

    Rows with any non-finite (or unparseable) numeric value are dropped and
    counted in the load report. Row numbers in errors are 1-based data rows,
    not counting the header.
    """
    schema = schema or ColumnMapping()
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        index = {name: i for i, name in enumerate(header)}
        if schema.features is None:
            skip = {schema.treatment, schema.outcome, schema.tau_true, *schema.ignore}
            features = [h for h in header if h not in skip]
        else:
            features = list(schema.features)
        wanted = [*features, schema.treatment, schema.outcome]
        if schema.tau_true is not None and schema.tau_true in index:
            wanted.append(schema.tau_true)
        missing = [c for c in wanted if c not in index]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {missing}")
        if not features:
            raise SchemaError(f"{path}: no feature columns")
        cols = [index[c] for c in wanted]
        t_col = index[schema.treatment]

        report = LoadReport()
        rows = []
        for rownum, record in enumerate(reader, start=1):
            if not record:
                continue
            report.rows_read += 1
            if len(record) != len(header):
                raise DataError(f"{path}: row {rownum} has {len(record)} fields, expected {len(header)}")
            t_val = _parse_float(record[t_col])
            if math.isfinite(t_val) and t_val not in (0.0, 1.0):
                raise DataError(
                    f"{path}: non-binary treatment value {record[t_col]!r} on row {rownum}"
                )
            values = [_parse_float(record[c]) for c in cols]
            if not all(math.isfinite(v) for v in values):
                report.rows_dropped += 1
                report.dropped_rows.append(rownum)
                continue
            rows.append(values)

    if not rows:
        raise DataError(f"{path}: no usable rows ({report.rows_dropped} dropped)")
    arr = np.array(rows, dtype=np.float64)
    d = len(features)
    ds = Dataset(
        x=arr[:, :d],
        t=arr[:, d].astype(np.int8),
        y=arr[:, d + 1],
        tau_true=arr[:, d + 2] if arr.shape[1] > d + 2 else None,
        feature_names=tuple(features),
    )
    return (ds, report) if with_report else ds


def _fmt(v: float) -> str:
    return repr(float(v))


def to_csv(ds: Dataset, path) -> None:
    """Write ``<features...>,treatment,outcome[,tau_true]`` with round-trip floats."""
    header = [*ds.feature_names, "treatment", "outcome"]
    if ds.tau_true is not None:
        header.append("tau_true")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.n):
            row = [_fmt(v) for v in ds.x[i]]
            row += [str(int(ds.t[i])), _fmt(ds.y[i])]
            if ds.tau_true is not None:
                row.append(_fmt(ds.tau_true[i]))
            w.writerow(row)


def split(ds: Dataset, train_frac: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded random partition into (train, test); train gets round(n * train_frac) rows."""
    if not 0 < train_frac < 1:
        raise ConfigError(f"train_frac must lie in (0, 1), got {train_frac}")
    n_train = int(round(ds.n * train_frac))
    if n_train < 1 or n_train > ds.n - 1:
        raise ConfigError(f"split of n={ds.n} at {train_frac} leaves an empty side")
    perm = make_rng(seed).permutation(ds.n)
    return ds.subset(np.sort(perm[:n_train])), ds.subset(np.sort(perm[n_train:]))
