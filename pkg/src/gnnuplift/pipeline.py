"""File-based pipeline stages and the end-to-end orchestrator.

Every stage reads its inputs from files and writes its artifact to a file,
so ``run_pipeline`` is exactly the sequence of the individual CLI
subcommands with per-stage seeds derived from the global seed.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from gnnuplift import __version__
from gnnuplift._random import RNG_ALGORITHM, child_seed
from gnnuplift.cate import CausalWeights, DmlConfig, multi_head_cate
from gnnuplift.dataset import (
    ColumnMapping,
    Dataset,
    SyntheticConfig,
    generate_synthetic,
    load_csv,
    split,
    to_csv,
)
from gnnuplift.errors import ConfigError, DataError
from gnnuplift.evaluation import evaluate
from gnnuplift.gcn import GcnModel, GcnParams, fit, predict_uplift
from gnnuplift.structure import (
    DagStructure,
    GcnAdjacency,
    HillClimbOptions,
    hill_climb,
    to_gcn_adjacency,
)
from gnnuplift.teacher import GbdtParams, augment, fit_gbdt, predict_soft

logger = logging.getLogger(__name__)

OUTPUT_ENV = "GNNUPLIFT_OUTPUT_DIR"
STAGES = ("simulate", "split", "distill", "cate", "structure", "train", "predict", "evaluate")


# -- small file helpers -----------------------------------------------------

def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing upstream artifact: {path}")
    return json.loads(path.read_text(encoding="utf-8"))


def _require(path) -> Path:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing upstream artifact: {path}")
    return path


def read_dataset(path, mapping: Optional[ColumnMapping] = None) -> Dataset:
    return load_csv(_require(path), mapping or ColumnMapping.export())


def write_column(path, name: str, values) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow([name])
        for v in values:
            wr.writerow([repr(float(v))])


def read_column(path, name: str) -> np.ndarray:
    with _require(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if name not in (reader.fieldnames or []):
            raise DataError(f"{path}: expected column {name!r}")
        return np.array([float(r[name]) for r in reader])


def _params(cls, section: Optional[dict], **overrides):
    section = dict(section or {})
    known = {f.name for f in fields(cls)}
    unknown = set(section) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} option(s): {sorted(unknown)}")
    section.update(overrides)
    return cls(**section)


# -- stages -----------------------------------------------------------------

def stage_simulate(out, *, n: int, d: int, sigma: float = 1.0, eta: float = 0.1, seed: int) -> Dataset:
    ds = generate_synthetic(SyntheticConfig(n=n, d=d, sigma=sigma, eta=eta, seed=seed))
    to_csv(ds, out)
    return ds


def stage_load(path, out, report_out, mapping: ColumnMapping, max_rows: Optional[int] = None, seed: int = 0) -> Dataset:
    ds, report = load_csv(path, mapping, with_report=True)
    if max_rows is not None and ds.n > max_rows:
        rows = np.sort(np.random.Generator(np.random.PCG64(seed)).permutation(ds.n)[:max_rows])
        ds = ds.subset(rows)
    to_csv(ds, out)
    Path(report_out).write_text(report.to_json() + "\n", encoding="utf-8")
    return ds


def stage_split(data, train_out, test_out, *, train_frac: float, seed: int):
    tr, te = split(read_dataset(data), train_frac, seed)
    to_csv(tr, train_out)
    to_csv(te, test_out)
    return tr, te


def stage_distill(data, model_out, soft_out, params: GbdtParams) -> np.ndarray:
    ds = read_dataset(data)
    model = fit_gbdt(augment(ds.x, ds.t), ds.y, params)
    model.save(model_out)
    soft = predict_soft(model, augment(ds.x, ds.t)).y_hat
    write_column(soft_out, "y_hat", soft)
    return soft


def stage_cate(data, soft, json_out, csv_out, cfg: DmlConfig) -> CausalWeights:
    ds = read_dataset(data)
    y_soft = read_column(soft, "y_hat")
    if y_soft.shape[0] != ds.n:
        raise DataError(f"{soft} has {y_soft.shape[0]} rows, {data} has {ds.n}")
    cw = multi_head_cate(ds.x, y_soft, cfg)
    cw.save(json_out, csv_out, ds.feature_names)
    return cw


def stage_structure(data, json_out, edges_out, adjacency_out, opts: HillClimbOptions,
                    all_variables: bool = False) -> DagStructure:
    ds = read_dataset(data)
    names = list(ds.feature_names)
    matrix = ds.x
    if all_variables:
        matrix = np.column_stack([ds.x, ds.t.astype(np.float64), ds.y])
        names += ["treatment", "outcome"]
    dag = hill_climb(matrix, opts, node_names=tuple(names))
    dag.save(json_out, edges_out)
    feature_adj = dag.adj[: ds.d, : ds.d]
    to_gcn_adjacency(feature_adj).save_csv(adjacency_out)
    return dag


def stage_train(data, adjacency, model_out, hp: GcnParams, weights: Optional[str] = None) -> GcnModel:
    ds = read_dataset(data)
    a = GcnAdjacency.load_csv(_require(adjacency))
    cw = CausalWeights.load(_require(weights), ds.x) if weights else None
    model = fit(ds, cw, a, hp)
    model.save(model_out)
    return model


def stage_predict(model_path, data, out, weights: Optional[str] = None):
    model = GcnModel.load(_require(model_path))
    ds = read_dataset(data)
    cw = None
    if model.uses_weights:
        if not weights:
            raise ConfigError("model was trained with causal weights; pass --weights")
        cw = CausalWeights.load(_require(weights), ds.x)
    scores = predict_uplift(model, ds, cw)
    with Path(out).open("w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["id", "mu0", "mu1", "tau_hat"])
        for i in range(ds.n):
            wr.writerow([i, repr(float(scores.mu0[i])), repr(float(scores.mu1[i])), repr(float(scores.tau_hat[i]))])
    return scores


def read_predictions(path) -> dict:
    with _require(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or set(rows[0]) != {"id", "mu0", "mu1", "tau_hat"}:
        raise DataError(f"{path}: expected columns id,mu0,mu1,tau_hat")
    try:
        return {k: np.array([float(r[k]) for r in rows]) for k in ("mu0", "mu1", "tau_hat")}
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def stage_evaluate(pred, data, report_out, curve_out=None, config: Optional[dict] = None) -> dict:
    ds = read_dataset(data)
    p = read_predictions(pred)
    if p["tau_hat"].shape[0] != ds.n:
        raise DataError(f"{pred} has {p['tau_hat'].shape[0]} rows, {data} has {ds.n}")
    y_pred = np.where(ds.t == 1, p["mu1"], p["mu0"])
    report = evaluate(p["tau_hat"], ds.t, ds.y, y_pred=y_pred, tau_true=ds.tau_true, config=config)
    out = report.to_dict()
    write_json(report_out, out)
    if curve_out is not None:
        report.save_curve(curve_out)
    return out


# -- configuration ------------------------------------------------------------

@dataclass
class PipelineConfig:
    seed: int
    dataset: dict
    output_dir: Path
    train_frac: float = 2.0 / 3.0
    teacher: dict = field(default_factory=dict)
    dml: dict = field(default_factory=dict)
    structure: dict = field(default_factory=dict)
    gcn: dict = field(default_factory=dict)
    compare: bool = True
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict, output_dir=None) -> "PipelineConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        if "seed" not in raw:
            raise ConfigError("config is missing the mandatory 'seed'")
        seed = raw["seed"]
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")
        ds = raw.get("dataset")
        if not isinstance(ds, dict) or len({"synthetic", "csv"} & set(ds)) != 1 or len(ds) != 1:
            raise ConfigError("dataset must contain exactly one of 'synthetic' or 'csv'")
        if "csv" in ds:
            path = ds["csv"].get("path")
            if not path or not Path(path).exists():
                raise ConfigError(f"dataset csv path does not exist: {path!r}")
        out = output_dir or raw.get("output_dir") or os.environ.get(OUTPUT_ENV)
        if not out:
            raise ConfigError(f"no output directory: set 'output_dir', pass --out or set {OUTPUT_ENV}")
        known = {"seed", "dataset", "output_dir", "train_frac", "teacher", "dml", "structure", "gcn", "compare"}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {sorted(unknown)}")
        cfg = cls(
            seed=seed,
            dataset=ds,
            output_dir=Path(out),
            train_frac=float(raw.get("train_frac", 2.0 / 3.0)),
            teacher=raw.get("teacher", {}),
            dml=raw.get("dml", {}),
            structure=raw.get("structure", {}),
            gcn=raw.get("gcn", {}),
            compare=bool(raw.get("compare", True)),
            raw=raw,
        )
        cfg.build()  # surfaces unknown options before any work starts
        return cfg

    @classmethod
    def load(cls, path, output_dir=None) -> "PipelineConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_dict(raw, output_dir)

    def stage_seeds(self) -> dict:
        return {s: child_seed(self.seed, s) for s in STAGES}

    def build(self) -> dict:
        seeds = self.stage_seeds()
        dml = dict(self.dml)
        if "gbdt" in dml:
            dml["gbdt"] = _params(GbdtParams, dml["gbdt"])
        return {
            "teacher": _params(GbdtParams, self.teacher, seed=seeds["distill"]),
            "dml": _params(DmlConfig, dml, seed=seeds["cate"]),
            "structure": _params(HillClimbOptions, self.structure, seed=seeds["structure"]),
            "gcn": _params(GcnParams, self.gcn, seed=seeds["train"]),
        }


# -- orchestration ------------------------------------------------------------

@contextmanager
def output_lock(out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise ConfigError(f"output directory {out_dir} is locked by another run ({lock})") from None
    os.write(fd, str(os.getpid()).encode())
    os.close(fd)
    try:
        yield
    finally:
        lock.unlink(missing_ok=True)


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_manifest(out_dir: Path, manifest: dict) -> None:
    tmp = out_dir / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, out_dir / "manifest.json")


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run every stage in order; returns the combined report dictionary."""
    out = cfg.output_dir
    built = cfg.build()
    seeds = cfg.stage_seeds()
    p = {
        "data": out / "data.csv",
        "train": out / "train.csv",
        "test": out / "test.csv",
        "teacher": out / "teacher.json",
        "soft": out / "soft_labels.csv",
        "cate": out / "cate.json",
        "cate_csv": out / "cate_weights.csv",
        "dag": out / "dag.json",
        "edges": out / "dag.txt",
        "adjacency": out / "adjacency.csv",
    }
    variants = {"causal_weighted": True}
    if cfg.compare:
        variants["plain"] = False

    manifest = {
        "tool_version": __version__,
        "rng_algorithm": RNG_ALGORITHM,
        "config": {**cfg.raw, "output_dir": str(out)},
        "stage_seeds": seeds,
        "stage_seconds": {},
        "artifacts": {},
        "status": "running",
    }
    current = "setup"
    with output_lock(out):
        try:
            def timed(name, fn, *a, **kw):
                nonlocal current
                current = name
                t0 = time.perf_counter()
                res = fn(*a, **kw)
                manifest["stage_seconds"][name] = round(time.perf_counter() - t0, 3)
                logger.info("stage %s done in %.2fs", name, manifest["stage_seconds"][name])
                return res

            if "synthetic" in cfg.dataset:
                syn = dict(cfg.dataset["synthetic"])
                timed("simulate", stage_simulate, p["data"], seed=seeds["simulate"], **syn)
            else:
                src = dict(cfg.dataset["csv"])
                mapping = ColumnMapping(
                    features=src.get("features", ColumnMapping.criteo().features),
                    treatment=src.get("treatment", "treatment"),
                    outcome=src.get("outcome", "conversion"),
                )
                p["load_report"] = out / "load_report.json"
                timed("load", stage_load, src["path"], p["data"], p["load_report"], mapping,
                      src.get("max_rows"), seeds["simulate"])
            timed("split", stage_split, p["data"], p["train"], p["test"],
                  train_frac=cfg.train_frac, seed=seeds["split"])
            timed("distill", stage_distill, p["train"], p["teacher"], p["soft"], built["teacher"])
            timed("cate", stage_cate, p["train"], p["soft"], p["cate"], p["cate_csv"], built["dml"])
            timed("structure", stage_structure, p["train"], p["dag"], p["edges"], p["adjacency"],
                  built["structure"])

            reports = {}
            for name, weighted in variants.items():
                p[f"model_{name}"] = out / f"model_{name}.json"
                p[f"preds_{name}"] = out / f"preds_{name}.csv"
                p[f"report_{name}"] = out / f"report_{name}.json"
                p[f"curve_{name}"] = out / f"curve_{name}.csv"
                w = str(p["cate"]) if weighted else None
                timed(f"train:{name}", stage_train, p["train"], p["adjacency"], p[f"model_{name}"],
                      built["gcn"], w)
                timed(f"predict:{name}", stage_predict, p[f"model_{name}"], p["test"],
                      p[f"preds_{name}"], w)
                reports[name] = timed(f"evaluate:{name}", stage_evaluate, p[f"preds_{name}"],
                                      p["test"], p[f"report_{name}"], p[f"curve_{name}"],
                                      {"variant": name})

            current = "report"
            combined = {
                "config": {k: v for k, v in cfg.raw.items() if k != "output_dir"},
                "variants": reports,
                "seed": cfg.seed,
                "stage_seeds": seeds,
                "rng_algorithm": RNG_ALGORITHM,
                "tool_version": __version__,
            }
            p["report"] = out / "report.json"
            write_json(p["report"], combined)
            manifest["status"] = "ok"
            return combined
        except Exception:
            manifest["status"] = "failed"
            manifest["failed_stage"] = current
            raise
        finally:
            manifest["artifacts"] = {
                k: {"path": v.name, "sha256": sha256(v)} for k, v in sorted(p.items()) if v.exists()
            }
            _write_manifest(out, manifest)
