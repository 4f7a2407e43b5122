"""Command line entry point: ``gnnuplift <subcommand> ...``.

Exit codes: 0 success, 2 configuration error, 3 data/schema error,
4 numeric failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from gnnuplift import __version__
from gnnuplift import pipeline as pl
from gnnuplift.cate import DmlConfig
from gnnuplift.dataset import ColumnMapping
from gnnuplift.errors import ConfigError, CycleError, DataError, NumericError, SchemaError, ShapeError
from gnnuplift.gcn import GcnParams
from gnnuplift.structure import HillClimbOptions
from gnnuplift.teacher import GbdtParams

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3, 4

log = logging.getLogger("gnnuplift")


def _cmd_simulate(a):
    pl.stage_simulate(a.out, n=a.n, d=a.d, sigma=a.sigma, eta=a.eta, seed=a.seed)


def _cmd_load(a):
    mapping = ColumnMapping(
        features=a.features.split(",") if a.features else None,
        treatment=a.treatment,
        outcome=a.outcome,
    )
    pl.stage_load(a.csv, a.out, a.report, mapping, a.max_rows, a.seed)


def _cmd_split(a):
    pl.stage_split(a.data, a.train_out, a.test_out, train_frac=a.train_frac, seed=a.seed)


def _cmd_distill(a):
    params = GbdtParams(n_rounds=a.rounds, max_depth=a.max_depth, learning_rate=a.learning_rate)
    pl.stage_distill(a.data, a.model_out, a.out, params)


def _cmd_cate(a):
    cfg = DmlConfig(n_folds=a.folds, nuisance=a.nuisance, ridge_lambda=a.ridge_lambda,
                    final_stage=a.final_stage, seed=a.seed, n_jobs=a.jobs)
    pl.stage_cate(a.data, a.soft, a.out, a.csv, cfg)


def _cmd_structure(a):
    opts = HillClimbOptions(max_iters=a.max_iters, restarts=a.restarts, seed=a.seed,
                            max_parents=a.max_parents)
    adjacency = a.adjacency or str(Path(a.out).with_name("adjacency.csv"))
    pl.stage_structure(a.data, a.out, a.edges, adjacency, opts, all_variables=a.all_variables)


def _cmd_train(a):
    hp = GcnParams(layers=a.layers, hidden=a.hidden, readout_hidden=a.readout_hidden,
                   lr=a.lr, epochs=a.epochs, batch=a.batch, l2=a.l2, seed=a.seed)
    pl.stage_train(a.data, a.adjacency, a.out, hp, a.weights)


def _cmd_predict(a):
    pl.stage_predict(a.model, a.data, a.out, a.weights)


def _cmd_evaluate(a):
    out = a.out or str(Path(a.pred).with_name("report.json"))
    pl.stage_evaluate(a.pred, a.data, out, a.curve)


def _cmd_pipeline(a):
    cfg = pl.PipelineConfig.load(a.config, a.out)
    report = pl.run_pipeline(cfg)
    for name, r in report["variants"].items():
        log.info("%s: mse_y=%s abs_ite=%s auuc_raw=%s auuc_norm=%s",
                 name, r["mse_y"], r["abs_ite"], r["auuc_raw"], r["auuc_norm"])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gnnuplift", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic randomized trial")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--d", type=int, default=5)
    s.add_argument("--sigma", type=float, default=1.0)
    s.add_argument("--eta", type=float, default=0.1)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_simulate)

    s = sub.add_parser("load", help="ingest a Criteo-schema CSV into the canonical format")
    s.add_argument("--csv", required=True)
    s.add_argument("--features", help="comma-separated feature columns (default: all others)")
    s.add_argument("--treatment", default="treatment")
    s.add_argument("--outcome", default="conversion")
    s.add_argument("--max-rows", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--report", required=True, help="load report JSON")
    s.set_defaults(func=_cmd_load)

    s = sub.add_parser("split", help="seeded train/test split")
    s.add_argument("--data", required=True)
    s.add_argument("--train-frac", type=float, default=2.0 / 3.0)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--train-out", required=True)
    s.add_argument("--test-out", required=True)
    s.set_defaults(func=_cmd_split)

    s = sub.add_parser("distill", help="fit the teacher and emit soft labels")
    s.add_argument("--data", required=True)
    s.add_argument("--rounds", type=int, default=100)
    s.add_argument("--max-depth", type=int, default=3)
    s.add_argument("--learning-rate", type=float, default=0.1)
    s.add_argument("--model-out", required=True)
    s.add_argument("--out", required=True, help="soft label CSV")
    s.set_defaults(func=_cmd_distill)

    s = sub.add_parser("cate", help="multi-head per-feature DML causal weights")
    s.add_argument("--data", required=True)
    s.add_argument("--soft", required=True)
    s.add_argument("--folds", type=int, default=2)
    s.add_argument("--nuisance", choices=("ridge", "gbdt"), default="ridge")
    s.add_argument("--ridge-lambda", type=float, default=1e-3)
    s.add_argument("--final-stage", choices=("constant", "linear"), default="linear")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", required=True, help="summary JSON")
    s.add_argument("--csv", help="per-sample weight matrix CSV")
    s.set_defaults(func=_cmd_cate)

    s = sub.add_parser("structure", help="BIC hill-climbing structure learning")
    s.add_argument("--data", required=True)
    s.add_argument("--max-iters", type=int, default=1000)
    s.add_argument("--restarts", type=int, default=0)
    s.add_argument("--max-parents", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--all-variables", action="store_true",
                   help="also include treatment and outcome as nodes (adjacency stays feature-only)")
    s.add_argument("--out", required=True, help="DAG JSON")
    s.add_argument("--edges", help="edge list text file")
    s.add_argument("--adjacency", help="normalized adjacency CSV (default: next to --out)")
    s.set_defaults(func=_cmd_structure)

    s = sub.add_parser("train", help="fit the GCN S-learner")
    s.add_argument("--data", required=True)
    s.add_argument("--adjacency", required=True)
    s.add_argument("--weights", help="causal weights JSON; omit for the plain GCN")
    s.add_argument("--layers", type=int, default=2)
    s.add_argument("--hidden", type=int, default=16)
    s.add_argument("--readout-hidden", type=int, default=16)
    s.add_argument("--lr", type=float, default=0.01)
    s.add_argument("--epochs", type=int, default=300)
    s.add_argument("--batch", type=int, default=64)
    s.add_argument("--l2", type=float, default=1e-4)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_train)

    s = sub.add_parser("predict", help="write id,mu0,mu1,tau_hat")
    s.add_argument("--model", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--weights")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_predict)

    s = sub.add_parser("evaluate", help="MSE, abs ITE error and AUUC report")
    s.add_argument("--pred", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--out", help="report JSON (default: report.json next to --pred)")
    s.add_argument("--curve", help="uplift curve CSV k,V")
    s.set_defaults(func=_cmd_evaluate)

    s = sub.add_parser("pipeline", help="run every stage from a JSON config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help=f"output directory (overrides config and ${pl.OUTPUT_ENV})")
    s.set_defaults(func=_cmd_pipeline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        args.func(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (DataError, SchemaError, ShapeError, CycleError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except NumericError as exc:
        log.error("numeric failure: %s", exc)
        return EXIT_NUMERIC
    except Exception as exc:  # noqa: BLE001
        log.exception("unexpected failure: %s", exc)
        return EXIT_OTHER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
