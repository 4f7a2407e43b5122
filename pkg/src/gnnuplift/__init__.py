"""Uplift modeling with a graph convolutional S-learner and per-feature causal weights."""

__version__ = "0.1.0"

from gnnuplift._kernels import BACKEND as KERNEL_BACKEND
from gnnuplift.cate import CausalWeights, DmlConfig, dml_fit_feature, multi_head_cate, residualize
from gnnuplift.dataset import (
    ColumnMapping,
    Dataset,
    SyntheticConfig,
    generate_synthetic,
    load_csv,
    split,
    to_csv,
)
from gnnuplift.evaluation import abs_ite_error, auuc, evaluate, mse, uplift_curve
from gnnuplift.gcn import GcnModel, GcnParams, fit, gradient_check, predict_uplift
from gnnuplift.structure import (
    BicScorer,
    DagStructure,
    GcnAdjacency,
    bic_local,
    bic_total,
    hill_climb,
    to_gcn_adjacency,
)
from gnnuplift.teacher import GbdtModel, GbdtParams, fit_gbdt, predict_soft

__all__ = [
    "KERNEL_BACKEND",
    "BicScorer",
    "CausalWeights",
    "ColumnMapping",
    "DagStructure",
    "Dataset",
    "DmlConfig",
    "GbdtModel",
    "GbdtParams",
    "GcnAdjacency",
    "GcnModel",
    "GcnParams",
    "SyntheticConfig",
    "abs_ite_error",
    "auuc",
    "bic_local",
    "bic_total",
    "dml_fit_feature",
    "evaluate",
    "fit",
    "fit_gbdt",
    "generate_synthetic",
    "gradient_check",
    "hill_climb",
    "load_csv",
    "mse",
    "multi_head_cate",
    "predict_soft",
    "predict_uplift",
    "residualize",
    "split",
    "to_csv",
    "to_gcn_adjacency",
    "uplift_curve",
]
