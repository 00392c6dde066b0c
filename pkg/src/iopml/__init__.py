"""Debiased inequality-of-opportunity estimation with machine-learning first stages."""

__version__ = "0.1.0"

from .crossfit import CrossFitFV, FoldAssignment, crossfit_fitted_values, make_folds, make_pair_blocks
from .data import Dataset, Predicate, Schema, encode_design, isced_to_years, load_dataset, subset
from .effects import (
    PartialEffect,
    TestResult,
    compare_iop,
    effect_table,
    group_test,
    mobility_slope,
    partial_effect,
)
from .errors import ConfigError, DataError, IOpError, NumericalError
from .iop import (
    EstimatorConfig,
    IOpEstimate,
    debiased_gini_iop,
    debiased_mld_iop,
    estimate_iop,
    gini,
    mld,
    plugin_iop,
    relative_iop,
)
from .learners import LearnerSpec, select_best
from .sim import DGPSpec, gen_dgp, monte_carlo, true_iop

__all__ = [
    "ConfigError",
    "CrossFitFV",
    "DGPSpec",
    "DataError",
    "Dataset",
    "EstimatorConfig",
    "FoldAssignment",
    "IOpError",
    "IOpEstimate",
    "LearnerSpec",
    "NumericalError",
    "PartialEffect",
    "Predicate",
    "Schema",
    "TestResult",
    "compare_iop",
    "crossfit_fitted_values",
    "debiased_gini_iop",
    "debiased_mld_iop",
    "effect_table",
    "encode_design",
    "estimate_iop",
    "gen_dgp",
    "gini",
    "group_test",
    "isced_to_years",
    "load_dataset",
    "make_folds",
    "make_pair_blocks",
    "mld",
    "mobility_slope",
    "monte_carlo",
    "partial_effect",
    "plugin_iop",
    "relative_iop",
    "select_best",
    "subset",
    "true_iop",
]
