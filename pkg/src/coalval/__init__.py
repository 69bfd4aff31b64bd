"""Semivalue data valuation from a mix of evaluated and GP-predicted coalition utilities."""

from .active import aggregate_weight, greedy_select, greedy_select_dense, incremental_inverse
from .datasets import (
    AggregatedDataset,
    Coalition,
    OwnerDataset,
    aggregate,
    all_coalitions,
    load_csv,
    make_blobs,
    make_moons,
    make_moons_validation,
    save_csv,
)
from .exceptions import CoalvalError, ConfigError, NumericalError
from .gp import GPModel, HyperGrid, Posterior, condition, fit, log_marginal_likelihood, predict
from .kernel import CoalitionKernel, KernelSpec, build_matrix, kernel_value, psd_check
from .pipeline import RunConfig, compare_methods, kendall_tau, mse, pearson, run_valuation
from .semivalue import (
    EvaluationLedger,
    SemivalueReport,
    SemivalueWeights,
    exact_semivalue_bruteforce,
    exact_shapley_bruteforce,
    sample_permutation_coalitions,
    semivalue_from_hybrid,
    shapley_permutation_estimate,
    total_uncertainty,
    weight_matrix,
    weight_vector,
)
from .transport import (
    CoalitionDistances,
    SWParams,
    build_label_embedding,
    classical_mds,
    otdd_distance,
    sliced_wasserstein_distance,
    ssw_distance,
    wasserstein_1d,
)
from .utility import KNNAccuracy, LogisticAccuracy, RidgeR2, TableUtility, parse_utility

__version__ = "0.1.0"

__all__ = [
    "aggregate_weight",
    "greedy_select",
    "greedy_select_dense",
    "incremental_inverse",
    "AggregatedDataset",
    "Coalition",
    "OwnerDataset",
    "aggregate",
    "all_coalitions",
    "load_csv",
    "make_blobs",
    "make_moons",
    "make_moons_validation",
    "save_csv",
    "CoalvalError",
    "ConfigError",
    "NumericalError",
    "GPModel",
    "HyperGrid",
    "Posterior",
    "condition",
    "fit",
    "log_marginal_likelihood",
    "predict",
    "CoalitionKernel",
    "KernelSpec",
    "build_matrix",
    "kernel_value",
    "psd_check",
    "RunConfig",
    "compare_methods",
    "kendall_tau",
    "mse",
    "pearson",
    "run_valuation",
    "EvaluationLedger",
    "SemivalueReport",
    "SemivalueWeights",
    "exact_semivalue_bruteforce",
    "exact_shapley_bruteforce",
    "sample_permutation_coalitions",
    "semivalue_from_hybrid",
    "shapley_permutation_estimate",
    "total_uncertainty",
    "weight_matrix",
    "weight_vector",
    "CoalitionDistances",
    "SWParams",
    "build_label_embedding",
    "classical_mds",
    "otdd_distance",
    "sliced_wasserstein_distance",
    "ssw_distance",
    "wasserstein_1d",
    "KNNAccuracy",
    "LogisticAccuracy",
    "RidgeR2",
    "TableUtility",
    "parse_utility",
]
