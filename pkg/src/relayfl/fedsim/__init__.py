"""Desk-scale federated learning with relay partial aggregation."""

from .aggregation import global_aggregate, relay_aggregate, weighted_average
from .bounds import (BoundParams, HeterogeneityEstimate, bound_relay, bound_singlehop,
                     effective_heterogeneity, effective_variance, estimate_bound_params,
                     estimate_heterogeneity, fit_optimum, gradient_variance,
                     singlehop_variance_term, smoothness_constant)
from .data import Dataset, FederatedData, TaskSpec, make_noniid_data
from .model import (accuracy, gradient, load_model, local_train, loss, model_dim,
                    per_sample_gradients, save_model, zero_model)
from .runner import SCHEMES, FlConfig, FlRunHistory, RoundPlan, nmse, run_fl

__all__ = [
    "BoundParams", "Dataset", "FederatedData", "FlConfig", "FlRunHistory", "HeterogeneityEstimate",
    "RoundPlan", "SCHEMES", "TaskSpec", "accuracy", "bound_relay", "bound_singlehop",
    "effective_heterogeneity", "effective_variance", "estimate_bound_params",
    "estimate_heterogeneity", "fit_optimum", "global_aggregate", "gradient", "gradient_variance",
    "load_model", "local_train", "loss", "make_noniid_data", "model_dim", "nmse",
    "per_sample_gradients", "relay_aggregate", "run_fl", "save_model", "singlehop_variance_term",
    "smoothness_constant", "weighted_average", "zero_model",
]
