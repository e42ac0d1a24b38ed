"""Benchmark studies, baselines, plot data and the command-line interface."""

from .experiment import (CSV_HEADER, KINDS, ExperimentSpec, ResultTable, Row, failure_rate,
                         fl_round_plans, load_config_bundle, run_experiment, run_trial)
from .plotdata import ecdf, emit_plotdata, wilson_interval
from .schemes import (SCHEMES, PhyTrial, SchemeOutcome, evaluate_icsi, evaluate_scheme,
                      fixed_threshold, fixed_threshold_scheme, only_two_hop_scheme,
                      random_relay_scheme, scheme_grouping)

__all__ = [
    "CSV_HEADER", "KINDS", "ExperimentSpec", "ResultTable", "Row", "failure_rate",
    "fl_round_plans", "load_config_bundle", "run_experiment", "run_trial", "ecdf",
    "emit_plotdata", "wilson_interval", "SCHEMES", "PhyTrial", "SchemeOutcome", "evaluate_icsi",
    "evaluate_scheme", "fixed_threshold", "fixed_threshold_scheme", "only_two_hop_scheme",
    "random_relay_scheme", "scheme_grouping",
]
