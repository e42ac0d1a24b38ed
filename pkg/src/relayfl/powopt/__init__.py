"""Transmit-power optimisation under an uplink deadline."""

from .barrier import BarrierResult, BarrierSettings, solve_barrier
from .oracle import brute_force_power_oracle
from .program import EeProblem, SpcaState, Subproblem, build_subproblem, initial_state
from .spca import (PowerAllocation, SpcaSettings, SpcaTrace, closed_form_single,
                   solve_subproblem, spca_optimize, spca_optimize_icsi, uniform_allocation)
from .surrogates import dol_rate, icsi_rate_lower_bound, omega_surrogate

__all__ = [
    "BarrierResult", "BarrierSettings", "solve_barrier", "brute_force_power_oracle",
    "EeProblem", "SpcaState", "Subproblem", "build_subproblem", "initial_state",
    "PowerAllocation", "SpcaSettings", "SpcaTrace", "closed_form_single", "solve_subproblem",
    "spca_optimize", "spca_optimize_icsi", "uniform_allocation", "dol_rate",
    "icsi_rate_lower_bound", "omega_surrogate",
]
