"""Successive convex approximation of the transmit-energy problem."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DeadlineInfeasibleError, InfeasibleError
from .barrier import BarrierSettings, solve_barrier
from .program import G, P, EeProblem, SpcaState, Subproblem, build_subproblem, initial_state

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PowerAllocation:
    powers: np.ndarray  # (N,) watts, 0 for SNs that do not transmit
    tx_sn: np.ndarray
    rates: np.ndarray  # true planning rate per transmitter, bits/s/Hz
    t_ul_s: float
    e_tx_j: float
    status: str = "optimal"
    iterations: int = 0

    def to_dict(self) -> dict:
        return {
            "powers_w": {str(int(n)): float(self.powers[n]) for n in self.tx_sn},
            "t_ul_s": self.t_ul_s,
            "e_tx_J": self.e_tx_j,
            "status": self.status,
            "iterations": self.iterations,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass
class SpcaTrace:
    e_q: list = field(default_factory=list)  # joules
    kkt_residual: list = field(default_factory=list)
    inner_newton_steps: list = field(default_factory=list)
    feasibility_slack: list = field(default_factory=list)  # deadline slack, seconds
    final_state: object = None  # last accepted SpcaState, usable as a warm start

    def append(self, e_q, kkt, steps, slack):
        self.e_q.append(float(e_q))
        self.kkt_residual.append(float(kkt))
        self.inner_newton_steps.append(int(steps))
        self.feasibility_slack.append(float(slack))

    def __len__(self):
        return len(self.e_q)

    def is_monotone(self, tol: float = 1e-9) -> bool:
        e = np.asarray(self.e_q)
        return bool(np.all(np.diff(e) <= tol * np.maximum(1.0, np.abs(e[:-1])))) if e.size > 1 else True

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "e_q", "kkt_residual", "inner_newton_steps"])
            for i, row in enumerate(zip(self.e_q, self.kkt_residual, self.inner_newton_steps)):
                w.writerow([i, repr(row[0]), repr(row[1]), row[2]])


def allocation_from_norm(problem: EeProblem, p_norm, status="optimal", iterations=0) -> PowerAllocation:
    p_norm = np.asarray(p_norm, dtype=float)
    rates = problem.rates(p_norm)
    with np.errstate(divide="ignore"):
        t_ul = float(np.sum(problem.packets / rates)) * problem.packet_bits / problem.bandwidth
    return PowerAllocation(powers=problem.powers_w(p_norm), tx_sn=problem.sn.copy(), rates=rates,
                           t_ul_s=t_ul, e_tx_j=problem.energy(p_norm), status=status,
                           iterations=iterations)


def uniform_allocation(problem: EeProblem, level: float = 1.0) -> PowerAllocation:
    """Everyone at ``level * P_max``; the no-power-control baseline."""
    return allocation_from_norm(problem, np.full(problem.n_tx, level), status="fixed")


def closed_form_single(problem: EeProblem) -> float:
    """Deadline-active normalised power of a lone transmitter.

    Energy ``P / r(P)`` grows with ``P``, so the optimum sends exactly at the
    rate that fills the deadline: ``(2^R - 1) / (a - (2^R - 1) b)``.
    """
    if problem.n_tx != 1:
        raise ValueError("closed form needs exactly one transmitter")
    need = float(problem.packets[0] / problem.t_prime)
    k = math.expm1(need * math.log(2.0))
    a, b = float(problem.a[0]), float(problem.b[0])
    denom = a - k * b
    if denom <= 0:
        raise DeadlineInfeasibleError("required rate exceeds the estimation-error ceiling")
    p = k / denom / problem.p_max
    if p > 1.0:
        raise DeadlineInfeasibleError("deadline not reachable at P_max")
    return p


def solve_subproblem(program: Subproblem, tol: float = 1e-8, t0: float | None = None):
    """Solve one convex restriction; returns ``(x, BarrierResult)``."""
    res = solve_barrier(program, BarrierSettings(gap_tol=tol), t0=t0)
    return res.x, res


@dataclass(frozen=True)
class SpcaSettings:
    eps_i: float = 1e-4  # relative change of E_q
    i_max: int = 50
    gap_tol: float = 1e-8  # final subproblem accuracy (objective-normalised gap)
    loose_gap_tol: float = 1e-5  # early iterations, while E_q still moves a lot


def spca_optimize(problem: EeProblem, eps_i: float = 1e-4, i_max: int = 50,
                  settings: SpcaSettings | None = None, state: SpcaState | None = None):
    """Minimise transmit energy subject to the uplink deadline.

    Returns ``(PowerAllocation, SpcaTrace)``. With estimation error in
    ``problem.gains`` the rate constraints use the concave lower bound
    re-linearised at every outer iteration.
    """
    settings = settings or SpcaSettings(eps_i=eps_i, i_max=i_max)
    trace = SpcaTrace()
    if problem.n_tx == 0:
        return allocation_from_norm(problem, np.zeros(0), "empty"), trace
    problem.check_feasible_at_pmax()
    if problem.n_tx == 1 and state is None:
        p = closed_form_single(problem)
        alloc = allocation_from_norm(problem, np.array([p]), "closed-form")
        trace.append(alloc.e_tx_j, 0.0, 0, (problem.t_eff - alloc.t_ul_s))
        return alloc, trace

    # a warm start is already near a fixed point: solve accurately from the outset
    warm = state is not None
    state = state or initial_state(problem)
    unit = problem.energy_unit
    slot = problem.packet_bits / problem.bandwidth
    trace.append(state.e_q, math.nan, 0, (problem.t_prime - np.sum(problem.packets / state.gammas)) * slot)
    status = "max-iterations"
    gap_tol = settings.gap_tol if warm else settings.loose_gap_tol
    for _ in range(settings.i_max):
        sub = build_subproblem(problem, state)
        res = solve_barrier(sub, BarrierSettings(gap_tol=gap_tol))
        e_new = unit * res.objective
        if not e_new < state.e_q:
            if gap_tol > settings.gap_tol:
                gap_tol = settings.gap_tol
                continue
            status = "converged"  # restriction cannot improve: fixed point reached
            break
        rel = abs(state.e_q - e_new) / max(abs(state.e_q), 1e-300)
        state = state.advance(res.x, e_new)
        slack = (problem.t_prime - np.sum(problem.packets / res.x[:, G])) * slot
        trace.append(e_new, res.kkt_residual, res.newton_steps, slack)
        if rel < settings.eps_i:
            if gap_tol <= settings.gap_tol:
                status = "converged"
                break
            gap_tol = settings.gap_tol  # finish with one accurate restriction
            continue
        # an inexact restriction only has to beat the anchor; tighten once
        # the outer progress becomes comparable to the inner accuracy
        gap_tol = max(settings.gap_tol, min(gap_tol, 1e-2 * rel))
    trace.final_state = state
    alloc = allocation_from_norm(problem, state.x[:, P], status, state.iter)
    if alloc.t_ul_s > problem.t_eff * (1 + 1e-12):
        raise InfeasibleError("allocation violates the deadline under true rates")
    log.debug("spca: %s after %d iterations, E=%.6g J", status, state.iter, alloc.e_tx_j)
    return alloc, trace


def spca_optimize_icsi(problem: EeProblem, eps_i: float = 1e-4, i_max: int = 50,
                       settings: SpcaSettings | None = None):
    """Imperfect-CSI variant; with perfect CSI it is exactly :func:`spca_optimize`."""
    ceiling = problem.rate_ceiling()
    need = problem.packets / problem.t_prime
    if np.any(need >= ceiling):
        bad = int(problem.sn[np.argmax(need >= ceiling)])
        raise DeadlineInfeasibleError(f"SN {bad} needs a rate above its interference ceiling")
    return spca_optimize(problem, eps_i, i_max, settings)
