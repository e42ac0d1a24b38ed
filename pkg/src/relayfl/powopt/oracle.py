"""Exhaustive grid search over transmit powers, for verification only."""

from __future__ import annotations

import math

import numpy as np

from ..errors import NoFeasiblePointError, OracleDimensionError
from .program import EeProblem
from .spca import PowerAllocation, allocation_from_norm

MAX_DIM = 4


def _power_floor(problem: EeProblem) -> np.ndarray:
    """Per-transmitter power that would fill the whole deadline alone.

    No feasible point can go below it in any coordinate, so the grid starts
    there instead of at an arbitrary epsilon.
    """
    k = np.expm1(problem.packets / problem.t_prime * math.log(2.0))
    denom = problem.a - k * problem.b
    with np.errstate(divide="ignore"):
        p = np.where(denom > 0, k / np.where(denom > 0, denom, 1.0), np.inf) / problem.p_max
    return p


def grid_axis(p_floor: float, points: int) -> np.ndarray:
    """Geometric grid ``p_floor * (1/p_floor)**(j/points)``, ``j = 0..points``.

    Grids with ``points`` and ``m * points`` are nested, so refining never
    loses a candidate.
    """
    j = np.arange(points + 1) / points
    return np.minimum(p_floor ** (1.0 - j), 1.0)


def brute_force_power_oracle(problem: EeProblem, grid_points_per_dim: int = 200) -> PowerAllocation:
    d = problem.n_tx
    if d > MAX_DIM:
        raise OracleDimensionError(f"{d} transmitters; the grid oracle handles at most {MAX_DIM}")
    if d == 0:
        return allocation_from_norm(problem, np.zeros(0), "empty")
    floor = _power_floor(problem)
    if np.any(~np.isfinite(floor)) or np.any(floor > 1.0):
        raise NoFeasiblePointError("some transmitter cannot meet the deadline even alone at P_max")
    axes = [grid_axis(float(f), grid_points_per_dim) for f in floor]
    t_axes, e_axes = [], []
    for i, ax in enumerate(axes):
        p = ax * problem.p_max
        r = np.log2(1.0 + problem.a[i] * p / (1.0 + problem.b[i] * p))
        t_axes.append(problem.packets[i] / r)
        e_axes.append(problem.packets[i] * ax / r)
    limit = problem.t_prime * (1.0 + 1e-12)

    best_e, best_idx = np.inf, None
    rest_t, rest_e = 0.0, 0.0
    for k in range(1, d):
        shape = [1] * (d - 1)
        shape[k - 1] = -1
        rest_t = rest_t + t_axes[k].reshape(shape)
        rest_e = rest_e + e_axes[k].reshape(shape)
    rest_t = np.asarray(rest_t)
    rest_e = np.asarray(rest_e)
    for i0 in range(len(axes[0])):  # chunk over the first axis to bound memory
        tot_t = t_axes[0][i0] + rest_t
        tot_e = np.where(tot_t <= limit, e_axes[0][i0] + rest_e, np.inf)
        j = int(np.argmin(tot_e))
        if tot_e.flat[j] < best_e:
            best_e = float(tot_e.flat[j])
            best_idx = (i0,) + (np.unravel_index(j, tot_e.shape) if tot_e.ndim else ())
    if best_idx is None:
        raise NoFeasiblePointError("no grid point meets the deadline")
    p = np.array([axes[k][best_idx[k]] for k in range(d)])
    return allocation_from_norm(problem, p, "grid")
