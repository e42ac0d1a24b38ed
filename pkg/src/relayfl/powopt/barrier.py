"""Log-barrier interior-point solver for the per-anchor convex restriction.

The barrier Hessian is block diagonal (one 5x5 block per transmitter) plus
a rank-one term coming from the shared deadline constraint, so every Newton
system is solved block by block and combined with the Sherman-Morrison
formula. The objective epigraph variable is eliminated: for barrier weight
``t`` its optimal slack is exactly ``1/t``, which leaves ``t * sum s/q`` in
the barrier function and adds one unit to the duality gap.

The inner loops run under numba; the problem data are plain float arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from ..errors import SolverError
from .program import Subproblem

_LN2 = math.log(2.0)
STATUS = ("optimal", "stalled", "max-inner-iterations", "infeasible-start")


@dataclass(frozen=True)
class BarrierSettings:
    mu0: float = 10.0  # initial barrier parameter, t = 1 / mu
    mu_factor: float = 10.0
    gap_tol: float = 1e-8  # on the objective normalised by its start value
    newton_tol: float = 1e-7  # half squared Newton decrement
    max_newton: int = 60  # per centering step
    max_total_newton: int = 1500
    ls_alpha: float = 0.25
    ls_beta: float = 0.5
    min_step: float = 1e-8  # line-search steps below this count as a stall


@dataclass(frozen=True)
class BarrierResult:
    x: np.ndarray
    objective: float
    status: str
    newton_steps: int
    kkt_residual: float
    duality_gap: float


@njit(cache=True)
def _value(x, t, s, alpha, c, l0, l1, tp, scale):
    n = x.shape[0]
    st = tp
    for i in range(n):
        if x[i, 2] <= 0.0:
            return np.inf
        st -= s[i] / x[i, 2]
    if st <= 0.0:
        return np.inf
    v = -math.log(st)
    for i in range(n):
        p, w, g, q, r = x[i, 0], x[i, 1], x[i, 2], x[i, 3], x[i, 4]
        if q <= 0.0 or p <= 0.0 or p >= 1.0:
            return np.inf
        e = 1.0 + c[i] * r
        if e <= 0.0:
            return np.inf
        s1 = 2.0 * alpha[i] * w - alpha[i] * alpha[i] * p - q
        s2 = g - w * w
        s3 = math.log(e) / _LN2 - g - l0[i] - l1[i] * p
        s4 = p - r
        if s1 <= 0.0 or s2 <= 0.0 or s3 <= 0.0 or s4 <= 0.0:
            return np.inf
        v += t * s[i] / q / scale
        v -= math.log(s1) + math.log(s2) + math.log(s3) + math.log(s4) + math.log(p) + math.log(1.0 - p)
    return v


@njit(cache=True)
def _lsq_factor_solve(m, rhs):
    """Solve ``(M^T M) y = rhs`` through a Householder QR of ``M`` (rows >= 5).

    Forming ``M^T M`` would drown the small diagonal curvature terms under
    the large rank-one constraint terms; the triangular factor keeps them.
    Returns False when ``R`` has a zero pivot.
    """
    a = m.copy()
    rows = a.shape[0]
    for k in range(5):
        norm = 0.0
        for r in range(k, rows):
            norm += a[r, k] * a[r, k]
        norm = math.sqrt(norm)
        if norm == 0.0 or not np.isfinite(norm):
            return False, rhs
        alpha = -norm if a[k, k] >= 0.0 else norm
        v0 = a[k, k] - alpha
        # v = (v0, a[k+1:, k]); H = I - 2 v v^T / (v^T v)
        vtv = v0 * v0
        for r in range(k + 1, rows):
            vtv += a[r, k] * a[r, k]
        if vtv > 0.0:
            for j in range(k + 1, 5):
                dot = v0 * a[k, j]
                for r in range(k + 1, rows):
                    dot += a[r, k] * a[r, j]
                f = 2.0 * dot / vtv
                a[k, j] -= f * v0
                for r in range(k + 1, rows):
                    a[r, j] -= f * a[r, k]
        a[k, k] = alpha
    y = rhs.copy()
    for j in range(y.shape[1]):
        # R^T w = rhs
        for k in range(5):
            acc = y[k, j]
            for c in range(k):
                acc -= a[c, k] * y[c, j]
            y[k, j] = acc / a[k, k]
        # R y = w
        for k in range(4, -1, -1):
            acc = y[k, j]
            for c in range(k + 1, 5):
                acc -= a[k, c] * y[c, j]
            y[k, j] = acc / a[k, k]
    return True, y


@njit(cache=True)
def _newton(x, t, s, alpha, c, l0, l1, tp, scale, dx):
    """Fill ``dx`` with the Newton direction; return (decrement^2, max |scaled grad|, ok)."""
    n = x.shape[0]
    st = tp
    for i in range(n):
        st -= s[i] / x[i, 2]
    ys = np.empty((n, 5))
    zs = np.empty((n, 5))
    ds = np.empty((n, 5))
    gss = np.empty((n, 5))
    uy = 0.0
    uz = 0.0
    gmax = 0.0
    mm = np.empty((9, 5))
    grad = np.empty(5)
    rhs = np.empty((5, 2))
    for i in range(n):
        p, w, g, q, r = x[i, 0], x[i, 1], x[i, 2], x[i, 3], x[i, 4]
        a = alpha[i]
        e = 1.0 + c[i] * r
        i1 = 1.0 / (2.0 * a * w - a * a * p - q)
        i2 = 1.0 / (g - w * w)
        i3 = 1.0 / (math.log(e) / _LN2 - g - l0[i] - l1[i] * p)
        i4 = 1.0 / (p - r)
        i5 = 1.0 / p
        i6 = 1.0 / (1.0 - p)
        ts = t * s[i] / scale
        ug = s[i] / (g * g) / st
        # Hessian block = M^T M with M = [constraint gradients / S; sqrt(diagonal curvature)]
        mm[:, :] = 0.0
        mm[0, 0] = -a * a * i1
        mm[0, 1] = 2.0 * a * i1
        mm[0, 3] = -i1
        mm[1, 1] = -2.0 * w * i2
        mm[1, 2] = i2
        mm[2, 0] = -l1[i] * i3
        mm[2, 2] = -i3
        mm[2, 4] = c[i] / (e * _LN2) * i3
        mm[3, 0] = i4
        mm[3, 4] = -i4
        mm[4, 0] = math.sqrt(i5 * i5 + i6 * i6)
        mm[5, 1] = math.sqrt(2.0 * i2)
        mm[6, 2] = math.sqrt(2.0 * s[i] / (g * g * g) / st)
        mm[7, 3] = math.sqrt(2.0 * ts / (q * q * q))
        mm[8, 4] = math.sqrt(c[i] * c[i] / (e * e * _LN2) * i3)
        for k in range(5):
            grad[k] = -(mm[0, k] + mm[1, k] + mm[2, k] + mm[3, k])
        grad[0] += i6 - i5
        grad[3] -= ts / (q * q)
        grad[2] -= ug
        # Jacobi scaling: unit diagonal of M^T M
        for k in range(5):
            acc = 0.0
            for r in range(9):
                acc += mm[r, k] * mm[r, k]
            ds[i, k] = 1.0 / math.sqrt(acc)
            for r in range(9):
                mm[r, k] *= ds[i, k]
            gss[i, k] = grad[k] * ds[i, k]
            rhs[k, 0] = -gss[i, k]
            rhs[k, 1] = 0.0
            if abs(gss[i, k]) > gmax:
                gmax = abs(gss[i, k])
        rhs[2, 1] = ug * ds[i, 2]
        ok, sol = _lsq_factor_solve(mm, rhs)
        if not ok:
            return 0.0, gmax, False
        for k in range(5):
            ys[i, k] = sol[k, 0]
            zs[i, k] = sol[k, 1]
        uy += rhs[2, 1] * sol[2, 0]
        uz += rhs[2, 1] * sol[2, 1]
    coef = uy / (1.0 + uz)
    dec2 = 0.0
    for i in range(n):
        for k in range(5):
            dy = ys[i, k] - zs[i, k] * coef
            dx[i, k] = dy * ds[i, k]
            dec2 -= gss[i, k] * dy
    return dec2, gmax, True


@njit(cache=True)
def _initial_t(x, s, alpha, c, l0, l1, tp, scale, t_lo, t_hi):
    """Weight minimising ``|t grad f + grad phi|`` at ``x`` (Jacobi-scaled)."""
    dx = np.empty_like(x)
    # the objective only touches q: grad f_q = -s/q^2/scale
    _, _, ok = _newton(x, 0.0, s, alpha, c, l0, l1, tp, scale, dx)
    # recompute the barrier gradient along q directly
    n = x.shape[0]
    num = 0.0
    den = 0.0
    for i in range(n):
        p, w, q = x[i, 0], x[i, 1], x[i, 3]
        a = alpha[i]
        gq_bar = 1.0 / (2.0 * a * w - a * a * p - q)  # -d/dq log S1
        gq_obj = -s[i] / (q * q) / scale
        num += gq_obj * gq_bar
        den += gq_obj * gq_obj
    if den <= 0.0 or not ok:
        return t_lo
    t = -num / den
    return min(max(t, t_lo), t_hi)


@njit(cache=True)
def _solve(x, s, alpha, c, l0, l1, tp, scale, t, mu_factor, gap_tol, newton_tol,
           max_newton, max_total, ls_alpha, ls_beta, min_step, m):
    n = x.shape[0]
    dx = np.empty((n, 5))
    xn = np.empty((n, 5))
    total = 0
    status = 0
    while True:
        centered = False
        for _ in range(max_newton):
            dec2, _, ok = _newton(x, t, s, alpha, c, l0, l1, tp, scale, dx)
            total += 1
            if not ok:
                status = 1
                break
            if dec2 / 2.0 <= newton_tol:
                centered = True
                break
            v0 = _value(x, t, s, alpha, c, l0, l1, tp, scale)
            step = 1.0
            accepted = False
            while step >= min_step:
                for i in range(n):
                    for k in range(5):
                        xn[i, k] = x[i, k] + step * dx[i, k]
                if _value(xn, t, s, alpha, c, l0, l1, tp, scale) <= v0 - ls_alpha * step * dec2:
                    accepted = True
                    break
                step *= ls_beta
            if not accepted:
                status = 1
                break
            x[:, :] = xn
            if total >= max_total:
                return x, 2, total, t, 0.0
        if status == 0 and not centered:
            status = 1
        if status == 1:
            t /= mu_factor  # last weight whose centering completed
            break
        if m / t <= gap_tol:
            break
        t *= mu_factor
    _, gmax, _ = _newton(x, t, s, alpha, c, l0, l1, tp, scale, dx)
    return x, status, total, t, gmax / t


def solve_barrier(sub: Subproblem, settings: BarrierSettings = BarrierSettings(),
                  t0: float | None = None) -> BarrierResult:
    """Minimise ``sum s/q`` over the restriction, starting from ``sub.x0``.

    ``t0=None`` picks the starting barrier weight from the gradients at the
    start point (never below ``1/mu0``). A centering step that can no longer
    make progress ends the solve with status ``"stalled"``; the reported
    duality gap then tells how far from optimal the point is.
    """
    x = np.array(sub.x0, dtype=float)
    scale = sub.objective(x)
    if not (np.isfinite(scale) and scale > 0):
        raise SolverError("numerical-failure", "start point has a non-positive objective")
    args = (np.ascontiguousarray(sub.packets, dtype=float), np.ascontiguousarray(sub.alpha),
            np.ascontiguousarray(sub.c), np.ascontiguousarray(sub.l0),
            np.ascontiguousarray(sub.l1), float(sub.t_prime), float(scale))
    m = sub.n_constraints + 1
    t_final = m / settings.gap_tol
    if not np.isfinite(_value(x, 1.0, *args)):
        raise SolverError("infeasible-start", "start point is not strictly feasible")
    if t0 is None:
        t0 = _initial_t(x, *args, 1.0 / settings.mu0, t_final / settings.mu_factor)
    x, code, steps, t, stationarity = _solve(
        x, *args, float(t0), settings.mu_factor, settings.gap_tol, settings.newton_tol,
        settings.max_newton, settings.max_total_newton, settings.ls_alpha, settings.ls_beta,
        settings.min_step, float(m))
    if code == 2:
        raise SolverError("max-inner-iterations", f"{steps} Newton steps", {"duality_gap": m / t})
    gap = m / t
    return BarrierResult(x=x, objective=sub.objective(x), status=STATUS[code], newton_steps=int(steps),
                         kkt_residual=max(stationarity, gap), duality_gap=gap * scale)


def barrier_value(sub: Subproblem, x, t: float, scale: float = 1.0) -> float:
    """Barrier function value (``inf`` outside the strict interior)."""
    return float(_value(np.asarray(x, dtype=float), t, sub.packets.astype(float), sub.alpha, sub.c,
                        sub.l0, sub.l1, float(sub.t_prime), scale))


def newton_direction(sub: Subproblem, x, t: float, scale: float = 1.0):
    """Newton direction and squared decrement of the barrier function at ``x``."""
    x = np.asarray(x, dtype=float)
    dx = np.empty_like(x)
    dec2, _, ok = _newton(x, t, sub.packets.astype(float), sub.alpha, sub.c, sub.l0, sub.l1,
                          float(sub.t_prime), scale, dx)
    if not ok:
        raise SolverError("numerical-failure", "singular Newton block")
    return dx, dec2
