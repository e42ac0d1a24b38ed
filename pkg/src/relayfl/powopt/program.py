"""Energy-minimisation problem and its convex restriction around an anchor.

Per transmitter ``i`` the restriction works in the variables

    p (power / P_max), omega, gamma (rate lower bound), q (inverse energy),
    rho (SNR bound divided by c, so it lives on the same scale as p)

plus one epigraph variable ``E_q`` for the objective ``sum s_i / q_i``
(``s_i`` = packets sent). Constraints, all kept strictly positive inside
the barrier:

    S1 = Omega(omega, p) - q          (q <= omega^2 / p, tangent form)
    S2 = gamma - omega^2
    S3 = log2(1 + c rho) - gamma - L(p)   (L = 0 with perfect CSI)
    S4 = p - rho
    S5 = p,  S6 = 1 - p
    ST = T' - sum s_i / gamma_i       (deadline, T' = T_eff W / |B|)

``L`` is the tangent of ``log2(1 + b p)`` at the anchor power, which turns
the estimation-error rate into a concave lower bound. ``S3`` is the
logarithm of ``1 + SNR >= 2^(gamma + L)``; both describe the same convex set
but the log form does not cancel catastrophically at high SNR.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..airtime import LinkGains, transmissions
from ..errors import DeadlineInfeasibleError, InfeasibleError
from .surrogates import LN2

COLS = ("p", "omega", "gamma", "q", "rho")
P, W, G, Q, R = range(5)


@dataclass(frozen=True)
class EeProblem:
    grouping: object
    gains: LinkGains
    p_max: float
    t_eff: float
    packet_bits: float
    bandwidth: float
    aggregate: bool = True
    n_sns: int = field(init=False)
    sn: np.ndarray = field(init=False, repr=False)  # transmitter -> SN id
    dst: np.ndarray = field(init=False, repr=False)  # -1 = edge server
    packets: np.ndarray = field(init=False, repr=False)
    a: np.ndarray = field(init=False, repr=False)  # |h|^2 / sigma0
    b: np.ndarray = field(init=False, repr=False)  # sigma_e / sigma0

    def __post_init__(self):
        if not self.t_eff * self.bandwidth / self.packet_bits > 0:
            raise ValueError("deadline constant T_eff W / |B| must be positive")
        tx = transmissions(self.grouping, self.aggregate)
        sn = np.array([t.sn for t in tx], dtype=int)
        dst = np.array([t.dst for t in tx], dtype=int)
        direct = dst < 0
        col = np.where(direct, 0, dst)
        g = np.where(direct, self.gains.direct[sn], self.gains.sn[sn, col]) if tx else np.zeros(0)
        se = np.where(direct, self.gains.interference_direct()[sn],
                      self.gains.interference_sn()[sn, col]) if tx else np.zeros(0)
        if np.any(g <= 0):
            bad = int(sn[np.argmax(g <= 0)])
            raise InfeasibleError(f"SN {bad} is scheduled on a link with zero gain")
        s0 = self.gains.sigma0
        object.__setattr__(self, "n_sns", self.gains.n)
        object.__setattr__(self, "sn", sn)
        object.__setattr__(self, "dst", dst)
        object.__setattr__(self, "packets", np.array([t.packets for t in tx], dtype=float))
        object.__setattr__(self, "a", np.asarray(g, dtype=float) / s0)
        object.__setattr__(self, "b", np.asarray(se, dtype=float) / s0)

    @classmethod
    def from_config(cls, grouping, gains: LinkGains, cfg, aggregate: bool = True,
                    t_eff: float | None = None) -> "EeProblem":
        return cls(grouping, gains, cfg.p_max_w, cfg.t_eff_s if t_eff is None else t_eff,
                   cfg.packet_bits, cfg.bandwidth_hz, aggregate)

    @property
    def n_tx(self) -> int:
        return len(self.sn)

    @property
    def csi_mode(self) -> str:
        return "imperfect" if self.gains.imperfect else "perfect"

    @property
    def t_prime(self) -> float:
        return self.t_eff * self.bandwidth / self.packet_bits

    @property
    def energy_unit(self) -> float:
        """Joules per unit of ``sum s p / r`` with ``p`` normalised to ``P_max``."""
        return self.p_max * self.packet_bits / self.bandwidth

    def rates(self, p_norm) -> np.ndarray:
        """True planning rate of each transmitter at normalised power."""
        p = np.asarray(p_norm, dtype=float) * self.p_max
        return np.log2(1.0 + self.a * p / (1.0 + self.b * p))

    def airtime_norm(self, p_norm) -> float:
        with np.errstate(divide="ignore"):
            return float(np.sum(self.packets / self.rates(p_norm)))

    def energy(self, p_norm) -> float:
        with np.errstate(divide="ignore", invalid="ignore"):
            return float(self.energy_unit * np.sum(self.packets * np.asarray(p_norm) / self.rates(p_norm)))

    def rate_ceiling(self) -> np.ndarray:
        """Rate at infinite power (finite only with estimation error)."""
        with np.errstate(divide="ignore"):
            return np.where(self.b > 0, np.log2(1.0 + self.a / np.where(self.b > 0, self.b, 1.0)), np.inf)

    def check_feasible_at_pmax(self) -> float:
        t = self.airtime_norm(np.ones(self.n_tx))
        if not t < self.t_prime:
            raise DeadlineInfeasibleError(
                f"uplink needs {t * self.packet_bits / self.bandwidth:.4g} s at P_max, "
                f"deadline is {self.t_eff:.4g} s")
        return t

    def powers_w(self, p_norm) -> np.ndarray:
        """Scatter per-transmitter powers into a per-SN array (watts)."""
        out = np.zeros(self.n_sns)
        out[self.sn] = np.asarray(p_norm, dtype=float) * self.p_max
        return out


@dataclass
class SpcaState:
    x: np.ndarray  # (n, 5): p, omega, gamma, q, rho
    anchor_omega: np.ndarray
    anchor_p: np.ndarray
    e_q: float = math.nan  # joules
    iter: int = 0

    @property
    def powers(self) -> np.ndarray:
        return self.x[:, P]

    @property
    def omega(self):
        return self.x[:, W]

    @property
    def gammas(self):
        return self.x[:, G]

    @property
    def qs(self):
        return self.x[:, Q]

    @property
    def aux(self):
        return self.x[:, R]

    def advance(self, x: np.ndarray, e_q: float) -> "SpcaState":
        return SpcaState(x=x, anchor_omega=x[:, W].copy(), anchor_p=x[:, P].copy(), e_q=e_q,
                         iter=self.iter + 1)


@dataclass(frozen=True)
class Subproblem:
    packets: np.ndarray
    alpha: np.ndarray  # anchor omega / anchor p
    c: np.ndarray  # (a + b) P_max
    l0: np.ndarray
    l1: np.ndarray
    t_prime: float
    x0: np.ndarray  # strictly feasible start

    @property
    def n_tx(self) -> int:
        return len(self.packets)

    @property
    def n_vars(self) -> int:
        return 5 * self.n_tx + 1

    @property
    def variable_names(self) -> list:
        return [f"{c}[{i}]" for i in range(self.n_tx) for c in COLS] + ["E_q"]

    @property
    def n_constraints(self) -> int:
        return 6 * self.n_tx + 1

    def objective(self, x) -> float:
        return float(np.sum(self.packets / x[:, Q]))

    def constraints(self, x) -> dict:
        p, w, g, q, r = x.T
        return {
            "S1": 2 * self.alpha * w - self.alpha ** 2 * p - q,
            "S2": g - w ** 2,
            "S3": np.log2(1.0 + self.c * r) - g - self.l0 - self.l1 * p,
            "S4": p - r,
            "S5": p.copy(),
            "S6": 1.0 - p,
            "ST": np.array([self.t_prime - np.sum(self.packets / g)]),
            "q": q.copy(),
        }

    def min_slack(self, x) -> float:
        return float(min(v.min() for v in self.constraints(x).values()))


def linearization(b_norm: np.ndarray, anchor_p: np.ndarray):
    """Coefficients ``(l0, l1)`` of the tangent ``L(p) = l0 + l1 p``."""
    l1 = b_norm / ((1.0 + b_norm * anchor_p) * LN2)
    l0 = np.log1p(b_norm * anchor_p) / LN2 - l1 * anchor_p
    return l0, l1


def initial_state(problem: EeProblem) -> SpcaState:
    """Strictly feasible point just below full power, deadline slack spread evenly."""
    n = problem.n_tx
    for p0 in (1.0 - 1e-3, 1.0 - 1e-6, 1.0 - 1e-10):
        p = np.full(n, p0)
        r = problem.rates(p)
        a_sum = float(np.sum(problem.packets / r))
        if a_sum < problem.t_prime:
            break
    else:
        raise DeadlineInfeasibleError(
            f"deadline {problem.t_eff:.4g} s not reachable even at P_max")
    theta = math.sqrt(a_sum / problem.t_prime)
    gamma = theta * r
    c = (problem.a + problem.b) * problem.p_max
    l0, l1 = linearization(problem.b * problem.p_max, p)
    rho = 0.5 * (np.expm1((gamma + l0 + l1 * p) * LN2) / c + p)
    omega = 0.99 * np.sqrt(gamma)
    q = 0.99 * omega ** 2 / p
    x = np.column_stack([p, omega, gamma, q, rho])
    e_q = problem.energy_unit * float(np.sum(problem.packets / q))
    return SpcaState(x=x, anchor_omega=omega.copy(), anchor_p=p.copy(), e_q=e_q, iter=0)


def inflate_slack(sub: Subproblem, x: np.ndarray, boost: float = 0.05) -> np.ndarray | None:
    """Well-centred interior point near ``x`` for a fresh restriction.

    A solution of the previous restriction is feasible for the next one but
    sits within ~1e-8 of several curved constraints, where damped Newton can
    only crawl. This raises every power by ``boost`` (capped below P_max),
    then splits the gained rate margin evenly between the rate and deadline
    constraints. Returns None when no such point exists.
    """
    p = np.minimum(x[:, P] * (1.0 + boost), 0.5 * (x[:, P] + 1.0))
    r = np.log2(1.0 + sub.c * p) - sub.l0 - sub.l1 * p
    if np.any(r <= 0):
        return None
    a_sum = float(np.sum(sub.packets / r))
    if not a_sum < sub.t_prime:
        return None
    gamma = math.sqrt(a_sum / sub.t_prime) * r
    rho = 0.5 * (np.expm1((gamma + sub.l0 + sub.l1 * p) * LN2) / sub.c + p)
    omega = 0.99 * np.sqrt(gamma)
    om = 2 * sub.alpha * omega - sub.alpha ** 2 * p
    if np.any(om <= 0):
        return None
    x_new = np.column_stack([p, omega, gamma, 0.99 * om, rho])
    return x_new if sub.min_slack(x_new) > 0 else None


def build_subproblem(problem: EeProblem, state: SpcaState, inflate: bool = True) -> Subproblem:
    """Convex restriction tight at ``state``'s anchors.

    The start point is ``state.x`` itself (always feasible: every surrogate
    is tight at its anchor) or, with ``inflate``, a better-centred point
    built from it by :func:`inflate_slack` when that one exists.
    """
    if np.any(state.anchor_p <= 0) or np.any(state.anchor_omega <= 0):
        raise InfeasibleError("anchors must be strictly positive")
    l0, l1 = linearization(problem.b * problem.p_max, state.anchor_p)
    sub = Subproblem(
        packets=problem.packets,
        alpha=state.anchor_omega / state.anchor_p,
        c=(problem.a + problem.b) * problem.p_max,
        l0=l0, l1=l1,
        t_prime=problem.t_prime,
        x0=np.array(state.x, dtype=float),
    )
    slack = sub.constraints(sub.x0)
    bad = [k for k, v in slack.items() if not np.all(v > 0)]
    if bad:
        raise InfeasibleError(f"anchor point violates {', '.join(bad)}")
    if inflate:
        x_in = inflate_slack(sub, sub.x0)
        if x_in is not None:
            sub = replace(sub, x0=x_in)
    return sub
