"""SN classification into single-hop / two-hop sets, relay selection and
deadline-driven pruning.

Delays here are normalised airtimes ``1/r`` (s*Hz/bit); multiply by
``|B|/W`` to get seconds.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .airtime import MIN_RATE, LinkGains
from .errors import EmptyRelaySetError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LinkRates:
    """Rates of every candidate link at a fixed (uniform) power."""

    rd: np.ndarray  # (N,) direct rate r_n^d, also the relay's second-hop rate
    r_sn: np.ndarray  # (N, N) first-hop rate r^(1)_{n,k}
    gain_direct: np.ndarray  # (N,) |h_n^a|^2, decides relay eligibility

    @property
    def n(self) -> int:
        return len(self.rd)

    @classmethod
    def from_gains(cls, gains: LinkGains, power) -> "LinkRates":
        p = np.broadcast_to(np.asarray(power, dtype=float), (gains.n,))
        rd = gains.rate_direct(p)
        n = gains.n
        src = np.arange(n)[:, None]
        dst = np.arange(n)[None, :]
        r_sn = gains.rate_sn(p[:, None], src, dst)
        np.fill_diagonal(r_sn, 0.0)
        return cls(rd=np.asarray(rd, dtype=float), r_sn=np.asarray(r_sn, dtype=float),
                   gain_direct=np.asarray(gains.direct, dtype=float))

    def inv(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(r >= MIN_RATE, 1.0 / np.maximum(r, MIN_RATE), np.inf)


@dataclass(frozen=True)
class Grouping:
    one_hop: frozenset
    two_hop: dict  # SN id -> relay id
    relays: frozenset
    delay_table: dict  # SN id -> normalised delay of its own path
    threshold: float = math.nan
    pruned: frozenset = field(default_factory=frozenset)

    @property
    def participants(self) -> frozenset:
        return self.one_hop | frozenset(self.two_hop) | self.relays

    @property
    def n_participants(self) -> int:
        return len(self.one_hop) + len(self.two_hop) + len(self.relays)

    def relay_load(self) -> dict:
        load = {k: 0 for k in self.relays}
        for k in self.two_hop.values():
            load[k] += 1
        return load

    def clients_of(self, k: int) -> list:
        return sorted(n for n, r in self.two_hop.items() if r == k)

    def t_ul_norm(self, aggregate: bool = True) -> float:
        """Uplink airtime in units of ``|B|/W``."""
        d = self.delay_table
        t = sum(d[n] for n in self.one_hop)
        t += sum(d[n] - d[k] for n, k in self.two_hop.items())
        if aggregate:
            t += sum(d[k] for k in self.relays)
        else:
            load = self.relay_load()
            t += sum((load[k] + 1) * d[k] for k in self.relays)
        return float(t)

    def t_ul_s(self, packet_bits: float, bandwidth: float, aggregate: bool = True) -> float:
        return self.t_ul_norm(aggregate) * packet_bits / bandwidth

    def to_dict(self, t_ul_s: float | None = None) -> dict:
        return {
            "threshold": None if math.isnan(self.threshold) else float(self.threshold),
            "one_hop": sorted(int(n) for n in self.one_hop),
            "two_hop": {str(int(n)): int(k) for n, k in sorted(self.two_hop.items())},
            "relays": sorted(int(k) for k in self.relays),
            "t_ul_s": t_ul_s,
        }

    def to_json(self, t_ul_s: float | None = None) -> str:
        return json.dumps(self.to_dict(t_ul_s), indent=2)

    @classmethod
    def from_dict(cls, data: dict, rates: LinkRates | None = None) -> "Grouping":
        one = frozenset(int(n) for n in data["one_hop"])
        two = {int(n): int(k) for n, k in data["two_hop"].items()}
        relays = frozenset(int(k) for k in data["relays"])
        delays = {}
        if rates is not None:
            inv_rd = rates.inv(rates.rd)
            for n in one | relays:
                delays[n] = float(inv_rd[n])
            for n, k in two.items():
                delays[n] = float(rates.inv(rates.r_sn[n, k]) + inv_rd[k])
        th = data.get("threshold")
        return cls(one, two, relays, delays, math.nan if th is None else float(th))


def delay_vector(sn: int, rates: LinkRates, relays) -> np.ndarray:
    """``1/r^(1)_{n,k} + 1/r^(2)_k`` for every relay ``k`` (in the given order)."""
    relays = np.asarray(list(relays), dtype=int)
    if relays.size == 0:
        raise EmptyRelaySetError("no relay available")
    return rates.inv(rates.r_sn[sn, relays]) + rates.inv(rates.rd[relays])


RelayChooser = Callable[[np.ndarray], np.ndarray]


def _assign(rates: LinkRates, members: np.ndarray, relays: np.ndarray,
            allow_direct: bool = True, chooser: RelayChooser | None = None):
    """Pick each member's path; returns (is_two_hop, relay id, delay) arrays.

    Ties between the direct path and the best relay path go to the direct
    path; ties between relays go to the lowest relay id.
    """
    inv_rd = rates.inv(rates.rd)
    direct = inv_rd[members]
    if relays.size == 0 or members.size == 0:
        return (np.zeros(members.size, bool), np.full(members.size, -1), direct)
    t = rates.inv(rates.r_sn[np.ix_(members, relays)]) + inv_rd[relays][None, :]
    j = np.argmin(t, axis=1) if chooser is None else chooser(t)
    best = t[np.arange(members.size), j]
    two = best < direct if allow_direct else np.ones(members.size, bool)
    return two, relays[j], np.where(two, best, direct)


def classify(threshold: float, rates: LinkRates, allow_direct: bool = True,
             chooser: RelayChooser | None = None) -> Grouping:
    """SNs with ``|h^a|^2 > threshold`` become relays; every other SN takes
    the lower-delay path among direct and all relays."""
    relay_mask = rates.gain_direct > threshold
    relays = np.flatnonzero(relay_mask)
    members = np.flatnonzero(~relay_mask)
    two, relay_of, delay = _assign(rates, members, relays, allow_direct, chooser)
    inv_rd = rates.inv(rates.rd)
    delays = {int(k): float(inv_rd[k]) for k in relays}
    delays.update({int(n): float(d) for n, d in zip(members, delay)})
    return Grouping(
        one_hop=frozenset(int(n) for n in members[~two]),
        two_hop={int(n): int(k) for n, k in zip(members[two], relay_of[two])},
        relays=frozenset(int(k) for k in relays),
        delay_table=delays,
        threshold=float(threshold),
    )


def _t_ul_at(threshold: float, rates: LinkRates) -> float:
    relay_mask = rates.gain_direct > threshold
    relays = np.flatnonzero(relay_mask)
    members = np.flatnonzero(~relay_mask)
    two, relay_of, delay = _assign(rates, members, relays)
    inv_rd = rates.inv(rates.rd)
    first_hop = np.where(two, delay - inv_rd[np.where(two, relay_of, 0)], delay)
    return float(first_hop.sum() + inv_rd[relays].sum())


@dataclass(frozen=True)
class TernarySearchConfig:
    th_min: float | None = None
    th_max: float | None = None
    epsilon: float | None = None  # absolute, in the search scale
    rel_epsilon: float = 1e-4  # used when epsilon is None
    scale: str = "linear"  # "linear" gain or "db"
    validate_grid: bool = False
    grid_size: int = 200

    def __post_init__(self):
        if self.scale not in ("linear", "db"):
            raise ValueError(f"unknown scale {self.scale!r}")
        if self.epsilon is not None and not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


@dataclass(frozen=True)
class TernaryResult:
    grouping: Grouping
    t_ul: float  # normalised
    evaluations: int
    bracket: tuple
    grid_best_t_ul: float | None = None
    unimodality_violation: bool = False


def ternary_search_threshold(rates: LinkRates, cfg: TernarySearchConfig = TernarySearchConfig()
                             ) -> TernaryResult:
    gains = rates.gain_direct
    to_lin: Callable[[float], float]
    if cfg.scale == "db":
        pos = gains[gains > 0]
        lo_default = 10 * np.log10(pos.min()) if pos.size else 0.0
        hi_default = 10 * np.log10(pos.max()) if pos.size else 0.0
        to_lin = lambda x: 10.0 ** (x / 10.0)  # noqa: E731
    else:
        lo_default, hi_default = float(gains.min()), float(gains.max())
        to_lin = float
    lo = lo_default if cfg.th_min is None else cfg.th_min
    hi = hi_default if cfg.th_max is None else cfg.th_max
    if lo > hi:
        raise ValueError("th_min must not exceed th_max")
    eps = cfg.epsilon if cfg.epsilon is not None else max(cfg.rel_epsilon * (hi - lo), 1e-300)

    f = lambda x: _t_ul_at(to_lin(x), rates)  # noqa: E731
    a, b = float(lo), float(hi)
    evals = 0
    while b - a > eps:
        m1 = a + (b - a) / 3.0
        m2 = b - (b - a) / 3.0
        t1, t2 = f(m1), f(m2)
        evals += 2
        if t1 > t2:
            a = m1
        else:
            b = m2
    th_star = (a + b) / 2.0
    grouping = classify(to_lin(th_star), rates)
    t_ul = grouping.t_ul_norm()

    grid_best = None
    violation = False
    if cfg.validate_grid:
        grid = np.linspace(lo, hi, cfg.grid_size)
        grid_best = min(f(x) for x in grid)
        if t_ul > grid_best + max(1e-9 * abs(grid_best), 1e-9):
            violation = True
            log.warning("ternary search ended at T_UL=%.6g above grid best %.6g "
                        "(objective not unimodal on this instance)", t_ul, grid_best)
    return TernaryResult(grouping, t_ul, evals, (a, b), grid_best, violation)


def _reassign(g: Grouping, orphans: list, rates: LinkRates) -> Grouping:
    relays = np.array(sorted(g.relays), dtype=int)
    members = np.array(orphans, dtype=int)
    two, relay_of, delay = _assign(rates, members, relays)
    one_hop = set(g.one_hop)
    two_hop = dict(g.two_hop)
    delays = dict(g.delay_table)
    for n, is_two, k, d in zip(members, two, relay_of, delay):
        if is_two:
            two_hop[int(n)] = int(k)
        else:
            one_hop.add(int(n))
        delays[int(n)] = float(d)
    return replace(g, one_hop=frozenset(one_hop), two_hop=two_hop, delay_table=delays)


def prune_to_deadline(grouping: Grouping, t_eff: float, packet_bits: float, bandwidth: float,
                      rates: LinkRates | None = None, aggregate: bool = True) -> Grouping:
    """Drop the slowest SN until the uplink fits in ``t_eff`` seconds.

    A removed relay's clients are re-routed over the surviving relays (or
    directly) when ``rates`` is given, and dropped with it otherwise. An
    empty grouping is a valid result.
    """
    budget = t_eff * bandwidth / packet_bits
    g = grouping
    pruned = set(g.pruned)
    while g.n_participants and g.t_ul_norm(aggregate) > budget:
        delays = g.delay_table
        worst = max(sorted(g.participants), key=lambda n: delays[n])
        pruned.add(worst)
        one_hop = set(g.one_hop) - {worst}
        two_hop = {n: k for n, k in g.two_hop.items() if n != worst}
        relays = set(g.relays) - {worst}
        orphans = sorted(n for n, k in two_hop.items() if k == worst)
        for n in orphans:
            del two_hop[n]
        new_delays = {n: d for n, d in delays.items() if n != worst}
        g = replace(g, one_hop=frozenset(one_hop), two_hop=two_hop, relays=frozenset(relays),
                    delay_table=new_delays)
        if orphans:
            if rates is not None:
                g = _reassign(g, orphans, rates)
            else:
                pruned.update(orphans)
                g = replace(g, delay_table={n: d for n, d in g.delay_table.items()
                                            if n not in orphans})
    return replace(g, pruned=frozenset(pruned))


def all_one_hop(rates: LinkRates) -> Grouping:
    inv_rd = rates.inv(rates.rd)
    return Grouping(one_hop=frozenset(range(rates.n)), two_hop={}, relays=frozenset(),
                    delay_table={n: float(inv_rd[n]) for n in range(rates.n)},
                    threshold=math.inf)
