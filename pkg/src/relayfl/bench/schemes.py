"""Grouping and power-allocation schemes compared in the benchmarks."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ..airtime import LinkGains
from ..channel import (ChannelSet, SimConfig, Topology, estimate_channels, generate_channels,
                       generate_topology)
from ..errors import ConfigError, RelayFLError
from ..grouping import (Grouping, LinkRates, TernarySearchConfig, all_one_hop, classify,
                        prune_to_deadline, ternary_search_threshold)
from ..powopt import EeProblem, spca_optimize, spca_optimize_icsi, uniform_allocation
from ..rng import substream

SCHEMES = ("proposed", "fixed_th", "only_2hop_fixed_th", "only_1hop", "random_relay",
           "two_hop_wo_pa", "one_hop_pmax")


def fixed_threshold(rates: LinkRates) -> float:
    """Mean direct-link power gain of the current realisation."""
    return float(np.mean(rates.gain_direct))


def fixed_threshold_scheme(rates: LinkRates) -> Grouping:
    return classify(fixed_threshold(rates), rates)


def only_two_hop_scheme(rates: LinkRates) -> Grouping:
    """Fixed-threshold relays; every other SN is forced onto its best relay."""
    return classify(fixed_threshold(rates), rates, allow_direct=False)


def random_relay_scheme(rates: LinkRates, rng: np.random.Generator) -> Grouping:
    """Fixed-threshold relays; each SN compares the direct path with one random relay."""
    return classify(fixed_threshold(rates), rates,
                    chooser=lambda t: rng.integers(0, t.shape[1], size=t.shape[0]))


@dataclass(frozen=True)
class PhyTrial:
    """One channel realisation and the rates every scheme plans with."""

    cfg: SimConfig
    trial: int
    topology: Topology
    channels: ChannelSet
    gains: LinkGains
    rates: LinkRates

    @classmethod
    def draw(cls, cfg: SimConfig, trial: int) -> "PhyTrial":
        topo = generate_topology(cfg, trial)
        ch = generate_channels(cfg, topo, trial)
        gains = LinkGains.from_channels(ch, cfg.sigma0_w)
        return cls(cfg, trial, topo, ch, gains, LinkRates.from_gains(gains, cfg.p_max_w))


def scheme_grouping(name: str, phy: PhyTrial,
                    search: TernarySearchConfig | None = None) -> tuple[Grouping, bool]:
    """Unpruned grouping of ``name`` and whether relays aggregate."""
    rates = phy.rates
    if name in ("proposed", "two_hop_wo_pa"):
        g = ternary_search_threshold(rates, search or TernarySearchConfig()).grouping
        return g, name == "proposed"
    if name == "fixed_th":
        return fixed_threshold_scheme(rates), True
    if name == "only_2hop_fixed_th":
        return only_two_hop_scheme(rates), True
    if name == "random_relay":
        return random_relay_scheme(rates, substream(phy.cfg.seed, "relay_random", phy.trial)), True
    if name in ("only_1hop", "one_hop_pmax"):
        return all_one_hop(rates), True
    raise ConfigError(f"unknown scheme {name!r}; choose from {SCHEMES}")


@dataclass(frozen=True)
class SchemeOutcome:
    grouping: Grouping  # after pruning
    aggregate: bool
    outage: bool  # T_UL at P_max above the deadline before pruning
    t_ul_pmax_s: float
    e_tx_j: float = math.nan
    t_ul_s: float = math.nan
    solver_failure: bool = False
    status: str = ""


def evaluate_scheme(name: str, phy: PhyTrial, energy: bool = True,
                    search: TernarySearchConfig | None = None) -> SchemeOutcome:
    """Group, measure outage, prune, then (optionally) allocate power.

    ``one_hop_pmax`` keeps every transmitter at P_max; all other schemes run
    SPCA on their pruned grouping. Solver errors are reported in the
    outcome, not raised.
    """
    cfg = phy.cfg
    g0, agg = scheme_grouping(name, phy, search)
    t_pmax = g0.t_ul_s(cfg.packet_bits, cfg.bandwidth_hz, agg)
    g = prune_to_deadline(g0, cfg.t_eff_s, cfg.packet_bits, cfg.bandwidth_hz, phy.rates, agg)
    out = SchemeOutcome(g, agg, bool(t_pmax > cfg.t_eff_s), t_pmax)
    if not energy:
        return out
    try:
        problem = EeProblem.from_config(g, phy.gains, cfg, aggregate=agg)
        if name == "one_hop_pmax":
            alloc = uniform_allocation(problem)
        else:
            alloc = spca_optimize(problem)[0]
    except (RelayFLError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return SchemeOutcome(g, agg, out.outage, t_pmax, solver_failure=True,
                             status=type(exc).__name__)
    return SchemeOutcome(g, agg, out.outage, t_pmax, alloc.e_tx_j, alloc.t_ul_s,
                         status=alloc.status)


def evaluate_icsi(phy: PhyTrial, pilot_len: int, grouping: Grouping | None = None,
                  search: TernarySearchConfig | None = None) -> SchemeOutcome:
    """Power allocation of the proposed scheme planned on MMSE estimates.

    ``pilot_len = 0`` is perfect CSI. The grouping is the perfect-CSI one
    (pass ``grouping`` to reuse it) so that only the power allocation sees
    the estimation error; SNs that cannot meet the pilot-shortened deadline
    at their estimated effective rates are pruned. The reported energy is
    the planned one.
    """
    cfg = phy.cfg
    if grouping is None:
        g0 = ternary_search_threshold(phy.rates, search or TernarySearchConfig()).grouping
        grouping = prune_to_deadline(g0, cfg.t_eff_s, cfg.packet_bits, cfg.bandwidth_hz,
                                     phy.rates)
    if pilot_len == 0:
        gains, rates, t_avail = phy.gains, phy.rates, cfg.t_eff_s
    else:
        csi = estimate_channels(phy.channels, cfg, int(pilot_len), trial=phy.trial)
        gains = LinkGains.from_csi(csi, cfg.sigma0_w)
        rates = LinkRates.from_gains(gains, cfg.p_max_w)
        t_avail = csi.t_avail_s
    t_pmax = _t_ul_with(grouping, rates, cfg)
    g = prune_to_deadline(_with_delays(grouping, rates), t_avail, cfg.packet_bits,
                          cfg.bandwidth_hz, rates)
    outage = bool(t_pmax > t_avail)
    try:
        problem = EeProblem.from_config(g, gains, cfg, t_eff=t_avail)
        solve = spca_optimize_icsi if gains.imperfect and problem.n_tx else spca_optimize
        alloc = solve(problem)[0]
    except (RelayFLError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return SchemeOutcome(g, True, outage, t_pmax, solver_failure=True,
                             status=type(exc).__name__)
    return SchemeOutcome(g, True, outage, t_pmax, alloc.e_tx_j, alloc.t_ul_s,
                         status=alloc.status)


def _with_delays(g: Grouping, rates: LinkRates) -> Grouping:
    """Same routes, delay table recomputed from ``rates``."""
    inv = rates.inv
    delays = {}
    for n in g.participants:
        if n in g.two_hop:
            k = g.two_hop[n]
            delays[n] = float(inv(rates.r_sn[n, k]) + inv(rates.rd[k]))
        else:
            delays[n] = float(inv(rates.rd[n]))
    return replace(g, delay_table=delays)


def _t_ul_with(g: Grouping, rates: LinkRates, cfg: SimConfig) -> float:
    inv = rates.inv
    t = sum(float(inv(rates.r_sn[n, k])) for n, k in g.two_hop.items())
    t += sum(float(inv(rates.rd[n])) for n in (*g.one_hop, *g.relays))
    return t * cfg.packet_bits / cfg.bandwidth_hz
