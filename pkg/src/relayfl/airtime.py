"""Shannon rates, TDMA airtimes, transmit/computation energy and round timing."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

import numpy as np

from .errors import DeadlineInfeasibleError, ZeroRateError

if TYPE_CHECKING:
    from .channel import ChannelSet, CsiModel, SimConfig
    from .grouping import Grouping

# rates below this are treated as zero (unbounded airtime)
MIN_RATE = 1e-12


def rate_direct(p, gain_sq, sigma0):
    """Direct SN->ES spectral efficiency in bits/s/Hz."""
    return np.log2(1.0 + np.asarray(p, dtype=float) * gain_sq / sigma0)


def rate_hop1(p, gain_sq, sigma0):
    return rate_direct(p, gain_sq, sigma0)


def rate_hop2(p, gain_sq, sigma0):
    if np.any(np.asarray(gain_sq) <= 0):
        raise ValueError("relay-to-ES gain must be positive")
    return rate_direct(p, gain_sq, sigma0)


@dataclass(frozen=True)
class LinkGains:
    """Power gains the scheduler plans with.

    With ``sigma_e_*`` all zero this is perfect CSI and rates are plain
    Shannon rates; otherwise the gains are MMSE estimates and the rate uses
    the effective SNR ``P|h_hat|^2 / (P sigma_e + sigma0)``.
    """

    direct: np.ndarray  # (N,) |h_n^a|^2
    sn: np.ndarray  # (N, N) |h_{n,k}^r|^2
    sigma0: float
    sigma_e_direct: np.ndarray | None = None
    sigma_e_sn: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.direct)

    @property
    def imperfect(self) -> bool:
        return self.sigma_e_direct is not None

    @classmethod
    def from_channels(cls, channels: "ChannelSet", sigma0: float) -> "LinkGains":
        return cls(direct=channels.gain_direct, sn=channels.gain_sn, sigma0=float(sigma0))

    @classmethod
    def from_csi(cls, csi: "CsiModel", sigma0: float) -> "LinkGains":
        if csi.mode == "perfect":
            return cls(direct=csi.gain_direct, sn=csi.gain_sn, sigma0=float(sigma0))
        return cls(direct=csi.gain_direct, sn=csi.gain_sn, sigma0=float(sigma0),
                   sigma_e_direct=csi.sigma_e_direct, sigma_e_sn=csi.sigma_e_sn)

    def _rate(self, p, g, se):
        p = np.asarray(p, dtype=float)
        if se is None:
            return np.log2(1.0 + p * g / self.sigma0)
        return np.log2(1.0 + p * g / (p * se + self.sigma0))

    def rate_direct(self, p, idx=slice(None)):
        se = None if self.sigma_e_direct is None else self.sigma_e_direct[idx]
        return self._rate(p, self.direct[idx], se)

    def rate_sn(self, p, src, dst):
        se = None if self.sigma_e_sn is None else self.sigma_e_sn[src, dst]
        return self._rate(p, self.sn[src, dst], se)

    def interference_direct(self):
        return np.zeros(self.n) if self.sigma_e_direct is None else self.sigma_e_direct

    def interference_sn(self):
        return np.zeros((self.n, self.n)) if self.sigma_e_sn is None else self.sigma_e_sn


@dataclass(frozen=True)
class Transmission:
    """One TDMA transmission: who sends, over which link, how many packets."""

    sn: int
    phase: str  # "1h" | "2h1" | "2h2"
    dst: int  # -1 is the edge server
    packets: int = 1


def transmissions(grouping: "Grouping", aggregate: bool = True) -> list[Transmission]:
    """TDMA transmissions implied by a grouping, in slot order (2h1, 1h, 2h2).

    Without partial aggregation a relay forwards each client's packet plus
    its own, i.e. ``|N_2h,k| + 1`` packets.
    """
    out = [Transmission(n, "2h1", k) for n, k in sorted(grouping.two_hop.items())]
    out += [Transmission(n, "1h", -1) for n in sorted(grouping.one_hop)]
    load = grouping.relay_load()
    for k in sorted(grouping.relays):
        out.append(Transmission(k, "2h2", -1, 1 if aggregate else load[k] + 1))
    return out


def link_gain_and_interference(gains: LinkGains, tx: Sequence[Transmission]):
    src = np.array([t.sn for t in tx], dtype=int)
    dst = np.array([t.dst for t in tx], dtype=int)
    direct = dst < 0
    g = np.where(direct, gains.direct[src], gains.sn[src, np.where(direct, 0, dst)])
    b_d = gains.interference_direct()
    b_s = gains.interference_sn()
    se = np.where(direct, b_d[src], b_s[src, np.where(direct, 0, dst)])
    return g, se


def transmission_rates(gains: LinkGains, tx: Sequence[Transmission], powers) -> np.ndarray:
    powers = np.asarray(powers, dtype=float)
    if not tx:
        return np.zeros(0)
    g, se = link_gain_and_interference(gains, tx)
    p = powers[[t.sn for t in tx]]
    return np.log2(1.0 + p * g / (p * se + gains.sigma0))


@dataclass(frozen=True)
class LinkBudget:
    rate_direct: dict[int, float]
    rate_hop1: dict[int, float]
    rate_hop2: dict[int, float]
    t_1h: float
    t_2h_1: float
    t_2h_2: float
    t_ul: float
    e_tx: float


def uplink_times(grouping: "Grouping", powers, gains: LinkGains, packet_bits: float,
                 bandwidth: float, aggregate: bool = True) -> LinkBudget:
    """Per-phase TDMA airtime and transmit energy for a grouping.

    ``powers`` is indexed by SN id; a relay's entry is its forwarding power.
    Raises :class:`ZeroRateError` naming the first SN whose scheduled link
    has a rate below ``MIN_RATE``.
    """
    tx = transmissions(grouping, aggregate)
    powers = np.asarray(powers, dtype=float)
    rates = transmission_rates(gains, tx, powers)
    slot = packet_bits / bandwidth
    t = {"1h": 0.0, "2h1": 0.0, "2h2": 0.0}
    e_tx = 0.0
    by_phase: dict[str, dict[int, float]] = {"1h": {}, "2h1": {}, "2h2": {}}
    for tr, r in zip(tx, rates):
        if not r >= MIN_RATE:
            raise ZeroRateError(tr.sn, {"1h": "direct", "2h1": "first-hop",
                                        "2h2": "relay-to-ES"}[tr.phase])
        airtime = tr.packets * slot / r
        t[tr.phase] += airtime
        e_tx += powers[tr.sn] * airtime
        by_phase[tr.phase][tr.sn] = float(r)
    return LinkBudget(rate_direct=by_phase["1h"], rate_hop1=by_phase["2h1"],
                      rate_hop2=by_phase["2h2"], t_1h=t["1h"], t_2h_1=t["2h1"],
                      t_2h_2=t["2h2"], t_ul=t["1h"] + t["2h1"] + t["2h2"], e_tx=e_tx)


def tx_energy(grouping: "Grouping", powers, gains: LinkGains, packet_bits: float,
              bandwidth: float, aggregate: bool = True) -> float:
    """``(|B|/W) * sum_tx packets * P / r`` in joules."""
    tx = transmissions(grouping, aggregate)
    if not tx:
        return 0.0
    powers = np.asarray(powers, dtype=float)
    rates = transmission_rates(gains, tx, powers)
    for tr, r in zip(tx, rates):
        if not r >= MIN_RATE:
            raise ZeroRateError(tr.sn, tr.phase)
    pk = np.array([t.packets for t in tx], dtype=float)
    p = powers[[t.sn for t in tx]]
    return float(packet_bits / bandwidth * np.sum(pk * p / rates))


@dataclass(frozen=True)
class ComputeProfile:
    cycles_per_sample: float
    dataset_size: float
    local_iters: int
    cpu_freq: float
    kappa: float

    @property
    def cycles(self) -> float:
        return self.local_iters * self.cycles_per_sample * self.dataset_size


def comp_time(profile: ComputeProfile) -> float:
    if not profile.cpu_freq > 0:
        raise ValueError("cpu_freq must be positive")
    return profile.cycles / profile.cpu_freq


def comp_energy(profile: ComputeProfile) -> float:
    return profile.kappa * profile.cycles * profile.cpu_freq ** 2


def optimal_frequency(profile: ComputeProfile, t_th: float, t_ul: float,
                      f_max: float = math.inf) -> float:
    """Lowest CPU frequency that still finishes the round by ``t_th``."""
    slack = t_th - t_ul
    if not slack > 0:
        raise DeadlineInfeasibleError(f"uplink time {t_ul} s leaves no compute time before {t_th} s")
    f = profile.cycles / slack
    if f > f_max:
        raise DeadlineInfeasibleError(f"required frequency {f:.3e} Hz exceeds f_max {f_max:.3e} Hz")
    return f


def make_profiles(cfg: "SimConfig", local_iters: int, rng: np.random.Generator,
                  n: int | None = None) -> list[ComputeProfile]:
    """Draw per-SN cycles/sample and dataset size uniformly from the config ranges."""
    n = int(cfg.n_sns) if n is None else n
    c = rng.uniform(*cfg.cycles_per_sample_range, size=n)
    d = rng.integers(cfg.dataset_size_range[0], cfg.dataset_size_range[1] + 1, size=n)
    return [ComputeProfile(float(ci), float(di), int(local_iters), float(cfg.f_max_hz), cfg.kappa)
            for ci, di in zip(c, d)]


@dataclass(frozen=True)
class EnergyLatencyReport:
    e_local: float
    e_tx: float
    e_total_per_round: float
    e_total: float
    t_round: float
    t_complete: float
    t_eff: float
    global_rounds: int


def round_report(grouping: "Grouping", powers, gains: LinkGains,
                 profiles: Sequence[ComputeProfile], cfg: "SimConfig", i0: int,
                 aggregate: bool = True) -> EnergyLatencyReport:
    """Energy and latency of ``i0`` identical rounds.

    Profiles are used with the CPU frequency they carry; call
    :func:`optimal_frequency` first to run at the deadline-filling speed.
    """
    budget = uplink_times(grouping, powers, gains, cfg.packet_bits, cfg.bandwidth_hz, aggregate)
    taus = [comp_time(p) for p in profiles]
    tau_max = max(taus) if taus else 0.0
    e_local = float(sum(comp_energy(p) for p in profiles))
    per_round = budget.e_tx + e_local
    t_round = tau_max + budget.t_ul
    return EnergyLatencyReport(e_local=e_local, e_tx=budget.e_tx, e_total_per_round=per_round,
                               e_total=i0 * per_round, t_round=t_round,
                               t_complete=i0 * t_round, t_eff=cfg.t_th_s - tau_max,
                               global_rounds=int(i0))


ROUND_CSV_FIELDS = ("trial", "scheme", "n_participants", "t_ul_s", "e_tx_J", "e_local_J",
                    "outage_flag")


def write_round_reports(path: str | Path, rows: Iterable[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=ROUND_CSV_FIELDS)
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in ROUND_CSV_FIELDS})
