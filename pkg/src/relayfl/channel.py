"""Factory topology, large-scale path loss, Rician fading and MMSE channel estimation.

All link quantities are kept in SI units (W, Hz, s). Conversions from the
dB-valued configuration happen exactly once, in :class:`SimConfig`.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import ConfigError, PilotInfeasibleError
from .rng import substream

D_MIN_M = 1.0


def db_to_lin(x_db):
    return 10.0 ** (np.asarray(x_db, dtype=float) / 10.0)


def lin_to_db(x):
    return 10.0 * np.log10(x)


def dbm_to_w(x_dbm):
    return 10.0 ** ((np.asarray(x_dbm, dtype=float) - 30.0) / 10.0)


def w_to_dbm(x_w):
    return 10.0 * np.log10(x_w) + 30.0


@dataclass(frozen=True)
class PathLossCoeffs:
    """Log-distance law ``intercept + slope*log10(d_m) + freq_term*log10(f_GHz)``.

    The defaults are a generic indoor-factory LOS parameterisation, not
    measured constants.
    """

    intercept_db: float = 31.84
    slope_db_per_decade: float = 21.5
    freq_term_db_per_decade: float = 19.0


# Named path-loss profiles. "calibrated" shifts the LOS law by +32 dB so that,
# with 100 SNs sending 1 kbit at 21 dBm, roughly 90 of them meet a 4 ms
# single-hop deadline; the benchmark experiments default to it.
PATHLOSS_PROFILES: dict[str, PathLossCoeffs] = {
    "los": PathLossCoeffs(),
    "calibrated": PathLossCoeffs(intercept_db=63.84),
}


def pathloss_profile(name: str) -> PathLossCoeffs:
    try:
        return PATHLOSS_PROFILES[name]
    except KeyError:
        raise ConfigError(f"unknown path-loss profile {name!r}; "
                          f"choose from {sorted(PATHLOSS_PROFILES)}") from None


@dataclass(frozen=True)
class SimConfig:
    area_side_m: float = 100.0
    n_sns: int = 50
    bandwidth_hz: float = 100e6
    carrier_hz: float = 10e9
    noise_psd_dbm_hz: float = -174.0
    p_max_dbm: float = 23.0
    t_th_s: float = 60.0
    t_eff_s: float = 4e-3
    packet_bits: float = 5e3
    kappa: float = 1e-28
    f_max_hz: float = 2e9
    cycles_per_sample_range: tuple[float, float] = (1e4, 2e4)
    dataset_size_range: tuple[int, int] = (200, 400)
    shadowing_sigma_db: float = 7.0
    rician_k_db: float = 10.0
    pathloss_coeffs: PathLossCoeffs = field(default_factory=PathLossCoeffs)
    seed: int = 0
    # None means pilots are sent at P_max: g_p = P_max / sigma0.
    pilot_snr_db: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "cycles_per_sample_range", tuple(self.cycles_per_sample_range))
        object.__setattr__(self, "dataset_size_range", tuple(self.dataset_size_range))
        if isinstance(self.pathloss_coeffs, str):
            object.__setattr__(self, "pathloss_coeffs", pathloss_profile(self.pathloss_coeffs))
        elif isinstance(self.pathloss_coeffs, Mapping):
            object.__setattr__(self, "pathloss_coeffs", PathLossCoeffs(**self.pathloss_coeffs))
        self.validate()

    def validate(self) -> None:
        positive = ("area_side_m", "n_sns", "bandwidth_hz", "carrier_hz", "t_th_s",
                    "t_eff_s", "packet_bits", "kappa", "f_max_hz", "shadowing_sigma_db")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if int(self.n_sns) != self.n_sns:
            raise ConfigError("n_sns must be an integer")
        if not self.t_eff_s < self.t_th_s:
            raise ConfigError("t_eff_s must be smaller than t_th_s")
        for name in ("cycles_per_sample_range", "dataset_size_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise ConfigError(f"{name} must satisfy 0 < min <= max, got {(lo, hi)}")
        for name in ("noise_psd_dbm_hz", "p_max_dbm", "rician_k_db"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")

    @property
    def sigma0_w(self) -> float:
        return float(dbm_to_w(self.noise_psd_dbm_hz + 10.0 * math.log10(self.bandwidth_hz)))

    @property
    def p_max_w(self) -> float:
        return float(dbm_to_w(self.p_max_dbm))

    @property
    def rician_k(self) -> float:
        return float(db_to_lin(self.rician_k_db))

    @property
    def symbol_time_s(self) -> float:
        return 1.0 / self.bandwidth_hz

    @property
    def pilot_snr(self) -> float:
        if self.pilot_snr_db is None:
            return self.p_max_w / self.sigma0_w
        return float(db_to_lin(self.pilot_snr_db))

    def replace(self, **changes) -> "SimConfig":
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(changes)
        return SimConfig(**data)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["cycles_per_sample_range"] = list(self.cycles_per_sample_range)
        d["dataset_size_range"] = list(self.dataset_size_range)
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SimConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown SimConfig keys: {sorted(unknown)}")
        try:
            return cls(**dict(data))
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path: str | Path) -> "SimConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class Topology:
    sn_positions: np.ndarray  # (N, 2) metres
    es_position: np.ndarray  # (2,)

    @property
    def n(self) -> int:
        return len(self.sn_positions)

    def es_distances(self) -> np.ndarray:
        return np.linalg.norm(self.sn_positions - self.es_position, axis=1)

    def sn_distances(self) -> np.ndarray:
        diff = self.sn_positions[:, None, :] - self.sn_positions[None, :, :]
        return np.linalg.norm(diff, axis=-1)


@dataclass(frozen=True)
class ChannelSet:
    """Complex channel gains of one realisation.

    ``h_sn_to_sn[n, k]`` is the channel from SN ``n`` to SN ``k``; a relay's
    channel to the edge server is its own entry of ``h_direct``. The
    diagonal of the SN matrices is zero and carries no meaning.
    """

    h_direct: np.ndarray  # (N,)
    h_sn_to_sn: np.ndarray  # (N, N)
    beta_direct: np.ndarray  # (N,)
    beta_sn: np.ndarray  # (N, N), symmetric
    realization_seed: int = 0

    @property
    def n(self) -> int:
        return len(self.h_direct)

    @property
    def gain_direct(self) -> np.ndarray:
        return np.abs(self.h_direct) ** 2

    @property
    def gain_sn(self) -> np.ndarray:
        return np.abs(self.h_sn_to_sn) ** 2


@dataclass(frozen=True)
class CsiModel:
    mode: str  # "perfect" | "imperfect"
    pilot_len: int
    pilot_snr: np.ndarray  # (N,) linear, per transmitting SN
    h_hat_direct: np.ndarray
    h_hat_sn: np.ndarray
    sigma_e_direct: np.ndarray
    sigma_e_sn: np.ndarray
    t_avail_s: float  # uplink time left after pilot overhead

    @property
    def gain_direct(self) -> np.ndarray:
        return np.abs(self.h_hat_direct) ** 2

    @property
    def gain_sn(self) -> np.ndarray:
        return np.abs(self.h_hat_sn) ** 2


def generate_topology(cfg: SimConfig, trial: int = 0) -> Topology:
    rng = substream(cfg.seed, "placement", trial)
    pts = rng.uniform(0.0, cfg.area_side_m, size=(int(cfg.n_sns) + 1, 2))
    return Topology(sn_positions=pts[1:], es_position=pts[0])


def path_loss_db(distance_m, cfg: SimConfig):
    c = cfg.pathloss_coeffs
    d = np.maximum(np.asarray(distance_m, dtype=float), D_MIN_M)
    return (c.intercept_db + c.slope_db_per_decade * np.log10(d)
            + c.freq_term_db_per_decade * math.log10(cfg.carrier_hz / 1e9))


def sample_channel(beta, rician_k: float, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw Rician gains with ``E|h|^2 = beta``; ``rician_k=inf`` gives pure LOS."""
    beta = np.asarray(beta, dtype=float)
    shape = beta.shape if size is None else size
    los_phase = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=shape))
    if math.isinf(rician_k):
        return np.sqrt(beta) * los_phase
    scatter = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    los_w = math.sqrt(rician_k / (rician_k + 1.0))
    nlos_w = math.sqrt(1.0 / (rician_k + 1.0))
    return np.sqrt(beta) * (los_w * los_phase + nlos_w * scatter)


def generate_channels(cfg: SimConfig, topology: Topology, trial: int = 0) -> ChannelSet:
    n = topology.n
    shadow_rng = substream(cfg.seed, "shadowing", trial)
    fade_rng = substream(cfg.seed, "fading", trial)

    sig = cfg.shadowing_sigma_db
    shadow_direct = sig * shadow_rng.standard_normal(n)
    # one shadowing draw per unordered SN pair keeps beta_sn reciprocal
    upper = sig * shadow_rng.standard_normal((n, n))
    shadow_sn = np.triu(upper, 1)
    shadow_sn = shadow_sn + shadow_sn.T

    beta_direct = db_to_lin(-(path_loss_db(topology.es_distances(), cfg) + shadow_direct))
    beta_sn = db_to_lin(-(path_loss_db(topology.sn_distances(), cfg) + shadow_sn))
    np.fill_diagonal(beta_sn, 0.0)

    k = cfg.rician_k
    h_direct = sample_channel(beta_direct, k, fade_rng)
    h_sn = sample_channel(beta_sn, k, fade_rng)
    return ChannelSet(h_direct=h_direct, h_sn_to_sn=h_sn, beta_direct=beta_direct,
                      beta_sn=beta_sn, realization_seed=int(cfg.seed))


def mmse_error_variance(beta, pilot_len, pilot_snr):
    beta = np.asarray(beta, dtype=float)
    return beta / (1.0 + pilot_len * np.asarray(pilot_snr, dtype=float) * beta)


def _lmmse(h: np.ndarray, beta: np.ndarray, lp_gp: np.ndarray, rng: np.random.Generator):
    """Linear MMSE estimate from ``lp_gp`` effective pilot observations.

    ``h_hat = c (h + n)`` with ``n ~ CN(0, 1/lp_gp)`` and ``c = x/(1+x)``,
    ``x = lp_gp*beta``; this makes ``h_hat`` orthogonal to ``h - h_hat``.
    """
    noise = (rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape)) / math.sqrt(2.0)
    with np.errstate(divide="ignore"):
        noise_std = np.where(lp_gp > 0, 1.0 / np.sqrt(np.where(lp_gp > 0, lp_gp, 1.0)), 0.0)
    x = lp_gp * beta
    shrink = x / (1.0 + x)
    return shrink * (h + noise_std * noise)


def perfect_csi(channels: ChannelSet, t_avail_s: float = math.inf) -> CsiModel:
    n = channels.n
    return CsiModel(mode="perfect", pilot_len=0, pilot_snr=np.full(n, math.inf),
                    h_hat_direct=channels.h_direct.copy(), h_hat_sn=channels.h_sn_to_sn.copy(),
                    sigma_e_direct=np.zeros(n), sigma_e_sn=np.zeros((n, n)),
                    t_avail_s=t_avail_s)


def estimate_channels(channels: ChannelSet, cfg: SimConfig, pilot_len: int,
                      pilot_snr=None, trial: int = 0) -> CsiModel:
    """Pilot-based MMSE estimates of every direct and SN-to-SN link.

    Raises :class:`PilotInfeasibleError` when ``N * L_p`` pilot symbols do
    not fit in the uplink slot ``cfg.t_eff_s``.
    """
    n = channels.n
    if pilot_len < 1:
        raise ValueError("imperfect CSI needs pilot_len >= 1")
    t_pilot = n * pilot_len * cfg.symbol_time_s
    if t_pilot >= cfg.t_eff_s:
        raise PilotInfeasibleError(
            f"{n} SNs x {pilot_len} pilots take {t_pilot:.3e} s >= slot {cfg.t_eff_s:.3e} s")
    gp = np.broadcast_to(np.asarray(cfg.pilot_snr if pilot_snr is None else pilot_snr,
                                    dtype=float), (n,)).copy()
    # same noise draws for every pilot length: L_p comparisons are paired
    rng = substream(cfg.seed, "estimation", trial)

    lp_gp_direct = pilot_len * gp
    h_hat_direct = _lmmse(channels.h_direct, channels.beta_direct, lp_gp_direct, rng)
    lp_gp_sn = np.repeat((pilot_len * gp)[:, None], n, axis=1)
    h_hat_sn = _lmmse(channels.h_sn_to_sn, channels.beta_sn, lp_gp_sn, rng)
    np.fill_diagonal(h_hat_sn, 0.0)

    sig_direct = mmse_error_variance(channels.beta_direct, pilot_len, gp)
    sig_sn = mmse_error_variance(channels.beta_sn, pilot_len, gp[:, None])
    np.fill_diagonal(sig_sn, 0.0)
    return CsiModel(mode="imperfect", pilot_len=int(pilot_len), pilot_snr=gp,
                    h_hat_direct=h_hat_direct, h_hat_sn=h_hat_sn,
                    sigma_e_direct=sig_direct, sigma_e_sn=sig_sn,
                    t_avail_s=cfg.t_eff_s - t_pilot)


def effective_snr_icsi(p, h_hat_sq, sigma_e, sigma0):
    p = np.asarray(p, dtype=float)
    return p * h_hat_sq / (p * sigma_e + sigma0)


def write_channel_csv(path: str | Path, channels: ChannelSet, csi: CsiModel | None = None) -> None:
    """One row per ordered link; the edge server is written as ``ES``."""
    n = channels.n
    sig_d = np.zeros(n) if csi is None else csi.sigma_e_direct
    sig_s = np.zeros((n, n)) if csi is None else csi.sigma_e_sn
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["src", "dst", "beta", "re_h", "im_h", "sigma_e"])
        for s in range(n):
            h = channels.h_direct[s]
            w.writerow([s, "ES", repr(float(channels.beta_direct[s])), repr(h.real),
                        repr(h.imag), repr(float(sig_d[s]))])
            for d in range(n):
                if d == s:
                    continue
                h = channels.h_sn_to_sn[s, d]
                w.writerow([s, d, repr(float(channels.beta_sn[s, d])), repr(h.real),
                            repr(h.imag), repr(float(sig_s[s, d]))])
