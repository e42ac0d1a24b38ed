"""Monte-Carlo experiment runner producing long-format result tables."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np

from ..airtime import LinkGains, comp_energy, make_profiles, optimal_frequency
from ..channel import SimConfig, generate_channels, generate_topology
from ..errors import ConfigError, DeadlineInfeasibleError, PilotInfeasibleError
from ..fedsim import FlConfig, RoundPlan, model_dim, nmse, run_fl
from ..grouping import LinkRates, all_one_hop, prune_to_deadline, ternary_search_threshold
from ..rng import substream
from .schemes import SCHEMES, PhyTrial, evaluate_icsi, evaluate_scheme

KINDS = ("outage_vs_pmax", "participation_cdf", "energy_cdf", "energy_vs_latency",
         "energy_vs_n", "comp_vs_comm", "icsi_cdf", "fl_convergence")

CSV_HEADER = ("experiment", "scheme", "sweep_value", "trial", "metric", "value")

ENERGY_SCHEMES = ("proposed", "two_hop_wo_pa", "only_1hop", "one_hop_pmax")

# kind -> (sweep parameter, default sweep, default schemes, metrics, SimConfig overrides)
_DEFAULTS: dict[str, tuple[str, tuple, tuple, tuple, dict]] = {
    "outage_vs_pmax": ("p_max_dbm", (10.0, 14.0, 18.0, 22.0, 26.0, 30.0),
                       ("proposed", "fixed_th", "only_2hop_fixed_th", "only_1hop", "random_relay",
                        "one_hop_pmax"),
                       ("outage", "participants", "t_ul_pmax_s"),
                       {"n_sns": 100, "packet_bits": 1e3}),
    "participation_cdf": ("p_max_dbm", (9.0, 12.0, 15.0, 18.0, 21.0), ("proposed",),
                          ("participants",), {"n_sns": 100, "packet_bits": 1e3}),
    "energy_cdf": ("p_max_dbm", (23.0,), ENERGY_SCHEMES,
                   ("e_tx_J", "participants", "solver_failure"), {}),
    "energy_vs_latency": ("t_eff_ms", (2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0), ENERGY_SCHEMES,
                          ("e_tx_J", "participants", "solver_failure"), {}),
    "energy_vs_n": ("n_sns", (10.0, 25.0, 50.0, 100.0, 200.0), ENERGY_SCHEMES,
                    ("e_tx_J", "participants", "solver_failure"), {}),
    "comp_vs_comm": ("packet_bits", (1e4, 1e5, 1e6), ("proposed", "only_1hop"),
                     ("e_tx_J", "e_comp_avg_J", "participants", "solver_failure"), {}),
    "icsi_cdf": ("pilot_len", (0.0, 1.0, 5.0, 10.0, 20.0), ("proposed",),
                 ("e_tx_J", "participants", "solver_failure"), {}),
    "fl_convergence": ("p_max_dbm", (12.0,), ("proposed", "only_1hop"),
                       ("nmse_loss", "nmse_accuracy", "mean_participants", "final_loss",
                        "final_accuracy"), {}),
}

# Benchmarks run on the calibrated path-loss profile unless overridden.
DEFAULT_PROFILE = "calibrated"


def metrics_for(kind: str) -> tuple[str, ...]:
    return _DEFAULTS[kind][3]


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    sweep: tuple[float, ...] = ()
    trials: int = 100
    schemes: tuple[str, ...] = ()
    output_path: str | None = None
    # SimConfig field overrides applied on top of the caller's config
    overrides: Mapping[str, Any] = field(default_factory=dict)
    # fraction of (trial, scheme, sweep) cells allowed to fail in the solver
    failure_budget: float = 0.01
    fl: FlConfig | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; choose from {KINDS}")
        param, sweep, schemes, _, overrides = _DEFAULTS[self.kind]
        object.__setattr__(self, "sweep", tuple(float(v) for v in (self.sweep or sweep)))
        object.__setattr__(self, "schemes", tuple(self.schemes or schemes))
        merged = {"pathloss_coeffs": DEFAULT_PROFILE, **overrides, **dict(self.overrides)}
        object.__setattr__(self, "overrides", merged)
        if isinstance(self.fl, Mapping):
            object.__setattr__(self, "fl", FlConfig.from_dict(self.fl))
        if int(self.trials) != self.trials or self.trials < 1:
            raise ConfigError("trials must be an integer >= 1")
        for s in self.schemes:
            if s not in SCHEMES:
                raise ConfigError(f"unknown scheme {s!r}; choose from {SCHEMES}")
        if not self.sweep:
            raise ConfigError("sweep must not be empty")
        if not 0 <= self.failure_budget <= 1:
            raise ConfigError("failure_budget must be in [0, 1]")

    @property
    def sweep_param(self) -> str:
        return _DEFAULTS[self.kind][0]

    @property
    def metrics(self) -> tuple[str, ...]:
        return metrics_for(self.kind)

    def point_config(self, cfg: SimConfig, value: float) -> SimConfig:
        """``cfg`` with the overrides and one sweep value applied (validated)."""
        changes = dict(self.overrides)
        param = self.sweep_param
        if param == "t_eff_ms":
            changes["t_eff_s"] = value * 1e-3
        elif param == "n_sns":
            if value != int(value):
                raise ConfigError("n_sns sweep values must be integers")
            changes["n_sns"] = int(value)
        elif param != "pilot_len":
            changes[param] = value
        return cfg.replace(**changes)

    def expected_rows(self) -> int:
        return self.trials * len(self.schemes) * len(self.sweep) * len(self.metrics)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["overrides"] = {k: (asdict(v) if hasattr(v, "__dataclass_fields__") else v)
                          for k, v in self.overrides.items()}
        if self.fl is not None:
            d["fl"] = asdict(self.fl)
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentSpec":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown ExperimentSpec keys: {sorted(unknown)}")
        d = dict(data)
        for key in ("sweep", "schemes"):
            if key in d:
                d[key] = tuple(d[key])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class Row:
    experiment: str
    scheme: str
    sweep_value: float
    trial: int
    metric: str
    value: float


class ResultTable:
    """Append-only long-format table ``experiment,scheme,sweep_value,trial,metric,value``."""

    def __init__(self, rows: Iterable[Row] = ()):
        self._rows: list[Row] = list(rows)

    def __len__(self) -> int:
        return len(self._rows)

    def __iter__(self):
        return iter(self._rows)

    @property
    def rows(self) -> tuple[Row, ...]:
        return tuple(self._rows)

    def append(self, row: Row) -> None:
        self._rows.append(row)

    def extend(self, rows: Iterable[Row]) -> None:
        self._rows.extend(rows)

    def values(self, metric: str, scheme: str | None = None,
               sweep_value: float | None = None) -> np.ndarray:
        return np.array([r.value for r in self._rows if r.metric == metric
                         and (scheme is None or r.scheme == scheme)
                         and (sweep_value is None or r.sweep_value == sweep_value)], dtype=float)

    def by_trial(self, metric: str, scheme: str, sweep_value: float) -> dict[int, float]:
        return {r.trial: r.value for r in self._rows if r.metric == metric
                and r.scheme == scheme and r.sweep_value == sweep_value}

    def schemes(self) -> list[str]:
        return list(dict.fromkeys(r.scheme for r in self._rows))

    def sweep_values(self) -> list[float]:
        return sorted({r.sweep_value for r in self._rows})

    def experiments(self) -> list[str]:
        return list(dict.fromkeys(r.experiment for r in self._rows))

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in self._rows:
                w.writerow([r.experiment, r.scheme, repr(float(r.sweep_value)), r.trial, r.metric,
                            repr(float(r.value))])

    @classmethod
    def from_csv(cls, path: str | Path) -> "ResultTable":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader, ()))
            if header != CSV_HEADER:
                raise ConfigError(f"{path}: unexpected header {header}")
            return cls(Row(e, s, float(v), int(t), m, float(x)) for e, s, v, t, m, x in reader)


# -- per-trial work ---------------------------------------------------------


def _cells(kind: str, scheme: str, value: float, trial: int, metrics: dict) -> list[Row]:
    return [Row(kind, scheme, value, trial, m, float(metrics[m])) for m in metrics_for(kind)]


def _energy_metrics(out) -> dict:
    return {"e_tx_J": out.e_tx_j, "participants": out.grouping.n_participants,
            "solver_failure": float(out.solver_failure)}


def _comp_energy_avg(cfg: SimConfig, trial: int, participants, t_ul: float,
                     local_iters: int) -> float:
    profiles = make_profiles(cfg, local_iters, substream(cfg.seed, "compute", trial))
    ids = sorted(participants)
    if not ids:
        return 0.0
    total = 0.0
    for n in ids:
        f = optimal_frequency(profiles[n], cfg.t_th_s, t_ul, cfg.f_max_hz)
        total += comp_energy(replace(profiles[n], cpu_freq=f))
    return total / len(ids)


def fl_round_plans(cfg: SimConfig, rounds: int, scheme: str) -> list[RoundPlan]:
    """Per-round participants on a fixed layout with fresh fading each round."""
    topo = generate_topology(cfg, 0)
    plans = []
    for rnd in range(rounds):
        ch = generate_channels(cfg, topo, rnd)
        gains = LinkGains.from_channels(ch, cfg.sigma0_w)
        rates = LinkRates.from_gains(gains, cfg.p_max_w)
        g0 = ternary_search_threshold(rates).grouping if scheme == "proposed" else all_one_hop(rates)
        g = prune_to_deadline(g0, cfg.t_eff_s, cfg.packet_bits, cfg.bandwidth_hz, rates)
        plans.append(RoundPlan.from_grouping(g))
    return plans


_FL_MODE = {"proposed": "cooperative", "only_1hop": "one_hop"}


def _fl_trial(spec: ExperimentSpec, cfg: SimConfig, value: float, trial: int) -> list[Row]:
    seed = cfg.seed * 1_000_003 + trial
    fl = (spec.fl or FlConfig()).replace(seed=seed, n_sns=cfg.n_sns)
    data = fl.make_data()
    # the uploaded packet is the model itself (64-bit weights)
    bits = model_dim(fl.task.n_features, fl.task.n_classes) * 64
    phy_cfg = cfg.replace(seed=seed, packet_bits=float(bits))
    ideal = run_fl(fl.replace(scheme="ideal"), data=data)
    rows = []
    for scheme in spec.schemes:
        if scheme not in _FL_MODE:
            raise ConfigError(f"fl_convergence supports schemes {sorted(_FL_MODE)}")
        plans = fl_round_plans(phy_cfg, fl.rounds, scheme)
        hist = run_fl(fl.replace(scheme=_FL_MODE[scheme]), plans, data)
        rows += _cells(spec.kind, scheme, value, trial, {
            "nmse_loss": nmse(ideal.loss, hist.loss),
            "nmse_accuracy": nmse(ideal.accuracy, hist.accuracy),
            "mean_participants": float(np.mean(hist.participants)),
            "final_loss": hist.loss[-1], "final_accuracy": hist.accuracy[-1]})
    return rows


def run_trial(spec: ExperimentSpec, cfg: SimConfig, value: float, trial: int) -> list[Row]:
    """All schemes of one (sweep value, trial) cell on one channel realisation."""
    kind = spec.kind
    if kind == "fl_convergence":
        return _fl_trial(spec, cfg, value, trial)
    phy = PhyTrial.draw(cfg, trial)
    rows: list[Row] = []
    if kind == "icsi_cdf":
        for scheme in spec.schemes:
            rows += _cells(kind, scheme, value, trial, _energy_metrics(evaluate_icsi(phy, int(value))))
        return rows
    energy = kind not in ("outage_vs_pmax", "participation_cdf")
    for scheme in spec.schemes:
        out = evaluate_scheme(scheme, phy, energy=energy)
        if kind == "outage_vs_pmax":
            m = {"outage": float(out.outage), "participants": out.grouping.n_participants,
                 "t_ul_pmax_s": out.t_ul_pmax_s}
        elif kind == "participation_cdf":
            m = {"participants": out.grouping.n_participants}
        else:
            m = _energy_metrics(out)
            if kind == "comp_vs_comm":
                try:
                    t_ul = 0.0 if math.isnan(out.t_ul_s) else out.t_ul_s
                    m["e_comp_avg_J"] = _comp_energy_avg(cfg, trial, out.grouping.participants,
                                                         t_ul, (spec.fl or FlConfig()).local_epochs)
                except DeadlineInfeasibleError:
                    m["e_comp_avg_J"] = math.nan
                    m["solver_failure"] = 1.0
        rows += _cells(kind, scheme, value, trial, m)
    return rows


def _work(args) -> list[Row]:
    spec, cfg, value, trial = args
    return run_trial(spec, cfg, value, trial)


def _check_pilots(spec: ExperimentSpec, cfg: SimConfig) -> None:
    if spec.kind != "icsi_cdf":
        return
    for v in spec.sweep:
        if v != int(v) or v < 0:
            raise ConfigError("pilot lengths must be integers >= 0")
        pc = spec.point_config(cfg, v)
        if pc.n_sns * v / pc.bandwidth_hz >= pc.t_eff_s:
            raise PilotInfeasibleError(f"{pc.n_sns} SNs x {int(v)} pilots exceed the "
                                       f"{pc.t_eff_s} s uplink slot")


def run_experiment(spec: ExperimentSpec, cfg: SimConfig | None = None,
                   threads: int = 1) -> ResultTable:
    """Run every (sweep value, trial) cell and return rows in a fixed order.

    Cells are independent and may run in ``threads`` worker processes; the
    rows are sorted afterwards, so the table does not depend on scheduling.
    """
    cfg = SimConfig() if cfg is None else cfg
    points = [(v, spec.point_config(cfg, v)) for v in spec.sweep]
    _check_pilots(spec, cfg)
    jobs = [(spec, pc, v, t) for v, pc in points for t in range(spec.trials)]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            chunks = list(pool.map(_work, jobs, chunksize=max(1, len(jobs) // (8 * threads))))
    else:
        chunks = [_work(j) for j in jobs]
    rows = [r for chunk in chunks for r in chunk]
    s_idx = {s: i for i, s in enumerate(spec.schemes)}
    v_idx = {v: i for i, v in enumerate(spec.sweep)}
    m_idx = {m: i for i, m in enumerate(spec.metrics)}
    rows.sort(key=lambda r: (v_idx[r.sweep_value], r.trial, s_idx[r.scheme], m_idx[r.metric]))
    table = ResultTable(rows)
    if len(table) != spec.expected_rows():
        raise RuntimeError(f"{spec.kind}: produced {len(table)} rows, expected "
                           f"{spec.expected_rows()}")
    if spec.output_path:
        table.to_csv(spec.output_path)
    return table


def failure_rate(table: ResultTable) -> float:
    """Share of (trial, scheme, sweep) cells whose solver failed."""
    f = table.values("solver_failure")
    return float(f.mean()) if f.size else 0.0


def load_config_bundle(path: str | Path) -> dict:
    """Split a JSON config into ``sim``/``fl``/``experiment`` parts.

    A flat document is read as a bare SimConfig.
    """
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    if not {"sim", "fl", "experiment"} & set(data):
        return {"sim": data, "fl": {}, "experiment": {}}
    extra = set(data) - {"sim", "fl", "experiment"}
    if extra:
        raise ConfigError(f"unknown config sections: {sorted(extra)}")
    return {"sim": data.get("sim", {}), "fl": data.get("fl", {}),
            "experiment": data.get("experiment", {})}
