"""Round loop for ideal, cooperative (relay-assisted) and single-hop FedAvg."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from ..errors import ConfigError
from ..rng import substream
from .aggregation import global_aggregate, relay_aggregate
from .data import FederatedData, TaskSpec, make_noniid_data
from .model import accuracy, local_train, loss, zero_model

SCHEMES = ("ideal", "cooperative", "one_hop")


@dataclass(frozen=True)
class FlConfig:
    rounds: int = 100
    local_epochs: int = 3
    lr: float = 0.01
    batch: int = 32
    scheme: str = "ideal"
    # ideal mode only: None means every SN participates in every round
    clients_per_round: int | None = None
    labels_per_sn: int = 2
    n_sns: int = 50
    dataset_size_range: tuple[int, int] = (200, 400)
    ridge: float = 1e-3
    task: TaskSpec = field(default_factory=TaskSpec)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dataset_size_range", tuple(self.dataset_size_range))
        if isinstance(self.task, Mapping):
            object.__setattr__(self, "task", TaskSpec(**self.task))
        if self.local_epochs < 1 or self.rounds < 1 or self.batch < 1:
            raise ConfigError("rounds, local_epochs and batch must be >= 1")
        if not self.lr > 0:
            raise ConfigError("lr must be > 0")
        if self.ridge < 0:
            raise ConfigError("ridge must be >= 0")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown FL scheme {self.scheme!r}; choose from {SCHEMES}")
        if self.clients_per_round is not None and not 1 <= self.clients_per_round <= self.n_sns:
            raise ConfigError("clients_per_round must be in [1, n_sns]")

    def replace(self, **changes) -> "FlConfig":
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data.update(changes)
        return FlConfig(**data)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "FlConfig":
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown FlConfig keys: {sorted(unknown)}")
        return cls(**dict(data))

    def make_data(self) -> FederatedData:
        return make_noniid_data(self.n_sns, self.task, self.labels_per_sn,
                                self.dataset_size_range, self.seed)


@dataclass(frozen=True)
class RoundPlan:
    """Who uploads in one round and over which route."""

    one_hop: tuple[int, ...] = ()
    two_hop: Mapping[int, int] = field(default_factory=dict)  # client -> relay
    relays: tuple[int, ...] = ()

    @classmethod
    def from_grouping(cls, grouping) -> "RoundPlan":
        return cls(one_hop=tuple(sorted(grouping.one_hop)),
                   two_hop=dict(sorted(grouping.two_hop.items())),
                   relays=tuple(sorted(grouping.relays)))

    @classmethod
    def everyone(cls, n: int) -> "RoundPlan":
        return cls(one_hop=tuple(range(n)))

    @property
    def participants(self) -> tuple[int, ...]:
        return tuple(sorted({*self.one_hop, *self.two_hop, *self.relays}))

    @property
    def n_participants(self) -> int:
        return len(self.participants)


@dataclass
class FlRunHistory:
    scheme: str
    loss: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)
    participants: list[int] = field(default_factory=list)
    final_model: np.ndarray | None = None

    def append(self, loss_value: float, acc: float, n: int) -> None:
        self.loss.append(float(loss_value))
        self.accuracy.append(float(acc))
        self.participants.append(int(n))

    def rows(self) -> list[dict]:
        return [{"round": i, "scheme": self.scheme, "loss": l, "accuracy": a, "participants": n}
                for i, (l, a, n) in enumerate(zip(self.loss, self.accuracy, self.participants))]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["round", "scheme", "loss", "accuracy",
                                               "participants"])
            w.writeheader()
            w.writerows(self.rows())


def _ideal_plan(cfg: FlConfig, n: int, rnd: int) -> RoundPlan:
    if cfg.clients_per_round is None:
        return RoundPlan.everyone(n)
    rng = substream(cfg.seed, "fl_sample", rnd)
    return RoundPlan(one_hop=tuple(sorted(rng.choice(n, cfg.clients_per_round, replace=False))))


def _round(w: np.ndarray, plan: RoundPlan, data: FederatedData, cfg: FlConfig,
           rnd: int) -> np.ndarray:
    if plan.n_participants == 0:
        return w
    sizes = data.sizes
    k = data.n_classes

    def train(sn: int) -> np.ndarray:
        # keyed by (round, SN) so results do not depend on visiting order
        rng = substream(cfg.seed, "fl_train", rnd, sn)
        return local_train(w, data.clients[sn], cfg.local_epochs, cfg.lr, cfg.batch, rng, k,
                           cfg.ridge)

    clients_of: dict[int, list[int]] = {r: [] for r in plan.relays}
    for c, r in plan.two_hop.items():
        if r not in clients_of:
            raise ValueError(f"SN {c} is routed through {r}, which is not a relay")
        clients_of[r].append(c)
    direct = [train(n) for n in plan.one_hop]
    relay_models, relay_sizes = [], []
    for r in plan.relays:
        members = sorted(clients_of[r])
        relay_models.append(relay_aggregate([train(c) for c in members],
                                             [sizes[c] for c in members], train(r), sizes[r]))
        relay_sizes.append(sizes[r] + sum(sizes[c] for c in members))
    return global_aggregate(direct, [sizes[n] for n in plan.one_hop], relay_models, relay_sizes)


def run_fl(cfg: FlConfig, plans: Sequence[RoundPlan] | None = None,
           data: FederatedData | None = None) -> FlRunHistory:
    """Run ``cfg.rounds`` rounds and record global loss, test accuracy and participation.

    Ideal mode ignores ``plans``; the other schemes need one plan per round.
    The recorded loss is the size-weighted global objective over all SNs.
    """
    data = cfg.make_data() if data is None else data
    n = len(data.clients)
    if cfg.scheme != "ideal":
        if plans is None or len(plans) < cfg.rounds:
            raise ConfigError(f"scheme {cfg.scheme!r} needs {cfg.rounds} round plans")
    pooled = data.pooled()
    w = zero_model(data.n_features, data.n_classes)
    hist = FlRunHistory(scheme=cfg.scheme)
    for rnd in range(cfg.rounds):
        plan = _ideal_plan(cfg, n, rnd) if cfg.scheme == "ideal" else plans[rnd]
        w = _round(w, plan, data, cfg, rnd)
        hist.append(loss(w, pooled, data.n_classes, cfg.ridge),
                    accuracy(w, data.test, data.n_classes), plan.n_participants)
    hist.final_model = w
    return hist


def nmse(reference: Sequence[float], candidate: Sequence[float]) -> float:
    """``sum (cand - ref)^2 / sum ref^2``."""
    y = np.asarray(reference, dtype=float)
    yh = np.asarray(candidate, dtype=float)
    if y.shape != yh.shape:
        raise ValueError(f"series lengths differ: {y.shape} vs {yh.shape}")
    den = float(np.sum(y * y))
    if den == 0.0:
        raise ValueError("reference series is all zero")
    return float(np.sum((yh - y) ** 2) / den)
