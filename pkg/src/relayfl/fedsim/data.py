"""Synthetic non-IID classification data: Gaussian class clusters split across SNs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..rng import substream


@dataclass(frozen=True)
class TaskSpec:
    n_classes: int = 10
    n_features: int = 32
    # std of the class means per feature; within-class noise has unit variance
    cluster_sep: float = 0.35
    test_size: int = 2000

    def __post_init__(self):
        if self.n_classes < 2 or self.n_features < 1:
            raise ConfigError("task needs >= 2 classes and >= 1 feature")
        if not self.cluster_sep > 0 or self.test_size < 1:
            raise ConfigError("cluster_sep and test_size must be positive")


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray  # (m, d)
    y: np.ndarray  # (m,) int labels

    def __len__(self) -> int:
        return len(self.y)

    def label_histogram(self, n_classes: int) -> np.ndarray:
        return np.bincount(self.y, minlength=n_classes)


@dataclass(frozen=True)
class FederatedData:
    clients: list[Dataset]
    test: Dataset
    n_classes: int

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(c) for c in self.clients], dtype=float)

    @property
    def n_features(self) -> int:
        return self.test.x.shape[1]

    def pooled(self, ids=None) -> Dataset:
        ids = range(len(self.clients)) if ids is None else ids
        parts = [self.clients[i] for i in ids]
        return Dataset(np.concatenate([p.x for p in parts]), np.concatenate([p.y for p in parts]))


def _draw(means: np.ndarray, labels: np.ndarray, rng: np.random.Generator) -> Dataset:
    x = means[labels] + rng.standard_normal((len(labels), means.shape[1]))
    return Dataset(x, labels.astype(np.int64))


def make_noniid_data(n_sns: int, task: TaskSpec, labels_per_sn: int,
                     size_range: tuple[int, int] = (200, 400), seed: int = 0) -> FederatedData:
    """Each SN sees exactly ``labels_per_sn`` classes, split as evenly as possible.

    Class means are shared by all SNs and the test set is class-balanced.
    """
    if not 1 <= labels_per_sn <= task.n_classes:
        raise ConfigError(f"labels_per_sn must be in [1, {task.n_classes}]")
    lo, hi = size_range
    if not 0 < lo <= hi:
        raise ConfigError(f"bad dataset size range {size_range}")
    rng = substream(seed, "fl_data")
    means = task.cluster_sep * rng.standard_normal((task.n_classes, task.n_features))
    clients = []
    for _ in range(int(n_sns)):
        classes = rng.choice(task.n_classes, size=labels_per_sn, replace=False)
        m = int(rng.integers(lo, hi + 1))
        if m < labels_per_sn:
            raise ConfigError("dataset size smaller than labels_per_sn")
        labels = classes[np.arange(m) % labels_per_sn]
        clients.append(_draw(means, rng.permutation(labels), rng))
    test_labels = np.arange(task.test_size) % task.n_classes
    test = _draw(means, test_labels, rng)
    return FederatedData(clients=clients, test=test, n_classes=task.n_classes)
