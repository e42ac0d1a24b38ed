"""Dataset-size weighted model averaging at relays and at the edge server."""

from __future__ import annotations

from typing import Sequence

import numpy as np


def _stack(models: Sequence[np.ndarray]) -> np.ndarray:
    arrs = [np.asarray(m, dtype=float).ravel() for m in models]
    if len({a.size for a in arrs}) > 1:
        raise ValueError(f"model dimensions differ: {sorted({a.size for a in arrs})}")
    return np.stack(arrs)


def weighted_average(models: Sequence[np.ndarray], sizes: Sequence[float]) -> np.ndarray:
    if len(models) == 0:
        raise ValueError("nothing to average")
    if len(models) != len(sizes):
        raise ValueError("one size per model is required")
    w = np.asarray(sizes, dtype=float)
    if np.any(w <= 0):
        raise ValueError("dataset sizes must be positive")
    m = _stack(models)
    return (w / w.sum()) @ m


def relay_aggregate(models: Sequence[np.ndarray], sizes: Sequence[float],
                    relay_model: np.ndarray, relay_size: float) -> np.ndarray:
    """Partial aggregate of a relay's clients and its own model.

    The result carries the effective dataset size ``sum(sizes) + relay_size``.
    """
    if not relay_size > 0:
        raise ValueError("relay dataset size must be positive")
    return weighted_average([*models, relay_model], [*sizes, relay_size])


def global_aggregate(one_hop_models: Sequence[np.ndarray], one_hop_sizes: Sequence[float],
                     relay_models: Sequence[np.ndarray] = (),
                     relay_sizes: Sequence[float] = ()) -> np.ndarray:
    """Edge-server average over direct uploads and relay aggregates.

    Relay aggregates must be weighted by their effective sizes; then the
    result equals flat FedAvg over every contributing SN.
    """
    if len(relay_models) != len(relay_sizes):
        raise ValueError("one effective size per relay model is required")
    return weighted_average([*one_hop_models, *relay_models], [*one_hop_sizes, *relay_sizes])
