"""FedAvg optimality-gap bounds (single-hop and relay-assisted) and their inputs.

The relay bound is the single-hop expression with the variance and
heterogeneity terms replaced by their relay-weighted counterparts and the
participant count set to everyone reached through relays.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .data import Dataset, FederatedData
from .model import gradient, loss, per_sample_gradients, zero_model


@dataclass(frozen=True)
class BoundParams:
    mu: float
    L: float
    G: float
    # variance term as it enters the bound, e.g. sum_n p_n^2 delta_n^2
    delta: float
    gamma: float
    e: int
    U: int
    w0_gap: float
    n_participants: int

    def __post_init__(self):
        if not (self.mu > 0 and self.L >= self.mu):
            raise ValueError(f"need L >= mu > 0, got mu={self.mu}, L={self.L}")
        for name in ("G", "delta", "gamma", "w0_gap"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.e < 1 or self.U < 1 or self.n_participants < 1:
            raise ValueError("e, U and n_participants must be >= 1")

    @property
    def kappa(self) -> float:
        return self.L / self.mu

    @property
    def nu(self) -> float:
        return max(8.0 * self.kappa, float(self.e))

    def replace(self, **changes) -> "BoundParams":
        return replace(self, **changes)


def _bound(p: BoundParams, delta: float, gamma: float, n: int) -> float:
    b = delta + 6.0 * p.L * gamma + 8.0 * (p.e - 1) ** 2 * p.G ** 2
    c = 4.0 / n * p.e ** 2 * p.G ** 2
    inner = 2.0 * (b + c) / p.mu + p.mu * p.nu / 2.0 * p.w0_gap
    return p.kappa / (p.nu + p.U - 1) * inner


def bound_singlehop(params: BoundParams) -> float:
    return _bound(params, params.delta, params.gamma, params.n_participants)


def bound_relay(params: BoundParams, delta_eff: float, gamma_eff: float,
                n_participants: int | None = None) -> float:
    """Single-hop bound with ``delta_eff``/``gamma_eff`` and the enlarged participant count."""
    n = params.n_participants if n_participants is None else int(n_participants)
    if delta_eff < 0 or gamma_eff < 0 or n < 1:
        raise ValueError("delta_eff, gamma_eff must be >= 0 and n_participants >= 1")
    return _bound(params, delta_eff, gamma_eff, n)


def singlehop_variance_term(sizes: Sequence[float], variances: Sequence[float]) -> float:
    """``sum_n p_n^2 delta_n^2`` with ``p_n`` proportional to dataset size."""
    s = np.asarray(sizes, dtype=float)
    p = s / s.sum()
    return float(np.sum(p * p * np.asarray(variances, dtype=float)))


def _uploader_mean(one_hop_sizes, one_hop_vals, relay_sizes, relay_vals) -> float:
    s = np.concatenate([np.asarray(one_hop_sizes, float), np.asarray(relay_sizes, float)])
    v = np.concatenate([np.asarray(one_hop_vals, float), np.asarray(relay_vals, float)])
    if s.size == 0 or s.size != v.size:
        raise ValueError("need one value per uploader and at least one uploader")
    return float(s @ v / s.sum())


def effective_variance(one_hop_sizes: Sequence[float], one_hop_var: Sequence[float],
                       relay_sizes: Sequence[float], relay_var: Sequence[float]) -> float:
    """Size-weighted mean of per-uploader variances; relays weigh by effective size."""
    return _uploader_mean(one_hop_sizes, one_hop_var, relay_sizes, relay_var)


def effective_heterogeneity(f_star: float, one_hop_sizes: Sequence[float],
                            one_hop_fstar: Sequence[float], relay_sizes: Sequence[float],
                            relay_fstar: Sequence[float]) -> float:
    """``F* - weighted mean of uploader optima``, relays weighted by effective size."""
    return f_star - _uploader_mean(one_hop_sizes, one_hop_fstar, relay_sizes, relay_fstar)


# -- empirical estimates on the synthetic task ------------------------------


def fit_optimum(data: Dataset, n_classes: int, ridge: float,
                w0: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """Minimiser and minimum of the ridge-regularised logistic loss (L-BFGS)."""
    d = data.x.shape[1]
    x0 = zero_model(d, n_classes) if w0 is None else w0
    res = minimize(lambda w: (loss(w, data, n_classes, ridge), gradient(w, data, n_classes, ridge)),
                   x0, jac=True, method="L-BFGS-B", options={"maxiter": 2000, "gtol": 1e-10})
    return res.x, float(res.fun)


@dataclass(frozen=True)
class HeterogeneityEstimate:
    f_star: float
    client_fstar: np.ndarray
    gamma: float
    w_star: np.ndarray


def estimate_heterogeneity(data: FederatedData, ridge: float,
                           ids: Sequence[int] | None = None) -> HeterogeneityEstimate:
    """``Gamma = F* - sum p_n F_n*`` over the SNs in ``ids`` (default all)."""
    ids = list(range(len(data.clients))) if ids is None else list(ids)
    w_star, f_star = fit_optimum(data.pooled(ids), data.n_classes, ridge)
    fn = np.array([fit_optimum(data.clients[i], data.n_classes, ridge)[1] for i in ids])
    sizes = data.sizes[ids]
    gamma = f_star - float(sizes @ fn / sizes.sum())
    return HeterogeneityEstimate(f_star=f_star, client_fstar=fn, gamma=gamma, w_star=w_star)


def gradient_variance(w: np.ndarray, data: Dataset, n_classes: int, ridge: float) -> float:
    """``E||grad f(w; xi) - grad F(w)||^2`` for a uniformly drawn sample."""
    g = per_sample_gradients(w, data, n_classes, ridge)
    return float(np.mean(np.sum((g - g.mean(axis=0)) ** 2, axis=1)))


def smoothness_constant(data: FederatedData, ridge: float) -> float:
    """Softmax cross-entropy Hessian is bounded by ``0.5 * ||x~||^2`` per sample."""
    xs = [c.x for c in data.clients]
    r2 = max(float(np.max(np.sum(x * x, axis=1))) for x in xs) + 1.0  # bias feature
    return 0.5 * r2 + ridge


def estimate_bound_params(data: FederatedData, ridge: float, e: int, U: int,
                          het: HeterogeneityEstimate | None = None) -> BoundParams:
    """Instantiate the bound for single-hop FedAvg over all SNs of ``data``.

    ``mu`` is the ridge, ``L`` the Hessian bound above, ``G`` the largest
    root-mean-square stochastic gradient at the zero start or the optimum,
    and per-SN variances are evaluated at the global optimum.
    """
    if not ridge > 0:
        raise ValueError("strong convexity needs a positive ridge")
    het = estimate_heterogeneity(data, ridge) if het is None else het
    k = data.n_classes
    w0 = zero_model(data.n_features, k)
    g2 = 0.0
    for c in data.clients:
        for w in (w0, het.w_star):
            g = per_sample_gradients(w, c, k, ridge)
            g2 = max(g2, float(np.mean(np.sum(g * g, axis=1))))
    var = [gradient_variance(het.w_star, c, k, ridge) for c in data.clients]
    return BoundParams(mu=ridge, L=smoothness_constant(data, ridge), G=float(np.sqrt(g2)),
                       delta=singlehop_variance_term(data.sizes, var), gamma=max(het.gamma, 0.0),
                       e=int(e), U=int(U), w0_gap=float(het.w_star @ het.w_star),
                       n_participants=len(data.clients))
