"""Independent reference solutions used to check the optimisers.

None of these call into the SPCA code; they solve the perfect-CSI energy
problem through its optimality conditions instead.
"""

import math

import numpy as np
from scipy.optimize import brentq
from scipy.special import lambertw

from relayfl.airtime import LinkGains
from relayfl.grouping import Grouping
from relayfl.powopt import EeProblem


def _w_plus_one(x):
    """``1 + W0((x - 1)/e)`` for ``x >= 0``, series near the branch point."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < 1e-6
    y = np.sqrt(2 * x[small])
    out[small] = y - y * y / 3 + 11 * y ** 3 / 72
    out[~small] = 1 + np.real(lambertw((x[~small] - 1) / math.e))
    return out


def exact_pcsi_optimum(problem: EeProblem):
    """Global optimum of ``min sum s p / r(p)`` s.t. ``sum s / r(p) <= T'``.

    In rate variables the problem is separable and convex; stationarity of
    the Lagrangian gives ``r_i = (1 + W0((c_i lam - 1)/e)) / ln 2`` with one
    multiplier ``lam`` found by bisection on the deadline. Returns the
    normalised powers and the energy in joules.
    """
    if np.any(problem.b > 0):
        raise ValueError("oracle is for perfect CSI only")
    c = problem.a * problem.p_max
    s = problem.packets
    r_max = np.log2(1 + c)

    def r_of(lam):
        return np.clip(_w_plus_one(c * lam) / math.log(2), 1e-300, r_max)

    f = lambda ll: float(np.sum(s / r_of(math.exp(ll))) - problem.t_prime)  # noqa: E731
    ll = brentq(f, -200, 200, xtol=1e-14)
    r = r_of(math.exp(ll))
    p = np.expm1(r * math.log(2)) / c
    return p, problem.energy(p)


def single_link_optimum(a: float, packets: float, t_prime: float, p_max: float) -> float:
    """Deadline-active power of one link: ``(2^(s/T') - 1) / a`` (watts)."""
    return (2 ** (packets / t_prime) - 1) / a


LAYOUTS = {
    # name -> (one_hop, two_hop, relays)
    "one": ((0,), {}, ()),
    "two_direct": ((0, 1), {}, ()),
    "three_direct": ((0, 1, 2), {}, ()),
    "relay_pair": ((), {1: 0}, (0,)),
    "relay_pair_plus_one": ((2,), {1: 0}, (0,)),
}


def random_problem(rng, n_sns: int, layout=None, slack=(1.05, 4.0), snr_db=(-5.0, 45.0),
                   aggregate=True) -> EeProblem:
    """Random perfect-CSI instance feasible at P_max.

    Unit power, noise, bits and bandwidth; the deadline is the P_max airtime
    times a random slack factor.
    """
    direct = 10 ** (rng.uniform(*snr_db, n_sns) / 10)
    sn = 10 ** (rng.uniform(*snr_db, (n_sns, n_sns)) / 10)
    np.fill_diagonal(sn, 0.0)
    gains = LinkGains(direct=direct, sn=sn, sigma0=1.0)
    if layout is None:
        ids = rng.permutation(n_sns)
        n_relays = int(rng.integers(0, max(1, n_sns // 3) + 1))
        relays = ids[:n_relays]
        rest = ids[n_relays:]
        one_hop, two_hop = [], {}
        for n in rest:
            if n_relays and rng.random() < 0.5:
                two_hop[int(n)] = int(rng.choice(relays))
            else:
                one_hop.append(int(n))
        layout = (tuple(one_hop), two_hop, tuple(int(k) for k in relays))
    one_hop, two_hop, relays = layout
    g = Grouping(frozenset(one_hop), dict(two_hop), frozenset(relays), {})
    probe = EeProblem(g, gains, 1.0, 1.0, 1.0, 1.0, aggregate)
    t_pmax = probe.airtime_norm(np.ones(probe.n_tx))
    t_eff = t_pmax * rng.uniform(*slack)
    return EeProblem(g, gains, 1.0, t_eff, 1.0, 1.0, aggregate)
