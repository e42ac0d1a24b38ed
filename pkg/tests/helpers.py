"""Small hand-built instances shared by several test modules."""

import math

import numpy as np

from relayfl.airtime import LinkGains
from relayfl.grouping import Grouping, LinkRates


def rates_from_matrix(rd, r_sn, gain_direct=None) -> LinkRates:
    rd = np.asarray(rd, dtype=float)
    r_sn = np.asarray(r_sn, dtype=float)
    g = rd.copy() if gain_direct is None else np.asarray(gain_direct, dtype=float)
    return LinkRates(rd=rd, r_sn=r_sn, gain_direct=g)


def gains_for_rates(rd, r_sn, p=1.0, sigma0=1.0) -> LinkGains:
    """Gains that give exactly the requested Shannon rates at power ``p``."""
    rd = np.asarray(rd, dtype=float)
    r_sn = np.asarray(r_sn, dtype=float)
    direct = (2.0 ** rd - 1.0) * sigma0 / p
    sn = (2.0 ** r_sn - 1.0) * sigma0 / p
    return LinkGains(direct=direct, sn=sn, sigma0=sigma0)


def grouping(one_hop=(), two_hop=None, relays=()) -> Grouping:
    return Grouping(frozenset(one_hop), dict(two_hop or {}), frozenset(relays), {},
                    threshold=math.nan)


def random_gains(n, rng, lo_db=-3.0, hi_db=25.0, sigma0=1.0) -> LinkGains:
    """Random SNRs (at unit power) in a dB range, symmetric-ish SN links."""
    direct = 10 ** (rng.uniform(lo_db, hi_db, n) / 10)
    sn = 10 ** (rng.uniform(lo_db, hi_db, (n, n)) / 10)
    np.fill_diagonal(sn, 0.0)
    return LinkGains(direct=direct * sigma0, sn=sn * sigma0, sigma0=sigma0)
