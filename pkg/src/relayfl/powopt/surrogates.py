"""Convex surrogates used by the successive approximation."""

from __future__ import annotations

import numpy as np

LN2 = np.log(2.0)


def omega_surrogate(omega, z, anchor_omega, anchor_z):
    """First-order lower bound of ``omega**2 / z`` around ``(anchor_omega, anchor_z)``.

    ``omega**2 / z`` is jointly convex for ``z > 0`` so its tangent plane
    under-estimates it everywhere and touches at the anchor.
    """
    anchor_z = np.asarray(anchor_z, dtype=float)
    if np.any(anchor_z <= 0):
        raise ValueError("anchor_z must be positive")
    ratio = np.asarray(anchor_omega, dtype=float) / anchor_z
    return 2.0 * ratio * np.asarray(omega, dtype=float) - ratio ** 2 * np.asarray(z, dtype=float)


def dol_rate(p, a, b):
    """Rate ``log2(1 + a p / (1 + b p))`` written as a difference of logs."""
    p = np.asarray(p, dtype=float)
    return np.log2(1.0 + (a + b) * p) - np.log2(1.0 + b * p)


def log_term_linearization(p, b, anchor_p):
    """Tangent of ``log2(1 + b p)`` at ``anchor_p`` (an upper bound, by concavity)."""
    p = np.asarray(p, dtype=float)
    anchor_p = np.asarray(anchor_p, dtype=float)
    return (np.log1p(b * anchor_p) + b / (1.0 + b * anchor_p) * (p - anchor_p)) / LN2


def icsi_rate_lower_bound(p, a, b, anchor_p):
    """Concave under-estimate of :func:`dol_rate`, exact at ``p = anchor_p``.

    With ``b = 0`` (no estimation error) this is exactly ``log2(1 + a p)``.
    """
    if np.any(np.asarray(a) <= 0) or np.any(np.asarray(b) < 0) or np.any(np.asarray(anchor_p) < 0):
        raise ValueError("need a > 0, b >= 0, anchor_p >= 0")
    p = np.asarray(p, dtype=float)
    return np.log2(1.0 + (a + b) * p) - log_term_linearization(p, b, anchor_p)
