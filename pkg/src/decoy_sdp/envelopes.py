"""Cauchy-Schwarz envelopes relating expectation values of nearby states.

For 0 <= H <= I and states with fidelity at least z,

    G_minus(Tr[rho H], z) <= Tr[sigma H] <= G_plus(Tr[rho H], z).

The ``*_c`` variants take the infidelity c = 1 - z instead.  Infidelities
near 1e-19 are common (Poisson tails) and would be lost in 1 - c, while the
envelope width scales like sqrt(c).
"""

from __future__ import annotations

import math


def _clip(x: float) -> float:
    return min(1.0, max(0.0, float(x)))


def _g(y: float, c: float, sign: float) -> float:
    z = 1.0 - c
    return y + c * (1.0 - 2.0 * y) + sign * 2.0 * math.sqrt(max(0.0, z * c * y * (1.0 - y)))


def g_minus_c(y: float, c: float) -> float:
    y, c = _clip(y), _clip(c)
    if y > c:
        return _clip(_g(y, c, -1.0))
    return 0.0


def g_plus_c(y: float, c: float) -> float:
    y, c = _clip(y), _clip(c)
    if y + c < 1.0:
        return _clip(_g(y, c, +1.0))
    return 1.0


def g_minus(y: float, z: float) -> float:
    return g_minus_c(y, 1.0 - _clip(z))


def g_plus(y: float, z: float) -> float:
    return g_plus_c(y, 1.0 - _clip(z))


def bures_distance(fidelity: float) -> float:
    return math.sqrt(max(0.0, 2.0 * (1.0 - math.sqrt(_clip(fidelity)))))
