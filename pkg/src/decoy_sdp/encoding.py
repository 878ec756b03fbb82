"""Ideal BB84 encoders from one optical mode into two.

Two-mode vectors live on {|k, l> : k + l <= M}, ordered by total photon
number n = k + l and then by the first-mode count k, so index
n (n + 1) / 2 + k.  Number sectors are therefore contiguous.
"""

from __future__ import annotations

from functools import lru_cache
from math import comb, factorial, sqrt

import numpy as np

BASES = ("Z", "X")


def two_mode_dim(cutoff: int) -> int:
    return (cutoff + 1) * (cutoff + 2) // 2


def two_mode_index(k: int, l: int) -> int:
    n = k + l
    return n * (n + 1) // 2 + k


@lru_cache(maxsize=None)
def total_photons(cutoff: int) -> np.ndarray:
    """Total photon number of every two-mode basis state."""
    out = np.concatenate([np.full(n + 1, n) for n in range(cutoff + 1)])
    out.flags.writeable = False
    return out


@lru_cache(maxsize=None)
def mode_counts(cutoff: int) -> tuple[np.ndarray, np.ndarray]:
    """(first-mode, second-mode) photon counts of every basis state."""
    k = np.concatenate([np.arange(n + 1) for n in range(cutoff + 1)])
    l = total_photons(cutoff) - k
    k.flags.writeable = False
    return k, l


@lru_cache(maxsize=None)
def swap_permutation(cutoff: int) -> np.ndarray:
    """Index map of the mode swap |k, l> -> |l, k>."""
    k, l = mode_counts(cutoff)
    out = (k + l) * (k + l + 1) // 2 + l
    out.flags.writeable = False
    return out


@lru_cache(maxsize=None)
def _encoder(bit: int, basis: str, cutoff: int) -> np.ndarray:
    dim = two_mode_dim(cutoff)
    V = np.zeros((dim, cutoff + 1))
    for n in range(cutoff + 1):
        if basis == "Z":
            V[two_mode_index(n, 0) if bit == 0 else two_mode_index(0, n), n] = 1.0
        else:
            for k in range(n + 1):
                sign = (-1) ** k if bit == 1 else 1
                V[two_mode_index(k, n - k), n] = sign * sqrt(comb(n, k) / 2.0**n)
    V.flags.writeable = False
    return V


class IdealBB84Encoding:
    """Isometries V_{b_alpha}; subclass and override ``operator`` for non-ideal encoders."""

    def operator(self, bit: int, basis: str, cutoff: int) -> np.ndarray:
        if bit not in (0, 1) or basis not in BASES:
            raise ValueError(f"invalid encoding ({bit}, {basis})")
        return _encoder(bit, basis, cutoff)


IDEAL = IdealBB84Encoding()


def encoder(bit: int, basis: str, cutoff: int) -> np.ndarray:
    """(D, M+1) matrix of the ideal isometry V_{bit_basis}."""
    return IDEAL.operator(bit, basis, cutoff)


def encode(vec: np.ndarray, bit: int, basis: str) -> np.ndarray:
    vec = np.asarray(vec)
    return encoder(bit, basis, vec.shape[0] - 1) @ vec


def encoded_mixture(block: np.ndarray, bit: int, basis: str) -> np.ndarray:
    V = encoder(bit, basis, block.shape[0] - 1)
    return V @ block @ V.T


def virtual_unnormalized(eigvec: np.ndarray, delta: int) -> np.ndarray:
    """(V_{0_Z} + (-1)^delta V_{1_Z}) |eigvec> / 2; its squared norm is the virtual probability."""
    cutoff = eigvec.shape[0] - 1
    sign = -1.0 if delta else 1.0
    return 0.5 * (encoder(0, "Z", cutoff) + sign * encoder(1, "Z", cutoff)) @ eigvec


@lru_cache(maxsize=None)
def beamsplitter(cutoff: int) -> np.ndarray:
    """Unitary W with W |k, l> = (c^dag)^k (d^dag)^l / sqrt(k! l!) |vac>.

    c = (a + b)/sqrt2 and d = (b - a)/sqrt2, so W V_{b_Z} = V_{b_X}.  Bob's
    X-basis detection applies W^dag before counting photons per mode.
    """
    dim = two_mode_dim(cutoff)
    W = np.zeros((dim, dim))
    for n in range(cutoff + 1):
        for k in range(n + 1):
            l = n - k
            col = two_mode_index(k, l)
            norm = 1.0 / sqrt(factorial(k) * factorial(l) * 2.0**n)
            for i in range(k + 1):
                for j in range(l + 1):
                    a = i + j
                    coef = comb(k, i) * comb(l, j) * (-1) ** j
                    W[two_mode_index(a, n - a), col] += (
                        norm * coef * sqrt(factorial(a) * factorial(n - a))
                    )
    W.flags.writeable = False
    return W
