"""Lossy channel with threshold detectors: observed statistics and Fock oracle.

Closed forms assume two threshold detectors with dark-count probability
p_d, a pure-loss channel of transmittance eta, no misalignment, and double
clicks assigned to a random bit.  The oracle evaluates the same model by
brute force on truncated two-mode states and is used to check bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import comb as _binom

from .encoding import beamsplitter, encoded_mixture, mode_counts, two_mode_dim, virtual_unnormalized

INTENSITY_LABELS = ("s", "nu", "omega")
BASIS_INDEX = {"Z": 0, "X": 1}


@dataclass(frozen=True)
class ChannelParams:
    """Overall loss in dB (detector efficiency included) and dark-count probability."""

    loss_db: float
    p_d: float = 1e-8
    misalignment: float = 0.0

    def __post_init__(self):
        if not 0 <= self.p_d < 1:
            raise ValueError(f"dark-count probability must lie in [0, 1), got {self.p_d}")
        if self.loss_db < 0:
            raise ValueError(f"loss must be nonnegative, got {self.loss_db} dB")
        if self.misalignment != 0:
            raise ValueError("misalignment is not modelled; it must be 0")

    @property
    def eta(self) -> float:
        return 10.0 ** (-self.loss_db / 10.0)


@dataclass(frozen=True)
class ObservedStats:
    """Simulated observables for intensities (s, nu, omega).

    ``rates[i, b, a, o]`` is the probability that Bob's X measurement gives
    outcome o when Alice sends intensity i, bit b, basis a (0 = Z, 1 = X).
    """

    intensities: tuple[float, float, float]
    gain_z: np.ndarray
    qber_z: np.ndarray
    rates: np.ndarray
    gain_x: np.ndarray
    qber_x: np.ndarray

    def rate(self, i: int, bit: int, basis: str, outcome: int) -> float:
        return float(self.rates[i, bit, BASIS_INDEX[basis], outcome])


def _click(mean: float, pd: float) -> float:
    """1 - (1 - pd) exp(-mean) without cancellation."""
    return -math.expm1(math.log1p(-pd) - mean)


def _one_sided(m: float, eta: float, pd: float) -> tuple[float, float]:
    """(P(outcome = lit detector), P(outcome = dark detector)) for mean m on one detector."""
    p_lit = _click(eta * m, pd)
    both = p_lit * pd
    return p_lit * (1.0 - pd) + 0.5 * both, pd * (1.0 - p_lit) + 0.5 * both


def observed_statistics(intensities, ch: ChannelParams) -> ObservedStats:
    intensities = tuple(float(m) for m in intensities)
    if len(intensities) != 3 or min(intensities) < 0:
        raise ValueError("need three nonnegative intensities (s, nu, omega)")
    eta, pd = ch.eta, ch.p_d
    k = len(intensities)
    gain = np.empty(k)
    qber = np.empty(k)
    rates = np.empty((k, 2, 2, 2))
    for i, m in enumerate(intensities):
        right, wrong = _one_sided(m, eta, pd)
        gain[i] = right + wrong
        # no clicks at all: the error rate only ever appears multiplied by the gain
        qber[i] = wrong / gain[i] if gain[i] > 0 else 0.0
        d = _click(eta * m / 2.0, pd)
        split = d * (1.0 - d) + 0.5 * d * d
        for b in (0, 1):
            rates[i, b, 0, :] = split
            rates[i, b, 1, b] = right
            rates[i, b, 1, 1 - b] = wrong
    return ObservedStats(
        intensities=intensities,
        gain_z=gain,
        qber_z=qber,
        rates=rates,
        gain_x=gain.copy(),
        qber_x=qber.copy(),
    )


def _loss_superoperator(eta: float, cutoff: int) -> np.ndarray:
    """S[a, c, x, z] = sum_j A_j[a, x] A_j[c, z] for single-mode binomial loss."""
    n = np.arange(cutoff + 1)
    A = np.zeros((cutoff + 1, cutoff + 1, cutoff + 1))  # A[j, out, in]
    for j in range(cutoff + 1):
        for m in range(j, cutoff + 1):
            A[j, m - j, m] = math.sqrt(_binom(m, j) * eta ** (m - j) * (1.0 - eta) ** j)
    return np.einsum("jax,jcz->acxz", A, A)


def _to_product(state: np.ndarray, cutoff: int) -> np.ndarray:
    k, l = mode_counts(cutoff)
    d = cutoff + 1
    T = np.zeros((d, d, d, d), dtype=state.dtype)
    T[k[:, None], l[:, None], k[None, :], l[None, :]] = state
    return T


def pure_loss(state: np.ndarray, eta: float) -> np.ndarray:
    """Apply independent pure loss of transmittance eta to both modes."""
    dim = state.shape[0]
    cutoff = int(round((math.sqrt(8 * dim + 1) - 3) / 2))
    if two_mode_dim(cutoff) != dim:
        raise ValueError("state dimension does not match a two-mode cutoff")
    S = _loss_superoperator(eta, cutoff)
    T = _to_product(state, cutoff)
    # rho[k1, l1, k2, l2]: damp mode one then mode two
    T = np.einsum("acxz,xyzw->aycw", S, T)
    T = np.einsum("bdyw,aycw->abcd", S, T)
    k, l = mode_counts(cutoff)
    return T[k[:, None], l[:, None], k[None, :], l[None, :]]


def measurement_outcomes(state: np.ndarray, basis: str, p_d: float) -> tuple[float, float, float]:
    """(P(0), P(1), P(inconclusive)) for threshold detection in the given basis."""
    dim = state.shape[0]
    cutoff = int(round((math.sqrt(8 * dim + 1) - 3) / 2))
    if basis == "X":
        W = beamsplitter(cutoff)
        state = W.T @ state @ W
    elif basis != "Z":
        raise ValueError(f"unknown basis {basis!r}")
    probs = np.real(np.diag(state))
    k, l = mode_counts(cutoff)
    no0 = np.where(k == 0, 1.0 - p_d, 0.0)
    no1 = np.where(l == 0, 1.0 - p_d, 0.0)
    only0 = (1.0 - no0) * no1
    only1 = no0 * (1.0 - no1)
    both = (1.0 - no0) * (1.0 - no1)
    p0 = float(probs @ (only0 + 0.5 * both))
    p1 = float(probs @ (only1 + 0.5 * both))
    none = float(probs @ (no0 * no1))
    return p0, p1, none


def oracle_yield(eigvec: np.ndarray, ch: ChannelParams) -> float:
    """Conclusive-detection probability of a Z-encoded state under the channel."""
    rho = np.outer(eigvec, np.conj(eigvec))
    total = 0.0
    for b in (0, 1):
        out = pure_loss(encoded_mixture(rho, b, "Z"), ch.eta)
        p0, p1, _ = measurement_outcomes(out, "Z", ch.p_d)
        total += 0.5 * (p0 + p1)
    return total


def oracle_phase_error(eigvec: np.ndarray, ch: ChannelParams) -> float:
    """Exact phase-error rate of the n-th eigenstate from the virtual X-basis picture."""
    numerator = 0.0
    for delta in (0, 1):
        lam = virtual_unnormalized(eigvec, delta)
        out = pure_loss(np.outer(lam, np.conj(lam)), ch.eta)
        p = measurement_outcomes(out, "X", ch.p_d)
        numerator += p[1 - delta]
    return numerator / oracle_yield(eigvec, ch)


def fock_yield(weights: np.ndarray, ch: ChannelParams) -> float:
    """Closed-form yield of a state with the given photon-number distribution."""
    n = np.arange(len(weights))
    weights = np.asarray(weights, dtype=float)
    survive = (1.0 - ch.p_d) ** 2 * (1.0 - ch.eta) ** n
    return float(weights @ (1.0 - survive) / weights.sum())
