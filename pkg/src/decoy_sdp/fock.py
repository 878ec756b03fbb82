"""Photon-number-truncated source states and their spectra.

Vectors are plain numpy arrays indexed by photon number 0..M and operators
are (M+1)x(M+1) arrays.  The projected source block is diagonalized one
phase-symmetry sector at a time so that eigenvectors never mix sectors,
which keeps the downstream optimization problems block diagonal.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gammainc, gammaln

from .phase import PhaseDistribution, fourier_coefficients, symmetry_order

PSD_TOL = 1e-10


def log_poisson_weights(mu: float, cutoff: int) -> np.ndarray:
    n = np.arange(cutoff + 1)
    if mu == 0:
        out = np.full(cutoff + 1, -np.inf)
        out[0] = 0.0
        return out
    return -mu + n * math.log(mu) - gammaln(n + 1)


def poisson_tail(mu: float, cutoff: int) -> float:
    """P(n > cutoff) for a Poisson variable, without cancellation."""
    if mu == 0:
        return 0.0
    return float(gammainc(cutoff + 1, mu))


def coherent_amplitudes(mu: float, theta: float, cutoff: int) -> np.ndarray:
    """Fock amplitudes of |sqrt(mu) e^{i theta}> up to ``cutoff`` photons (unnormalized tail cut)."""
    if mu < 0:
        raise ValueError("intensity must be nonnegative")
    n = np.arange(cutoff + 1)
    mag = np.exp(0.5 * log_poisson_weights(mu, cutoff))
    return mag * np.exp(1j * n * theta)


def mixed_state_matrix(mu: float, dist: PhaseDistribution, cutoff: int) -> np.ndarray:
    """Cutoff block Pi_M rho Pi_M of the phase-averaged coherent state.

    Entry (n, m) is exp(-mu) sqrt(mu^(n+m) / (n! m!)) c_{n-m}.  Returned as a
    real array whenever all needed coefficients are real.
    """
    if mu < 0:
        raise ValueError("intensity must be nonnegative")
    c = fourier_coefficients(dist, cutoff)
    half = 0.5 * log_poisson_weights(mu, cutoff)
    amp = np.exp(half[:, None] + half[None, :])
    n = np.arange(cutoff + 1)
    diff = n[:, None] - n[None, :]
    coeff = np.where(diff >= 0, c[np.abs(diff)], np.conj(c[np.abs(diff)]))
    block = amp * coeff
    if np.all(block.imag == 0):
        return block.real.copy()
    return block


@dataclass(frozen=True)
class SpectralData:
    """Spectrum of a projected source block with truncation bookkeeping.

    ``eigenvectors[:, i]`` pairs with ``eigenvalues[i]`` (descending).
    ``sector[i]`` is the photon-number residue class of that eigenvector
    modulo ``modulus``.
    """

    mu: float
    cutoff: int
    block: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    sector: np.ndarray
    modulus: int
    tail: float
    projection_fidelity: float
    epsilon: float
    gaps: tuple[float, float]
    vector_fidelity: tuple[float, float]
    vector_infidelity: tuple[float, float]
    notes: tuple[str, ...] = field(default=())

    @property
    def normalized_block(self) -> np.ndarray:
        return self.block / self.projection_fidelity

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self.block)

    def eigenvector(self, n: int) -> np.ndarray:
        return self.eigenvectors[:, n]


def _fix_phase(vec: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(vec)))
    if np.iscomplexobj(vec):
        return vec * (np.abs(vec[i]) / vec[i])
    return vec if vec[i] > 0 else -vec


def _sector_eigh(block: np.ndarray, modulus: int):
    dim = block.shape[0]
    labels = np.arange(dim) % modulus
    vals, vecs, sectors = [], [], []
    for r in range(min(modulus, dim)):
        idx = np.flatnonzero(labels == r)
        w, v = np.linalg.eigh(block[np.ix_(idx, idx)])
        for j in range(len(idx)):
            full = np.zeros(dim, dtype=block.dtype)
            full[idx] = v[:, j]
            vals.append(w[j])
            vecs.append(_fix_phase(full))
            sectors.append(r)
    vals = np.asarray(vals)
    # stable sort keeps equal eigenvalues in sector order
    order = np.argsort(-vals, kind="stable")
    return vals[order], np.column_stack(vecs)[:, order], np.asarray(sectors)[order]


def eigen_gap_values(q: np.ndarray, eps: float) -> tuple[float, float]:
    q = np.concatenate([q, np.zeros(max(0, 3 - len(q)))])
    d0 = q[0] - q[1] - eps
    d1 = min(q[0] - q[1] - eps, q[1] - q[2] - eps)
    return float(d0), float(d1)


def vector_infidelity_bound(eps: float, gap: float) -> float:
    """(eps/gap)^2 capped at 1; 1 when the gap does not exceed the tail."""
    if eps == 0:
        return 0.0
    if gap <= 0:
        return 1.0
    return min(1.0, (eps / gap) ** 2)


def vector_fidelity_floor(eps: float, gap: float) -> float:
    """1 - (eps/gap)^2, or 0 when the gap does not exceed the tail."""
    return 1.0 - vector_infidelity_bound(eps, gap)


def spectral_decomposition(
    block: np.ndarray, *, mu: float = float("nan"), tail: float | None = None, modulus: int | None = None
) -> SpectralData:
    """Eigendecompose an unnormalized cutoff block and fill the fidelity floors.

    ``tail`` is 1 - Tr[block]; pass it when it is known analytically (the
    Poisson tail) to avoid cancellation.  ``modulus`` declares the block as
    a direct sum over photon-number residues; by default it is inferred
    from exact zeros of the block.
    """
    block = np.asarray(block)
    if not np.allclose(block, block.conj().T, rtol=0, atol=1e-12):
        raise ValueError("block is not Hermitian")
    dim = block.shape[0]
    cutoff = dim - 1
    if modulus is None:
        modulus = _infer_modulus(block)
    vals, vecs, sectors = _sector_eigh(block, modulus)
    if vals[-1] < -PSD_TOL:
        raise ValueError(f"block is not positive semidefinite (min eigenvalue {vals[-1]:.3e})")
    trace = float(np.trace(block).real)
    if tail is None:
        tail = max(0.0, 1.0 - trace)
    fproj = 1.0 - tail
    eps = 2.0 * math.sqrt(tail)
    gaps = eigen_gap_values(vals, eps)
    cvec = tuple(vector_infidelity_bound(eps, g) for g in gaps)
    fvec = tuple(1.0 - c for c in cvec)
    notes = []
    for n, g in enumerate(gaps):
        if g <= 0 and eps > 0:
            notes.append(
                f"eigenvalue gap for n={n} is nonpositive ({g:.3e}); fidelity floor set to 0, "
                "increase the photon cutoff"
            )
    for note in notes:
        warnings.warn(note, RuntimeWarning, stacklevel=2)
    return SpectralData(
        mu=mu,
        cutoff=cutoff,
        block=block,
        eigenvalues=vals,
        eigenvectors=vecs,
        sector=sectors,
        modulus=modulus,
        tail=tail,
        projection_fidelity=fproj,
        epsilon=eps,
        gaps=gaps,
        vector_fidelity=fvec,
        vector_infidelity=cvec,
        notes=tuple(notes),
    )


def _infer_modulus(block: np.ndarray) -> int:
    dim = block.shape[0]
    ks = {abs(i - j) for i, j in zip(*np.nonzero(block)) if i != j}
    if not ks:
        return dim
    return math.gcd(*ks)


@lru_cache(maxsize=2048)
def source_spectrum(mu: float, dist: PhaseDistribution, cutoff: int) -> SpectralData:
    """Spectral data of the projected source at intensity ``mu`` (memoized)."""
    block = mixed_state_matrix(mu, dist, cutoff)
    modulus = symmetry_order(dist, cutoff)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return spectral_decomposition(
            block, mu=mu, tail=poisson_tail(mu, cutoff), modulus=modulus
        )


def eigen_gap(spec: SpectralData, n: int) -> float:
    if n not in (0, 1):
        raise ValueError("gaps are defined for n = 0, 1")
    return spec.gaps[n]


def prob_lower_bound(spec: SpectralData, n: int) -> float:
    """max(0, q_n - eps): lower bound on the probability of the n-th eigenstate."""
    return max(0.0, float(spec.eigenvalues[n]) - spec.epsilon)
