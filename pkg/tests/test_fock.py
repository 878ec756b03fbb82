import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import poisson

from decoy_sdp.fock import (
    coherent_amplitudes,
    eigen_gap,
    eigen_gap_values,
    mixed_state_matrix,
    poisson_tail,
    prob_lower_bound,
    source_spectrum,
    spectral_decomposition,
    vector_fidelity_floor,
)
from decoy_sdp.phase import make_discrete, make_truncated_gaussian_mixture, make_uniform


def test_coherent_amplitudes():
    assert np.allclose(coherent_amplitudes(0.0, 1.0, 4), [1, 0, 0, 0, 0])
    a = coherent_amplitudes(1.0, 0.0, 2)
    assert np.allclose(a, math.exp(-0.5) * np.array([1, 1, 1 / math.sqrt(2)]))
    b = coherent_amplitudes(0.5, math.pi / 3, 10)
    assert math.isclose(np.vdot(b, b).real, poisson.cdf(10, 0.5), rel_tol=1e-13)
    with pytest.raises(ValueError):
        coherent_amplitudes(-1.0, 0.0, 3)


def test_uniform_block_is_poisson_diagonal():
    block = mixed_state_matrix(0.7, make_uniform(), 8)
    assert np.allclose(block, np.diag(poisson.pmf(np.arange(9), 0.7)), atol=1e-16)


def test_discrete_two_entries():
    mu = 0.6
    block = mixed_state_matrix(mu, make_discrete(2), 2)
    assert math.isclose(block[0, 2], math.exp(-mu) * mu / math.sqrt(2), rel_tol=1e-13)
    assert block[0, 1] == 0


def test_single_phase_is_pure():
    mu, M = 0.4, 10
    block = mixed_state_matrix(mu, make_discrete(1), M)
    a = coherent_amplitudes(mu, 0.0, M)
    assert np.allclose(block, np.outer(a, a.conj()).real, atol=1e-15)
    assert np.sum(np.linalg.eigvalsh(block) > 1e-12) == 1


@given(st.floats(0.0, 2.0), st.integers(1, 9), st.integers(4, 16))
def test_block_matches_average_of_coherent_states(mu, n, M):
    block = mixed_state_matrix(mu, make_discrete(n), M)
    direct = sum(
        np.outer(v, v.conj()) for v in (coherent_amplitudes(mu, 2 * math.pi * k / n, M) for k in range(n))
    ) / n
    assert np.allclose(block, direct, atol=1e-13)


def test_uniform_spectrum_fock_basis():
    spec = source_spectrum(0.5, make_uniform(), 10)
    q = poisson.pmf(np.arange(11), 0.5)
    assert np.allclose(spec.eigenvalues, q, atol=1e-15)
    assert np.allclose(np.abs(spec.eigenvectors), np.eye(11), atol=1e-12)
    assert math.isclose(spec.epsilon, 2 * math.sqrt(poisson.sf(10, 0.5)), rel_tol=1e-8)


def test_poisson_tail_small():
    assert poisson_tail(0.0, 3) == 0.0
    assert math.isclose(poisson_tail(0.5, 20), poisson.sf(20, 0.5), rel_tol=1e-10)
    assert poisson_tail(0.5, 20) > 0


def test_full_projection_has_unit_floors():
    spec = spectral_decomposition(np.diag([0.6, 0.3, 0.1]), tail=0.0)
    assert spec.epsilon == 0
    assert spec.vector_fidelity == (1.0, 1.0)
    assert spec.vector_infidelity == (0.0, 0.0)


def test_gap_examples():
    q = np.array([0.6, 0.3, 0.1])
    d0, d1 = eigen_gap_values(q, 0.05)
    assert math.isclose(d0, 0.25)
    assert math.isclose(d1, 0.15)
    d0, _ = eigen_gap_values(np.array([0.4, 0.4, 0.2]), 0.05)
    assert d0 == pytest.approx(-0.05)
    assert vector_fidelity_floor(0.05, d0) == 0.0


def test_degenerate_gap_flagged():
    with pytest.warns(RuntimeWarning, match="gap"):
        spec = spectral_decomposition(np.diag([0.45, 0.45, 0.05]), tail=0.05)
    assert spec.vector_fidelity[0] == 0.0
    assert spec.notes


def test_prob_lower_bound():
    # eps = 2 sqrt(tail)
    spec = spectral_decomposition(np.diag([0.5, 0.3, 0.1999]), tail=1e-4)
    assert math.isclose(prob_lower_bound(spec, 1), 0.3 - 0.02)
    with pytest.warns(RuntimeWarning):
        spec = spectral_decomposition(np.diag([0.5, 0.01, 0.0]), tail=(0.05 / 2) ** 2)
    assert prob_lower_bound(spec, 1) == 0.0


def test_single_photon_probability_uniform():
    spec = source_spectrum(0.5, make_uniform(), 20)
    assert prob_lower_bound(spec, 1) == pytest.approx(math.exp(-0.5) * 0.5 - spec.epsilon, abs=1e-15)
    assert spec.epsilon < 1e-12


def test_eigen_gap_accessor():
    spec = source_spectrum(0.3, make_discrete(3), 8)
    assert eigen_gap(spec, 0) == spec.gaps[0]
    with pytest.raises(ValueError):
        eigen_gap(spec, 2)


def test_rejects_bad_blocks():
    with pytest.raises(ValueError):
        spectral_decomposition(np.array([[1.0, 0.5], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        spectral_decomposition(np.diag([1.0, -0.1]))


@given(st.floats(0.05, 1.2), st.integers(2, 6), st.floats(0.01, 0.3))
def test_spectrum_properties(mu, n, sigma):
    spec = source_spectrum(mu, make_truncated_gaussian_mixture(n, sigma), 12)
    vals = spec.eigenvalues
    assert np.all(np.diff(vals) <= 1e-15)
    assert vals[-1] > -1e-12
    assert math.isclose(vals.sum() + spec.tail, 1.0, abs_tol=1e-12)
    V = spec.eigenvectors
    assert np.allclose(V.conj().T @ V, np.eye(V.shape[1]), atol=1e-10)
    assert np.allclose(V @ np.diag(vals) @ V.conj().T, spec.block, atol=1e-12)
    # eigenvectors never mix residues modulo the symmetry order
    for i, r in enumerate(spec.sector):
        support = np.flatnonzero(np.abs(V[:, i]) > 0)
        assert np.all(support % spec.modulus == r)
    assert all(0 <= f <= 1 for f in spec.vector_fidelity)
