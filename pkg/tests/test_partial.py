import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from decoy_sdp.channel import ChannelParams, observed_statistics
from decoy_sdp.fock import mixed_state_matrix, source_spectrum
from decoy_sdp.keyrate import ScenarioConfig, key_rate
from decoy_sdp.partial import (
    PartialCharSpec,
    bures_fidelity_floor,
    bures_infidelity_bound,
    candidate_phases,
    coherent_overlap_floor,
    envelope_infidelities,
    phase_error_upper_partial,
    vector_infidelity,
    virtual_term,
    worst_case_search,
    yield_lower_partial,
)
from decoy_sdp.phase import make_discrete, make_phase_set
from decoy_sdp.sdp import compute_bounds, yield_objective
from oracles import fidelity

INTENSITIES = (0.4, 0.08, 0.0)
M = 10


def full_bounds(dist, loss, cutoff=M, intensities=INTENSITIES):
    specs = [source_spectrum(m, dist, cutoff) for m in intensities]
    return compute_bounds(specs, observed_statistics(intensities, ChannelParams(loss)))


def test_coherent_overlap_examples():
    assert coherent_overlap_floor(0.7, 0.0) == 1.0
    assert coherent_overlap_floor(0.0, 2.0) == 1.0
    assert coherent_overlap_floor(0.5, math.pi) == pytest.approx(math.exp(-2), rel=1e-14)


def test_bures_floor_examples():
    assert bures_fidelity_floor(1.0, 1.0) == 1.0
    assert bures_fidelity_floor(0.93, 1.0) == 0.93
    dA = math.sqrt(2 * (1 - math.sqrt(0.999)))
    dB = math.sqrt(2 * (1 - math.sqrt(0.99)))
    expected = (1 - 0.5 * (dA + dB) ** 2) ** 2
    assert bures_fidelity_floor(0.999, 0.99) == pytest.approx(expected, rel=1e-12)


@given(st.floats(0, 1), st.floats(0, 1))
def test_bures_floor_range(a, b):
    f = bures_fidelity_floor(a, b)
    assert 0.0 <= f <= min(a, b) + 1e-12
    assert 0.0 <= bures_infidelity_bound(1 - a, 1 - b) <= 1.0


@pytest.mark.parametrize("cutoff,mu,delta", [(12, 0.5, 0.3), (4, 0.9, 0.2), (3, 0.6, 0.05)])
def test_bures_floor_against_explicit_states(cutoff, mu, delta):
    """True fidelity of a perturbed N=2 source to the truncated ideal one, on a large space."""
    big = 40
    nominal = np.array([0.0, math.pi])
    rho_g = mixed_state_matrix(mu, make_phase_set(nominal + [delta, -delta]), big)
    rho_f = mixed_state_matrix(mu, make_discrete(2), big)
    rho_fm = np.zeros_like(rho_f)
    rho_fm[: cutoff + 1, : cutoff + 1] = rho_f[: cutoff + 1, : cutoff + 1]
    f_proj = np.trace(rho_fm).real
    rho_fm /= f_proj
    floor = bures_fidelity_floor(f_proj, coherent_overlap_floor(mu, delta))
    assert fidelity(rho_g, rho_fm) >= floor - 1e-10
    c = envelope_infidelities([source_spectrum(mu, make_discrete(2), cutoff)], delta)[0]
    # the reference side forms 1 - trace, which cancels
    assert 1 - c == pytest.approx(floor, abs=1e-9)


def test_vector_infidelity():
    a = np.array([1.0, 0.0, 0.0])
    b = np.array([1.0, 1e-9, 0.0])
    assert vector_infidelity(a, a) == 0.0
    assert vector_infidelity(a, b) == pytest.approx(1e-18, rel=1e-6)
    assert vector_infidelity(a, np.array([0.0, 2.0, 0.0])) == 1.0
    assert vector_infidelity(a, np.zeros(3)) == 1.0


def test_virtual_term_identity():
    v = np.array([0.3, 0.1, 0.0])
    assert virtual_term(0.01, v, v, 0.0) == pytest.approx(0.01, rel=1e-12)
    assert virtual_term(0.01, v, np.zeros(3)) == 0.0
    assert virtual_term(0.01, v, 2 * v) == pytest.approx(0.04, rel=1e-12)


def test_spec_validation():
    with pytest.raises(ValueError):
        PartialCharSpec(3, math.pi / 3)
    with pytest.warns(RuntimeWarning):
        PartialCharSpec(3, math.pi / 3, allow_wide=True)
    with pytest.raises(ValueError):
        PartialCharSpec(3, 0.1, grid_points=1)
    with pytest.raises(ValueError):
        PartialCharSpec(3, -0.1)


def test_candidate_enumeration_and_sampling():
    assert len(list(candidate_phases(PartialCharSpec(3, 0.0)))) == 1
    enum = list(candidate_phases(PartialCharSpec(2, 0.1, grid_points=3, mc_samples=9)))
    assert len(enum) == 9
    sampled = list(candidate_phases(PartialCharSpec(5, 0.1, grid_points=5, mc_samples=30, seed=4)))
    assert len(sampled) == 30
    again = list(candidate_phases(PartialCharSpec(5, 0.1, grid_points=5, mc_samples=60, seed=4)))
    assert all(a[0] == b[0] for a, b in zip(sampled, again[:30]))
    for _, phases in sampled:
        offsets = phases - 2 * np.pi * np.arange(5) / 5
        assert np.all(np.abs(offsets) <= 0.1 + 1e-15)


def test_zero_deviation_matches_full():
    spec = PartialCharSpec(3, 0.0)
    ch = ChannelParams(15.0)
    b = worst_case_search(spec, INTENSITIES, ch, M)
    f = full_bounds(make_discrete(3), 15.0)
    assert np.allclose(b.yield_lower, f.yield_lower, rtol=0, atol=1e-7)
    assert np.allclose(b.phase_error_upper, f.phase_error_upper, rtol=0, atol=1e-7)
    assert b.p_lower == f.p_lower


def test_unit_fidelities_leave_objective():
    specs = [source_spectrum(m, make_discrete(3), M) for m in INTENSITIES]
    obs = observed_statistics(INTENSITIES, ChannelParams(10.0))
    floors = [1.0 - s.tail for s in specs]
    raw = yield_objective(specs, obs, 1).value
    assert yield_lower_partial(specs, obs, floors, 1.0, 1, vector_fidelity=1.0) == pytest.approx(raw, rel=1e-7)
    phi = specs[0].eigenvector(1)
    from decoy_sdp.encoding import virtual_unnormalized

    vecs = [virtual_unnormalized(phi, d) for d in (0, 1)]
    e = phase_error_upper_partial(specs, obs, floors, vecs, 1, 0.5, vector_fidelity=1.0)
    assert e >= 0


def test_partial_yield_not_above_full():
    spec = PartialCharSpec(4, 0.05)
    b = worst_case_search(spec, INTENSITIES, ChannelParams(20.0), M)
    f = full_bounds(make_discrete(4), 20.0)
    for n in (0, 1):
        assert b.yield_lower[n] <= f.yield_lower[n] + 1e-9
        assert b.phase_error_upper[n] >= f.phase_error_upper[n] - 1e-9


def test_monotone_in_deviation():
    ch = ChannelParams(10.0)
    prev = None
    for delta in (0.0, 1e-3, 1e-2, 1e-1):
        b = worst_case_search(PartialCharSpec(3, delta), INTENSITIES, ch, M)
        if prev is not None:
            assert b.yield_lower[1] <= prev.yield_lower[1] + 1e-12
            assert b.phase_error_upper[1] >= prev.phase_error_upper[1] - 1e-12
        prev = b


def test_more_samples_only_worsen():
    ch = ChannelParams(15.0)
    small = worst_case_search(PartialCharSpec(5, 0.05, mc_samples=20, seed=7), INTENSITIES, ch, M)
    large = worst_case_search(PartialCharSpec(5, 0.05, mc_samples=40, seed=7), INTENSITIES, ch, M)
    for n in (0, 1):
        assert large.yield_lower[n] <= small.yield_lower[n]
        assert large.phase_error_upper[n] >= small.phase_error_upper[n]
        assert large.p_lower[n] <= small.p_lower[n]


def test_reproducible():
    spec = PartialCharSpec(3, 0.1, grid_points=5, mc_samples=200, seed=11)
    a = worst_case_search(spec, INTENSITIES, ChannelParams(15.0), M)
    b = worst_case_search(spec, INTENSITIES, ChannelParams(15.0), M)
    assert a == b
    assert "enumerated" in a.notes


@pytest.mark.parametrize("N", [2, 3])
def test_conservative_against_explicit_source(N):
    """The worst case never beats the full analysis of a concrete source inside the model."""
    delta = 0.05
    rng = np.random.default_rng(N)
    cfg = ScenarioConfig(source=make_discrete(N), policy="fixed", intensities=INTENSITIES)
    ch = ChannelParams(12.0)
    obs = observed_statistics(INTENSITIES, ch)
    # generic phases break every symmetry, so keep the space small
    cutoff = 6
    worst = worst_case_search(PartialCharSpec(N, delta, grid_points=3), INTENSITIES, ch, cutoff)
    for _ in range(1):
        phases = 2 * np.pi * np.arange(N) / N + rng.uniform(-delta, delta, size=N)
        true = full_bounds(make_phase_set(phases), 12.0, cutoff=cutoff)
        assert key_rate(worst, obs, cfg) <= key_rate(true, obs, cfg) + 1e-12
