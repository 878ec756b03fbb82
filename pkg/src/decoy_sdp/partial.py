"""Bounds when each phase is only known to lie within +-delta of 2 pi k / N.

The relaxed programs are posed once on the ideal discrete reference
source f with widened envelopes; the unknown source g only enters through
fidelities to candidate sources, evaluated on a grid of phase
combinations.  Internally fidelities are carried as infidelities 1 - F.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .channel import ChannelParams, ObservedStats, observed_statistics
from .conic import SolverSettings
from .encoding import virtual_unnormalized
from .envelopes import g_minus_c, g_plus_c
from .fock import SpectralData, prob_lower_bound, source_spectrum
from .phase import make_discrete, make_phase_set
from .sdp import BoundSet, phase_error_upper_bound_c, tightest_numerator, yield_objective


@dataclass(frozen=True)
class PartialCharSpec:
    n_phases: int
    delta_max: float
    grid_points: int = 5
    mc_samples: int = 200
    seed: int = 0
    allow_wide: bool = False

    def __post_init__(self):
        if self.n_phases < 1:
            raise ValueError("n_phases must be at least 1")
        if self.grid_points < 2:
            raise ValueError("grid_points must be at least 2")
        if self.mc_samples < 1:
            raise ValueError("mc_samples must be positive")
        if self.delta_max < 0:
            raise ValueError("delta_max must be nonnegative")
        if self.delta_max >= math.pi / self.n_phases:
            if not self.allow_wide:
                raise ValueError(
                    f"delta_max = {self.delta_max} overlaps neighbouring phases (limit pi/N = "
                    f"{math.pi / self.n_phases:.6g}); set allow_wide to override"
                )
            warnings.warn("phase intervals overlap", RuntimeWarning, stacklevel=2)

    @property
    def nominal(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_phases) / self.n_phases


def coherent_overlap_infidelity(mu: float, delta_max: float) -> float:
    if mu < 0:
        raise ValueError("intensity must be nonnegative")
    return -math.expm1(-4.0 * mu * math.sin(0.5 * delta_max) ** 2)


def coherent_overlap_floor(mu: float, delta_max: float) -> float:
    """|<sqrt(mu)|sqrt(mu) e^{i delta}>|^2 = exp(-2 mu (1 - cos delta))."""
    if mu < 0:
        raise ValueError("intensity must be nonnegative")
    return math.exp(-4.0 * mu * math.sin(0.5 * delta_max) ** 2)


def _bures_sq(c: float) -> float:
    """d_B^2 = 2 (1 - sqrt(1 - c)), written without cancellation."""
    c = min(1.0, max(0.0, c))
    return 2.0 * c / (1.0 + math.sqrt(1.0 - c))


def bures_infidelity_bound(c_a: float, c_b: float) -> float:
    """Upper bound on 1 - F through the Bures triangle inequality."""
    if c_b == 0:
        return c_a
    if c_a == 0:
        return c_b
    half = 0.5 * (math.sqrt(_bures_sq(c_a)) + math.sqrt(_bures_sq(c_b))) ** 2
    if half >= 1.0:
        return 1.0
    return half * (2.0 - half)


def bures_fidelity_floor(f_proj: float, f_c4: float) -> float:
    if f_c4 == 1.0:
        return float(f_proj)
    if f_proj == 1.0:
        return float(f_c4)
    return 1.0 - bures_infidelity_bound(1.0 - f_proj, 1.0 - f_c4)


def vector_infidelity(a: np.ndarray, b: np.ndarray) -> float:
    """1 - |<a|b>|^2 for the normalized directions of a and b."""
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 1.0
    a = a / na
    b = b / nb
    ip = np.vdot(b, a)
    if ip == 0:
        return 1.0
    # 1 - |ip| = |a - e^{i arg ip} b|^2 / 2 avoids cancellation for near-equal vectors
    one_minus = 0.5 * float(np.linalg.norm(a - (ip / abs(ip)) * b) ** 2)
    return min(1.0, max(0.0, one_minus * (2.0 - one_minus)))


def envelope_infidelities(ref_specs: Sequence[SpectralData], delta_max: float) -> list[float]:
    """Per-intensity 1 - F(rho_g, rho_{f,M}) floors."""
    return [bures_infidelity_bound(s.tail, coherent_overlap_infidelity(s.mu, delta_max)) for s in ref_specs]


def yield_lower_partial(
    ref_specs: Sequence[SpectralData],
    obs: ObservedStats,
    floors: Sequence[float],
    f_cand: float,
    n: int,
    *,
    vector_fidelity: float | None = None,
    settings: SolverSettings | None = None,
) -> float:
    """Two-stage lower bound on the yield of the candidate eigenstate n.

    ``floors`` are fidelities F(rho_g, rho_{f,M}) per intensity, ``f_cand``
    the eigenvector fidelity to the reference and ``vector_fidelity`` the
    candidate's truncation floor (default: the reference one).
    """
    res = yield_objective(ref_specs, obs, n, infidelities=[1.0 - f for f in floors], settings=settings)
    cvec = ref_specs[0].vector_infidelity[n] if vector_fidelity is None else 1.0 - vector_fidelity
    return g_minus_c(g_minus_c(res.value, 1.0 - f_cand), cvec)


def virtual_term(t: float, ref_vec: np.ndarray, cand_vec: np.ndarray, c_cand: float | None = None) -> float:
    """Upper bound on Tr[P(cand) L] from t = Tr[P(ref) L] for unnormalized virtual vectors.

    Both vectors are normalized, the envelope is applied to the normalized
    trace, and the candidate's squared norm scales the result back.
    """
    nr = float(np.vdot(ref_vec, ref_vec).real)
    nc = float(np.vdot(cand_vec, cand_vec).real)
    if nc == 0:
        return 0.0
    if nr == 0:
        return nc
    c = vector_infidelity(ref_vec, cand_vec) if c_cand is None else c_cand
    return nc * g_plus_c(min(1.0, t / nr), c)


def phase_error_upper_partial(
    ref_specs: Sequence[SpectralData],
    obs: ObservedStats,
    floors: Sequence[float],
    cand_vectors: Sequence[np.ndarray],
    n: int,
    y_lower: float,
    *,
    vector_fidelity: float | None = None,
    use_mismatch: bool = True,
    settings: SolverSettings | None = None,
) -> float:
    """Upper bound on the phase error of candidate eigenstate n.

    ``cand_vectors[delta]`` are the candidate's unnormalized virtual vectors.
    """
    phi = ref_specs[0].eigenvector(n)
    c_floors = [1.0 - f for f in floors]
    total = 0.0
    for delta in (0, 1):
        t, _ = tightest_numerator(ref_specs, obs, n, delta, use_mismatch, infidelities=c_floors, settings=settings)
        total += virtual_term(t, virtual_unnormalized(phi, delta), cand_vectors[delta])
    cvec = ref_specs[0].vector_infidelity[n] if vector_fidelity is None else 1.0 - vector_fidelity
    return phase_error_upper_bound_c(min(1.0, total), 0.0, cvec, y_lower)


def candidate_phases(spec: PartialCharSpec):
    """Yield (index tuple, phases) per candidate; enumerate when cheap, else sample."""
    if spec.delta_max == 0:
        yield (), spec.nominal
        return
    offsets = np.linspace(-spec.delta_max, spec.delta_max, spec.grid_points)
    total = spec.grid_points**spec.n_phases
    if total <= spec.mc_samples:
        for idx in itertools.product(range(spec.grid_points), repeat=spec.n_phases):
            yield idx, spec.nominal + offsets[list(idx)]
        return
    rng = np.random.default_rng(spec.seed)
    for _ in range(spec.mc_samples):
        idx = rng.integers(0, spec.grid_points, size=spec.n_phases)
        yield tuple(int(i) for i in idx), spec.nominal + offsets[idx]


def worst_case_search(
    spec: PartialCharSpec,
    intensities: Sequence[float],
    channel: ChannelParams,
    cutoff: int,
    *,
    use_mismatch: bool = True,
    settings: SolverSettings | None = None,
) -> BoundSet:
    """Worst-case p^L, yield and phase-error bounds over candidate phase combinations.

    The reference programs are solved once; each candidate only costs an
    eigendecomposition and a few fidelities.  The three quantities are
    worst-cased independently.
    """
    ref = make_discrete(spec.n_phases)
    ref_specs = [source_spectrum(float(m), ref, cutoff) for m in intensities]
    obs = observed_statistics(intensities, channel)
    c_floors = envelope_infidelities(ref_specs, spec.delta_max)
    ref_s = ref_specs[0]

    objectives, statuses, numerators = [], [], []
    for n in (0, 1):
        res = yield_objective(ref_specs, obs, n, infidelities=c_floors, settings=settings)
        objectives.append(res.value)
        statuses.append(res.status)
        t = []
        for delta in (0, 1):
            value, st = tightest_numerator(
                ref_specs, obs, n, delta, use_mismatch, infidelities=c_floors, settings=settings
            )
            t.append(value)
            statuses.extend(st)
        numerators.append(tuple(t))

    p_low = [math.inf, math.inf]
    y_low = [math.inf, math.inf]
    e_up = [-math.inf, -math.inf]
    worst = [None, None]
    count = 0
    for idx, phases in candidate_phases(spec):
        count += 1
        if spec.delta_max == 0:
            cand = ref_s
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                cand = source_spectrum(float(intensities[0]), make_phase_set(tuple(phases)), cutoff)
        for n in (0, 1):
            phi_f, phi_g = ref_s.eigenvector(n), cand.eigenvector(n)
            c_cand = 0.0 if cand is ref_s else vector_infidelity(phi_f, phi_g)
            cvec = cand.vector_infidelity[n]
            y = g_minus_c(g_minus_c(objectives[n], c_cand), cvec)
            total = 0.0
            for delta in (0, 1):
                ref_v = virtual_unnormalized(phi_f, delta)
                cand_v = virtual_unnormalized(phi_g, delta)
                cv = 0.0 if cand is ref_s else None
                total += virtual_term(numerators[n][delta], ref_v, cand_v, cv)
            e = phase_error_upper_bound_c(min(1.0, total), 0.0, cvec, y)
            p_low[n] = min(p_low[n], prob_lower_bound(cand, n))
            y_low[n] = min(y_low[n], y)
            if e > e_up[n]:
                e_up[n] = e
                worst[n] = idx
    notes = (
        f"candidates={count}",
        "enumerated" if spec.delta_max == 0 or spec.grid_points**spec.n_phases <= spec.mc_samples else "sampled",
        f"worst_phase_error_candidates={worst}",
    )
    return BoundSet(
        p_lower=tuple(p_low),
        yield_lower=tuple(y_low),
        phase_error_upper=tuple(e_up),
        numerators=tuple(numerators),
        objectives=tuple(objectives),
        statuses=tuple(statuses),
        notes=notes,
    )
