"""Relaxed SDPs for eigenstate yields and phase errors.

Each program lives on the photon-number cutoff space and is reduced
before it reaches the solver:

* Phase twirling by the symmetry order K of the distribution leaves every
  constraint and the objective invariant, so an optimal operator can be
  taken block diagonal over photon-number residues mod K.
* Inside a block only the span S of the objective vector and the
  constraint factors matters: compressing a feasible operator to S keeps
  it feasible with the same objective value.  Eigenvectors whose weight
  is below ``EIG_FLOOR`` are dropped and their trace is subtracted from
  the lower end of the interval, which only relaxes the program.
* Phase-error programs are also reduced by the mode swap S: it maps every
  virtual vector to +-itself and permutes the encoded data operators
  (up to a trace-norm residual that widens the intervals).  Averaging an
  optimal operator with S L S keeps it feasible for the widened program,
  so L can be taken block diagonal over the two swap parities.

All reported numbers are solver certificates, see ``conic``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import ObservedStats
from .conic import SdpResult, SolverSettings, TraceSDP, realify, solve_trace_sdp
from .encoding import BASES, encoder, swap_permutation, virtual_unnormalized
from .envelopes import g_minus_c, g_plus_c
from .fock import SpectralData, prob_lower_bound

EIG_FLOOR = 1e-15
RANK_TOL = 1e-10
# operators whose swap image misses every constraint by more than this are not paired
SWAP_MATCH_TOL = 1e-9


@dataclass(frozen=True)
class Constraint:
    """Interval constraint lo <= Tr[F F^dag X] <= hi; columns of F carry residue labels."""

    factor: np.ndarray
    classes: np.ndarray
    lower: float
    upper: float


@dataclass(frozen=True)
class BoundSet:
    p_lower: tuple[float, float]
    yield_lower: tuple[float, float]
    phase_error_upper: tuple[float, float]
    numerators: tuple[tuple[float, float], tuple[float, float]]
    objectives: tuple[float, float]
    statuses: tuple[str, ...] = ()
    notes: tuple[str, ...] = field(default=())


def source_factor(spec: SpectralData) -> tuple[np.ndarray, np.ndarray, float]:
    """Columns u_j sqrt(q_j / F_proj) of the normalized block, their residues, dropped trace."""
    w = spec.eigenvalues / spec.projection_fidelity
    keep = w > EIG_FLOOR
    dropped = float(np.clip(w[~keep], 0.0, None).sum())
    F = spec.eigenvectors[:, keep] * np.sqrt(w[keep])
    return F, spec.sector[keep], dropped


def _envelope(q: float, infidelity: float, dropped: float) -> tuple[float, float]:
    return g_minus_c(q, infidelity) - dropped, g_plus_c(q, infidelity)


def _orthonormal_span(vectors: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(vectors, axis=0)
    vectors = vectors[:, norms > 0] / norms[norms > 0]
    U, S, _ = np.linalg.svd(vectors, full_matrices=False)
    return U[:, S > RANK_TOL * S[0]]


def _split_parity(Q: np.ndarray, perm: np.ndarray) -> list[np.ndarray]:
    """Orthonormal bases of the +1 and -1 swap eigenspaces of the swap-invariant span of Q."""
    out = []
    for sign in (1.0, -1.0):
        # P^dag P is a projector here, so singular values are 0 or 1
        U, S, _ = np.linalg.svd(0.5 * (Q + sign * Q[perm]), full_matrices=False)
        out.append(U[:, S > 0.5])
    return out


def swap_relaxed(constraints: Sequence[Constraint], perm: np.ndarray) -> list[Constraint] | None:
    """Constraints widened so that the set is invariant under the swap, or None if no pairing exists.

    Each constraint i is paired with the j whose operator is closest to
    S A_i S; its interval becomes the hull of both widened by ||S A_i S - A_j||_1.
    """
    ops = [c.factor @ c.factor.conj().T for c in constraints]
    out = []
    for c, A in zip(constraints, ops):
        B = A[np.ix_(perm, perm)]
        errs = [float(np.max(np.abs(B - C))) for C in ops]
        j = int(np.argmin(errs))
        if errs[j] > SWAP_MATCH_TOL * max(float(np.max(np.abs(A))), 1e-300):
            return None
        resid = float(np.abs(np.linalg.eigvalsh(B - ops[j])).sum()) if errs[j] > 0 else 0.0
        lo = min(c.lower, constraints[j].lower) - resid
        hi = max(c.upper, constraints[j].upper) + resid
        out.append(Constraint(c.factor, c.classes, lo, hi))
    return out


def reduced_problem(
    objective: np.ndarray,
    objective_class: int,
    constraints: Sequence[Constraint],
    maximize: bool,
    swap: np.ndarray | None = None,
) -> TraceSDP:
    """Block-diagonal program restricted to the span of the data in each residue class.

    With ``swap`` (a permutation of the ambient basis, an involution that
    leaves the objective and the constraint set invariant) every block is
    further split by swap parity.
    """
    present = sorted({int(objective_class)}.union(*(set(c.classes.tolist()) for c in constraints)))
    obj_blocks: list[np.ndarray] = []
    con_blocks: list[list[np.ndarray]] = [[] for _ in constraints]
    for r in present:
        parts = [objective[:, None]] if r == objective_class else []
        parts += [c.factor[:, c.classes == r] for c in constraints]
        span = np.hstack(parts)
        if swap is None:
            bases = [_orthonormal_span(span)]
        else:
            bases = [Q for Q in _split_parity(_orthonormal_span(np.hstack([span, span[swap]])), swap) if Q.shape[1]]
        for Q in bases:
            if r == objective_class:
                v = Q.conj().T @ objective
                obj_blocks.append(np.outer(v, v.conj()))
            else:
                obj_blocks.append(np.zeros((Q.shape[1], Q.shape[1]), dtype=Q.dtype))
            for i, c in enumerate(constraints):
                G = Q.conj().T @ c.factor[:, c.classes == r]
                con_blocks[i].append(G @ G.conj().T)
    return TraceSDP(
        objective=[realify(C) for C in obj_blocks],
        constraints=[[realify(A) for A in As] for As in con_blocks],
        lower=np.array([c.lower for c in constraints]),
        upper=np.array([c.upper for c in constraints]),
        maximize=maximize,
    )


def _check_specs(specs: Sequence[SpectralData]) -> None:
    if len({s.cutoff for s in specs}) != 1 or len({s.modulus for s in specs}) != 1:
        raise ValueError("spectral data must share the cutoff and symmetry order")


def yield_objective(
    specs: Sequence[SpectralData],
    obs: ObservedStats,
    n: int,
    *,
    infidelities: Sequence[float] | None = None,
    vector: np.ndarray | None = None,
    settings: SolverSettings | None = None,
) -> SdpResult:
    """Certified min Tr[P(phi_n) J] over the decoy-constrained operators J.

    ``specs[0]`` is the signal intensity.  ``infidelities`` overrides the
    per-intensity envelope infidelities (default: the Poisson tails) and
    ``vector`` overrides the objective eigenvector.
    """
    _check_specs(specs)
    spec_s = specs[0]
    infidelities = infidelities if infidelities is not None else [s.tail for s in specs]
    vec = spec_s.eigenvector(n) if vector is None else vector
    cons = []
    for i, spec in enumerate(specs):
        F, cls, dropped = source_factor(spec)
        lo, hi = _envelope(float(obs.gain_z[i]), infidelities[i], dropped)
        cons.append(Constraint(F, cls, lo, hi))
    problem = reduced_problem(vec, int(spec_s.sector[n]), cons, maximize=False)
    return solve_trace_sdp(problem, settings)


def yield_lower_bound(
    spec: SpectralData,
    all_specs: Sequence[SpectralData],
    obs: ObservedStats,
    n: int,
    settings: SolverSettings | None = None,
) -> float:
    if all_specs[0] is not spec:
        all_specs = [spec, *[s for s in all_specs if s is not spec]]
    res = yield_objective(all_specs, obs, n, settings=settings)
    if spec.vector_infidelity[n] >= 1:
        warnings.warn(f"vector fidelity floor for n={n} is 0; yield bound is 0", RuntimeWarning, stacklevel=2)
    return g_minus_c(res.value, spec.vector_infidelity[n])


def phase_error_objective(
    specs: Sequence[SpectralData],
    obs: ObservedStats,
    n: int,
    delta: int,
    use_mismatch: bool,
    *,
    infidelities: Sequence[float] | None = None,
    vector: np.ndarray | None = None,
    settings: SolverSettings | None = None,
) -> SdpResult | None:
    """Certified max Tr[P(lambda_delta) L]; None when the virtual vector vanishes."""
    _check_specs(specs)
    spec_s = specs[0]
    infidelities = infidelities if infidelities is not None else [s.tail for s in specs]
    phi = spec_s.eigenvector(n) if vector is None else vector
    target = virtual_unnormalized(phi, delta)
    if not np.any(target):
        return None
    cutoff = spec_s.cutoff
    outcome = 1 - delta
    bases = BASES if use_mismatch else ("X",)
    cons = []
    for i, spec in enumerate(specs):
        F, cls, dropped = source_factor(spec)
        for b in (0, 1):
            for alpha in bases:
                lo, hi = _envelope(obs.rate(i, b, alpha, outcome), infidelities[i], dropped)
                cons.append(Constraint(encoder(b, alpha, cutoff) @ F, cls, lo, hi))
    perm = swap_permutation(cutoff)
    relaxed = None
    tol = SWAP_MATCH_TOL * np.max(np.abs(target))
    if any(np.allclose(target[perm], sign * target, rtol=0, atol=tol) for sign in (1.0, -1.0)):
        relaxed = swap_relaxed(cons, perm)
    if relaxed is None:
        problem = reduced_problem(target, int(spec_s.sector[n]), cons, maximize=True)
    else:
        problem = reduced_problem(target, int(spec_s.sector[n]), relaxed, maximize=True, swap=perm)
    return solve_trace_sdp(problem, settings)


def tightest_numerator(
    specs: Sequence[SpectralData],
    obs: ObservedStats,
    n: int,
    delta: int,
    use_mismatch: bool,
    **kwargs,
) -> tuple[float, tuple[str, ...]]:
    """Certified t_delta clipped to [0, 1], with the solver statuses.

    With mismatched constraints the program is a restriction of the one
    without them, so both certificates bound its optimum and the smaller
    one is kept.  This makes the mismatch bound never worse in practice,
    not just up to solver accuracy.
    """
    runs = [phase_error_objective(specs, obs, n, delta, use_mismatch, **kwargs)]
    if use_mismatch and runs[0] is not None:
        runs.append(phase_error_objective(specs, obs, n, delta, False, **kwargs))
    if runs[0] is None:
        return 0.0, ()
    value = min(r.value for r in runs)
    return min(1.0, max(0.0, value)), tuple(r.status for r in runs)


def phase_error_numerator(
    specs: Sequence[SpectralData],
    obs: ObservedStats,
    n: int,
    delta: int,
    use_mismatch: bool,
    settings: SolverSettings | None = None,
) -> float:
    return tightest_numerator(specs, obs, n, delta, use_mismatch, settings=settings)[0]


def phase_error_upper_bound(t0: float, t1: float, fvec: float, y: float) -> float:
    """G_+(t0 + t1, F_vec) / Y, unclamped; 1 when Y = 0."""
    return phase_error_upper_bound_c(t0, t1, 1.0 - fvec, y)


def phase_error_upper_bound_c(t0: float, t1: float, cvec: float, y: float) -> float:
    if y <= 0:
        return 1.0
    return g_plus_c(t0 + t1, cvec) / y


def compute_bounds(
    specs: Sequence[SpectralData],
    obs: ObservedStats,
    use_mismatch: bool = True,
    settings: SolverSettings | None = None,
) -> BoundSet:
    """Yield and phase-error bounds for n = 0, 1 with ``specs`` ordered as (s, nu, omega)."""
    spec_s = specs[0]
    p_lower, ylow, eup, nums, objs, statuses = [], [], [], [], [], []
    notes = list(spec_s.notes)
    for n in (0, 1):
        cvec = spec_s.vector_infidelity[n]
        res = yield_objective(specs, obs, n, settings=settings)
        statuses.append(res.status)
        objs.append(res.value)
        y = g_minus_c(res.value, cvec)
        if cvec >= 1:
            notes.append(f"vector fidelity floor for n={n} is 0; yield bound is 0")
        t = []
        for delta in (0, 1):
            value, st = tightest_numerator(specs, obs, n, delta, use_mismatch, settings=settings)
            t.append(value)
            statuses.extend(st)
        p_lower.append(prob_lower_bound(spec_s, n))
        ylow.append(y)
        nums.append(tuple(t))
        eup.append(phase_error_upper_bound_c(t[0], t[1], cvec, y))
    return BoundSet(
        p_lower=tuple(p_lower),
        yield_lower=tuple(ylow),
        phase_error_upper=tuple(eup),
        numerators=tuple(nums),
        objectives=tuple(objs),
        statuses=tuple(statuses),
        notes=tuple(notes),
    )
