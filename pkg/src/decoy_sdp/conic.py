"""Solver adapter for block-diagonal trace-constrained SDPs.

Problem form (all matrices real symmetric, one entry per diagonal block)::

    min / max   sum_r <C_r, L_r>
    s.t.        lo_i <= sum_r <A_ir, L_r> <= hi_i
                0 <= L_r <= I

Complex Hermitian data are handled by the real embedding
[[Re, -Im], [Im, Re]] with a factor 1/2 on every trace, which leaves the
optimal value unchanged.

The reported value is not the solver's primal objective.  Any multipliers
y_lo, y_hi >= 0 give the certificate

    min >= sum_i (y_lo_i lo_i - y_hi_i hi_i) + sum_r sum(negative eigenvalues of C_r - sum_i w_i A_ir),

with w = y_lo - y_hi, because min <Z, L> over 0 <= L <= I is the sum of
the negative eigenvalues of Z.  The bound is therefore valid whatever the
solver's accuracy; inaccuracy only loosens it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import clarabel
import numpy as np
import scipy.sparse as sp

# relative widening of every interval, absorbs rounding in the observed rates
INTERVAL_SLACK = 1e-13
ROW_SCALE_FLOOR = 1e-12
# relative interval width below which the solver sees an equality
EQUALITY_WIDTH = 1e-9
PARALLEL_TOL = 1e-12
ABS_GAP_FACTOR = 1e-6
# certificate retries when it trails the primal by more than this fraction
LOOSE_REL = 1e-6
MAX_ATTEMPTS = 3
ROW_SCALING = True
RESCALE_STEPS = (1e3, 1e-3)
# settings tried in turn when the solver panics on a near-singular step
PANIC_FALLBACKS = ({"static_regularization_constant": 1e-7}, {"equilibrate_enable": False})


class SdpInfeasible(RuntimeError):
    """The relaxed program has no feasible point (inconsistent data or too small a cutoff)."""


class SolverFailure(RuntimeError):
    """The conic solver returned no usable multipliers."""


@dataclass(frozen=True)
class SolverSettings:
    feasibility_tol: float = 1e-9
    gap_tol: float = 1e-8
    max_iter: int = 200


@dataclass
class TraceSDP:
    objective: list[np.ndarray]
    constraints: list[list[np.ndarray]]
    lower: np.ndarray
    upper: np.ndarray
    maximize: bool = False


@dataclass(frozen=True)
class SdpResult:
    value: float
    primal: float
    status: str
    multipliers: np.ndarray = field(repr=False)

    @property
    def gap(self) -> float:
        return abs(self.value - self.primal)


def realify(mat: np.ndarray) -> np.ndarray:
    """Real embedding of a Hermitian matrix, scaled so traces are preserved."""
    if not np.iscomplexobj(mat):
        return mat
    re, im = mat.real, mat.imag
    return 0.5 * np.block([[re, -im], [im, re]])


@lru_cache(maxsize=None)
def _svec_index(d: int):
    rows, cols = [], []
    for j in range(d):
        for i in range(j + 1):
            rows.append(i)
            cols.append(j)
    rows, cols = np.array(rows), np.array(cols)
    scale = np.where(rows == cols, 1.0, np.sqrt(2.0))
    return rows, cols, scale


def svec(mat: np.ndarray) -> np.ndarray:
    rows, cols, scale = _svec_index(mat.shape[0])
    return mat[rows, cols] * scale


def _negative_eig_sum(mat: np.ndarray) -> float:
    w = np.linalg.eigvalsh(mat)
    return float(w[w < 0].sum())


def widen(lower, upper) -> tuple[np.ndarray, np.ndarray]:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    return lower - INTERVAL_SLACK * np.abs(lower), upper + INTERVAL_SLACK * np.abs(upper)


def certificate(problem: TraceSDP, y_lo: np.ndarray, y_hi: np.ndarray) -> float:
    """Certified bound in the problem's own sense (lower for min, upper for max)."""
    sign = -1.0 if problem.maximize else 1.0
    y_lo = np.clip(y_lo, 0.0, None)
    y_hi = np.clip(y_hi, 0.0, None)
    lo, hi = widen(problem.lower, problem.upper)
    w = y_lo - y_hi
    total = float(y_lo @ lo - y_hi @ hi)
    for r, C in enumerate(problem.objective):
        Z = sign * C - sum(w[i] * A[r] for i, A in enumerate(problem.constraints))
        total += _negative_eig_sum(Z)
    return sign * total


def _merge_parallel(rows: np.ndarray, lo: np.ndarray, hi: np.ndarray):
    """Collapse parallel rows into unit rows with intersected intervals.

    Returns (unit rows, lo, hi, lo_source, hi_source) where the sources give,
    per merged row, the original row attaining the binding end and its norm.
    """
    norms = np.linalg.norm(rows, axis=1)
    units = rows / np.where(norms > 0, norms, 1.0)[:, None]
    groups: list[list[int]] = []
    for i in range(len(rows)):
        for g in groups:
            if units[g[0]] @ units[i] >= 1.0 - PARALLEL_TOL:
                g.append(i)
                break
        else:
            groups.append([i])
    out_lo, out_hi, lo_src, hi_src = [], [], [], []
    for g in groups:
        l = lo[g] / norms[g]
        h = hi[g] / norms[g]
        a, b = int(np.argmax(l)), int(np.argmin(h))
        lo_src.append(g[a])
        hi_src.append(g[b])
        out_lo.append(l[a])
        out_hi.append(h[b])
    out_lo, out_hi = np.array(out_lo), np.array(out_hi)
    # rounding can leave parallel intervals disjoint by a hair; meet in the middle
    bad = out_lo > out_hi
    out_lo[bad] = out_hi[bad] = 0.5 * (out_lo[bad] + out_hi[bad])
    reps = [g[0] for g in groups]
    return units[reps], out_lo, out_hi, np.array(lo_src), np.array(hi_src), norms


def solve_trace_sdp(problem: TraceSDP, settings: SolverSettings | None = None) -> SdpResult:
    """Solve and return the tightest certificate over a few objective scalings.

    Interior-point accuracy is relative to the scale of the objective, so a
    loose first certificate is retried with the objective rescaled by the
    primal estimate.  Every attempt yields a valid bound; the best is kept.
    """
    settings = settings or SolverSettings()
    blocks = [C.shape[0] for C in problem.objective]
    sizes = [d * (d + 1) // 2 for d in blocks]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    nvar = int(offsets[-1])
    m_orig = len(problem.constraints)

    sign = -1.0 if problem.maximize else 1.0
    q = np.concatenate([svec(C) for C in problem.objective]) * sign

    raw = np.zeros((m_orig, nvar))
    for i, As in enumerate(problem.constraints):
        for r, A in enumerate(As):
            raw[i, offsets[r] : offsets[r + 1]] = svec(A)
    keep = np.linalg.norm(raw, axis=1) > 0
    wlo, whi = widen(problem.lower, problem.upper)
    if np.any(~keep & ((wlo > 0) | (whi < 0))):
        raise SdpInfeasible("a constraint with a zero operator excludes zero")
    idx = np.flatnonzero(keep)
    a_rows, lo, hi, lo_src, hi_src, norms = _merge_parallel(
        raw[idx], np.asarray(problem.lower, float)[idx], np.asarray(problem.upper, float)[idx]
    )
    m = len(a_rows)
    # rates span many decades; give every interval an O(1) right-hand side
    row_scale = 1.0 / np.maximum(np.abs(hi), ROW_SCALE_FLOOR) if ROW_SCALING else np.ones(m)
    a_rows = a_rows * row_scale[:, None]
    lo, hi = lo * row_scale, hi * row_scale
    # intervals thinner than the solver tolerance have no usable interior
    eq = (hi - lo) <= EQUALITY_WIDTH
    ineq = ~eq
    n_eq, n_in = int(eq.sum()), int(ineq.sum())

    mats = [sp.csc_matrix(a_rows[eq]), sp.csc_matrix(a_rows[ineq]), sp.csc_matrix(-a_rows[ineq])]
    rhs = [0.5 * (lo[eq] + hi[eq]), hi[ineq], -lo[ineq]]
    cones = []
    if n_eq:
        cones.append(clarabel.ZeroConeT(n_eq))
    if n_in:
        cones.append(clarabel.NonnegativeConeT(2 * n_in))
    for r, d in enumerate(blocks):
        sel = sp.csc_matrix(
            (np.ones(sizes[r]), (np.arange(sizes[r]), offsets[r] + np.arange(sizes[r]))),
            shape=(sizes[r], nvar),
        )
        mats += [-sel, sel]
        rhs += [np.zeros(sizes[r]), svec(np.eye(d))]
        cones += [clarabel.PSDTriangleConeT(d), clarabel.PSDTriangleConeT(d)]
    A = sp.vstack(mats).tocsc()
    b = np.concatenate(rhs)
    P = sp.csc_matrix((nvar, nvar))

    opts = clarabel.DefaultSettings()
    opts.verbose = False
    opts.tol_feas = settings.feasibility_tol
    # objectives can be as small as the dark-count rate, so the gap test is relative
    opts.tol_gap_abs = settings.gap_tol * ABS_GAP_FACTOR
    opts.tol_gap_rel = settings.gap_tol
    opts.max_iter = settings.max_iter

    def attempt(scale: float) -> SdpResult:
        sol = _solve_with_fallbacks(P, q / scale, A, b, cones, opts)
        status = str(sol.status)
        if "Infeasible" in status and "Dual" not in status:
            raise SdpInfeasible(f"relaxed SDP is infeasible (solver status {status})")
        z = np.asarray(sol.z, dtype=float)
        if not np.all(np.isfinite(z[: n_eq + 2 * n_in])):
            raise SolverFailure(f"solver returned non-finite multipliers (status {status})")
        # w multiplies <unit row, L> in the min-form Lagrangian
        w = np.zeros(m)
        w[eq] = -z[:n_eq]
        w[ineq] = z[n_eq + n_in : n_eq + 2 * n_in] - z[n_eq : n_eq + n_in]
        w *= row_scale * scale
        y_lo = np.zeros(m_orig)
        y_hi = np.zeros(m_orig)
        pos = w > 0
        y_lo[idx[lo_src[pos]]] = w[pos] / norms[lo_src[pos]]
        y_hi[idx[hi_src[~pos]]] = -w[~pos] / norms[hi_src[~pos]]
        value = certificate(problem, y_lo, y_hi)
        x = np.asarray(sol.x, dtype=float)
        primal = float(sign * q @ x) if np.all(np.isfinite(x)) else float("nan")
        return SdpResult(value=value, primal=primal, status=status, multipliers=y_lo - y_hi)

    best = attempt(max(float(np.max(np.abs(q))), 1e-300))
    tried = 1
    while tried < MAX_ATTEMPTS and _loose(best):
        estimate = abs(best.primal)
        if not np.isfinite(estimate) or estimate <= 0:
            break
        res = attempt(estimate * RESCALE_STEPS[tried - 1])
        tried += 1
        if sign * res.value > sign * best.value or not np.isfinite(best.value):
            best = res
    return best


def _solve_with_fallbacks(P, q, A, b, cones, opts):
    """Solve, retrying with the ``PANIC_FALLBACKS`` settings when the solver aborts.

    The certificate is rebuilt from the multipliers, so any settings that
    return finite multipliers give a valid bound.
    """
    for tweak in ({}, *PANIC_FALLBACKS):
        saved = {k: getattr(opts, k) for k in tweak}
        for k, v in tweak.items():
            setattr(opts, k, v)
        try:
            return clarabel.DefaultSolver(P, q, A, b, cones, opts).solve()
        except (KeyboardInterrupt, SystemExit, GeneratorExit):
            raise
        except BaseException as exc:  # Rust panics surface as BaseException subclasses
            error = exc
        finally:
            for k, v in saved.items():
                setattr(opts, k, v)
    raise SolverFailure(f"solver aborted: {type(error).__name__}: {error}")


def _loose(res: SdpResult) -> bool:
    if not np.isfinite(res.value) or not np.isfinite(res.primal):
        return True
    return abs(res.value - res.primal) > LOOSE_REL * max(abs(res.value), abs(res.primal))
