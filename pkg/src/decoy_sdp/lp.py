"""Linear-programming baseline for ideal discrete phase randomization.

Alice's source is purified with an N-outcome coin; outcome j leaves the
unnormalized state |beta_j> = sum_l sqrt(mu)^(lN+j) / sqrt((lN+j)!) |lN+j>.
Yields of the normalized |beta_j> states are bounded by LPs that couple
intensities through state overlaps, and phase errors follow from X-basis
bit errors through the basis-dependence bound.  No photon cutoff enters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import linprog

SERIES_RTOL = 1e-16
MAX_TERMS = 100_000
LP_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


def _series(n_phases: int, j: int, log_term) -> float:
    """sum_l exp(log_term(k)) over k = lN + j, stopped once terms are negligible."""
    total = 0.0
    prev = 0.0
    for l in range(MAX_TERMS):
        k = l * n_phases + j
        lt = log_term(k)
        if lt == -math.inf:
            if l > 0:
                break
            continue
        term = math.exp(lt)
        total += term
        # past the peak the terms fall faster than geometrically
        if term <= SERIES_RTOL * total and term < prev:
            break
        prev = term
    return total


def _log_weight(mu: float):
    if mu == 0:
        return lambda k: 0.0 if k == 0 else -math.inf
    lm = math.log(mu)
    return lambda k: k * lm - math.lgamma(k + 1)


@lru_cache(maxsize=4096)
def pj_probability(mu: float, n_phases: int, j: int) -> float:
    """P_j = exp(-mu) sum_l mu^(lN+j) / (lN+j)!."""
    if not 0 <= j < n_phases:
        raise ValueError("j must satisfy 0 <= j < N")
    if mu == 0:
        return 1.0 if j == 0 else 0.0
    lm = math.log(mu)
    return _series(n_phases, j, lambda k: k * lm - math.lgamma(k + 1) - mu)


def _basis_overlap(k: int) -> float:
    return 2.0 ** (-k / 2.0) * (math.cos(k * math.pi / 4.0) + math.sin(k * math.pi / 4.0))


@lru_cache(maxsize=4096)
def fidelity_fj(mu: float, n_phases: int, j: int) -> float:
    """Lower bound on the Z/X fidelity of the normalized |beta_j> states."""
    if not 0 <= j < n_phases:
        raise ValueError("j must satisfy 0 <= j < N")
    if mu == 0:
        return abs(_basis_overlap(j))
    lw = _log_weight(mu)
    num = 0.0
    den = 0.0
    prev = 0.0
    for l in range(MAX_TERMS):
        k = l * n_phases + j
        w = math.exp(lw(k))
        num += w * _basis_overlap(k)
        den += w
        if w <= SERIES_RTOL * den and w < prev:
            break
        prev = w
    return min(1.0, abs(num / den))


@lru_cache(maxsize=4096)
def cross_intensity_fidelity(mu: float, gamma: float, n_phases: int, j: int = 0) -> float:
    """<beta_j^mu|beta_j^gamma> between normalized states; j = 0 is the usual definition."""
    if mu == gamma:
        return 1.0
    a, b = _log_weight(mu), _log_weight(gamma)
    num = _series(n_phases, j, lambda k: 0.5 * (a(k) + b(k)))
    da = _series(n_phases, j, a)
    db = _series(n_phases, j, b)
    if da == 0 or db == 0:
        return 0.0
    return min(1.0, num / math.sqrt(da * db))


@dataclass(frozen=True)
class DiscreteSourceData:
    n_phases: int
    intensities: tuple[float, ...]
    probabilities: np.ndarray
    basis_fidelity: np.ndarray
    cross: np.ndarray

    @classmethod
    def build(cls, intensities, n_phases: int) -> "DiscreteSourceData":
        mus = tuple(float(m) for m in intensities)
        k, N = len(mus), n_phases
        P = np.array([[pj_probability(m, N, j) for j in range(N)] for m in mus])
        F = np.array([[fidelity_fj(m, N, j) for j in range(N)] for m in mus])
        X = np.ones((k, k, N))
        for a in range(k):
            for b in range(k):
                if a != b:
                    X[a, b] = [cross_intensity_fidelity(mus[a], mus[b], N, j) for j in range(N)]
        return cls(N, mus, P, F, X)


class LpInfeasible(RuntimeError):
    pass


def _bound_lp(src: DiscreteSourceData, rhs, target: int, maximize: bool) -> float:
    """Extremize x_{target, s} s.t. rhs_mu = sum_j P_j x_{j,mu}, |x_{j,mu} - x_{j,g}| <= sqrt(1 - F^2)."""
    P = src.probabilities
    k, N = P.shape
    # variables only where the state exists
    var = {(i, j): None for i in range(k) for j in range(N) if P[i, j] > 0}
    for n, key in enumerate(var):
        var[key] = n
    if (0, target) not in var:
        return 0.0 if not maximize else 1.0
    nv = len(var)
    A_eq = np.zeros((k, nv))
    for (i, j), n in var.items():
        A_eq[i, n] = P[i, j]
    A_ub, b_ub = [], []
    for j in range(N):
        for a in range(k):
            for b in range(a + 1, k):
                if (a, j) in var and (b, j) in var:
                    slack = math.sqrt(max(0.0, 1.0 - src.cross[a, b, j] ** 2))
                    row = np.zeros(nv)
                    row[var[a, j]], row[var[b, j]] = 1.0, -1.0
                    A_ub += [row, -row]
                    b_ub += [slack, slack]
    c = np.zeros(nv)
    c[var[0, target]] = -1.0 if maximize else 1.0
    res = linprog(
        c,
        A_ub=np.array(A_ub) if A_ub else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=A_eq,
        b_eq=np.asarray(rhs, dtype=float),
        bounds=[(0.0, 1.0)] * nv,
        method="highs",
        options=LP_OPTIONS,
    )
    if res.status == 2:
        raise LpInfeasible("decoy LP is infeasible")
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    return float(np.clip(-res.fun if maximize else res.fun, 0.0, 1.0))


def yield_lp(src: DiscreteSourceData, gains, target: int) -> float:
    """Lower bound on the yield of |beta_target> at the signal intensity."""
    return _bound_lp(src, gains, target, maximize=False)


def error_product_lp(src: DiscreteSourceData, error_gains, target: int) -> float:
    """Upper bound on xi = e^b Y for |beta_target> at the signal intensity."""
    return _bound_lp(src, error_gains, target, maximize=True)


def bit_error_lp(src: DiscreteSourceData, error_gains, x_gains, target: int) -> float:
    """xi* / Y^{X,L}; 1 when the X-basis yield bound vanishes."""
    y = yield_lp(src, x_gains, target)
    if y <= 0:
        return 1.0
    return error_product_lp(src, error_gains, target) / y


def basis_dependence(f_j: float, y_low: float) -> float:
    if f_j >= 1.0:
        return 0.0
    if y_low <= 0:
        return math.inf
    return (1.0 - f_j) / (2.0 * y_low)


def phase_error_gllp(e_bit: float, delta: float) -> float:
    """Phase error from X-basis bit error e_bit and basis dependence delta; 1/2 when vacuous."""
    if not (0.0 <= delta <= 0.5) or not (0.0 <= e_bit <= 0.5):
        return 0.5
    d = delta * (1.0 - delta)
    value = e_bit + 4.0 * d * (1.0 - 2.0 * e_bit) + 4.0 * (1.0 - 2.0 * delta) * math.sqrt(
        d * e_bit * (1.0 - e_bit)
    )
    return min(0.5, value)


@dataclass(frozen=True)
class LpBounds:
    p_lower: tuple[float, float]
    yield_lower: tuple[float, float]
    phase_error_upper: tuple[float, float]
    bit_error_upper: tuple[float, float]
    basis_dependence: tuple[float, float]


def lp_bounds(intensities, n_phases: int, obs) -> LpBounds:
    """Yield and phase-error bounds for j = 0, 1 from observed statistics."""
    src = DiscreteSourceData.build(intensities, n_phases)
    gz = np.asarray(obs.gain_z)
    gx = np.asarray(obs.gain_x)
    ex = np.asarray(obs.qber_x) * gx
    p, y, e, eb, dl = [], [], [], [], []
    for j in (0, 1):
        if j >= n_phases:
            p.append(0.0)
            y.append(0.0)
            e.append(0.5)
            eb.append(1.0)
            dl.append(math.inf)
            continue
        yz = yield_lp(src, gz, j)
        ebit = bit_error_lp(src, ex, gx, j)
        delta = basis_dependence(float(src.basis_fidelity[0, j]), yz)
        p.append(float(src.probabilities[0, j]))
        y.append(yz)
        eb.append(ebit)
        dl.append(delta)
        e.append(phase_error_gllp(ebit, delta))
    return LpBounds(tuple(p), tuple(y), tuple(e), tuple(eb), tuple(dl))
