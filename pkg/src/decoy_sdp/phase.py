"""Phase probability densities and their Fourier coefficients.

The source state depends on the phase density g(theta) only through

    c_k = integral_0^{2 pi} g(theta) exp(i k theta) d theta,

so every distribution here reduces to that functional.  Closed forms are
used for the uniform density and for equal-weight phase combs; truncated
Gaussian mixtures are integrated with an adaptive composite Gauss-Legendre
rule.  Point densities are only exposed for plotting and validation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import trapezoid

TWO_PI = 2.0 * math.pi

_GL_ORDER = 24
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(_GL_ORDER)
# beyond this many standard deviations the Gaussian mass is below 1e-31
_GAUSS_SUPPORT = 12.0


class QuadratureError(RuntimeError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (achieved residual {residual:.3e})")
        self.residual = residual


class Kind(str, enum.Enum):
    UNIFORM = "uniform"
    DISCRETE_UNIFORM = "discrete"
    PHASE_SET = "phase_set"
    TRUNCATED_GAUSSIAN_MIXTURE = "gaussian"
    TABULATED = "tabulated"


@dataclass(frozen=True)
class GaussianComponent:
    """One truncated Gaussian: mean, std and the window [lower, upper] (radians)."""

    center: float
    sigma: float
    lower: float
    upper: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not self.lower < self.center < self.upper:
            raise ValueError(
                f"window must satisfy lower < center < upper, got "
                f"({self.lower}, {self.center}, {self.upper})"
            )


@dataclass(frozen=True)
class PhaseDistribution:
    """Immutable description of a phase density on [0, 2 pi).

    Only the fields relevant to ``kind`` are populated.  Instances are
    hashable so Fourier coefficients and spectra can be memoized.
    """

    kind: Kind
    n_phases: int | None = None
    phases: tuple[float, ...] = ()
    components: tuple[GaussianComponent, ...] = ()
    grid: tuple[float, ...] = ()
    values: tuple[float, ...] = ()
    label: str = field(default="", compare=False)

    def fourier_coefficient(self, k: int) -> complex:
        return fourier_coefficient(self, k)

    def fourier_coefficients(self, kmax: int) -> np.ndarray:
        return fourier_coefficients(self, kmax)

    def density(self, theta):
        return density(self, theta)


def make_uniform() -> PhaseDistribution:
    return PhaseDistribution(Kind.UNIFORM, label="uniform")


def make_discrete(n_phases: int) -> PhaseDistribution:
    """Equal-weight Dirac comb at theta_k = 2 pi k / N."""
    if int(n_phases) != n_phases or n_phases < 1:
        raise ValueError(f"number of phases must be a positive integer, got {n_phases}")
    n_phases = int(n_phases)
    return PhaseDistribution(Kind.DISCRETE_UNIFORM, n_phases=n_phases, label=f"N{n_phases}")


def make_phase_set(phases) -> PhaseDistribution:
    """Equal-weight comb at arbitrary phases (used for partially known sources)."""
    phases = tuple(float(p) % TWO_PI for p in phases)
    if not phases:
        raise ValueError("phase set must contain at least one phase")
    return PhaseDistribution(Kind.PHASE_SET, n_phases=len(phases), phases=phases)


def make_truncated_gaussian_mixture(
    n_phases: int, sigma: float, truncation_halfwidth: float | None = None
) -> PhaseDistribution:
    """N truncated Gaussians of common width centered at 2 pi k / N.

    The window of every component is ``center +- truncation_halfwidth``;
    it defaults to three standard deviations.
    """
    if int(n_phases) != n_phases or n_phases < 1:
        raise ValueError(f"number of phases must be a positive integer, got {n_phases}")
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    half = 3.0 * sigma if truncation_halfwidth is None else float(truncation_halfwidth)
    if not half > 0:
        raise ValueError(f"truncation halfwidth must be positive, got {half}")
    n_phases = int(n_phases)
    comps = tuple(
        GaussianComponent(c, float(sigma), c - half, c + half)
        for c in (TWO_PI * k / n_phases for k in range(n_phases))
    )
    return PhaseDistribution(
        Kind.TRUNCATED_GAUSSIAN_MIXTURE,
        n_phases=n_phases,
        components=comps,
        label=f"N{n_phases}_sigma{sigma:g}",
    )


def make_gaussian_mixture(components) -> PhaseDistribution:
    """Equal-weight mixture of arbitrary truncated Gaussian components."""
    comps = tuple(
        c if isinstance(c, GaussianComponent) else GaussianComponent(*c) for c in components
    )
    if not comps:
        raise ValueError("mixture needs at least one component")
    return PhaseDistribution(
        Kind.TRUNCATED_GAUSSIAN_MIXTURE, n_phases=len(comps), components=comps
    )


def make_tabulated(theta, dens, *, norm_tol: float = 1e-6) -> PhaseDistribution:
    """Density sampled on a grid in [0, 2 pi); integrated with the periodic trapezoid rule."""
    theta = np.asarray(theta, dtype=float)
    dens = np.asarray(dens, dtype=float)
    if theta.ndim != 1 or theta.shape != dens.shape or theta.size < 2:
        raise ValueError("tabulated density needs matching 1-d theta and density arrays")
    if np.any(np.diff(theta) <= 0) or theta[0] < 0 or theta[-1] >= TWO_PI:
        raise ValueError("theta grid must be strictly increasing inside [0, 2 pi)")
    if np.any(dens < 0):
        raise ValueError("density must be nonnegative")
    total = _periodic_trapezoid(theta, dens.astype(complex), np.zeros(1))[0].real
    if abs(total - 1.0) > norm_tol:
        raise ValueError(f"tabulated density integrates to {total:.8f}, expected 1")
    return PhaseDistribution(
        Kind.TABULATED, grid=tuple(theta.tolist()), values=tuple(dens.tolist()), label="tabulated"
    )


def _periodic_trapezoid(theta: np.ndarray, dens: np.ndarray, ks: np.ndarray) -> np.ndarray:
    t = np.append(theta, theta[0] + TWO_PI)
    g = np.append(dens, dens[0])
    integrand = g[None, :] * np.exp(1j * np.outer(ks, t))
    return trapezoid(integrand, t, axis=1)


def _gl_panels(a: float, b: float, panels: int, func) -> np.ndarray:
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    w = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    return func(x) @ w


def adaptive_gauss_legendre(func, a: float, b: float, *, tol: float = 1e-12, max_panels: int = 1 << 14):
    """Integrate a vector-valued ``func(x) -> (m, len(x))`` over [a, b].

    Panels are doubled until two successive estimates agree to ``tol``.
    """
    panels = 1
    prev = _gl_panels(a, b, panels, func)
    while True:
        panels *= 2
        cur = _gl_panels(a, b, panels, func)
        residual = float(np.max(np.abs(cur - prev)))
        if residual <= tol:
            return cur
        if panels >= max_panels:
            raise QuadratureError("Gauss-Legendre quadrature did not converge", residual)
        prev = cur


def _component_coefficients(comp: GaussianComponent, ks: np.ndarray, centered: bool) -> np.ndarray:
    """Normalized coefficients of one truncated Gaussian; optionally about its own center."""
    lo = max(comp.lower - comp.center, -_GAUSS_SUPPORT * comp.sigma)
    hi = min(comp.upper - comp.center, _GAUSS_SUPPORT * comp.sigma)
    s = comp.sigma

    def f(x):
        gauss = np.exp(-0.5 * (x / s) ** 2)
        rows = np.exp(1j * np.outer(ks, x)) * gauss[None, :]
        return np.vstack([gauss[None, :].astype(complex), rows])

    vals = adaptive_gauss_legendre(f, lo, hi, tol=1e-14)
    coeffs = vals[1:] / vals[0].real
    if centered and lo == -hi:
        # an even integrand: the sine parts vanish exactly
        coeffs = coeffs.real.astype(complex)
    if not centered:
        coeffs = coeffs * np.exp(1j * ks * comp.center)
    return coeffs


def _comb(ks: np.ndarray, n: int) -> np.ndarray:
    return np.where(ks % n == 0, 1.0 + 0j, 0.0 + 0j)


def _shared_shape(dist: PhaseDistribution) -> bool:
    """True when all components are translates of one shape by 2 pi k / N."""
    comps = dist.components
    n = len(comps)
    shape = np.array([comps[0].sigma, comps[0].lower - comps[0].center, comps[0].upper - comps[0].center])
    return all(
        c.center == TWO_PI * k / n
        # offsets carry rounding from center +- halfwidth
        and np.allclose([c.sigma, c.lower - c.center, c.upper - c.center], shape, rtol=0, atol=1e-13)
        for k, c in enumerate(comps)
    )


@lru_cache(maxsize=4096)
def _coefficients_cached(dist: PhaseDistribution, kmax: int) -> np.ndarray:
    ks = np.arange(kmax + 1)
    if dist.kind is Kind.UNIFORM:
        out = np.zeros(kmax + 1, dtype=complex)
        out[0] = 1.0
    elif dist.kind is Kind.DISCRETE_UNIFORM:
        out = _comb(ks, dist.n_phases)
    elif dist.kind is Kind.PHASE_SET:
        out = np.exp(1j * np.outer(ks, dist.phases)).mean(axis=1)
    elif dist.kind is Kind.TRUNCATED_GAUSSIAN_MIXTURE:
        if _shared_shape(dist):
            # translates of one shape: c_k = comb_N(k) * shape_k, zeros exact
            out = _comb(ks, dist.n_phases) * _component_coefficients(dist.components[0], ks, True)
        else:
            out = sum(_component_coefficients(c, ks, False) for c in dist.components)
            out = out / len(dist.components)
        out[0] = 1.0
    elif dist.kind is Kind.TABULATED:
        theta = np.asarray(dist.grid)
        dens = np.asarray(dist.values, dtype=complex)
        raw = _periodic_trapezoid(theta, dens, np.concatenate([[0], ks]))
        out = raw[1:] / raw[0].real
        out[0] = 1.0
    else:  # pragma: no cover
        raise ValueError(f"unknown distribution kind {dist.kind}")
    out = np.asarray(out, dtype=complex)
    out.flags.writeable = False
    return out


def fourier_coefficients(dist: PhaseDistribution, kmax: int) -> np.ndarray:
    """Array ``c[k]`` for k = 0..kmax; negative orders follow from conjugation."""
    if kmax < 0:
        raise ValueError("kmax must be nonnegative")
    return _coefficients_cached(dist, int(kmax))


def fourier_coefficient(dist: PhaseDistribution, k: int) -> complex:
    k = int(k)
    c = fourier_coefficients(dist, abs(k))[abs(k)]
    return complex(c) if k >= 0 else complex(np.conj(c))


def symmetry_order(dist: PhaseDistribution, kmax: int) -> int:
    """Largest K such that c_k vanishes exactly unless K divides k, for 0 < k <= kmax.

    Returns ``kmax + 1`` when every c_k in range vanishes (uniform-like).
    """
    c = fourier_coefficients(dist, kmax)
    nonzero = [k for k in range(1, kmax + 1) if c[k] != 0]
    if not nonzero:
        return kmax + 1
    return math.gcd(*nonzero)


def density(dist: PhaseDistribution, theta):
    """Pointwise density (Dirac combs return NaN; they have no density)."""
    theta = np.mod(np.asarray(theta, dtype=float), TWO_PI)
    if dist.kind is Kind.UNIFORM:
        return np.full_like(theta, 1.0 / TWO_PI)
    if dist.kind in (Kind.DISCRETE_UNIFORM, Kind.PHASE_SET):
        return np.full_like(theta, np.nan)
    if dist.kind is Kind.TABULATED:
        grid = np.append(dist.grid, dist.grid[0] + TWO_PI)
        vals = np.append(dist.values, dist.values[0])
        return np.interp(theta, grid, vals)
    out = np.zeros_like(theta)
    for c in dist.components:
        norm = _window_mass(c)
        for shift in (-TWO_PI, 0.0, TWO_PI):
            x = theta + shift
            inside = (x > c.lower) & (x < c.upper)
            pdf = np.exp(-0.5 * ((x - c.center) / c.sigma) ** 2) / (c.sigma * math.sqrt(TWO_PI))
            out += np.where(inside, pdf / norm, 0.0)
    return out / len(dist.components)


def _window_mass(c: GaussianComponent) -> float:
    from scipy.special import ndtr

    return float(ndtr((c.upper - c.center) / c.sigma) - ndtr((c.lower - c.center) / c.sigma))
