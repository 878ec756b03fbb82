"""Asymptotic key rate, intensity optimization, cutoff selection and loss sweeps."""

from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .channel import ChannelParams, observed_statistics
from .conic import SdpInfeasible, SolverFailure, SolverSettings
from .fock import source_spectrum
from .lp import LpInfeasible, lp_bounds
from .partial import PartialCharSpec, worst_case_search
from .phase import Kind, PhaseDistribution
from .sdp import compute_bounds

MODES = ("sdp_mismatch", "sdp_no_mismatch", "partial_char", "lp_baseline")
POLICIES = ("auto", "fixed", "optimize_s", "optimize_s_nu")
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
MIN_CUTOFF, MAX_CUTOFF, CUTOFF_STEP = 8, 40, 2
CUTOFF_RTOL = 5e-3
CUTOFF_S_POINTS = 12


def binary_entropy(x: float) -> float:
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"entropy argument {x} outside [0, 1]")
    if x == 0.0 or x == 1.0:
        return 0.0
    return float(-x * math.log2(x) - (1.0 - x) * math.log2(1.0 - x))


@dataclass(frozen=True)
class ScenarioConfig:
    source: PhaseDistribution
    mode: str = "sdp_mismatch"
    policy: str = "auto"
    intensities: tuple[float, float, float] | None = None
    nu_ratio: float = 0.2
    p_z: float = 1.0
    p_s: float = 1.0
    f_ec: float = 1.16
    p_d: float = 1e-8
    losses: tuple[float, ...] = ()
    cutoff: int | str = "auto"
    solver: SolverSettings = field(default_factory=SolverSettings)
    partial: PartialCharSpec | None = None
    seed: int = 0
    s_range: tuple[float, float] = (0.01, 1.5)
    s_points: int = 60
    refine_iters: int = 14
    nu_ratios: tuple[float, ...] = (0.05, 0.1, 0.15, 0.2, 0.3, 0.45, 0.6)
    label: str = ""

    @property
    def effective_policy(self) -> str:
        """``auto`` optimizes s alone for the SDP modes and (s, nu) for the LP baseline."""
        if self.policy != "auto":
            return self.policy
        return "optimize_s_nu" if self.mode == "lp_baseline" else "optimize_s"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.policy not in POLICIES:
            raise ValueError(f"unknown intensity policy {self.policy!r}; expected one of {POLICIES}")
        for name in ("p_z", "p_s"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if self.policy == "fixed" or self.intensities is not None:
            if self.intensities is None:
                raise ValueError("fixed policy needs intensities (s, nu, omega)")
            check_intensities(self.intensities)
        if not 0.0 < self.nu_ratio < 1.0:
            raise ValueError("nu_ratio must lie in (0, 1) so that s > nu")
        if self.mode in ("lp_baseline", "partial_char") and self.source.kind != Kind.DISCRETE_UNIFORM:
            raise ValueError(f"mode {self.mode} needs a discrete uniform source")
        if self.mode == "partial_char" and self.partial is None:
            raise ValueError("partial_char mode needs partial characterization parameters")
        if isinstance(self.cutoff, str) and self.cutoff != "auto":
            raise ValueError("cutoff must be an integer or 'auto'")
        if not isinstance(self.cutoff, str) and self.cutoff < 2:
            raise ValueError("cutoff must be at least 2")


def check_intensities(intensities) -> None:
    s, nu, omega = intensities
    if not s > nu > omega >= 0:
        raise ValueError(f"intensities must satisfy s > nu > omega >= 0, got {tuple(intensities)}")


@dataclass(frozen=True)
class KeyRatePoint:
    gamma_db: float
    intensities: tuple[float, float, float]
    rate: float
    p_lower: tuple[float, float]
    yield_lower: tuple[float, float]
    phase_error_upper: tuple[float, float]
    gain_z: float
    qber_z: float
    status: str = "ok"
    cutoff: int | None = None
    solver_statuses: tuple[str, ...] = ()
    wall_seconds: float = 0.0


def key_rate(bounds, obs, cfg: ScenarioConfig) -> float:
    """p_Z^2 p_s [sum_n p_n Y_n (1 - h(e_n)) - f Q h(E)], floored at 0."""
    total = 0.0
    for n in (0, 1):
        e = min(0.5, max(0.0, bounds.phase_error_upper[n]))
        total += bounds.p_lower[n] * bounds.yield_lower[n] * (1.0 - binary_entropy(e))
    q, e_z = float(obs.gain_z[0]), float(obs.qber_z[0])
    total -= cfg.f_ec * q * binary_entropy(min(1.0, max(0.0, e_z)))
    return max(0.0, cfg.p_z**2 * cfg.p_s * total)


def bounds_for(cfg: ScenarioConfig, gamma_db: float, intensities, cutoff: int):
    ch = ChannelParams(gamma_db, cfg.p_d)
    obs = observed_statistics(intensities, ch)
    if cfg.mode == "lp_baseline":
        return lp_bounds(intensities, cfg.source.n_phases, obs), obs, ()
    if cfg.mode == "partial_char":
        b = worst_case_search(cfg.partial, intensities, ch, cutoff, settings=cfg.solver)
        return b, obs, b.statuses
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        specs = [source_spectrum(float(m), cfg.source, cutoff) for m in intensities]
    b = compute_bounds(specs, obs, cfg.mode == "sdp_mismatch", cfg.solver)
    return b, obs, b.statuses


class _Evaluator:
    """Memoized R(intensities) at one loss and cutoff; records solver failures."""

    def __init__(self, cfg: ScenarioConfig, gamma_db: float, cutoff: int):
        self.cfg, self.gamma, self.cutoff = cfg, gamma_db, cutoff
        self.cache: dict[tuple[float, float, float], tuple] = {}
        self.errors: list[str] = []

    def __call__(self, intensities) -> float:
        key = tuple(float(x) for x in intensities)
        if key not in self.cache:
            try:
                b, obs, st = bounds_for(self.cfg, self.gamma, key, self.cutoff)
                self.cache[key] = (key_rate(b, obs, self.cfg), b, obs, st)
            except (SdpInfeasible, SolverFailure, LpInfeasible) as exc:
                self.errors.append(f"{type(exc).__name__} at {key}: {exc}")
                self.cache[key] = (-math.inf, None, None, ())
        return self.cache[key][0]

    def best(self):
        items = [(r, k) for k, (r, *_rest) in self.cache.items() if r > -math.inf]
        if not items:
            return None
        # highest rate, ties to the smaller s then smaller nu
        r, k = max(items, key=lambda t: (t[0], -t[1][0], -t[1][1]))
        return k


def _triple(cfg: ScenarioConfig, s: float, ratio: float | None = None) -> tuple[float, float, float]:
    return (float(s), float(s) * (cfg.nu_ratio if ratio is None else ratio), 0.0)


def _golden_refine(fn, lo: float, hi: float, iters: int) -> None:
    """Golden-section search on log s within [lo, hi]; evaluations are memoized by fn."""
    a, b = math.log(lo), math.log(hi)
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fn(math.exp(c)), fn(math.exp(d))
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fn(math.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fn(math.exp(d))


def optimize_intensity(cfg: ScenarioConfig, gamma_db: float, cutoff: int) -> tuple[tuple, float, _Evaluator]:
    ev = _Evaluator(cfg, gamma_db, cutoff)
    policy = cfg.effective_policy
    if policy == "fixed":
        ev(cfg.intensities)
        best = ev.best()
        return tuple(cfg.intensities), (ev.cache[best][0] if best else -math.inf), ev
    grid = np.geomspace(cfg.s_range[0], cfg.s_range[1], cfg.s_points)
    if policy == "optimize_s":
        rates = [ev(_triple(cfg, s)) for s in grid]
        i = int(np.argmax(rates))
        if rates[i] > 0 and cfg.refine_iters > 0:
            lo = grid[max(i - 1, 0)]
            hi = grid[min(i + 1, len(grid) - 1)]
            _golden_refine(lambda s: ev(_triple(cfg, s)), lo, hi, cfg.refine_iters)
    else:
        rates = {}
        for s in grid:
            for ratio in cfg.nu_ratios:
                rates[(s, ratio)] = ev(_triple(cfg, s, ratio))
        (s0, r0), top = max(rates.items(), key=lambda t: (t[1], -t[0][0], -t[0][1]))
        if top > 0 and cfg.refine_iters > 0:
            lo_s, hi_s = math.log(cfg.s_range[0]), math.log(cfg.s_range[1])

            def neg(x):
                s = math.exp(min(hi_s, max(lo_s, x[0])))
                ratio = 1.0 / (1.0 + math.exp(-x[1]))
                return -ev(_triple(cfg, s, ratio))

            x0 = [math.log(s0), math.log(r0 / (1.0 - r0))]
            minimize(neg, x0, method="Nelder-Mead",
                     options={"maxfev": 8 * cfg.refine_iters, "xatol": 1e-4, "fatol": 0.0})
    best = ev.best()
    if best is None:
        return _triple(cfg, grid[0]), -math.inf, ev
    return best, ev.cache[best][0], ev


def evaluate_point(cfg: ScenarioConfig, gamma_db: float, cutoff: int) -> KeyRatePoint:
    start = time.perf_counter()
    intensities, rate, ev = optimize_intensity(cfg, gamma_db, cutoff)
    wall = time.perf_counter() - start
    if rate == -math.inf:
        return KeyRatePoint(
            gamma_db, tuple(intensities), math.nan, (math.nan,) * 2, (math.nan,) * 2, (math.nan,) * 2,
            math.nan, math.nan, status="error: " + (ev.errors[-1] if ev.errors else "no evaluation"),
            cutoff=cutoff, wall_seconds=wall,
        )
    r, b, obs, st = ev.cache[tuple(intensities)]
    return KeyRatePoint(
        gamma_db=gamma_db,
        intensities=tuple(intensities),
        rate=r,
        p_lower=tuple(b.p_lower),
        yield_lower=tuple(b.yield_lower),
        phase_error_upper=tuple(b.phase_error_upper),
        gain_z=float(obs.gain_z[0]),
        qber_z=float(obs.qber_z[0]),
        status="ok" if not ev.errors else f"ok ({len(ev.errors)} failed evaluations)",
        cutoff=cutoff,
        solver_statuses=tuple(st),
        wall_seconds=wall,
    )


def choose_cutoff(cfg: ScenarioConfig) -> int:
    """Smallest M (from 8 in steps of 2) whose rate at the median loss moved by < 0.5%."""
    if not isinstance(cfg.cutoff, str):
        return int(cfg.cutoff)
    if cfg.mode == "lp_baseline":
        return MIN_CUTOFF
    gamma = float(np.median(cfg.losses)) if cfg.losses else 0.0
    # the stopping rule only needs the rate level, so a coarse search suffices
    probe = replace(cfg, s_points=min(cfg.s_points, CUTOFF_S_POINTS), refine_iters=min(cfg.refine_iters, 6))
    prev = max(0.0, optimize_intensity(probe, gamma, MIN_CUTOFF)[1])
    M = MIN_CUTOFF
    while M + CUTOFF_STEP <= MAX_CUTOFF:
        M += CUTOFF_STEP
        cur = max(0.0, optimize_intensity(probe, gamma, M)[1])
        if abs(cur - prev) <= CUTOFF_RTOL * max(abs(cur), abs(prev)):
            return M
        prev = cur
    warnings.warn(f"cutoff did not converge below M = {MAX_CUTOFF}", RuntimeWarning, stacklevel=2)
    return MAX_CUTOFF


def _point_task(args) -> KeyRatePoint:
    cfg, gamma, cutoff = args
    return evaluate_point(cfg, gamma, cutoff)


def run_curve(cfg: ScenarioConfig, jobs: int = 1) -> list[KeyRatePoint]:
    """Key-rate points in the order of ``cfg.losses``; output does not depend on ``jobs``."""
    cutoff = choose_cutoff(cfg)
    tasks = [(cfg, float(g), cutoff) for g in cfg.losses]
    if jobs <= 1 or len(tasks) <= 1:
        return [_point_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_point_task, tasks))


def with_mode(cfg: ScenarioConfig, mode: str) -> ScenarioConfig:
    return replace(cfg, mode=mode)
