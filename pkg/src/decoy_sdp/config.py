"""TOML scenario files.

Sections and keys::

    [source]      kind, N, sigma, truncation, phases, theta, density, label
    [channel]     p_d
    [protocol]    p_z, p_s, f, policy, intensities, nu_ratio, nu_ratios,
                  s_min, s_max, s_points, refine_iters
    [estimation]  mode, cutoff, feasibility_tol, gap_tol, max_iter,
                  delta_max, grid_points, mc_samples, allow_wide
    [sweep]       losses | (loss_start, loss_stop, loss_step), seed

A list given for one of ``SERIES_KEYS`` expands into one series per value
(cartesian product over all such keys).
"""

from __future__ import annotations

import hashlib
import itertools
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .conic import SolverSettings
from .keyrate import MODES, POLICIES, ScenarioConfig, check_intensities
from .partial import PartialCharSpec
from .phase import (
    make_discrete,
    make_phase_set,
    make_tabulated,
    make_truncated_gaussian_mixture,
    make_uniform,
)

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

SCHEMA = {
    "source": {"kind", "N", "sigma", "truncation", "phases", "theta", "density", "label"},
    "channel": {"p_d"},
    "protocol": {
        "p_z", "p_s", "f", "policy", "intensities", "nu_ratio", "nu_ratios",
        "s_min", "s_max", "s_points", "refine_iters",
    },
    "estimation": {
        "mode", "cutoff", "feasibility_tol", "gap_tol", "max_iter",
        "delta_max", "grid_points", "mc_samples", "allow_wide",
    },
    "sweep": {"losses", "loss_start", "loss_stop", "loss_step", "seed"},
}
SERIES_KEYS = {("source", "N"), ("source", "sigma"), ("estimation", "mode"), ("estimation", "delta_max")}
SOURCE_KINDS = ("discrete", "uniform", "gaussian", "phase_set", "tabulated")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Series:
    label: str
    table: dict
    config: ScenarioConfig

    @property
    def digest(self) -> str:
        return config_hash(self.table)


def config_hash(table: dict) -> str:
    """SHA-256 of a key-sorted JSON dump, so key order in the file does not matter."""
    blob = json.dumps(table, sort_keys=True, separators=(",", ":"), default=float)
    return hashlib.sha256(blob.encode()).hexdigest()


def _check_keys(raw: dict) -> None:
    for section, body in raw.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key in body:
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in [{section}]")


def _expand(raw: dict) -> list[dict]:
    axes = []
    for section, key in sorted(SERIES_KEYS):
        value = raw.get(section, {}).get(key)
        if isinstance(value, list):
            if not value:
                raise ConfigError(f"'{section}.{key}' is an empty list")
            axes.append(((section, key), value))
    tables = []
    for combo in itertools.product(*(values for _, values in axes)):
        table = {s: dict(body) for s, body in raw.items()}
        for ((section, key), _), value in zip(axes, combo):
            table[section][key] = value
        tables.append(table)
    return tables


def _label(table: dict, raw: dict) -> str:
    parts = []
    for section, key in sorted(SERIES_KEYS):
        if isinstance(raw.get(section, {}).get(key), list):
            parts.append(f"{key}={table[section][key]}")
    src = table.get("source", {})
    base = src.get("label") or src.get("kind", "discrete")
    return "_".join([str(base), *parts]) if parts else str(base)


def _get(table: dict, section: str, key: str, default=None, kind=None):
    value = table.get(section, {}).get(key, default)
    if kind is not None and value is not None:
        try:
            if kind is int and (isinstance(value, bool) or float(value) != int(value)):
                raise ValueError
            value = kind(value)
        except (TypeError, ValueError):
            raise ConfigError(f"'{section}.{key}' must be of type {kind.__name__}, got {value!r}") from None
    return value


def _source(table: dict):
    kind = _get(table, "source", "kind", "discrete")
    if kind not in SOURCE_KINDS:
        raise ConfigError(f"'source.kind' must be one of {SOURCE_KINDS}, got {kind!r}")
    try:
        if kind == "uniform":
            return make_uniform()
        if kind == "phase_set":
            phases = _get(table, "source", "phases")
            if not phases:
                raise ConfigError("'source.phases' is required for kind = 'phase_set'")
            return make_phase_set(tuple(float(p) for p in phases))
        if kind == "tabulated":
            theta = _get(table, "source", "theta")
            dens = _get(table, "source", "density")
            if theta is None or dens is None:
                raise ConfigError("'source.theta' and 'source.density' are required for kind = 'tabulated'")
            return make_tabulated(np.asarray(theta, float), np.asarray(dens, float))
        n = _get(table, "source", "N", None, int)
        if n is None:
            raise ConfigError(f"'source.N' is required for kind = {kind!r}")
        if kind == "discrete":
            return make_discrete(n)
        sigma = _get(table, "source", "sigma", None, float)
        if sigma is None:
            raise ConfigError("'source.sigma' is required for kind = 'gaussian'")
        trunc = _get(table, "source", "truncation", None, float)
        return make_truncated_gaussian_mixture(n, sigma, trunc)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[source]: {exc}") from None


def _losses(table: dict) -> tuple[float, ...]:
    sweep = table.get("sweep", {})
    if "losses" in sweep:
        if any(k in sweep for k in ("loss_start", "loss_stop", "loss_step")):
            raise ConfigError("'sweep.losses' cannot be combined with loss_start/loss_stop/loss_step")
        losses = sweep["losses"]
        if not isinstance(losses, list):
            losses = [losses]
        out = tuple(float(g) for g in losses)
    elif "loss_start" in sweep or "loss_stop" in sweep:
        start = _get(table, "sweep", "loss_start", 0.0, float)
        stop = _get(table, "sweep", "loss_stop", None, float)
        step = _get(table, "sweep", "loss_step", 5.0, float)
        if stop is None or step <= 0 or stop < start:
            raise ConfigError("'sweep.loss_stop' must be >= loss_start and 'sweep.loss_step' positive")
        count = int(np.floor((stop - start) / step + 1e-9)) + 1
        out = tuple(float(start + k * step) for k in range(count))
    else:
        raise ConfigError("[sweep] needs 'losses' or a loss_start/loss_stop/loss_step range")
    if any(g < 0 for g in out):
        raise ConfigError("'sweep.losses' must be nonnegative dB values")
    return out


def build_config(table: dict, label: str = "", seed: int | None = None) -> ScenarioConfig:
    dist = _source(table)
    mode = _get(table, "estimation", "mode", "sdp_mismatch")
    if mode not in MODES:
        raise ConfigError(f"'estimation.mode' must be one of {MODES}, got {mode!r}")
    policy = _get(table, "protocol", "policy", "auto")
    if policy not in POLICIES:
        raise ConfigError(f"'protocol.policy' must be one of {POLICIES}, got {policy!r}")
    intensities = _get(table, "protocol", "intensities")
    if intensities is not None:
        if not isinstance(intensities, list) or len(intensities) != 3:
            raise ConfigError("'protocol.intensities' must be a list [s, nu, omega]")
        intensities = tuple(float(x) for x in intensities)
        try:
            check_intensities(intensities)
        except ValueError:
            raise ConfigError(
                f"'protocol.intensities' = {list(intensities)} violates the ordering s > nu > omega >= 0"
            ) from None
        if policy == "auto":
            policy = "fixed"
    nu_ratio = _get(table, "protocol", "nu_ratio", 0.2, float)
    if not 0 < nu_ratio < 1:
        raise ConfigError(f"'protocol.nu_ratio' = {nu_ratio} violates the ordering s > nu > omega >= 0")
    cutoff = _get(table, "estimation", "cutoff", "auto")
    if cutoff != "auto":
        cutoff = _get(table, "estimation", "cutoff", None, int)
    seed = _get(table, "sweep", "seed", 0, int) if seed is None else int(seed)
    partial = None
    if mode == "partial_char":
        if dist.n_phases is None or _get(table, "source", "kind", "discrete") != "discrete":
            raise ConfigError("'estimation.mode' = 'partial_char' needs source.kind = 'discrete'")
        try:
            partial = PartialCharSpec(
                n_phases=dist.n_phases,
                delta_max=_get(table, "estimation", "delta_max", 0.0, float),
                grid_points=_get(table, "estimation", "grid_points", 5, int),
                mc_samples=_get(table, "estimation", "mc_samples", 200, int),
                seed=seed,
                allow_wide=bool(_get(table, "estimation", "allow_wide", False)),
            )
        except ValueError as exc:
            raise ConfigError(f"'estimation.delta_max': {exc}") from None
    elif "delta_max" in table.get("estimation", {}):
        raise ConfigError("'estimation.delta_max' only applies to mode = 'partial_char'")
    nu_ratios = _get(table, "protocol", "nu_ratios")
    solver = SolverSettings(
        feasibility_tol=_get(table, "estimation", "feasibility_tol", 1e-9, float),
        gap_tol=_get(table, "estimation", "gap_tol", 1e-8, float),
        max_iter=_get(table, "estimation", "max_iter", 200, int),
    )
    kwargs = dict(
        source=dist,
        mode=mode,
        policy=policy,
        intensities=intensities,
        nu_ratio=nu_ratio,
        p_z=_get(table, "protocol", "p_z", 1.0, float),
        p_s=_get(table, "protocol", "p_s", 1.0, float),
        f_ec=_get(table, "protocol", "f", 1.16, float),
        p_d=_get(table, "channel", "p_d", 1e-8, float),
        losses=_losses(table),
        cutoff=cutoff,
        solver=solver,
        partial=partial,
        seed=seed,
        s_range=(_get(table, "protocol", "s_min", 0.01, float), _get(table, "protocol", "s_max", 1.5, float)),
        s_points=_get(table, "protocol", "s_points", 60, int),
        refine_iters=_get(table, "protocol", "refine_iters", 14, int),
        label=label,
    )
    if nu_ratios is not None:
        kwargs["nu_ratios"] = tuple(float(r) for r in nu_ratios)
    try:
        return ScenarioConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_series(path, *, mode: str | None = None, seed: int | None = None) -> list[Series]:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    _check_keys(raw)
    if mode is not None:
        raw.setdefault("estimation", {})["mode"] = mode
    if seed is not None:
        raw.setdefault("sweep", {})["seed"] = int(seed)
    out = []
    labels = set()
    for table in _expand(raw):
        label = _label(table, raw)
        if label in labels:
            raise ConfigError(f"duplicate series label {label!r}; set distinct source.label values")
        labels.add(label)
        out.append(Series(label, table, build_config(table, label)))
    return out


def parse_config(path) -> list[ScenarioConfig]:
    """Validated scenarios, one per series of the file."""
    return [s.config for s in load_series(path)]


def cache_key(series: Series) -> str:
    return hashlib.sha256(f"{series.digest}:{__version__}".encode()).hexdigest()[:32]
