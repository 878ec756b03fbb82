"""Command-line runner: ``decoy-sdp run <config>`` and ``decoy-sdp compare <a> <b>``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from pathlib import Path

from . import __version__
from .config import ConfigError, cache_key, config_hash, load_series
from .keyrate import MODES, KeyRatePoint, run_curve

CSV_HEADER = ("gamma_db", "s", "nu", "omega", "R", "Y0L", "Y1L", "e0U", "e1U", "p0L", "p1L", "QZ", "EZ", "status")
CACHE_ENV = "DECOY_SDP_CACHE"
COMPARE_TOL = 1e-9

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO, EXIT_ORDER = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _row(p: KeyRatePoint) -> list[str]:
    values = (
        p.gamma_db, *p.intensities, p.rate,
        *p.yield_lower, *p.phase_error_upper, *p.p_lower,
        p.gain_z, p.qber_z,
    )
    return [repr(float(v)) for v in values] + [p.status.replace(",", ";").replace("\n", " ")]


def csv_text(points) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for p in points:
        writer.writerow(_row(p))
    return buf.getvalue()


def emit_csv(points, path) -> None:
    path = Path(path)
    try:
        with path.open("w", encoding="ascii", newline="") as fh:
            fh.write(csv_text(points))
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def read_csv(path) -> list[dict]:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror or exc}") from exc
    if rows and set(CSV_HEADER) - set(rows[0]):
        raise ValueError(f"{path} lacks the columns {sorted(set(CSV_HEADER) - set(rows[0]))}")
    return rows


def compare(path_a, path_b, tol: float = COMPARE_TOL) -> list[str]:
    """Violations of R_A >= R_B - tol at common loss values."""
    a = {float(r["gamma_db"]): float(r["R"]) for r in read_csv(path_a)}
    b = {float(r["gamma_db"]): float(r["R"]) for r in read_csv(path_b)}
    common = sorted(set(a) & set(b))
    if not common:
        raise ValueError("the two files share no loss values")
    out = []
    for g in common:
        ra, rb = a[g], b[g]
        if math.isnan(ra) or math.isnan(rb) or ra < rb - tol:
            out.append(f"gamma_db={g!r}: R_A={ra!r} < R_B={rb!r}")
    return out


def _cache_path(cache_dir: Path | None, series) -> Path | None:
    if cache_dir is None:
        return None
    return cache_dir / f"{cache_key(series)}.csv"


def _run(args) -> int:
    try:
        series = load_series(args.config, mode=args.mode, seed=args.seed)
    except OSError as exc:
        print(f"error: cannot read {args.config}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out)
    cache_dir = Path(args.cache) if args.cache else None
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        if cache_dir is not None:
            cache_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO

    manifest = {
        "config": str(args.config),
        "config_hash": config_hash({s.label: s.table for s in series}),
        "version": __version__,
        "seed": series[0].config.seed if series else None,
        "series": {},
    }
    failed = False
    for s in series:
        cached = _cache_path(cache_dir, s)
        start = time.perf_counter()
        if cached is not None and cached.exists():
            text = cached.read_text(encoding="ascii")
            entry = {"cached": True, "points": []}
            failed |= any(r["status"].startswith("error") for r in csv.DictReader(io.StringIO(text)))
        else:
            points = run_curve(s.config, jobs=args.jobs)
            text = csv_text(points)
            failed |= any(p.status.startswith("error") for p in points)
            entry = {
                "cached": False,
                "points": [
                    {
                        "gamma_db": p.gamma_db,
                        "status": p.status,
                        "cutoff": p.cutoff,
                        "solver_statuses": sorted(set(p.solver_statuses)),
                        "wall_seconds": p.wall_seconds,
                    }
                    for p in points
                ],
            }
            if cached is not None:
                try:
                    cached.write_text(text, encoding="ascii", newline="")
                except OSError as exc:
                    print(f"warning: cache write failed: {exc}", file=sys.stderr)
        entry["series_hash"] = s.digest
        entry["wall_seconds"] = time.perf_counter() - start
        manifest["series"][s.label] = entry
        target = out_dir / f"{s.label}.csv"
        try:
            target.write_text(text, encoding="ascii", newline="")
        except OSError as exc:
            print(f"error: cannot write {target}: {exc.strerror or exc}", file=sys.stderr)
            return EXIT_IO
        _summary(s.label, text)
    try:
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        print(f"error: cannot write manifest: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_SOLVER if failed else EXIT_OK


def _summary(label: str, text: str) -> None:
    rows = list(csv.DictReader(io.StringIO(text)))
    positive = [r for r in rows if float(r["R"]) > 0]
    line = f"{label}: {len(rows)} points"
    if positive:
        best = max(positive, key=lambda r: float(r["R"]))
        line += (
            f", R > 0 up to {max(float(r['gamma_db']) for r in positive):g} dB"
            f", max R = {float(best['R']):.4e} at {float(best['gamma_db']):g} dB"
        )
    else:
        line += ", no positive rate"
    errors = sum(r["status"].startswith("error") for r in rows)
    if errors:
        line += f", {errors} failed"
    print(line)


def _compare(args) -> int:
    try:
        bad = compare(args.csv_a, args.csv_b)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if bad:
        print(f"ordering R_A >= R_B - {COMPARE_TOL:g} violated at {len(bad)} point(s):")
        for line in bad:
            print("  " + line)
        return EXIT_ORDER
    print(f"ordering R_A >= R_B - {COMPARE_TOL:g} holds at every common loss value")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="decoy-sdp", description="Decoy-state BB84 key-rate bounds under phase randomization.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    run = sub.add_parser("run", help="run the scenarios of a TOML file")
    run.add_argument("config")
    run.add_argument("--out", default="out", help="output directory (default: out)")
    run.add_argument("--mode", choices=MODES, help="override estimation.mode")
    run.add_argument("--jobs", type=int, default=1, help="worker processes over loss points")
    run.add_argument("--seed", type=int, help="override sweep.seed")
    run.add_argument("--cache", default=os.environ.get(CACHE_ENV), help=f"cache directory (default: ${CACHE_ENV})")
    cmp_ = sub.add_parser("compare", help="check R_A >= R_B - 1e-9 pointwise")
    cmp_.add_argument("csv_a")
    cmp_.add_argument("csv_b")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "run":
        if args.jobs < 1:
            print("error: --jobs must be at least 1", file=sys.stderr)
            return EXIT_CONFIG
        return _run(args)
    return _compare(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
