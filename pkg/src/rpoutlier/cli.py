"""Command-line front end: calibrate decision constants, detect outliers
in CSV datasets, and run simulation presets.

Exit codes: 0 success, 1 internal or statistical failure, 2 usage or
input errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from .cache import CalibrationCache, cache_key
from .calibration import CalibrationTarget, calibrate
from .detector import DetectorConstants, vote_analyse
from .errors import CacheError, RPOutlierError
from .experiments import PRESET_NAMES, format_reports_table, run_preset
from .stats import DataMatrix

__all__ = ["main"]


class UsageError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rpoutlier",
        description="Sequential random-projection outlier detection",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=0, help="master seed (recorded in outputs)")
        p.add_argument("--threads", type=int, default=1)

    cal = sub.add_parser("calibrate", help="compute decision constants (a, b)")
    common(cal)
    cal.add_argument("--n", type=int, required=True)
    cal.add_argument("--d", type=int, required=True)
    cal.add_argument("--alpha", type=float, default=0.05)
    cal.add_argument("--delta", type=float, default=0.05)
    cal.add_argument("--target-projections", type=float, default=50.0,
                     help="desired mean projections at the outlier threshold")
    cal.add_argument("--mc-size", type=int, default=100_000)
    cal.add_argument("--cache-dir", default=".rpoutlier-cache")
    cal.add_argument("--force", action="store_true", help="recompute even on a cache hit")
    cal.add_argument("--output", help="also write the constants to this JSON file")

    det = sub.add_parser("detect", help="detect outliers in a CSV dataset")
    common(det)
    det.add_argument("--input", required=True, help="CSV, rows = observations")
    det.add_argument("--T", type=int, default=100, help="number of repeated scans")
    det.add_argument("--vote-mode", choices=("proportional", "strengthened", "relaxed"),
                     default="proportional")
    det.add_argument("--constants-file", help="JSON with calibrated constants")
    det.add_argument("--alpha", type=float, default=0.05)
    det.add_argument("--delta", type=float, default=0.05)
    det.add_argument("--target-projections", type=float, default=100.0)
    det.add_argument("--mc-size", type=int, default=100_000)
    det.add_argument("--cache-dir", default=".rpoutlier-cache")
    det.add_argument("--output", help="write the detection report to this JSON file")

    sim = sub.add_parser("simulate", help="run a benchmark experiment grid")
    common(sim)
    sim.add_argument("--paper-table", required=True, metavar="PRESET",
                     help="preset grid: 5 (level), 6 (power), 7 (clean-sample), masking")
    sim.add_argument("--scale", choices=("desk", "full"), default="desk")
    sim.add_argument("--reps", type=int, default=None,
                     help="override per-cell replication count (smoke runs)")
    sim.add_argument("--output", default="simulation-reports",
                     help="directory for per-cell JSON reports and the summary table")
    return parser


def _load_csv(path: str) -> np.ndarray:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    rows = [row for row in csv.reader(text.splitlines()) if any(c.strip() for c in row)]
    if not rows:
        raise UsageError(f"{path}: empty CSV")

    def parse_row(row: list[str], index: int) -> list[float]:
        out = []
        for j, cell in enumerate(row):
            try:
                out.append(float(cell))
            except ValueError:
                raise UsageError(
                    f"{path}: row {index + 1}, column {j + 1}: not a number: {cell!r}"
                ) from None
        return out

    try:
        parse_row(rows[0], 0)
        offset = 0  # numeric first row: data starts immediately
    except UsageError:
        offset = 1  # non-numeric first row is a header
        if len(rows) == 1:
            raise UsageError(f"{path}: only a header row, no data") from None
    data: list[list[float]] = []
    for i, row in enumerate(rows[offset:], start=offset):
        values = parse_row(row, i)
        if data and len(values) != len(data[0]):
            raise UsageError(
                f"{path}: row {i + 1} has {len(values)} columns, expected {len(data[0])}"
            )
        data.append(values)
    return np.asarray(data, dtype=float)


def _fingerprint(values: np.ndarray) -> str:
    digest = hashlib.sha256()
    digest.update(f"{values.shape[0]}x{values.shape[1]}".encode())
    digest.update(np.ascontiguousarray(values, dtype="<f8").tobytes())
    return digest.hexdigest()


def _write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _cmd_calibrate(args) -> int:
    if args.target_projections < 1:
        raise UsageError(
            f"--target-projections must be >= 1, got {args.target_projections}"
        )
    if args.n < 2 or args.d < 2:
        raise UsageError("need --n >= 2 and --d >= 2")
    key = cache_key(args.n, args.d, args.delta, args.alpha,
                    args.target_projections, args.mc_size, args.seed)
    cache = CalibrationCache(args.cache_dir)
    constants = None if args.force else cache.lookup(key)
    started = time.perf_counter()
    cached = constants is not None
    if constants is None:
        target = CalibrationTarget(
            n=args.n, d=args.d, alpha=args.alpha, delta=args.delta,
            h=args.target_projections, mc_size=args.mc_size,
        )
        rng = np.random.default_rng(args.seed)
        result = calibrate(target, rng, threads=args.threads, seed=args.seed)
        constants = result.constants
        cache.store(key, constants.a, constants.b,
                    result.estimated_level, result.estimated_mean_projections)
    elapsed = time.perf_counter() - started
    prov = constants.provenance
    print(f"n={args.n} d={args.d} alpha={args.alpha} delta={args.delta} "
          f"h={args.target_projections:g} N={args.mc_size} seed={args.seed}")
    print(f"a = {constants.a:.6f}")
    print(f"b = {constants.b:.6f}")
    if prov.get("estimated_level") is not None:
        print(f"estimated level   = {prov['estimated_level']:.4f}")
    if prov.get("mean_projections") is not None:
        print(f"mean projections  = {prov['mean_projections']:.1f}")
    print(f"{'cache hit' if cached else 'computed'} in {elapsed:.2f} s")
    if args.output:
        _write_json(args.output, constants.to_dict())
    return 0


def _resolve_constants(args, n: int, d: int) -> DetectorConstants:
    if args.constants_file:
        try:
            raw = json.loads(Path(args.constants_file).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read constants file: {exc}") from exc
        return DetectorConstants.from_dict(raw.get("constants", raw))
    key = cache_key(n, d, args.delta, args.alpha,
                    args.target_projections, args.mc_size, args.seed)
    constants = CalibrationCache(args.cache_dir).lookup(key, ignore_seed=True)
    if constants is None:
        raise UsageError(
            f"no calibrated constants for n={n}, d={d}, alpha={args.alpha}, "
            f"h={args.target_projections:g}, N={args.mc_size}; "
            "run `rpoutlier calibrate` first or pass --constants-file"
        )
    return constants


def _cmd_detect(args) -> int:
    if args.T < 1:
        raise UsageError(f"--T must be >= 1, got {args.T}")
    values = _load_csv(args.input)
    try:
        data = DataMatrix(values)
    except ValueError as exc:
        raise UsageError(f"{args.input}: {exc}") from exc
    constants = _resolve_constants(args, data.n, data.d)
    if (constants.n, constants.d) != (data.n, data.d):
        raise UsageError(
            f"constants are for n={constants.n}, d={constants.d}, "
            f"but {args.input} is {data.n}x{data.d}"
        )
    rng = np.random.default_rng(args.seed)
    started = time.perf_counter()
    vote = vote_analyse(data, constants, args.T, args.vote_mode, rng)
    elapsed = time.perf_counter() - started
    report = {
        "dataset": {
            "path": args.input,
            "n": data.n,
            "d": data.d,
            "sha256": _fingerprint(data.values),
        },
        "constants": constants.to_dict(),
        "mode": vote.mode,
        "T": vote.T,
        "threshold": vote.threshold,
        "seed": args.seed,
        "flags": [int(f) for f in vote.flags],
        "proportions": [round(int(f) / vote.T, 10) for f in vote.flags],
        "declared": list(vote.declared),
        "elapsed_seconds": elapsed,
    }
    print(f"{args.input}: {data.n} observations x {data.d} coordinates")
    print(f"vote mode {vote.mode}: declare when flags > {vote.threshold:g} of T={vote.T}")
    print(f"{'point':>6} {'flags':>6} {'share':>7}  verdict")
    for i, f in enumerate(vote.flags):
        mark = "OUTLIER" if i in vote.declared else ""
        print(f"{i:>6} {int(f):>6} {int(f) / vote.T:>7.2f}  {mark}")
    print(f"declared outliers: {sorted(vote.declared)}")
    print(f"elapsed: {elapsed:.2f} s "
          f"(sequential scans typically run in seconds up to d ~ 500, n ~ 100)")
    if args.output:
        _write_json(args.output, report)
    return 0


def _cmd_simulate(args) -> int:
    if args.paper_table not in PRESET_NAMES:
        raise UsageError(
            f"unknown preset {args.paper_table!r}; choose from {', '.join(PRESET_NAMES)}"
        )
    if args.reps is not None and args.reps < 1:
        raise UsageError(f"--reps must be >= 1, got {args.reps}")
    out_dir = Path(args.output)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = run_preset(
        args.paper_table, args.scale, args.seed,
        threads=args.threads, reps_override=args.reps,
    )
    reports, failures = [], []
    for cell_id, outcome in results:
        if isinstance(outcome, Exception):
            failures.append((cell_id, outcome))
            print(f"FAILED {cell_id}: {outcome}", file=sys.stderr)
            continue
        reports.append(outcome)
        _write_json(out_dir / f"{cell_id}.json", outcome.to_dict())
    table = format_reports_table(reports)
    summary_path = out_dir / f"table{args.paper_table}_{args.scale}_summary.txt"
    summary = table
    if failures:
        summary += "\nfailed cells:\n" + "".join(
            f"  {cid}: {exc}\n" for cid, exc in failures
        )
    summary_path.write_text(summary, encoding="utf-8")
    print(table, end="")
    print(f"wrote {len(reports)} cell reports to {out_dir}")
    return 1 if failures else 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "calibrate":
            return _cmd_calibrate(args)
        if args.command == "detect":
            return _cmd_detect(args)
        return _cmd_simulate(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CacheError as exc:
        print(f"fatal: {exc}", file=sys.stderr)
        return 1
    except RPOutlierError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
