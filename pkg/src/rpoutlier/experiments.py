"""Experiment runners: level/power at fixed radii, contamination with
masking and swamping, and clean-sample stability, plus preset grids that
regenerate the benchmark tables at desk or full scale.

Every replicate runs on its own substream spawned from the caller's
generator, so aggregate results are bit-identical for any thread count
and reports are reproducible from (configuration, master seed).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .calibration import CalibrationTarget, calibrate
from .covariance import (
    CovarianceModel,
    CovarianceSpec,
    sample_gaussian,
    sample_on_mahalanobis_sphere,
)
from .detector import DetectorConstants, analyse_sample, classify_point
from .errors import CapExceeded, DegenerateData
from .stats import threshold_cnd

__all__ = [
    "DEFAULT_CONTAMINATION_RADII",
    "ExperimentReport",
    "REFERENCE_CONSTANTS",
    "format_reports_table",
    "reference_constants",
    "run_clean_sample_experiment",
    "run_contamination_experiment",
    "run_level_experiment",
    "run_preset",
    "tuned_clean_sample_quantile",
    "PRESET_NAMES",
]

DEFAULT_CONTAMINATION_RADII = (1.05, 1.25, 1.5, 2.0, 3.0)

# (a, b) by (n, d, target mean projections), precomputed with mc_size=1e6.
REFERENCE_CONSTANTS: dict[tuple[int, int, int], tuple[float, float]] = {
    (50, 50, 50): (0.0325, 4.9714),
    (50, 50, 100): (0.0163, 5.3212),
    (50, 100, 50): (0.0303, 4.7184),
    (50, 100, 100): (0.0150, 5.0936),
    (50, 500, 50): (0.0268, 4.3039),
    (50, 500, 100): (0.0133, 4.6239),
    (50, 1000, 50): (0.0263, 4.1916),
    (50, 1000, 100): (0.0130, 4.5217),
    (100, 50, 50): (0.0326, 4.6374),
    (100, 50, 100): (0.0163, 4.9143),
    (100, 100, 50): (0.0303, 4.3539),
    (100, 100, 100): (0.0151, 4.6495),
    (100, 500, 50): (0.0267, 3.9230),
    (100, 500, 100): (0.0133, 4.2078),
    (100, 1000, 50): (0.0261, 3.8253),
    (100, 1000, 100): (0.0128, 4.0909),
    (500, 50, 50): (0.0336, 4.4525),
    (500, 50, 100): (0.0167, 4.6989),
    (500, 100, 50): (0.0304, 4.1478),
    (500, 100, 100): (0.0156, 4.3910),
    (500, 500, 50): (0.0266, 3.7278),
    (500, 500, 100): (0.0132, 3.9520),
    (500, 1000, 50): (0.0259, 3.6096),
    (500, 1000, 100): (0.0130, 3.8197),
}

PRESET_NAMES = ("5", "6", "7", "masking")


def reference_constants(
    n: int, d: int, h: int, alpha: float = 0.05, delta: float = 0.05
) -> DetectorConstants:
    """Bundled decision constants for the benchmark grid."""
    try:
        a, b = REFERENCE_CONSTANTS[(n, d, h)]
    except KeyError:
        raise KeyError(
            f"no bundled constants for n={n}, d={d}, h={h}; run the calibrate command"
        ) from None
    return DetectorConstants(
        a=a,
        b=b,
        n=n,
        d=d,
        alpha=alpha,
        delta=delta,
        h=float(h),
        provenance={"source": "bundled-reference", "mc_size": 1_000_000},
    )


@dataclass(frozen=True)
class ExperimentReport:
    """Aggregated outcome of one simulated scenario."""

    scenario: dict
    rejection_proportion: float | None = None
    mean_projections: float | None = None
    per_radius: dict[str, float] | None = None
    swamping_proportion: float | None = None
    aborted_replicates: int = 0
    seeds: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "rejection_proportion": self.rejection_proportion,
            "mean_projections": self.mean_projections,
            "per_radius": self.per_radius,
            "swamping_proportion": self.swamping_proportion,
            "aborted_replicates": self.aborted_replicates,
            "seeds": self.seeds,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentReport":
        return cls(
            scenario=data["scenario"],
            rejection_proportion=data.get("rejection_proportion"),
            mean_projections=data.get("mean_projections"),
            per_radius=data.get("per_radius"),
            swamping_proportion=data.get("swamping_proportion"),
            aborted_replicates=data.get("aborted_replicates", 0),
            seeds=data.get("seeds", {}),
        )


def _map_replicates(
    reps: int, rng: np.random.Generator, worker: Callable, threads: int
) -> list:
    streams = rng.spawn(reps)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(worker, range(reps), streams))
    return [worker(i, stream) for i, stream in zip(range(reps), streams)]


def _scenario(name: str, n: int, d: int, spec: CovarianceSpec, constants, reps, seed, **extra):
    scenario = {
        "name": name,
        "n": n,
        "d": d,
        "covariance": spec.kind,
        "rotation_seed": spec.rotation_seed,
        "constants": {"a": constants.a, "b": constants.b, "h": constants.h,
                      "alpha": constants.alpha, "delta": constants.delta},
        "reps": reps,
    }
    scenario.update(extra)
    scenario["seed"] = seed
    return scenario


def run_level_experiment(
    n: int,
    d: int,
    spec: CovarianceSpec,
    r: float,
    constants: DetectorConstants,
    reps: int,
    rng: np.random.Generator,
    threads: int = 1,
    seed: int | None = None,
) -> ExperimentReport:
    """Rejection proportion and mean projections for a point at radius
    r * C_n^d, with a fresh sample and point each replicate."""
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    radius = r * threshold_cnd(n, d, constants.delta).c_nd
    fixed_model = None if spec.is_random else CovarianceModel.from_spec(spec)

    def worker(_: int, stream: np.random.Generator):
        model = fixed_model or CovarianceModel.from_spec(spec, stream)
        sample = sample_gaussian(n, model, stream)
        point = sample_on_mahalanobis_sphere(model, radius, stream)
        try:
            decision = classify_point(point, sample, constants, stream)
        except (DegenerateData, CapExceeded):
            return None
        return decision.is_outlier, decision.projections_used

    results = _map_replicates(reps, rng, worker, threads)
    ok = [res for res in results if res is not None]
    rejects = sum(flag for flag, _ in ok)
    projections = sum(k for _, k in ok)
    return ExperimentReport(
        scenario=_scenario("level", n, d, spec, constants, reps, seed,
                           radius_multiplier=r),
        rejection_proportion=rejects / len(ok) if ok else None,
        mean_projections=projections / len(ok) if ok else None,
        aborted_replicates=reps - len(ok),
        seeds={"master": seed},
    )


def run_contamination_experiment(
    n: int,
    d: int,
    spec: CovarianceSpec,
    radii: tuple[float, ...],
    constants: DetectorConstants,
    reps: int,
    rng: np.random.Generator,
    contamination_rate: float = 0.1,
    threads: int = 1,
    seed: int | None = None,
) -> ExperimentReport:
    """Plant outliers at the given radius multipliers inside otherwise
    clean samples, scan each sample, and report per-radius detection
    proportions plus the swamping rate among clean points."""
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    n_out = round(contamination_rate * n)
    counts = [n_out // len(radii)] * len(radii)
    for i in range(n_out % len(radii)):
        counts[i] += 1
    n_clean = n - n_out
    if n_clean < 3:
        raise ValueError("too few clean points for a scan")
    c_nd = threshold_cnd(n, d, constants.delta).c_nd
    fixed_model = None if spec.is_random else CovarianceModel.from_spec(spec)

    def worker(_: int, stream: np.random.Generator):
        model = fixed_model or CovarianceModel.from_spec(spec, stream)
        clean = sample_gaussian(n_clean, model, stream)
        planted = [
            sample_on_mahalanobis_sphere(model, r * c_nd, stream)
            for r, c in zip(radii, counts)
            for _ in range(c)
        ]
        sample = np.vstack([clean] + [np.asarray(planted).reshape(-1, d)]) if planted else clean
        try:
            removed = analyse_sample(sample, constants, stream)
        except (DegenerateData, CapExceeded):
            return None
        swamped = sum(1 for i in removed if i < n_clean)
        detected = []
        offset = n_clean
        for c in counts:
            detected.append(sum(1 for j in range(offset, offset + c) if j in removed))
            offset += c
        return swamped, detected

    results = _map_replicates(reps, rng, worker, threads)
    ok = [res for res in results if res is not None]
    per_radius = None
    if n_out > 0 and ok:
        per_radius = {}
        for i, (r, c) in enumerate(zip(radii, counts)):
            denom = c * len(ok)
            per_radius[f"{r:g}"] = (
                sum(det[i] for _, det in ok) / denom if denom else None
            )
    swamped_total = sum(s for s, _ in ok)
    return ExperimentReport(
        scenario=_scenario("contamination", n, d, spec, constants, reps, seed,
                           radii=[float(r) for r in radii],
                           planted_per_radius=counts),
        per_radius=per_radius,
        swamping_proportion=swamped_total / (n_clean * len(ok)) if ok else None,
        aborted_replicates=reps - len(ok),
        seeds={"master": seed},
    )


def run_clean_sample_experiment(
    n: int,
    d: int,
    spec: CovarianceSpec,
    constants: DetectorConstants,
    reps: int,
    rng: np.random.Generator,
    threads: int = 1,
    seed: int | None = None,
) -> ExperimentReport:
    """Scan clean samples and report the mean fraction of points flagged."""
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    fixed_model = None if spec.is_random else CovarianceModel.from_spec(spec)

    def worker(_: int, stream: np.random.Generator):
        model = fixed_model or CovarianceModel.from_spec(spec, stream)
        sample = sample_gaussian(n, model, stream)
        try:
            removed = analyse_sample(sample, constants, stream)
        except (DegenerateData, CapExceeded):
            return None
        return len(removed)

    results = _map_replicates(reps, rng, worker, threads)
    ok = [res for res in results if res is not None]
    return ExperimentReport(
        scenario=_scenario("clean-sample", n, d, spec, constants, reps, seed),
        rejection_proportion=sum(ok) / (n * len(ok)) if ok else None,
        aborted_replicates=reps - len(ok),
        seeds={"master": seed},
    )


def tuned_clean_sample_quantile(
    n: int, d: int, rng: np.random.Generator, draws: int = 100_000
) -> float:
    """Typical in-sample extremeness radius: the average 0.75 quantile of
    the root chi-squared norms of an n-point sample in dimension d."""
    groups = max(1, draws // n)
    norms = np.sqrt(rng.chisquare(d, size=(groups, n)))
    return float(np.quantile(norms, 0.75, axis=1, method="linear").mean())


def _tuned_clean_constants(
    n: int, d: int, scale: str, rng: np.random.Generator
) -> DetectorConstants:
    radius = tuned_clean_sample_quantile(n, d, rng)
    target = CalibrationTarget(
        n=n,
        d=d,
        alpha=0.1,
        delta=0.05,
        h=50.0,
        mc_size=100_000 if scale == "full" else 20_000,
        level_reps=10_000 if scale == "full" else 4_000,
        tol_level=0.005 if scale == "full" else 0.01,
        radius=radius,
    )
    return calibrate(target, rng).constants


def format_reports_table(reports: list[ExperimentReport]) -> str:
    """Aligned-column text rendering of a list of reports."""
    headers = ["name", "n", "d", "cov", "r", "reps", "rejection", "mean_proj",
               "swamping", "aborted"]
    rows = []
    for rep in reports:
        sc = rep.scenario
        rows.append([
            sc.get("name", ""),
            str(sc.get("n", "")),
            str(sc.get("d", "")),
            sc.get("covariance", ""),
            str(sc.get("radius_multiplier", sc.get("radii", ""))),
            str(sc.get("reps", "")),
            "" if rep.rejection_proportion is None else f"{rep.rejection_proportion:.4f}",
            "" if rep.mean_projections is None else f"{rep.mean_projections:.1f}",
            "" if rep.swamping_proportion is None else f"{rep.swamping_proportion:.4f}",
            str(rep.aborted_replicates),
        ])
        if rep.per_radius:
            detail = "  ".join(f"r={k}:{v:.4f}" for k, v in rep.per_radius.items())
            rows.append(["", "", "", "", "", "", detail, "", "", ""])
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
    return "\n".join(lines) + "\n"


def _preset_cells(name: str, scale: str) -> list[dict]:
    full = scale == "full"
    kinds_all = ("identity", "sigma1", "sigma2", "sigma3", "sigma4")
    cells: list[dict] = []
    if name == "5":
        grid_n = (50, 100, 500) if full else (50,)
        grid_d = (50, 100, 500, 1000) if full else (50, 100)
        grid_h = (50, 100) if full else (50,)
        reps = 5000 if full else 1000
        for n in grid_n:
            for d in grid_d:
                for h in grid_h:
                    for kind in kinds_all:
                        cells.append(dict(kind="level", n=n, d=d, h=h, r=1.0,
                                          cov=kind, reps=reps))
    elif name == "6":
        grid_d = (50, 100, 500, 1000) if full else (50,)
        kinds = kinds_all if full else ("identity",)
        reps = 5000 if full else 1000
        for d in grid_d:
            for h in (50, 100):
                for r in (1.2, 2.0):
                    for kind in kinds:
                        cells.append(dict(kind="level", n=50, d=d, h=h, r=r,
                                          cov=kind, reps=reps))
    elif name == "7":
        grid_d = (50, 500, 1000) if full else (50,)
        grid_n = (50, 100) if full else (50,)
        reps = 500 if full else 200
        for n in grid_n:
            for d in grid_d:
                for kind in ("identity", "exp_decay", "random_gram"):
                    cells.append(dict(kind="clean", n=n, d=d, cov=kind, reps=reps))
    elif name == "masking":
        grid_d = (50, 500, 1000) if full else (50,)
        grid_n = (50, 100) if full else (50,)
        kinds = kinds_all if full else ("identity",)
        reps = 1000 if full else 500
        for n in grid_n:
            for d in grid_d:
                for kind in kinds:
                    cells.append(dict(kind="contamination", n=n, d=d, h=50,
                                      cov=kind, reps=reps))
    else:
        raise ValueError(f"unknown preset {name!r}")
    return cells


def run_preset(
    name: str,
    scale: str,
    master_seed: int,
    threads: int = 1,
    reps_override: int | None = None,
    constants_resolver: Callable[[int, int, int], DetectorConstants] | None = None,
) -> list[tuple[str, ExperimentReport | Exception]]:
    """Run a preset experiment grid; failed cells are recorded, not fatal."""
    if scale not in ("desk", "full"):
        raise ValueError(f"unknown scale {scale!r}")
    resolver = constants_resolver or (lambda n, d, h: reference_constants(n, d, h))
    results: list[tuple[str, ExperimentReport | Exception]] = []
    for index, cell in enumerate(_preset_cells(name, scale)):
        rng = np.random.default_rng([master_seed, index])
        reps = reps_override or cell["reps"]
        spec = CovarianceSpec(kind=cell["cov"], d=cell["d"])
        cell_id = "_".join(
            str(part)
            for part in [
                f"table{name}",
                cell["kind"],
                f"n{cell['n']}",
                f"d{cell['d']}",
                f"h{cell['h']}" if "h" in cell else None,
                f"r{cell['r']:g}" if "r" in cell else None,
                cell["cov"],
            ]
            if part is not None
        )
        try:
            if cell["kind"] == "level":
                constants = resolver(cell["n"], cell["d"], cell["h"])
                report = run_level_experiment(
                    cell["n"], cell["d"], spec, cell["r"], constants, reps, rng,
                    threads=threads, seed=master_seed,
                )
            elif cell["kind"] == "contamination":
                constants = resolver(cell["n"], cell["d"], cell["h"])
                report = run_contamination_experiment(
                    cell["n"], cell["d"], spec, DEFAULT_CONTAMINATION_RADII,
                    constants, reps, rng, threads=threads, seed=master_seed,
                )
            else:
                constants = _tuned_clean_constants(cell["n"], cell["d"], scale, rng)
                report = run_clean_sample_experiment(
                    cell["n"], cell["d"], spec, constants, reps, rng,
                    threads=threads, seed=master_seed,
                )
            results.append((cell_id, report))
        except Exception as exc:  # cell failures recorded, run continues
            results.append((cell_id, exc))
    return results
