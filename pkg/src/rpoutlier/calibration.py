"""Monte Carlo calibration of the decision constants (a, b).

The pipeline: simulate a large sample of single-projection scores for a
point sitting on the outlier threshold, read a and an initial b off the
empirical quantiles dictated by the target level and the target mean
number of projections, then correct b by bisection against the level of
the full sequential test.  Calibration targets identity covariance; a
recalibration entry point redoes the bisection under another covariance
while keeping a fixed.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _identity_mc
from .covariance import (
    CovarianceModel,
    CovarianceSpec,
    sample_gaussian,
    sample_on_mahalanobis_sphere,
)
from .detector import DetectorConstants, classify_point
from .errors import BracketFailure, DegenerateProjection
from .special import Q3
from .stats import threshold_cnd

__all__ = [
    "CalibrationResult",
    "CalibrationTarget",
    "LevelEstimate",
    "bisect_b",
    "calibrate",
    "estimate_level",
    "expected_projections_identity",
    "initial_ab",
    "recalibrate_b",
    "simulate_score",
    "simulate_scores",
]

_LEVEL_CHUNK = 256
_SCORE_CHUNK = 8192
_BRACKET_EXPANSIONS = 8
_BRACKET_GROWTH = 1.5
_DEFAULT_CAP = 100_000


@dataclass(frozen=True)
class CalibrationTarget:
    """What to calibrate for and how hard to try.

    ``h`` is the desired mean number of projections for a point at the
    outlier threshold; ``mc_size`` the number of single-projection score
    draws behind the initial quantiles; ``level_reps`` the sequential
    tests per bisection step.  ``radius`` overrides the default test-point
    radius C_n^d(delta) (used for alternative level tunings).
    """

    n: int
    d: int
    alpha: float = 0.05
    delta: float = 0.05
    h: float = 50.0
    mc_size: int = 100_000
    level_reps: int = 10_000
    tol_level: float = 0.002
    radius: float | None = None
    max_bisection_iterations: int = 40
    bracket_floor: float = 1e-4

    def __post_init__(self) -> None:
        if self.n < 2 or self.d < 1:
            raise ValueError(f"invalid size n={self.n}, d={self.d}")
        if not 0.0 < self.alpha < 1.0 or not 0.0 < self.delta < 1.0:
            raise ValueError("alpha and delta must lie in (0, 1)")
        if self.h < 1.0:
            raise ValueError(f"target mean projections must be >= 1, got {self.h}")
        if self.mc_size < 1 or self.level_reps < 1:
            raise ValueError("mc_size and level_reps must be positive")

    def resolve_radius(self) -> float:
        if self.radius is not None:
            if self.radius <= 0.0:
                raise ValueError(f"radius must be positive, got {self.radius}")
            return self.radius
        return threshold_cnd(self.n, self.d, self.delta).c_nd


@dataclass(frozen=True)
class LevelEstimate:
    """Empirical rejection level of the sequential test at a fixed radius."""

    level: float
    mean_projections: float
    reps: int


@dataclass(frozen=True)
class CalibrationResult:
    constants: DetectorConstants
    estimated_level: float
    estimated_mean_projections: float
    bisection_iterations: int
    raw_b: float


def simulate_score(
    n: int, d: int, t: float, rng: np.random.Generator
) -> float:
    """One absolute projection score: fresh n x d standard-normal sample,
    fresh direction, test point uniform on the radius-t sphere."""
    if t <= 0.0:
        raise ValueError(f"radius must be positive, got {t}")
    while True:
        sample = rng.standard_normal((n, d))
        direction = rng.standard_normal(d)
        z = rng.standard_normal(d)
        point = (t / np.linalg.norm(z)) * z
        proj = sample @ direction
        med = np.median(proj)
        mad = np.median(np.abs(proj - med)) / Q3
        if mad > 0.0:
            return float(abs(point @ direction - med) / mad)


def _direct_scores(
    n: int,
    d: int,
    t: float,
    size: int,
    rng: np.random.Generator,
    model: CovarianceModel | None,
    chunk: int,
) -> np.ndarray:
    out = np.empty(size)
    done = 0
    while done < size:
        m = min(chunk, size - done)
        z = rng.standard_normal((m, n, d))
        samples = z if model is None else model.transform(z.reshape(-1, d)).reshape(m, n, d)
        directions = rng.standard_normal((m, d))
        raw = rng.standard_normal((m, d))
        raw /= np.linalg.norm(raw, axis=1, keepdims=True)
        points = t * raw if model is None else model.transform(t * raw)
        proj = np.einsum("mnd,md->mn", samples, directions)
        pproj = np.einsum("md,md->m", points, directions)
        med = np.median(proj, axis=1)
        mad = np.median(np.abs(proj - med[:, None]), axis=1) / Q3
        if not (mad > 0.0).all():
            raise DegenerateProjection("zero MADN in score simulation")
        out[done : done + m] = np.abs(pproj - med) / mad
        done += m
    return out


def simulate_scores(
    n: int,
    d: int,
    t: float,
    size: int,
    rng: np.random.Generator,
    engine: str = "identity",
    covariance: CovarianceModel | None = None,
    chunk: int = _SCORE_CHUNK,
) -> np.ndarray:
    """Vectorized batch of single-projection scores.

    ``identity`` uses the reduced exact sampler; ``direct`` materializes
    the full samples and is required whenever ``covariance`` is given.
    """
    if covariance is not None and engine == "identity":
        raise ValueError("identity engine cannot simulate a general covariance")
    if engine == "identity":
        return _identity_mc.score_sample(n, d, t, size, rng, chunk=chunk)
    if engine == "direct":
        return _direct_scores(n, d, t, size, rng, covariance, chunk=min(chunk, 2048))
    raise ValueError(f"unknown engine {engine!r}")


def initial_ab(scores: np.ndarray, alpha: float, h: float) -> tuple[float, float]:
    """Quantile read-off for (a, initial b).

    a is the (1-alpha)/h empirical quantile of the absolute scores and b
    the 1 - alpha/h quantile (linear interpolation between order
    statistics), so a single projection decides with probability 1/h and
    decisions at the threshold radius reject a fraction alpha of the time.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise ValueError("empty score sample")
    if h < 1.0:
        raise ValueError(f"target mean projections must be >= 1, got {h}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    u = (1.0 - alpha) / h
    v = 1.0 - alpha / h
    a, b = np.quantile(scores, [u, v], method="linear")
    return float(a), float(b)


def _level_direct(
    a: float,
    b: float,
    n: int,
    d: int,
    t: float,
    reps: int,
    rng: np.random.Generator,
    model: CovarianceModel | None,
    cap: int,
) -> tuple[int, np.ndarray]:
    constants = DetectorConstants(
        a=a, b=b, n=n, d=d, alpha=0.5, delta=0.5, h=1.0
    )
    rejects = 0
    counts = np.empty(reps, dtype=np.int64)
    for i, rep_rng in enumerate(rng.spawn(reps)):
        if model is None:
            sample = rep_rng.standard_normal((n, d))
            z = rep_rng.standard_normal(d)
            point = (t / np.linalg.norm(z)) * z
        else:
            sample = sample_gaussian(n, model, rep_rng)
            point = sample_on_mahalanobis_sphere(model, t, rep_rng)
        decision = classify_point(point, sample, constants, rep_rng, cap=cap)
        rejects += decision.is_outlier
        counts[i] = decision.projections_used
    return rejects, counts


def estimate_level(
    a: float,
    b: float,
    n: int,
    d: int,
    t: float,
    reps: int,
    rng: np.random.Generator,
    covariance: CovarianceModel | None = None,
    engine: str = "auto",
    cap: int = _DEFAULT_CAP,
    threads: int = 1,
    block_hint: int | None = None,
) -> LevelEstimate:
    """Rejection proportion of the full sequential test at radius t.

    Every replicate draws a fresh sample and a fresh point on the
    (Mahalanobis) sphere of radius t.  Replicates run on independently
    spawned substreams, so the estimate is identical for any thread count.
    ``block_hint`` sizes the direction blocks of the identity engine and
    should be of the order of the expected projection count.
    """
    if not 0.0 < a <= b:
        raise ValueError(f"need 0 < a <= b, got a={a}, b={b}")
    if reps < 1:
        raise ValueError(f"reps must be >= 1, got {reps}")
    if engine == "auto":
        engine = "identity" if covariance is None else "direct"
    if engine == "identity" and covariance is not None:
        raise ValueError("identity engine cannot simulate a general covariance")

    hint = max(16, min(512, round(0.75 * (block_hint or 64))))
    chunks = [
        (i, min(_LEVEL_CHUNK, reps - i)) for i in range(0, reps, _LEVEL_CHUNK)
    ]
    streams = rng.spawn(len(chunks))

    def run_chunk(args) -> tuple[int, np.ndarray]:
        (start, size), stream = args
        if engine == "identity":
            return _identity_mc.sequential_level(
                n, d, t, a, b, size, stream, cap=cap, block=hint
            )
        return _level_direct(a, b, n, d, t, size, stream, covariance, cap)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_chunk, zip(chunks, streams)))
    else:
        results = [run_chunk(args) for args in zip(chunks, streams)]

    rejects = sum(r for r, _ in results)
    total_proj = sum(int(c.sum()) for _, c in results)
    return LevelEstimate(
        level=rejects / reps, mean_projections=total_proj / reps, reps=reps
    )


def expected_projections_identity(f_a: float, f_b: float) -> tuple[float, float]:
    """Mean and variance of the projection count when single-projection
    scores are conditionally iid: the count is geometric with success
    probability 1 - (F_b - F_a)."""
    if not 0.0 <= f_a <= f_b <= 1.0:
        raise ValueError(f"need 0 <= F_a <= F_b <= 1, got {f_a}, {f_b}")
    undecided = f_b - f_a
    if undecided >= 1.0:
        raise ValueError("F_b - F_a must be strictly below 1")
    success = 1.0 - undecided
    return 1.0 / success, undecided / success**2


def bisect_b(
    a: float,
    b0: float,
    target: CalibrationTarget,
    rng: np.random.Generator,
    covariance: CovarianceModel | None = None,
    engine: str = "auto",
    threads: int = 1,
) -> tuple[float, int, LevelEstimate]:
    """Correct b by bisection so the sequential test's level hits alpha.

    The level is monotone decreasing in b, so a bracket [a, 2*b0] (upper
    end expanded geometrically if needed) is narrowed until the estimated
    level is within ``tol_level`` of alpha or the bracket width falls
    below ``bracket_floor``.  Bracket endpoints are evaluated once and
    reused.  Returns (b, bisection iterations, level estimate at b).
    """
    alpha = target.alpha
    t = target.resolve_radius()
    cap = max(_DEFAULT_CAP, math.ceil(100.0 * target.h))
    # while the bracket is wide the sign of (level - alpha) is clear well
    # above the Monte Carlo noise, so coarse evaluations suffice there
    coarse_reps = max(min(target.level_reps, 1000), target.level_reps // 4)
    coarse_width = 0.2

    def level_at(b: float, reps: int) -> LevelEstimate:
        return estimate_level(
            a,
            max(b, a),
            target.n,
            target.d,
            t,
            reps,
            rng,
            covariance=covariance,
            engine=engine,
            cap=cap,
            threads=threads,
            block_hint=round(target.h),
        )

    lo, hi = a, max(2.0 * b0, a * (1.0 + 1e-9))
    est_lo = level_at(lo, coarse_reps)
    if est_lo.level < alpha:
        # even the empty undecided band rejects too rarely: b collapses to a
        return lo, 0, est_lo
    est_hi = level_at(hi, coarse_reps)
    expansions = 0
    while est_hi.level > alpha and expansions < _BRACKET_EXPANSIONS:
        lo = hi
        hi *= _BRACKET_GROWTH
        est_hi = level_at(hi, coarse_reps)
        expansions += 1
    if est_hi.level > alpha:
        raise BracketFailure(
            f"level {est_hi.level:.4f} still above alpha={alpha} at b={hi:.4f}"
        )

    iterations = 0
    best_b, best_est = hi, est_hi
    while iterations < target.max_bisection_iterations:
        mid = 0.5 * (lo + hi)
        full = hi - lo <= coarse_width
        est = level_at(mid, target.level_reps if full else coarse_reps)
        iterations += 1
        if full and abs(est.level - alpha) < abs(best_est.level - alpha):
            best_b, best_est = mid, est
        if full and abs(est.level - alpha) <= target.tol_level:
            return mid, iterations, est
        if est.level > alpha:
            lo = mid
        else:
            hi = mid
        if hi - lo < target.bracket_floor:
            mid = 0.5 * (lo + hi)
            return mid, iterations, level_at(mid, target.level_reps)
    return best_b, iterations, best_est


def calibrate(
    target: CalibrationTarget,
    rng: np.random.Generator,
    engine: str = "auto",
    threads: int = 1,
    seed: int | None = None,
) -> CalibrationResult:
    """Full calibration for identity covariance: score quantiles then
    bisection of b against the sequential test's level."""
    t = target.resolve_radius()
    score_engine = "identity" if engine in ("auto", "identity") else "direct"
    scores = simulate_scores(
        target.n, target.d, t, target.mc_size, rng, engine=score_engine
    )
    a, b0 = initial_ab(scores, target.alpha, target.h)
    b, iterations, est = bisect_b(
        a, b0, target, rng, engine=engine, threads=threads
    )
    constants = DetectorConstants(
        a=a,
        b=max(b, a),
        n=target.n,
        d=target.d,
        alpha=target.alpha,
        delta=target.delta,
        h=target.h,
        provenance={
            "mc_size": target.mc_size,
            "level_reps": target.level_reps,
            "seed": seed,
            "radius": t,
            "estimated_level": est.level,
            "mean_projections": est.mean_projections,
            "engine": score_engine,
        },
    )
    return CalibrationResult(
        constants=constants,
        estimated_level=est.level,
        estimated_mean_projections=est.mean_projections,
        bisection_iterations=iterations,
        raw_b=b0,
    )


def recalibrate_b(
    constants: DetectorConstants,
    spec: CovarianceSpec,
    rng: np.random.Generator,
    mc_size: int = 10_000,
    level_reps: int = 10_000,
    tol_level: float = 0.002,
    radius: float | None = None,
    threads: int = 1,
) -> CalibrationResult:
    """Keep a fixed and re-bisect b for a non-identity covariance.

    The covariance model is realized once for the whole recalibration
    (``random_gram`` draws its matrix here).
    """
    model = CovarianceModel.from_spec(spec, rng)
    target = CalibrationTarget(
        n=constants.n,
        d=constants.d,
        alpha=constants.alpha,
        delta=constants.delta,
        h=constants.h,
        mc_size=mc_size,
        level_reps=level_reps,
        tol_level=tol_level,
        radius=radius,
    )
    t = target.resolve_radius()
    scores = simulate_scores(
        constants.n,
        constants.d,
        t,
        mc_size,
        rng,
        engine="direct",
        covariance=model,
    )
    _, b0 = initial_ab(scores, constants.alpha, constants.h)
    b, iterations, est = bisect_b(
        constants.a, b0, target, rng, covariance=model, threads=threads
    )
    new_constants = DetectorConstants(
        a=constants.a,
        b=max(b, constants.a),
        n=constants.n,
        d=constants.d,
        alpha=constants.alpha,
        delta=constants.delta,
        h=constants.h,
        provenance={
            **constants.provenance,
            "recalibrated_for": spec.kind,
            "recalibration_mc_size": mc_size,
            "estimated_level": est.level,
            "mean_projections": est.mean_projections,
        },
    )
    return CalibrationResult(
        constants=new_constants,
        estimated_level=est.level,
        estimated_mean_projections=est.mean_projections,
        bisection_iterations=iterations,
        raw_b=b0,
    )
