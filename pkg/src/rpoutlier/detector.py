"""Sequential projection test for single points, the whole-sample
masking-reduction scan, and the repeated-vote procedure.

A point is scored against the sample through one-dimensional random
projections: each projection yields (x'v - median) / MADN of the projected
sample.  Scoring stops at the first projection whose absolute score leaves
the undecided band [a, b]: below a the point is regular, above b it is an
outlier.  The constants (a, b) come from :mod:`rpoutlier.calibration`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .errors import CapExceeded, DegenerateData
from .special import Q3, gammln
from .stats import as_sample

__all__ = [
    "Decision",
    "DetectorConstants",
    "VoteReport",
    "analyse_sample",
    "binomial_quantile",
    "classify_point",
    "vote_analyse",
]

OUTLIER = "outlier"
REGULAR = "regular"

#: consecutive zero-MADN projections tolerated before giving up on the data
MAX_DEGENERATE_RETRIES = 32


@dataclass(frozen=True)
class DetectorConstants:
    """Decision constants (a, b) with the calibration context they assume.

    ``h`` is the expected number of projections the calibration targeted for
    a point sitting exactly on the outlier threshold.  ``provenance`` keeps
    calibration metadata (Monte Carlo size, seed, estimated level).
    """

    a: float
    b: float
    n: int
    d: int
    alpha: float
    delta: float
    h: float
    provenance: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 < self.a <= self.b:
            raise ValueError(f"need 0 < a <= b, got a={self.a}, b={self.b}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.h < 1.0:
            raise ValueError(f"target mean projections must be >= 1, got {self.h}")

    @property
    def default_cap(self) -> int:
        return math.ceil(100.0 * self.h)

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "n": self.n,
            "d": self.d,
            "alpha": self.alpha,
            "delta": self.delta,
            "h": self.h,
            "provenance": dict(self.provenance),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DetectorConstants":
        return cls(
            a=float(data["a"]),
            b=float(data["b"]),
            n=int(data["n"]),
            d=int(data["d"]),
            alpha=float(data["alpha"]),
            delta=float(data["delta"]),
            h=float(data["h"]),
            provenance=dict(data.get("provenance", {})),
        )


@dataclass(frozen=True)
class Decision:
    """Outcome of the sequential test for one point."""

    verdict: Literal["outlier", "regular"]
    projections_used: int
    final_score: float

    @property
    def is_outlier(self) -> bool:
        return self.verdict == OUTLIER


@dataclass(frozen=True)
class VoteReport:
    """Per-point outlier vote counts over repeated whole-sample scans."""

    flags: np.ndarray
    threshold: float
    mode: str
    T: int
    alpha: float
    declared: tuple[int, ...]


def _check_constants(constants: DetectorConstants, n: int, d: int) -> None:
    if (constants.n, constants.d) != (n, d):
        raise ValueError(
            f"constants were calibrated for n={constants.n}, d={constants.d}, "
            f"but the data is {n}x{d}"
        )


def classify_point(
    point,
    sample,
    constants: DetectorConstants,
    rng: np.random.Generator,
    cap: int | None = None,
) -> Decision:
    """Run the sequential projection test for one point.

    Directions are drawn until the first score with |score| < a (regular)
    or |score| > b (outlier).  Degenerate projections (zero MADN) are
    redrawn and do not count toward the projection budget.

    Raises:
        CapExceeded: if ``cap`` projections all land inside [a, b].
        DegenerateData: after 32 consecutive zero-MADN projections.
    """
    values = as_sample(sample)
    n, d = values.shape
    _check_constants(constants, n, d)
    point = np.asarray(point, dtype=float)
    if point.shape != (d,):
        raise ValueError(f"point shape {point.shape} does not match dimension {d}")
    if cap is None:
        cap = constants.default_cap
    if cap < 1:
        raise ValueError(f"projection cap must be >= 1, got {cap}")

    a, b = constants.a, constants.b
    used = 0
    degenerate_run = 0
    block = 8
    while used < cap:
        size = min(block, cap - used)
        directions = rng.standard_normal((size, d))
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
        proj = values @ directions.T  # (n, size)
        med = np.median(proj, axis=0)
        mad = np.median(np.abs(proj - med), axis=0) / Q3
        pproj = directions @ point
        with np.errstate(divide="ignore", invalid="ignore"):
            scores = (pproj - med) / mad
        abs_scores = np.abs(scores)
        valid = mad > 0.0
        if valid.all():
            degenerate_run = 0
            decided = (abs_scores < a) | (abs_scores > b)
            hit = int(np.argmax(decided)) if decided.any() else -1
            if hit >= 0:
                used += hit + 1
                verdict = OUTLIER if abs_scores[hit] > b else REGULAR
                return Decision(verdict, used, float(scores[hit]))
            used += size
        else:
            for j in range(size):
                if not valid[j]:
                    degenerate_run += 1
                    if degenerate_run >= MAX_DEGENERATE_RETRIES:
                        raise DegenerateData(
                            f"{degenerate_run} consecutive degenerate projections"
                        )
                    continue
                degenerate_run = 0
                used += 1
                s = abs_scores[j]
                if s < a or s > b:
                    verdict = OUTLIER if s > b else REGULAR
                    return Decision(verdict, used, float(scores[j]))
                if used >= cap:
                    break
        block = min(block * 2, 128)
    raise CapExceeded(f"no decision after {cap} projections inside [{a}, {b}]")


def _leave_one_out_scores(proj: np.ndarray) -> np.ndarray:
    """Score each projected value against the others (excluding itself)."""
    m = proj.shape[0]
    scores = np.empty(m)
    for i in range(m):
        rest = np.delete(proj, i)
        med = np.median(rest)
        mad = np.median(np.abs(rest - med)) / Q3
        scores[i] = (proj[i] - med) / mad if mad > 0.0 else np.inf * np.sign(proj[i] - med)
    return scores


def analyse_sample(
    sample,
    constants: DetectorConstants,
    rng: np.random.Generator,
    round_cap: int | None = None,
    leave_one_out: bool = False,
) -> set[int]:
    """Scan a whole sample for outliers with the masking-reduction loop.

    Each round draws one shared direction and scores the retained points
    against the retained sample (estimators include the point under test
    unless ``leave_one_out``).  Undecided points whose |score| exceeds b are
    removed, and every removal empties the regular set so earlier regular
    verdicts are re-examined; in rounds without removals, undecided points
    with |score| < a join the regular set.  The loop ends when every
    retained point is regular, returning the removed indices.

    Raises:
        CapExceeded: if the round budget is exhausted.
        DegenerateData: after 32 consecutive zero-MADN rounds.
    """
    values = as_sample(sample, min_rows=3)
    n, d = values.shape
    _check_constants(constants, n, d)
    if round_cap is None:
        round_cap = constants.default_cap
    a, b = constants.a, constants.b

    alive = np.ones(n, dtype=bool)
    regular = np.zeros(n, dtype=bool)
    rounds = 0
    degenerate_run = 0
    while True:
        rounds += 1
        if rounds > round_cap:
            raise CapExceeded(f"sample analysis exceeded {round_cap} rounds")
        direction = rng.standard_normal(d)
        norm = np.linalg.norm(direction)
        if norm == 0.0:
            continue
        idx = np.flatnonzero(alive)
        proj = values[idx] @ (direction / norm)
        if leave_one_out:
            scores = np.abs(_leave_one_out_scores(proj))
        else:
            med = np.median(proj)
            mad = np.median(np.abs(proj - med)) / Q3
            if mad == 0.0:
                degenerate_run += 1
                if degenerate_run >= MAX_DEGENERATE_RETRIES:
                    raise DegenerateData(
                        f"{degenerate_run} consecutive degenerate rounds"
                    )
                continue
            scores = np.abs(proj - med) / mad
        degenerate_run = 0
        undecided = ~regular[idx]
        removals = undecided & (scores > b)
        if removals.any():
            alive[idx[removals]] = False
            regular[:] = False
            if alive.sum() < 3:
                raise DegenerateData("fewer than 3 points left in the sample")
        else:
            regular[idx[undecided & (scores < a)]] = True
            if regular[idx].all():
                return set(int(i) for i in np.flatnonzero(~alive))


def binomial_quantile(trials: int, p: float, q: float) -> int:
    """Smallest k with P(Binomial(trials, p) <= k) >= q."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    if not 0.0 <= p <= 1.0 or not 0.0 < q < 1.0:
        raise ValueError(f"invalid binomial parameters p={p}, q={q}")
    if p == 0.0:
        return 0
    if p == 1.0:
        return trials
    k = np.arange(trials + 1)
    log_pmf = (
        gammln(trials + 1)
        - np.array([gammln(i + 1.0) for i in k])
        - np.array([gammln(trials - i + 1.0) for i in k])
        + k * math.log(p)
        + (trials - k) * math.log1p(-p)
    )
    cdf = np.cumsum(np.exp(log_pmf))
    return int(np.searchsorted(cdf, q, side="left"))


def vote_analyse(
    sample,
    constants: DetectorConstants,
    T: int,
    mode: Literal["proportional", "strengthened", "relaxed"],
    rng: np.random.Generator,
    round_cap: int | None = None,
    leave_one_out: bool = False,
) -> VoteReport:
    """Repeat :func:`analyse_sample` T times and vote on the flags.

    Run r uses an independent stream spawned deterministically from the
    caller's generator, so reports are reproducible for a fixed master
    seed.  ``proportional`` declares points flagged more than T*alpha
    times; ``strengthened`` and ``relaxed`` replace that threshold with the
    0.95 and 0.05 quantiles of a Binomial(T, alpha).
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    values = as_sample(sample, min_rows=3)
    n = values.shape[0]
    flags = np.zeros(n, dtype=int)
    for run_rng in rng.spawn(T):
        removed = analyse_sample(
            values, constants, run_rng, round_cap=round_cap, leave_one_out=leave_one_out
        )
        for i in removed:
            flags[i] += 1

    alpha = constants.alpha
    if mode == "proportional":
        threshold = T * alpha
    elif mode == "strengthened":
        threshold = float(binomial_quantile(T, alpha, 0.95))
    elif mode == "relaxed":
        threshold = float(binomial_quantile(T, alpha, 0.05))
    else:
        raise ValueError(f"unknown vote mode {mode!r}")
    declared = tuple(int(i) for i in np.flatnonzero(flags > threshold))
    return VoteReport(
        flags=flags, threshold=threshold, mode=mode, T=T, alpha=alpha, declared=declared
    )
