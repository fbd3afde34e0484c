"""Regularized incomplete gamma function and chi-squared quantiles.

Self-contained double-precision implementations: the lower regularized
gamma P(a, x) is evaluated by its power series for x < a + 1 and through
the continued fraction of the upper function Q(a, x) otherwise.  The
chi-squared quantile inverts P with a safeguarded Newton iteration to an
absolute tolerance of 1e-10 in probability, which keeps results
bit-stable across platforms.
"""

from __future__ import annotations

import math

_MAX_ITER = 500
_EPS = 1e-16
_FPMIN = 1e-300

# Lanczos coefficients, g = 7, n = 9 (relative error ~ 1e-14).
_LANCZOS_G = 7.0
_LANCZOS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


def gammln(x: float) -> float:
    """Natural log of the gamma function for x > 0."""
    if x <= 0.0:
        raise ValueError(f"gammln requires x > 0, got {x}")
    if x < 0.5:
        # reflection keeps the Lanczos sum in its accurate range
        return math.log(math.pi / math.sin(math.pi * x)) - gammln(1.0 - x)
    x -= 1.0
    s = _LANCZOS[0]
    for i in range(1, len(_LANCZOS)):
        s += _LANCZOS[i] / (x + i)
    t = x + _LANCZOS_G + 0.5
    return 0.5 * math.log(2.0 * math.pi) + (x + 0.5) * math.log(t) - t + math.log(s)


def _gamma_series(a: float, x: float) -> float:
    """P(a, x) by power series; converges fast for x < a + 1."""
    ap = a
    total = 1.0 / a
    term = total
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - gammln(a))


def _gamma_cont_fraction(a: float, x: float) -> float:
    """Q(a, x) by modified Lentz continued fraction; for x >= a + 1."""
    b = x + 1.0 - a
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = b + an / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - gammln(a)) * h


def gammp(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x) = gamma(a, x) / Gamma(a)."""
    if a <= 0.0 or x < 0.0:
        raise ValueError(f"gammp requires a > 0 and x >= 0, got a={a}, x={x}")
    if x == 0.0:
        return 0.0
    if x < a + 1.0:
        return _gamma_series(a, x)
    return 1.0 - _gamma_cont_fraction(a, x)


def gammq(a: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(a, x) = 1 - P(a, x)."""
    if a <= 0.0 or x < 0.0:
        raise ValueError(f"gammq requires a > 0 and x >= 0, got a={a}, x={x}")
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _gamma_series(a, x)
    return _gamma_cont_fraction(a, x)


def _chi2_pdf(d: int, x: float) -> float:
    a = 0.5 * d
    if x <= 0.0:
        return 0.0
    return math.exp((a - 1.0) * math.log(x) - 0.5 * x - a * math.log(2.0) - gammln(a))


def chi2_quantile(p: float, d: int, tol: float = 1e-10) -> float:
    """Quantile of the chi-squared distribution with d degrees of freedom.

    Solves P(d/2, q/2) = p to an absolute tolerance of ``tol`` in
    probability.  For p > 1/2 the complementary equation Q(d/2, q/2) = 1 - p
    is solved instead, which preserves accuracy deep in the upper tail.

    Raises:
        ValueError: if p is outside [0, 1) or d < 1.
    """
    if not 0.0 <= p < 1.0:
        raise ValueError(f"probability must lie in [0, 1), got {p}")
    if d < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {d}")
    if p == 0.0:
        return 0.0

    a = 0.5 * d
    upper_tail = p > 0.5
    target = 1.0 - p if upper_tail else p
    # deep in the tail an absolute tolerance is too coarse; track the
    # tail mass relatively as well
    tol = min(tol, max(1e-4 * target, 1e-15))

    def residual(q: float) -> float:
        half = 0.5 * q
        if upper_tail:
            return gammq(a, half) - target
        return gammp(a, half) - target

    # bracket the root, starting from the distribution mean
    lo, hi = 0.0, float(d)
    for _ in range(200):
        if residual(hi) * (1 if upper_tail else -1) <= 0.0:
            break
        lo = hi
        hi *= 2.0
    else:  # pragma: no cover - cannot happen for valid inputs
        raise ArithmeticError("failed to bracket chi-squared quantile")

    q = 0.5 * (lo + hi)
    for _ in range(200):
        r = residual(q)
        # residual decreases in q on the upper-tail branch, increases otherwise
        if (r > 0.0) == upper_tail:
            lo = q
        else:
            hi = q
        if abs(r) <= tol:
            return q
        pdf = _chi2_pdf(d, q)
        step_ok = False
        if pdf > 0.0:
            q_new = q + (r / pdf if upper_tail else -r / pdf)
            if lo < q_new < hi:
                q = q_new
                step_ok = True
        if not step_ok:
            q = 0.5 * (lo + hi)
        if hi - lo < 1e-14 * max(1.0, hi):
            return q
    return q


def std_normal_quantile(p: float) -> float:
    """Standard normal quantile, derived from the chi-squared solver."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"probability must lie in (0, 1), got {p}")
    if p == 0.5:
        return 0.0
    q = math.sqrt(chi2_quantile(abs(2.0 * p - 1.0), 1, tol=1e-15))
    return q if p > 0.5 else -q


# 0.75 standard-normal quantile; single source of truth for the MADN scale.
Q3: float = std_normal_quantile(0.75)
