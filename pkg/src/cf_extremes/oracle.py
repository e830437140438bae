"""Simulation-free ground truth for short digit blocks.

Gauss measures of cylinder sets are computed from exact convergents, and the
law of the exceedance count for ``n <= 3`` is assembled from them.

Digit constraints are half-open ranges ``[lo, hi)``.  Unbounded ranges never need
truncation in the first or last position:

* a leading unconstrained digit can be dropped by stationarity,
* a leading ``A_1 >= m`` is a complement, ``P(rest) - P(A_1 < m, rest)``,
* a last-position range is a single interval inside each cylinder.

The only infinite sum left is an unconstrained middle digit between two
constrained ones.  It is summed exactly up to a cutoff ``B`` and the remainder
``P(A_1 = a, A_2 >= B, A_3 in R)`` is enclosed by conditioning on the
backward state ``y = [0; A_2, A_1, A_0, ...] in (0, 1/B)``, under which
``P(A_3 >= k | past) = (1 + y) / (k + y)`` exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple, Union

from .cf_core import LN2, digit_tail_prob, scaled_threshold

DEFAULT_TAIL_TRUNCATION = 10 ** 4
MAX_ERROR = 1e-6

Range = Tuple[int, Optional[int]]


class TruncationTooCoarse(RuntimeError):
    pass


@dataclass(frozen=True)
class Exactly:
    a: int

    def range(self) -> Range:
        return (self.a, self.a + 1)


@dataclass(frozen=True)
class AtLeast:
    m: int

    def range(self) -> Range:
        return (self.m, None)


@dataclass(frozen=True)
class AtMost:
    m: int

    def range(self) -> Range:
        return (1, self.m + 1)


@dataclass(frozen=True)
class Free:
    def range(self) -> Range:
        return (1, None)


CylinderConstraint = Union[Exactly, AtLeast, AtMost, Free]


def gauss_measure_of_interval(a, b) -> float:
    """``(log(1 + b) - log(1 + a)) / log 2`` from exact endpoints."""
    a, b = Fraction(a), Fraction(b)
    if not 0 <= a < b <= 1:
        raise ValueError("need 0 <= a < b <= 1")
    return math.log1p((b - a) / (1 + a)) / LN2


def _convergents(digits: Sequence[int]) -> Tuple[int, int, int, int]:
    """``(p_j, q_j, p_{j-1}, q_{j-1})`` of ``[0; a_1, ..., a_j]``."""
    p, q, pp, qq = 0, 1, 1, 0
    for a in digits:
        if a < 1:
            raise ValueError("digits must be >= 1")
        p, q, pp, qq = a * p + pp, a * q + qq, p, q
    return p, q, pp, qq


def cylinder_interval(digits: Sequence[int]) -> Tuple[Fraction, Fraction]:
    """Endpoints of ``{A_1 = a_1, ..., A_j = a_j}``: ``p_j/q_j`` and ``(p_j + p_{j-1})/(q_j + q_{j-1})``."""
    if not digits:
        raise ValueError("digits must be nonempty")
    p, q, pp, qq = _convergents(digits)
    x, y = Fraction(p, q), Fraction(p + pp, q + qq)
    return (x, y) if x < y else (y, x)


def _range_measure(prefix: Sequence[int], k1: int, k2: Optional[int]) -> float:
    """Gauss measure of ``{A_1..A_j = prefix, k1 <= A_{j+1} < k2}``."""
    p, q, pp, qq = _convergents(prefix)
    # x = (p s + pp) / (q s + qq) with s = A_{j+1} + T^{j+1} x in [k1, k2)
    n1, d1 = p * k1 + pp, q * k1 + qq
    if k2 is None:
        n2, d2 = p, q
    else:
        n2, d2 = p * k2 + pp, q * k2 + qq
    if n1 * d2 > n2 * d1:
        n1, d1, n2, d2 = n2, d2, n1, d1
    return math.log1p((n2 * d1 - n1 * d2) / (d2 * (d1 + n1))) / LN2


def _tail(lo: int, hi: Optional[int]) -> float:
    return digit_tail_prob(lo) - (0.0 if hi is None else digit_tail_prob(hi))


def _conditional_range_bounds(k1: int, k2: Optional[int], B: int) -> Tuple[float, float]:
    """Bounds on ``P(k1 <= A < k2 | y)`` over ``y in (0, 1/B]``, from ``P(A >= k | y) = (1+y)/(k+y)``."""
    e = 1.0 / B
    if k2 is None:
        return 1.0 / (k1 + e), (1.0 + e) / k1
    w = k2 - k1
    return w / ((k1 + e) * (k2 + e)), (1.0 + e) * w / (k1 * k2)


def _free_middle(first: Range, last: Range, B: int) -> Tuple[float, float]:
    total, err = 0.0, 0.0
    lo_c, hi_c = _conditional_range_bounds(last[0], last[1], B)
    for a in range(first[0], first[1]):
        for b in range(1, B):
            total += _range_measure((a, b), *last)
        head = _range_measure((a,), B, None)
        lo, hi = head * lo_c, head * min(hi_c, 1.0)
        total += 0.5 * (lo + hi)
        err += 0.5 * (hi - lo)
    return total, err


def _enumerate(ranges: Sequence[Range]) -> float:
    total = 0.0

    def rec(prefix):
        nonlocal total
        j = len(prefix)
        if j == len(ranges) - 1:
            total += _range_measure(prefix, *ranges[-1])
            return
        lo, hi = ranges[j]
        for a in range(lo, hi):
            rec(prefix + (a,))

    rec(())
    return total


@lru_cache(maxsize=4096)
def _probability(ranges: Tuple[Range, ...], B: int) -> Tuple[float, float]:
    free = (1, None)
    while ranges and ranges[-1] == free:
        ranges = ranges[:-1]
    while ranges and ranges[0] == free:
        ranges = ranges[1:]
    if any(hi is not None and hi <= lo for lo, hi in ranges):
        return 0.0, 0.0
    if not ranges:
        return 1.0, 0.0
    if len(ranges) == 1:
        return _tail(*ranges[0]), 0.0
    lo, hi = ranges[0]
    if hi is None:
        a, ea = _probability(ranges[1:], B)
        b, eb = _probability(((1, lo),) + ranges[1:], B)
        return a - b, ea + eb
    for i in range(1, len(ranges) - 1):
        lo, hi = ranges[i]
        if hi is None:
            if (lo, hi) == free:
                if len(ranges) != 3:
                    raise ValueError("free middle digits are supported for blocks of length 3 only")
                return _free_middle(ranges[0], ranges[2], B)
            a, ea = _probability(ranges[:i] + (free,) + ranges[i + 1:], B)
            b, eb = _probability(ranges[:i] + ((1, lo),) + ranges[i + 1:], B)
            return a - b, ea + eb
    return _enumerate(ranges), 0.0


def constraint_probability(constraints: Sequence[CylinderConstraint],
                           tail_truncation: int = DEFAULT_TAIL_TRUNCATION) -> Tuple[float, float]:
    """``P(A_i satisfies constraints[i] for all i)`` and a rigorous bound on its error.

    Blocks of length up to 3 are supported for any constraints; longer blocks
    work as long as no unconstrained digit sits between constrained ones.
    """
    ranges = tuple(c.range() for c in constraints)
    for lo, hi in ranges:
        if lo < 1:
            raise ValueError("digit bounds must be positive")
    cut = max([lo for lo, _ in ranges] + [hi for _, hi in ranges if hi is not None]) + int(tail_truncation)
    return _probability(ranges, cut)


@dataclass(frozen=True)
class ExactLaw:
    n: int
    u: float
    threshold_m: int
    pmf: Tuple[float, ...]
    error_bound: float

    def __getitem__(self, k: int) -> float:
        return self.pmf[k]


def exact_exceedance_distribution(n: int, u: float,
                                  tail_truncation: int = DEFAULT_TAIL_TRUNCATION) -> ExactLaw:
    """Law of ``#{i <= n : A_i >= m}``, ``m = ceil(n u / log 2)``, for ``n <= 3``.

    ``error_bound`` bounds the absolute error of every atom (truncation only;
    float summation error is orders of magnitude smaller).
    """
    if n not in (1, 2, 3):
        raise ValueError("exact laws are available for n <= 3")
    m = scaled_threshold(n, u)
    if m == 1:
        pmf = [0.0] * (n + 1)
        pmf[n] = 1.0
        return ExactLaw(n, u, m, tuple(pmf), 0.0)
    low, high = AtMost(m - 1), AtLeast(m)
    pmf, errs = [0.0] * (n + 1), [0.0] * (n + 1)
    for mask in range(1 << n):
        pattern = [high if mask >> i & 1 else low for i in range(n)]
        p, e = constraint_probability(pattern, tail_truncation)
        k = bin(mask).count("1")
        pmf[k] += p
        errs[k] += e
    err = max(errs)
    if err > MAX_ERROR:
        raise TruncationTooCoarse(f"error bound {err:.3g} exceeds {MAX_ERROR}")
    return ExactLaw(n, u, m, tuple(pmf), err)
