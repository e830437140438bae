"""Checks of the extremal point process ``Q_n = sum_i delta_{A_i log 2 / n}``.

``Q_n`` converges to a Poisson random measure with mean measure
``nu((u, inf]) = 1/u``.  On finite unions of intervals ``(u_i, v_i]`` this
amounts to two conditions: mean counts converge to ``nu`` and avoidance
probabilities converge to ``exp(-nu)``.  Both are estimated here and compared
with the limit and with the exact finite-n value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import chain
from .cf_core import digit_tail_prob, scaled_threshold


class _Unbounded:
    """The ``+inf`` endpoint of ``(u, inf]``."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNBOUNDED"

    def __reduce__(self):
        return (_Unbounded, ())


UNBOUNDED = _Unbounded()
Endpoint = Union[float, _Unbounded]

DEFAULT_CUTOFF = 0.01


def _inv(v: Endpoint) -> float:
    return 0.0 if v is UNBOUNDED else 1.0 / v


def _before(a: Endpoint, b: Endpoint) -> bool:
    """``a < b`` with UNBOUNDED as the largest element."""
    if a is UNBOUNDED:
        return False
    return b is UNBOUNDED or a < b


@dataclass(frozen=True)
class IntervalUnion:
    """Disjoint, increasing half-open intervals ``(u_i, v_i]``.

    Adjacent intervals (``v_i == u_{i+1}``) are allowed; :meth:`merged` fuses
    them.
    """

    intervals: Tuple[Tuple[float, Endpoint], ...]

    def __post_init__(self):
        ivs = tuple((float(u), v if v is UNBOUNDED else float(v)) for u, v in self.intervals)
        if not ivs:
            raise ValueError("empty union")
        prev: Endpoint = 0.0
        for i, (u, v) in enumerate(ivs):
            if not u > 0 or math.isinf(u):
                raise ValueError("left endpoints must be positive and finite")
            if v is not UNBOUNDED and math.isinf(v):
                raise ValueError("use UNBOUNDED for an infinite right endpoint")
            if not _before(u, v):
                raise ValueError(f"interval ({u}, {v}] is empty")
            if i and (prev is UNBOUNDED or u < prev):
                raise ValueError("intervals must be increasing and disjoint")
            prev = v
        object.__setattr__(self, "intervals", ivs)

    @classmethod
    def of(cls, *pairs) -> "IntervalUnion":
        return cls(tuple(pairs))

    @property
    def nu_mass(self) -> float:
        return sum(1.0 / u - _inv(v) for u, v in self.intervals)

    @property
    def lowest(self) -> float:
        return self.intervals[0][0]

    def merged(self) -> "IntervalUnion":
        out: List[list] = []
        for u, v in self.intervals:
            if out and out[-1][1] == u:
                out[-1][1] = v
            else:
                out.append([u, v])
        return IntervalUnion(tuple((u, v) for u, v in out))

    def digit_ranges(self, n: int) -> List[Tuple[int, Optional[int]]]:
        """``(m_u, m_v)`` with ``A log 2 / n in (u, v]  <=>  m_u <= A < m_v`` (``None`` = no upper bound)."""
        return [(scaled_threshold(n, u), None if v is UNBOUNDED else scaled_threshold(n, v))
                for u, v in self.intervals]

    def exact_mean(self, n: int) -> float:
        """``E Q_n(D) = n sum_i [P(A_1 >= m_{u_i}) - P(A_1 >= m_{v_i})]``."""
        total = 0.0
        for lo, hi in self.digit_ranges(n):
            total += digit_tail_prob(lo) - (0.0 if hi is None else digit_tail_prob(hi))
        return n * total


@dataclass
class PointProcessSample:
    """Points ``A_i log 2 / n >= cutoff`` of ``Q_n`` for many trials, kept as digits."""

    n: int
    cutoff: float
    records: chain.LargeDigits

    @classmethod
    def simulate(cls, n: int, trials: int, seed: int, cutoff: float = DEFAULT_CUTOFF,
                 workers: Optional[int] = None) -> "PointProcessSample":
        floor = scaled_threshold(n, cutoff)
        return cls(n, cutoff, chain.simulate_large_digits(n, trials, seed, floor, workers))

    @property
    def trials(self) -> int:
        return self.records.trials

    def points(self, trial: int) -> np.ndarray:
        sel = self.records.trial == trial
        return np.sort(self.records.digit[sel] * math.log(2.0) / self.n)[::-1]

    def _require(self, union: IntervalUnion):
        if union.lowest <= self.cutoff:
            raise ValueError(f"interval starts at {union.lowest}, at or below the storage cutoff {self.cutoff}")

    def counts(self, union: IntervalUnion) -> np.ndarray:
        """Per-trial ``Q_n(D)``, exact for ``D`` above the cutoff."""
        self._require(union)
        total = np.zeros(self.trials, dtype=np.int64)
        for lo, hi in union.digit_ranges(self.n):
            total += self.records.counts_between(lo, hi)
        return total


@dataclass(frozen=True)
class MeanMeasureCheck:
    n: int
    union: IntervalUnion
    empirical: float
    stderr: float
    exact_finite_n: float
    limit: float
    trials: int

    @property
    def z_exact(self) -> float:
        return (self.empirical - self.exact_finite_n) / self.stderr if self.stderr > 0 else 0.0


@dataclass(frozen=True)
class AvoidanceCheck:
    n: int
    union: IntervalUnion
    empirical: float
    stderr: float
    limit: float
    poisson_finite_n: float
    trials: int

    @property
    def discretization(self) -> float:
        """Deviation of the limit from ``exp(-E Q_n(D))`` caused by integer thresholds."""
        return abs(self.poisson_finite_n - self.limit)


def _as_union(interval) -> IntervalUnion:
    if isinstance(interval, IntervalUnion):
        return interval
    return IntervalUnion((tuple(interval),))


def mean_measure_check(n: int, interval, trials: int, seed: int,
                       sample: Optional[PointProcessSample] = None,
                       workers: Optional[int] = None) -> MeanMeasureCheck:
    union = _as_union(interval)
    if sample is None:
        sample = PointProcessSample.simulate(n, trials, seed, min(DEFAULT_CUTOFF, union.lowest / 2), workers)
    c = sample.counts(union).astype(float)
    se = c.std(ddof=1) / math.sqrt(c.size) if c.size > 1 else 0.0
    return MeanMeasureCheck(n, union, float(c.mean()), float(se), union.exact_mean(n),
                            union.nu_mass, c.size)


def avoidance_probability_check(n: int, union: IntervalUnion, trials: int, seed: int,
                                sample: Optional[PointProcessSample] = None,
                                workers: Optional[int] = None) -> AvoidanceCheck:
    union = _as_union(union)
    if sample is None:
        sample = PointProcessSample.simulate(n, trials, seed, min(DEFAULT_CUTOFF, union.lowest / 2), workers)
    empty = sample.counts(union) == 0
    p = float(empty.mean())
    se = math.sqrt(max(p * (1 - p), 0.0) / empty.size)
    return AvoidanceCheck(n, union, p, se, math.exp(-union.nu_mass),
                          math.exp(-union.exact_mean(n)), empty.size)
