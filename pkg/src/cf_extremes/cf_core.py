"""Exact sampling from the Gauss measure and error-free continued fraction digits.

A sample point ``x`` is never held as a float.  It is drawn by inverse CDF,
``x = 2**U - 1`` with ``U`` uniform on (0, 1), where ``U`` is revealed lazily
one dyadic bit at a time.  At any moment the sample is known only through an
enclosure ``[lo, hi]`` with exact rational endpoints, and a digit is emitted
only once every point of the enclosure agrees on it.  When it does not, more
bits of ``U`` are drawn and the enclosure shrinks.

The closed-form marginal laws of the digits live here as well.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from numbers import Real
from typing import Iterator, List, Optional, Tuple

import mpmath
from mpmath import libmp

__all__ = [
    "ExactRational",
    "RealInterval",
    "GaussMeasure",
    "RefinementPolicy",
    "RefinementExhausted",
    "StreamTerminated",
    "BitSource",
    "DigitStream",
    "enclose_gauss_point",
    "gauss_sample",
    "next_digit",
    "digits_of_rational",
    "digit_tail_prob",
    "digit_pmf",
    "scaled_threshold",
]

ExactRational = Fraction

LN2 = math.log(2.0)


class RefinementExhausted(RuntimeError):
    """The bit budget ran out before the enclosure settled on a digit."""


class StreamTerminated(Exception):
    """A rational point interval has no further digits."""


@dataclass(frozen=True)
class RealInterval:
    """Enclosure ``[lo, hi]`` of a point of (0, 1) by exact rationals."""

    lo: Fraction
    hi: Fraction
    bit_budget_used: int = 0

    def __post_init__(self):
        if not (0 < self.lo <= self.hi < 1):
            raise ValueError(f"enclosure must satisfy 0 < lo <= hi < 1, got [{self.lo}, {self.hi}]")
        if self.bit_budget_used < 0:
            raise ValueError("bit_budget_used must be nonnegative")

    @property
    def width(self) -> Fraction:
        return self.hi - self.lo

    def contains(self, x) -> bool:
        return self.lo <= x <= self.hi

    def __contains__(self, x) -> bool:
        return self.contains(x)


class GaussMeasure:
    """The invariant law ``dx / ((1 + x) log 2)`` of the Gauss map on (0, 1)."""

    @staticmethod
    def density(x: float) -> float:
        return 1.0 / ((1.0 + x) * LN2)

    @staticmethod
    def cdf(x) -> float:
        if x <= 0:
            return 0.0
        if x >= 1:
            return 1.0
        return math.log1p(x) / LN2

    @staticmethod
    def inverse_cdf(p: float) -> float:
        return math.expm1(p * LN2)

    @staticmethod
    def measure(a, b) -> float:
        """Measure of the interval (a, b), computed from exact endpoints when given."""
        a = min(max(Fraction(a), Fraction(0)), Fraction(1))
        b = min(max(Fraction(b), Fraction(0)), Fraction(1))
        if b <= a:
            return 0.0
        # log((1+b)/(1+a)) = log1p((b-a)/(1+a)); the ratio is formed exactly
        return math.log1p((b - a) / (1 + a)) / LN2


@dataclass(frozen=True)
class RefinementPolicy:
    initial_bits: int = 128
    growth_factor: int = 2
    max_bits: int = 65536

    def __post_init__(self):
        if self.initial_bits < 2:
            raise ValueError("initial_bits must be >= 2")
        if self.growth_factor < 2:
            raise ValueError("growth_factor must be >= 2")
        if self.max_bits < self.initial_bits:
            raise ValueError("max_bits must be >= initial_bits")

    def next_budget(self, bits: int) -> int:
        return min(bits * self.growth_factor, self.max_bits)


class BitSource:
    """Deterministic uniform bits keyed by ``(seed, trial)``.

    Bits come from BLAKE2b in counter mode, so every ``(seed, trial)`` pair
    owns an independent stream and a longer read always extends a shorter
    one.
    """

    _CHUNK_BITS = 512

    def __init__(self, seed: int, trial: int):
        self.seed = int(seed)
        self.trial = int(trial)
        self._key = hashlib.blake2b(
            f"cf-extremes:{self.seed}:{self.trial}".encode(), digest_size=32
        ).digest()
        self._counter = 0
        self._buffer = 0
        self._buffered = 0
        self.consumed = 0

    def _refill(self):
        block = hashlib.blake2b(
            self._counter.to_bytes(8, "little"), key=self._key, digest_size=64
        ).digest()
        self._counter += 1
        self._buffer = (self._buffer << self._CHUNK_BITS) | int.from_bytes(block, "big")
        self._buffered += self._CHUNK_BITS

    def take(self, k: int) -> int:
        """Return the next ``k`` bits as an integer, most significant first."""
        if k < 0:
            raise ValueError("k must be nonnegative")
        while self._buffered < k:
            self._refill()
        shift = self._buffered - k
        out = self._buffer >> shift
        self._buffer &= (1 << shift) - 1
        self._buffered = shift
        self.consumed += k
        return out


def _pow2_dyadic_bounds(j: int, b: int, prec: int) -> Tuple[int, int]:
    """Integers ``L, H`` with ``L <= 2**(j / 2**b) * 2**prec <= H``.

    mpmath evaluates ``exp(j 2^-b log 2)`` with 64 guard bits; widening by one
    unit of the ``2**-prec`` grid on each side absorbs its rounding error.
    """
    if j == 0:
        one = 1 << prec
        return one, one
    wp = prec + 64
    t = libmp.mpf_mul(libmp.from_man_exp(j, -b), libmp.mpf_ln2(wp), wp)
    sign, man, exp, _ = libmp.mpf_exp(t, wp)
    shift = exp + prec
    if shift >= 0:
        scaled = man << shift
        return scaled - 1, scaled + 1
    floor = man >> (-shift)
    return floor - 1, floor + 2


def enclose_gauss_point(j: int, b: int, bits_used: Optional[int] = None) -> Optional[RealInterval]:
    """Enclosure of ``2**U - 1`` for ``U`` in ``[j / 2**b, (j + 1) / 2**b]``.

    Returns ``None`` when the enclosure is not strictly inside (0, 1), which can
    only happen for the two extreme dyadic cells; the caller draws more bits.
    """
    if not 0 <= j < (1 << b):
        raise ValueError("j must lie in [0, 2**b)")
    prec = b + 32
    one = 1 << prec
    lo_num, _ = _pow2_dyadic_bounds(j, b, prec)
    _, hi_num = _pow2_dyadic_bounds(j + 1, b, prec)
    lo_num -= one
    hi_num -= one
    if lo_num <= 0 or hi_num >= one:
        return None
    return RealInterval(Fraction(lo_num, one), Fraction(hi_num, one),
                        b if bits_used is None else bits_used)


def gauss_sample(seed: int, trial: int, bits: int = 128) -> RealInterval:
    """Draw one Gauss-distributed point as an exact enclosure of ``bits`` bits.

    The result is a deterministic function of ``(seed, trial, bits)``.  If the
    first ``bits`` bits land in an extreme dyadic cell the budget is extended
    until the enclosure is strictly inside (0, 1).
    """
    if bits < 2:
        raise ValueError("bits must be >= 2")
    source = BitSource(seed, trial)
    j = source.take(bits)
    b = bits
    while True:
        interval = enclose_gauss_point(j, b, source.consumed)
        if interval is not None:
            return interval
        j = (j << bits) | source.take(bits)
        b += bits


class DigitStream:
    """Lazily extracted continued fraction digits of one Gauss sample.

    The current state is the image of the enclosure under the digits already
    emitted, ``T**k [lo, hi]``.  Endpoints are kept as integer pairs; each Gauss
    map step is one Euclid step, so fractions stay in lowest terms for free.
    """

    def __init__(self, seed: int = 0, trial: int = 0,
                 policy: RefinementPolicy = RefinementPolicy()):
        self.policy = policy
        self.digits_emitted: List[int] = []
        self._source: Optional[BitSource] = BitSource(seed, trial)
        self._terminated = False
        self._j = self._source.take(policy.initial_bits)
        self._b = policy.initial_bits
        while not self._rebuild():
            self._grow()

    @classmethod
    def from_interval(cls, lo, hi) -> "DigitStream":
        """A stream over a fixed enclosure with no random source.

        ``lo == hi`` is allowed for rational points; such a stream terminates
        once the Euclidean algorithm does.
        """
        lo, hi = Fraction(lo), Fraction(hi)
        if not (0 < lo <= hi < 1):
            raise ValueError("need 0 < lo <= hi < 1")
        self = cls.__new__(cls)
        self.policy = RefinementPolicy()
        self.digits_emitted = []
        self._source = None
        self._terminated = False
        self._j = self._b = 0
        self._state = (lo.numerator, lo.denominator, hi.numerator, hi.denominator)
        return self

    @property
    def bit_budget_used(self) -> int:
        return 0 if self._source is None else self._source.consumed

    @property
    def state(self) -> RealInterval:
        if self._terminated:
            raise StreamTerminated("rational point fully expanded")
        ln, ld, hn, hd = self._state
        return RealInterval(Fraction(ln, ld), Fraction(hn, hd), self.bit_budget_used)

    @property
    def sample(self) -> RealInterval:
        """Current enclosure of the original sample point ``x``."""
        lo, hi = self._x_bounds
        return RealInterval(lo, hi, self.bit_budget_used)

    def _grow(self):
        new_b = self.policy.next_budget(self._b)
        if new_b <= self._b:
            raise RefinementExhausted(
                f"max_bits={self.policy.max_bits} reached after {len(self.digits_emitted)} digits")
        self._j = (self._j << (new_b - self._b)) | self._source.take(new_b - self._b)
        self._b = new_b

    def _rebuild(self) -> bool:
        interval = enclose_gauss_point(self._j, self._b, self.bit_budget_used)
        if interval is None:
            return False
        self._x_bounds = (interval.lo, interval.hi)
        ln, ld = interval.lo.numerator, interval.lo.denominator
        hn, hd = interval.hi.numerator, interval.hi.denominator
        for a in self.digits_emitted:
            # nested enclosures cannot leave the cylinder of an emitted digit
            assert hd // hn == a == ld // ln
            ln, ld, hn, hd = hd - a * hn, hn, ld - a * ln, ln
        self._state = (ln, ld, hn, hd)
        return True

    def refine(self):
        """Spend more random bits on the enclosure; raises when out of budget."""
        if self._source is None:
            raise RefinementExhausted("fixed enclosure cannot be refined")
        while True:
            self._grow()
            if self._rebuild():
                return

    def try_digit(self) -> Optional[int]:
        """Emit the next digit if the enclosure determines it, else ``None``."""
        if self._terminated:
            raise StreamTerminated("rational point fully expanded")
        ln, ld, hn, hd = self._state
        a = int(hd // hn)
        if ld // ln != a:
            return None
        if hd % hn == 0:
            if ln * hd != hn * ld:
                return None  # hi sits on a cylinder boundary
            # point interval at 1/a: the expansion ends here
            self._terminated = True
            self.digits_emitted.append(a)
            return a
        self._state = (hd - a * hn, hn, ld - a * ln, ln)
        self.digits_emitted.append(a)
        return a

    def next_digit(self) -> int:
        while True:
            a = self.try_digit()
            if a is not None:
                return a
            self.refine()

    def take(self, count: int) -> List[int]:
        return [self.next_digit() for _ in range(count)]

    def __iter__(self) -> Iterator[int]:
        while True:
            try:
                yield self.next_digit()
            except StreamTerminated:
                return


def next_digit(stream: DigitStream) -> int:
    return stream.next_digit()


def digits_of_rational(p: int, q: int, max_count: int) -> List[int]:
    """Continued fraction digits of ``p/q`` in (0, 1) by the Euclidean algorithm."""
    if not (0 < p < q):
        raise ValueError("need 0 < p < q")
    if math.gcd(p, q) != 1:
        raise ValueError("p/q must be in lowest terms")
    out = []
    while p and len(out) < max_count:
        a, r = divmod(q, p)
        out.append(a)
        p, q = r, p
    return out


def digit_tail_prob(k: int) -> float:
    """``P(A_1 >= k) = log(1 + 1/k) / log 2`` under the Gauss measure."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return math.log1p(1.0 / k) / LN2


def digit_pmf(k: int) -> float:
    """``P(A_1 = k) = log(1 + 1/(k(k+2))) / log 2``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    return math.log1p(1.0 / (k * (k + 2))) / LN2


@lru_cache(maxsize=4096)
def _threshold(n: int, u: Fraction) -> int:
    prec = 96
    while prec <= 1 << 16:
        with mpmath.workprec(prec):
            q = mpmath.mpf(n) * mpmath.mpf(u.numerator) / mpmath.mpf(u.denominator) / mpmath.ln2
            err = abs(q) * mpmath.ldexp(1, 8 - prec)
            lo, hi = q - err, q + err
            c = int(mpmath.ceil(lo))
            if c >= hi:
                return max(c, 1)
        prec *= 2
    raise ArithmeticError("could not resolve the scaled threshold")  # pragma: no cover


def scaled_threshold(n: int, u: Real) -> int:
    """Smallest digit ``m`` with ``m log 2 > n u``, i.e. ``ceil(n u / log 2)``.

    ``u`` is taken as the exact rational it represents (floats are dyadic), and
    ``n u / log 2`` is evaluated in outward-rounded high precision until the
    ceiling is unambiguous.  Since ``log 2`` is irrational no true tie exists.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (u > 0) or (isinstance(u, float) and not math.isfinite(u)):
        raise ValueError("u must be a positive finite real")
    return _threshold(int(n), Fraction(u))
