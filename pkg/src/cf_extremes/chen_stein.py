"""Chen-Stein Poisson approximation bounds for exceedances of the Gauss digit process.

Two layers live here.  The generic layer evaluates the three error terms of
the Arratia-Goldstein-Gordon bound for an arbitrary collection of dependent
indicators (:class:`DependencySpec`, :func:`compute_b_terms`).  The
continued-fraction layer plugs in the psi-mixing model ``psi(n) = C theta**-n``
and the marginal tail bound ``P(A_1 log 2 > n u) <= 1 / (n u)`` to get
closed-form bounds with an explicit constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import chain
from .cf_core import LN2, digit_tail_prob, scaled_threshold

__all__ = [
    "MixingModel",
    "DependencySpec",
    "ChenSteinBounds",
    "InvalidSpec",
    "DEFAULT_MIXING",
    "solve_l_n",
    "compute_b_terms",
    "theorem2_bound",
    "analytic_bounds_cf",
    "freedman_second_order",
    "tail_discrepancy",
    "assembled_bound",
    "explicit_kappa",
    "theorem1_bound",
    "empirical_pair_expectation",
    "PairEstimate",
]


class InvalidSpec(ValueError):
    pass


@dataclass(frozen=True)
class MixingModel:
    """``psi(n) = C * theta**-n``."""

    C: float = 2.0
    theta: float = 3.29

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be positive")
        if not self.theta > 1:
            raise ValueError("theta must exceed 1")

    def psi(self, n: float) -> float:
        return self.C * self.theta ** (-n)


DEFAULT_MIXING = MixingModel()


def solve_l_n(theta: float, n: float) -> float:
    """The unique ``l > 0`` with ``l * theta**l = n``.

    Bisection on ``log l + l log theta = log n`` followed by a Newton polish,
    to a relative residual of 1e-12 or better.
    """
    if not theta > 1:
        raise ValueError("theta must exceed 1")
    if not n >= 1:
        raise ValueError("n must be >= 1")
    log_t, log_n = math.log(theta), math.log(n)

    def g(l):
        return math.log(l) + l * log_t - log_n

    lo, hi = 1e-300, log_n / log_t + 1.0
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if g(mid) < 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    l = 0.5 * (lo + hi)
    for _ in range(3):
        step = g(l) / (1.0 / l + log_t)
        if step == 0:
            break
        l -= step
    return l


def l_n_residual(theta: float, n: float, l: float) -> float:
    """Relative residual ``|l theta**l - n| / n`` evaluated without overflow."""
    return abs(math.expm1(math.log(l) + l * math.log(theta) - math.log(n)))


@dataclass
class DependencySpec:
    """Dependent Bernoulli indicators ``X_alpha``, ``alpha = 0 .. index_count-1``.

    ``neighborhood(alpha)`` must contain ``alpha``.  ``pair_expectation`` gives
    ``E(X_alpha X_beta)`` for ``beta != alpha`` in the neighbourhood and
    ``b3_term(alpha)`` bounds ``E|E(X_alpha - p_alpha | H_alpha)|``.  The
    ``*_kind`` fields record whether those are analytic bounds, empirical
    estimates or exact.

    When ``window_radius`` is set the spec is homogeneous and stationary
    (constant ``p``, ``B_alpha = {beta : |beta - alpha| <= r}``, pair
    expectations depending on the gap only) and :func:`compute_b_terms` uses
    an O(r) closed form instead of the double sum.
    """

    index_count: int
    marginals: Callable[[int], float]
    neighborhood: Callable[[int], Iterable[int]]
    pair_expectation: Callable[[int, int], float]
    b3_term: Callable[[int], float]
    partition: Optional[List[Sequence[int]]] = None
    pair_kind: str = "bound"
    b3_kind: str = "bound"
    window_radius: Optional[int] = None
    gap_expectation: Optional[Callable[[int], float]] = None

    def blocks(self) -> List[Sequence[int]]:
        if self.partition is None:
            return [range(self.index_count)]
        return self.partition

    @classmethod
    def independent(cls, p: Sequence[float]) -> "DependencySpec":
        p = [float(x) for x in p]
        return cls(len(p), lambda a: p[a], lambda a: (a,), lambda a, b: p[a] * p[b],
                   lambda a: 0.0, pair_kind="exact", b3_kind="exact")

    @classmethod
    def stationary_window(cls, n: int, p: float, radius: int,
                          gap_expectation: Callable[[int], float],
                          b3: float = 0.0, pair_kind: str = "bound",
                          b3_kind: str = "bound") -> "DependencySpec":
        def nbhd(a):
            return range(max(0, a - radius), min(n, a + radius + 1))

        return cls(n, lambda a: p, nbhd, lambda a, b: gap_expectation(abs(a - b)),
                   lambda a: b3, pair_kind=pair_kind, b3_kind=b3_kind,
                   window_radius=radius, gap_expectation=gap_expectation)

    def validate(self):
        seen = set()
        for block in self.blocks():
            block = list(block)
            if not block:
                raise InvalidSpec("blocks must be nonempty")
            for a in block:
                if a in seen:
                    raise InvalidSpec(f"index {a} appears in two blocks")
                seen.add(a)
        if seen != set(range(self.index_count)):
            raise InvalidSpec("blocks must partition the index set")
        for a in range(self.index_count):
            if a not in set(self.neighborhood(a)):
                raise InvalidSpec(f"neighbourhood of {a} omits {a}")
            if not 0.0 <= self.marginals(a) <= 1.0:
                raise InvalidSpec(f"p_{a} is not a probability")


@dataclass(frozen=True)
class ChenSteinBounds:
    b1: float
    b2: float
    b3: float
    lambdas: Tuple[float, ...]
    multiplier: float
    total: float
    mode: str
    l_n: Optional[float] = None

    @property
    def effective(self) -> float:
        """The bound capped at 1, the largest possible total variation distance."""
        return min(self.total, 1.0)


def _multiplier(lambdas: Sequence[float]) -> float:
    lam_min = min(lambdas)
    if lam_min <= 0:
        return 2.0
    return min(2.0, 2.8 / math.sqrt(lam_min))


def compute_b_terms(spec: DependencySpec, closed_form: Optional[bool] = None) -> ChenSteinBounds:
    """Evaluate ``b1, b2, b3`` and ``min{2, 2.8 max_j lambda_j**-1/2} (2 b1 + 2 b2 + b3)``."""
    spec.validate()
    if closed_form is None:
        closed_form = spec.window_radius is not None and spec.partition is None
    n = spec.index_count
    if closed_form:
        if spec.window_radius is None:
            raise InvalidSpec("closed form needs a homogeneous window spec")
        p, r = spec.marginals(0), min(spec.window_radius, n - 1)
        sizes = n * (2 * r + 1) - r * (r + 1)
        b1 = sizes * p * p
        b2 = sum(2.0 * (n - g) * spec.gap_expectation(g) for g in range(1, r + 1))
        b3 = n * spec.b3_term(0)
        lambdas = (n * p,)
    else:
        b1 = b2 = b3 = 0.0
        for a in range(n):
            pa = spec.marginals(a)
            for b in spec.neighborhood(a):
                b1 += pa * spec.marginals(b)
                if b != a:
                    b2 += spec.pair_expectation(a, b)
            b3 += spec.b3_term(a)
        lambdas = tuple(sum(spec.marginals(a) for a in block) for block in spec.blocks())
    mult = _multiplier(lambdas)
    return ChenSteinBounds(b1, b2, b3, tuple(lambdas), mult, mult * (2 * b1 + 2 * b2 + b3),
                           "empirical" if "empirical" in (spec.pair_kind, spec.b3_kind) else "analytic")


def theorem2_bound(spec: DependencySpec) -> float:
    return compute_b_terms(spec).total


def analytic_bounds_cf(n: int, u: float, mixing: MixingModel = DEFAULT_MIXING) -> ChenSteinBounds:
    """Closed-form b-term bounds for the digit exceedances ``X_i = 1{A_i log 2 > n u}``.

    Uses ``p <= 1/(nu)``, windows of half-width ``l_n``, ``E(X_a X_b) <=
    (1 + C) p**2`` and ``|E(X_a - p | H_a)| <= p psi(l_n)``, with the
    conservative multiplier 2.
    """
    if n < 1 or not u > 0:
        raise ValueError("need n >= 1 and u > 0")
    l = solve_l_n(mixing.theta, n)
    rate = l / n
    b1 = 2.0 / u ** 2 * rate
    b2 = 2.0 * (1.0 + mixing.C) / u ** 2 * rate
    b3 = mixing.C / u * rate
    lam = n * digit_tail_prob(scaled_threshold(n, u))
    return ChenSteinBounds(b1, b2, b3, (lam,), 2.0, 2.0 * (2 * b1 + 2 * b2 + b3), "analytic", l)


def tail_discrepancy(n: int, u: float) -> float:
    """``|n P(A_1 log 2 > n u) - 1/u|`` from the exact marginal tail."""
    m = scaled_threshold(n, u)
    return abs(n * math.log1p(1.0 / m) / LN2 - 1.0 / u)


def freedman_second_order(n: int, u: float) -> float:
    """Bound ``3 log 2 / (2 u**2 n)`` on the TV distance between the two Poisson laws.

    The exact mean discrepancy it dominates is :func:`tail_discrepancy`.
    """
    if n < 1 or not u > 0:
        raise ValueError("need n >= 1 and u > 0")
    bound = 3.0 * LN2 / (2.0 * u * u * n)
    exact = tail_discrepancy(n, u)
    if exact > bound:
        raise AssertionError(f"mean discrepancy {exact} exceeds its bound {bound}")
    return bound


def assembled_bound(n: int, u: float, mixing: MixingModel = DEFAULT_MIXING) -> float:
    """Chen-Stein term plus the Poisson-to-Poisson term, before the constant is collected."""
    return analytic_bounds_cf(n, u, mixing).total + freedman_second_order(n, u)


def explicit_kappa(mixing: MixingModel = DEFAULT_MIXING) -> float:
    """``16 + 10 C + 3 log 2 / 2``.

    Dominates :func:`assembled_bound` as ``kappa * max(1/u, 1/u**2) * l_n / n``
    whenever ``l_n >= 1``, i.e. for ``n >= theta``.
    """
    return 16.0 + 10.0 * mixing.C + 1.5 * LN2


def theorem1_bound(n: int, delta: float, mixing: MixingModel = DEFAULT_MIXING) -> float:
    """``kappa / min(delta, delta**2) * l_n / n``: bounds ``sup_{u >= delta} d_TV``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    return explicit_kappa(mixing) / min(delta, delta * delta) * solve_l_n(mixing.theta, n) / n


@dataclass(frozen=True)
class PairEstimate:
    estimate: float
    stderr: float
    threshold_m: int
    gap: int
    trials: int


def empirical_pair_expectation(n: int, u: float, gap: int, trials: int, seed: int,
                               workers: Optional[int] = None) -> PairEstimate:
    """Monte Carlo ``P(A_1 >= m, A_{1+gap} >= m)``, ``m = ceil(n u / log 2)``.

    Averages over all ``n - gap`` position pairs in each sequence (stationarity);
    the standard error is across trials.
    """
    if gap < 1 or gap + 1 > n:
        raise ValueError("need 1 <= gap <= n - 1")
    m = scaled_threshold(n, u)
    if m > 2 ** 52:
        return PairEstimate(0.0, 0.0, m, gap, trials)
    rec = chain.simulate_large_digits(n, trials, seed, m, workers)
    per_trial = rec.pair_counts(m, gap) / (n - gap)
    se = per_trial.std(ddof=1) / math.sqrt(trials) if trials > 1 else 0.0
    return PairEstimate(float(per_trial.mean()), float(se), m, gap, trials)
