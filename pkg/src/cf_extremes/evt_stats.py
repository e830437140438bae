"""Exceedance counts, order statistics and their Poisson limits."""

from __future__ import annotations

import heapq
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
from scipy import special

from . import chain
from .cf_core import LN2, DigitStream, RefinementExhausted, RefinementPolicy, scaled_threshold

__all__ = [
    "ExceedanceSummary",
    "EmpiricalDist",
    "EstimatedDist",
    "PoissonLaw",
    "TVDistance",
    "exceedance_count",
    "limit_kth_max_cdf",
    "tv_distance",
    "tv_details",
    "noise_floor",
    "estimate_exceedance_law",
    "estimate_exceedance_laws",
    "weighted_exceedance_laws",
    "kth_max_cdf_empirical",
    "exact_sampler_counts",
]

TV_TAIL_EPS = 1e-12


@dataclass(frozen=True)
class ExceedanceSummary:
    n: int
    u: float
    threshold_m: int
    count: int
    top_k: List[float]


class PoissonLaw:
    """Poisson law with the given mean; pmf by the recurrence ``p(k+1) = p(k) mean / (k+1)``."""

    def __init__(self, mean: float):
        if not mean >= 0:
            raise ValueError("mean must be nonnegative")
        self.mean = float(mean)

    def __repr__(self):
        return f"PoissonLaw({self.mean!r})"

    def pmf_vector(self, size: int) -> np.ndarray:
        out = np.empty(size)
        lam = self.mean
        if lam < 700.0:
            p = math.exp(-lam)
            for k in range(size):
                out[k] = p
                p *= lam / (k + 1)
            return out
        # e^{-lam} underflows; work in logs
        k = np.arange(size)
        return np.exp(k * math.log(lam) - lam - special.gammaln(k + 1))

    def pmf(self, k: int) -> float:
        if k < 0:
            return 0.0
        return float(self.pmf_vector(k + 1)[k])

    def cdf(self, k: int) -> float:
        if k < 0:
            return 0.0
        return float(self.pmf_vector(k + 1).sum())

    def tail_beyond(self, k: int) -> float:
        """``P(X > k)``, accurate for tiny tails."""
        if k < 0:
            return 1.0
        if self.mean == 0:
            return 0.0
        return float(special.pdtrc(k, self.mean))

    def truncation_point(self, eps: float = TV_TAIL_EPS) -> int:
        """Smallest ``K`` with ``P(X > K) < eps``."""
        k = max(int(self.mean + 10 * math.sqrt(self.mean) + 10), 1)
        while self.tail_beyond(k) >= eps:
            k *= 2
        lo, hi = -1, k
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.tail_beyond(mid) < eps:
                hi = mid
            else:
                lo = mid
        return hi


@dataclass
class EmpiricalDist:
    """Monte Carlo law of a count: ``counts[k]`` trials ended with value ``k``."""

    counts: Dict[int, int]
    total_trials: int
    discarded: int = 0

    def __post_init__(self):
        self.counts = {int(k): int(v) for k, v in self.counts.items() if v}
        if sum(self.counts.values()) != self.total_trials:
            raise ValueError("counts must sum to total_trials")
        if self.total_trials < 1:
            raise ValueError("total_trials must be positive")
        if any(k < 0 for k in self.counts):
            raise ValueError("support must be nonnegative integers")

    @classmethod
    def from_samples(cls, values, discarded: int = 0) -> "EmpiricalDist":
        values = np.asarray(values, dtype=np.int64)
        ks, cs = np.unique(values, return_counts=True)
        return cls(dict(zip(ks.tolist(), cs.tolist())), int(values.size), discarded)

    def merge(self, other: "EmpiricalDist") -> "EmpiricalDist":
        c = Counter(self.counts)
        c.update(other.counts)
        return EmpiricalDist(dict(c), self.total_trials + other.total_trials,
                             self.discarded + other.discarded)

    __add__ = merge

    @property
    def support_max(self) -> int:
        return max(self.counts)

    def pmf(self, k: int) -> float:
        return self.counts.get(k, 0) / self.total_trials

    def pmf_vector(self, size: int) -> np.ndarray:
        out = np.zeros(size)
        for k, c in self.counts.items():
            if k < size:
                out[k] = c
        return out / self.total_trials

    def cdf(self, k: int) -> float:
        return sum(c for j, c in self.counts.items() if j <= k) / self.total_trials

    def tail_beyond(self, k: int) -> float:
        return sum(c for j, c in self.counts.items() if j > k) / self.total_trials

    def stderr_vector(self, size: int) -> np.ndarray:
        p = self.pmf_vector(size)
        return np.sqrt(p * (1 - p) / self.total_trials)

    def mean(self) -> float:
        return sum(k * c for k, c in self.counts.items()) / self.total_trials


@dataclass
class EstimatedDist:
    """A count law estimated by averaging unbiased per-replicate pmf weights.

    ``pmf`` covers ``0 .. levels - 1``; ``overflow`` is the estimated mass of
    ``{>= levels}``, which is kept lumped.
    """

    pmf_estimate: np.ndarray
    stderr: np.ndarray
    overflow: float
    replicates: int

    @classmethod
    def from_weights(cls, weights: np.ndarray) -> "EstimatedDist":
        weights = np.asarray(weights, dtype=float)
        r = weights.shape[0]
        mean = weights.mean(axis=0)
        se = weights.std(axis=0, ddof=1) / math.sqrt(r) if r > 1 else np.zeros_like(mean)
        return cls(mean[:-1], se[:-1], float(mean[-1]), r)

    @property
    def lump_at(self) -> int:
        return len(self.pmf_estimate)

    def pmf(self, k: int) -> float:
        if k >= self.lump_at:
            raise ValueError("mass beyond the level cap is lumped")
        return float(self.pmf_estimate[k]) if k >= 0 else 0.0

    def pmf_vector(self, size: int) -> np.ndarray:
        if size > self.lump_at:
            raise ValueError("mass beyond the level cap is lumped")
        return self.pmf_estimate[:size].copy()

    def stderr_vector(self, size: int) -> np.ndarray:
        return self.stderr[:size].copy()

    def tail_beyond(self, k: int) -> float:
        return float(self.pmf_estimate[k + 1:].sum() + self.overflow)


Law = Union[EmpiricalDist, EstimatedDist, PoissonLaw]


@dataclass(frozen=True)
class TVDistance:
    distance: float
    truncation_point: int
    error_bound: float

    def __float__(self):
        return self.distance


def tv_details(p: Law, q: Law) -> TVDistance:
    """Total variation distance ``0.5 * sum_k |p(k) - q(k)|``.

    The sum runs over ``0..K`` where ``K`` covers every empirical support and
    leaves Poisson tails below 1e-12; the neglected tails go into
    ``error_bound``.  A lumped estimate forces ``K`` to its level cap and its
    lump is compared as a single atom.
    """
    lumps = [d.lump_at for d in (p, q) if isinstance(d, EstimatedDist)]
    if lumps:
        size = min(lumps)
        tp, tq = p.tail_beyond(size - 1), q.tail_beyond(size - 1)
        body = np.abs(p.pmf_vector(size) - q.pmf_vector(size)).sum()
        dist = 0.5 * (body + abs(tp - tq))
        return TVDistance(float(min(dist, 1.0)), size - 1, float(min(tp, tq)))
    k = 0
    for d in (p, q):
        k = max(k, d.support_max if isinstance(d, EmpiricalDist) else d.truncation_point())
    size = k + 1
    body = np.abs(p.pmf_vector(size) - q.pmf_vector(size)).sum()
    err = 0.5 * (p.tail_beyond(k) + q.tail_beyond(k))
    return TVDistance(float(min(0.5 * body, 1.0)), k, float(err))


def tv_distance(p: Law, q: Law) -> float:
    return tv_details(p, q).distance


def noise_floor(estimate: Union[EmpiricalDist, EstimatedDist]) -> float:
    """Expected TV between the estimator and its own mean, ``sqrt(2/pi)/2 * sum_k se_k``."""
    size = estimate.lump_at if isinstance(estimate, EstimatedDist) else estimate.support_max + 1
    return float(math.sqrt(2 / math.pi) * 0.5 * estimate.stderr_vector(size).sum())


def exceedance_count(digits: Sequence[int], u: float, k: int = 3) -> ExceedanceSummary:
    """Count ``#{i : A_i log 2 > n u}`` and record the ``k`` largest ``A_i log 2``."""
    n = len(digits)
    if n == 0:
        raise ValueError("digits must be nonempty")
    m = scaled_threshold(n, u)
    count = sum(1 for a in digits if a >= m)
    top = [a * LN2 for a in heapq.nlargest(min(k, n), digits)]
    return ExceedanceSummary(n, float(u), m, count, top)


def limit_kth_max_cdf(u: float, k: int) -> float:
    """``exp(-1/u) * sum_{i<k} u**-i / i!``, the limit law of ``M_n^{(k)} / n``."""
    if not u > 0:
        raise ValueError("u must be positive")
    if k < 1:
        raise ValueError("k must be >= 1")
    if math.isinf(u):
        return 1.0
    lam = 1.0 / u
    if lam < k:
        # near 1: subtract the (monotone, tiny) upper tail instead of summing the head
        term = math.exp(-lam)
        for i in range(1, k + 1):
            term *= lam / i
        tail, i = 0.0, k
        while term > 1e-18 * max(tail, 1e-300):
            tail += term
            i += 1
            term *= lam / i
        return max(0.0, 1.0 - tail)
    term, total = 1.0, 1.0
    for i in range(1, k):
        term *= lam / i
        total += term
    return min(math.exp(-lam) * total, 1.0)


DIGIT_CLIP = 1 << 62


def _exact_chunk(n: int, start: int, stop: int, seed: int, policy: RefinementPolicy):
    rows, discarded = [], 0
    for trial in range(start, stop):
        stream = DigitStream(seed, trial, policy)
        try:
            digits = stream.take(n)
        except RefinementExhausted:
            discarded += 1
            continue
        rows.append([min(a, DIGIT_CLIP) for a in digits])
    return np.asarray(rows, dtype=np.int64).reshape(-1, n), discarded


def exact_digits(n: int, trials: int, seed: int, policy: RefinementPolicy = RefinementPolicy(),
                 workers: Optional[int] = None):
    """``(kept_trials, n)`` bit-exact digits, one :class:`DigitStream` per trial index.

    Digits above ``2**62`` are clipped to ``2**62`` (harmless for threshold
    comparisons below that).  Trials whose stream exhausts its bit budget are
    dropped; the second return value counts them.
    """
    workers = chain.resolve_workers(workers)
    chunk = 4096
    tasks = [(n, s, min(s + chunk, trials), seed, policy) for s in range(0, trials, chunk)]
    if workers == 1:
        parts = [_exact_chunk(*t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_exact_chunk, *zip(*tasks)))
    return np.concatenate([p[0] for p in parts]), sum(p[1] for p in parts)


def exact_sampler_counts(n: int, thresholds: Sequence[int], trials: int, seed: int,
                         policy: RefinementPolicy = RefinementPolicy(),
                         workers: Optional[int] = None):
    """Per-trial exceedance counts from bit-exact digit streams, one column per threshold."""
    digits, discarded = exact_digits(n, trials, seed, policy, workers)
    counts = np.stack([(digits >= m).sum(axis=1) for m in thresholds], axis=1)
    return counts, discarded


def estimate_exceedance_laws(n: int, us: Sequence[float], trials: int, seed: int,
                             sampler: str = "chain", workers: Optional[int] = None,
                             policy: RefinementPolicy = RefinementPolicy()) -> List[EmpiricalDist]:
    """Empirical laws of the exceedance count for several ``u`` from one set of trials."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    thresholds = [scaled_threshold(n, u) for u in us]
    if sampler == "chain":
        rec = chain.simulate_large_digits(n, trials, seed, min(thresholds), workers)
        return [EmpiricalDist.from_samples(rec.counts_at_least(m)) for m in thresholds]
    if sampler == "exact":
        counts, discarded = exact_sampler_counts(n, thresholds, trials, seed, policy, workers)
        return [EmpiricalDist.from_samples(counts[:, i], discarded) for i in range(len(thresholds))]
    raise ValueError(f"unknown sampler {sampler!r}")


def estimate_exceedance_law(n: int, u: float, trials: int, seed: int, sampler: str = "chain",
                            workers: Optional[int] = None,
                            policy: RefinementPolicy = RefinementPolicy()) -> EmpiricalDist:
    """Monte Carlo law of the exceedance count over ``trials`` digit sequences.

    ``sampler="chain"`` uses the vectorised backward-state chain;
    ``sampler="exact"`` uses one bit-exact :class:`DigitStream` per trial and
    reports discarded trials in ``.discarded``.
    """
    return estimate_exceedance_laws(n, [u], trials, seed, sampler, workers, policy)[0]


def default_levels(us: Sequence[float], tail: float = 1e-6) -> int:
    lam = max(1.0 / u for u in us)
    return PoissonLaw(lam).truncation_point(tail) + 1


def weighted_exceedance_laws(n: int, us: Sequence[float], replicates: int, seed: int,
                             levels: Optional[int] = None,
                             workers: Optional[int] = None) -> List[EstimatedDist]:
    """Variance-reduced estimates of the exceedance law, see :func:`chain.level_weights`."""
    if levels is None:
        levels = default_levels(us)
    thresholds = [scaled_threshold(n, u) for u in us]
    out: List[Optional[EstimatedDist]] = [None] * len(us)
    live = [i for i, m in enumerate(thresholds) if m >= 2]
    for i, m in enumerate(thresholds):
        if m < 2:
            # every digit exceeds: the count is n surely
            pmf = np.zeros(levels)
            over = 1.0 if n >= levels else 0.0
            if n < levels:
                pmf[n] = 1.0
            out[i] = EstimatedDist(pmf, np.zeros(levels), over, replicates)
    if live:
        w = chain.level_weights(n, [thresholds[i] for i in live], replicates, seed, levels, workers)
        for j, i in enumerate(live):
            out[i] = EstimatedDist.from_weights(w[:, j, :])
    return out


def kth_max_cdf_empirical(n: int, u: float, k: int, trials: int, seed: int,
                          workers: Optional[int] = None) -> float:
    """Fraction of trials with ``M_n^{(k)} / n <= u``.

    Computed from the k-th largest digit and cross-checked against the
    exceedance count, which must agree trial by trial.
    """
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    m = scaled_threshold(n, u)
    rec = chain.simulate_large_digits(n, trials, seed, m, workers)
    by_max = rec.kth_largest(k) < m
    by_count = rec.counts_at_least(m) <= k - 1
    if not np.array_equal(by_max, by_count):
        raise AssertionError("k-th maximum and exceedance count disagree")
    return float(by_max.mean())
