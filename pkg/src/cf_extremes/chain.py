"""Vectorised sampling of the stationary digit process.

Under the Gauss measure the digit sequence is driven by a Markov chain on the
backward state ``y_k = [0; a_{k-1}, a_{k-2}, ...]`` (the second coordinate of
the natural extension, whose invariant density is ``1 / (log 2 (1 + x y)**2)``).
Given ``y``, the next digit satisfies

    P(A >= k | y) = (1 + y) / (k + y),

after which ``y <- 1 / (A + y)``.  Starting from ``y_0`` drawn from the Gauss
measure, the resulting digits have exactly the law of ``A_1, A_2, ...``.  One
uniform per digit suffices, so whole blocks of trials run as numpy arrays.

The state is a float; the backward map is a contraction, so rounding never
accumulates beyond a few ulps and perturbs digit probabilities by ~1e-16.
For bit-exact digits use :class:`cf_extremes.cf_core.DigitStream`.

Randomness is keyed by ``(seed, block_index)`` with a fixed block size, so
results do not depend on the number of worker processes.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence

import numpy as np

__all__ = [
    "BLOCK_SIZE",
    "block_rng",
    "resolve_workers",
    "run_blocks",
    "chain_digits",
    "LargeDigits",
    "simulate_large_digits",
    "level_weights",
]

BLOCK_SIZE = 1 << 14
WEIGHTED_BLOCK_SIZE = 1 << 10
LN2 = math.log(2.0)


def block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=(int(block),))))


def resolve_workers(workers: Optional[int]) -> int:
    if workers is None:
        workers = int(os.environ.get("CF_EXTREMES_WORKERS", "1") or 1)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    return workers


def _blocks(total: int, size: int) -> List[tuple]:
    return [(b, min(size, total - b * size)) for b in range(-(-total // size))]


def run_blocks(fn: Callable, tasks: Sequence[tuple], workers: Optional[int] = None) -> list:
    """Map ``fn(*task)`` over tasks, in order, optionally across processes."""
    workers = resolve_workers(workers)
    if workers == 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
        return list(pool.map(fn, *zip(*tasks)))


def _initial_state(rng: np.random.Generator, size: int) -> np.ndarray:
    return np.expm1(rng.random(size) * LN2)


def _digit_block(n: int, size: int, seed: int, block: int) -> np.ndarray:
    rng = block_rng(seed, block)
    y = _initial_state(rng, size)
    out = np.empty((size, n), dtype=np.int64)
    v = np.empty(size)
    for j in range(n):
        rng.random(out=v)
        np.subtract(1.0, v, out=v)
        a = np.floor((1.0 + y) / v - y)
        out[:, j] = a
        y = 1.0 / (a + y)
    return out


def chain_digits(n: int, trials: int, seed: int, workers: Optional[int] = None) -> np.ndarray:
    """Full ``(trials, n)`` digit array; for moderate ``n * trials`` only."""
    if n < 1 or trials < 1:
        raise ValueError("n and trials must be >= 1")
    tasks = [(n, size, seed, b) for b, size in _blocks(trials, BLOCK_SIZE)]
    return np.concatenate(run_blocks(_digit_block, tasks, workers))


@dataclass
class LargeDigits:
    """All digits ``>= floor`` from ``trials`` independent sequences of length ``n``.

    Stored as flat arrays; ``position`` is 0-based.  Digits are exact integers
    held in float64 (they exceed 2**53 only with probability ~1e-16 per draw).
    """

    n: int
    trials: int
    floor: int
    trial: np.ndarray
    position: np.ndarray
    digit: np.ndarray

    def _check(self, m: int):
        if m < self.floor:
            raise ValueError(f"threshold {m} is below the recording floor {self.floor}")

    def counts_at_least(self, m: int) -> np.ndarray:
        """Per-trial ``#{i : A_i >= m}``."""
        self._check(m)
        sel = self.digit >= m
        return np.bincount(self.trial[sel], minlength=self.trials)

    def counts_between(self, m_lo: int, m_hi: Optional[int]) -> np.ndarray:
        """Per-trial ``#{i : m_lo <= A_i < m_hi}`` (``m_hi=None`` means unbounded)."""
        self._check(m_lo)
        sel = self.digit >= m_lo
        if m_hi is not None:
            sel &= self.digit < m_hi
        return np.bincount(self.trial[sel], minlength=self.trials)

    def kth_largest(self, k: int) -> np.ndarray:
        """Per-trial k-th largest recorded digit, 0 where fewer than k were recorded."""
        out = np.zeros(self.trials)
        if self.digit.size == 0:
            return out
        order = np.lexsort((-self.digit, self.trial))
        t, d = self.trial[order], self.digit[order]
        starts = np.searchsorted(t, np.arange(self.trials))
        ends = np.searchsorted(t, np.arange(self.trials), side="right")
        ok = ends - starts >= k
        out[ok] = d[starts[ok] + k - 1]
        return out

    def pair_counts(self, m: int, gap: int) -> np.ndarray:
        """Per-trial number of positions ``i`` with ``A_i >= m`` and ``A_{i+gap} >= m``."""
        self._check(m)
        sel = self.digit >= m
        t, p = self.trial[sel], self.position[sel]
        key = t * (self.n + gap + 1) + p
        hit = np.isin(key + gap, key)
        return np.bincount(t[hit], minlength=self.trials)

    @classmethod
    def concatenate(cls, parts: Iterable["LargeDigits"]) -> "LargeDigits":
        parts = list(parts)
        offset, trial = 0, []
        for part in parts:
            trial.append(part.trial + offset)
            offset += part.trials
        return cls(parts[0].n, offset, parts[0].floor, np.concatenate(trial),
                   np.concatenate([p.position for p in parts]),
                   np.concatenate([p.digit for p in parts]))


def _large_block(n: int, size: int, seed: int, block: int, floor: int) -> LargeDigits:
    rng = block_rng(seed, block)
    y = _initial_state(rng, size)
    v = np.empty(size)
    a = np.empty(size)
    trial, position, digit = [], [], []
    for j in range(n):
        rng.random(out=v)
        np.subtract(1.0, v, out=v)
        np.add(1.0, y, out=a)
        np.divide(a, v, out=a)
        np.subtract(a, y, out=a)
        np.floor(a, out=a)
        hit = np.flatnonzero(a >= floor)
        if hit.size:
            trial.append(hit)
            position.append(np.full(hit.size, j, dtype=np.int64))
            digit.append(a[hit])
        np.add(a, y, out=y)
        np.reciprocal(y, out=y)
    if trial:
        return LargeDigits(n, size, floor, np.concatenate(trial), np.concatenate(position),
                           np.concatenate(digit))
    empty = np.empty(0, dtype=np.int64)
    return LargeDigits(n, size, floor, empty, empty.copy(), np.empty(0))


def simulate_large_digits(n: int, trials: int, seed: int, floor: int,
                          workers: Optional[int] = None) -> LargeDigits:
    """Run ``trials`` digit sequences of length ``n``, keeping digits ``>= floor``."""
    if n < 1 or trials < 1:
        raise ValueError("n and trials must be >= 1")
    if floor < 1:
        raise ValueError("floor must be >= 1")
    tasks = [(n, size, seed, b, int(floor)) for b, size in _blocks(trials, BLOCK_SIZE)]
    return LargeDigits.concatenate(run_blocks(_large_block, tasks, workers))


def _weighted_block(n: int, size: int, seed: int, block: int, thresholds: tuple,
                    levels: int) -> np.ndarray:
    rng = block_rng(seed, block)
    U, L = len(thresholds), levels
    shape = (size, U, L)
    m = np.asarray(thresholds, dtype=float)[None, :, None]
    y = np.broadcast_to(_initial_state(rng, size)[:, None, None], shape).copy()
    w = np.zeros(shape)
    w[:, :, 0] = 1.0
    overflow = np.zeros((size, U))
    p, q, stay, jump, t, r = (np.empty(shape) for _ in range(6))
    y_stay, y_jump = np.empty(shape), np.empty(shape)
    for _ in range(n):
        # p = P(exceed | y); q = 1 - p
        np.add(m, y, out=t)
        np.add(1.0, y, out=p)
        np.divide(p, t, out=p)
        np.subtract(1.0, p, out=q)
        np.multiply(w, q, out=stay)
        np.multiply(w, p, out=jump)
        overflow += jump[:, :, L - 1]
        # non-exceeding digit: V uniform on (p, 1]
        rng.random(out=r)
        np.multiply(r, q, out=r)
        np.subtract(1.0, r, out=r)
        np.add(1.0, y, out=y_stay)
        np.divide(y_stay, r, out=y_stay)
        np.subtract(y_stay, y, out=y_stay)
        np.floor(y_stay, out=y_stay)
        np.minimum(y_stay, m - 1.0, out=y_stay)
        np.add(y_stay, y, out=y_stay)
        np.reciprocal(y_stay, out=y_stay)
        # exceeding digit: P(A >= k | A >= m, y) = (m + y) / (k + y)
        rng.random(out=r)
        np.subtract(1.0, r, out=r)
        np.divide(t, r, out=y_jump)
        np.subtract(y_jump, y, out=y_jump)
        np.floor(y_jump, out=y_jump)
        np.add(y_jump, y, out=y_jump)
        np.reciprocal(y_jump, out=y_jump)
        # level c is fed by staying at c or jumping from c - 1
        w[:] = stay
        w[:, :, 1:] += jump[:, :, :-1]
        rng.random(out=r)
        np.multiply(r, w, out=r)
        pick = r[:, :, 1:] < jump[:, :, :-1]
        y[:] = y_stay
        np.copyto(y[:, :, 1:], y_jump[:, :, :-1], where=pick)
    return np.concatenate([w, overflow[:, :, None]], axis=2)


def level_weights(n: int, thresholds: Sequence[int], replicates: int, seed: int,
                  levels: int, workers: Optional[int] = None) -> np.ndarray:
    """Unbiased per-replicate estimates of ``P(#{i <= n : A_i >= m} = c)``.

    Each replicate carries one particle per count level ``c < levels`` and one
    threshold ``m`` at a time.  At every step a particle splits into its
    non-exceeding and exceeding continuations, each drawn from the exact
    conditional digit law and weighted by its conditional probability; level
    ``c`` then keeps one of its two incoming states with probability
    proportional to its weight.  The weights are therefore unbiased for the
    count law, and their spread comes only from how the exceedance
    probability depends on ``y``, which is far smaller than indicator noise.

    Returns an array ``(replicates, len(thresholds), levels + 1)``; the last
    slot is the weight of counts ``>= levels``.
    """
    if n < 1 or replicates < 1 or levels < 1:
        raise ValueError("n, replicates and levels must be >= 1")
    thresholds = tuple(int(m) for m in thresholds)
    if min(thresholds) < 2:
        raise ValueError("thresholds must be >= 2 (m = 1 makes every digit exceed)")
    tasks = [(n, size, seed, b, thresholds, int(levels))
             for b, size in _blocks(replicates, WEIGHTED_BLOCK_SIZE)]
    return np.concatenate(run_blocks(_weighted_block, tasks, workers))
