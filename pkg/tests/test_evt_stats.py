import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from cf_extremes import evt_stats as ev
from cf_extremes.cf_core import LN2


def test_exceedance_count_examples():
    s = ev.exceedance_count([3, 1, 2], 1.0)
    assert (s.n, s.threshold_m, s.count) == (3, 5, 0)
    s = ev.exceedance_count([5, 1, 2], 1.0)
    assert s.count == 1
    assert s.top_k == [5 * LN2, 2 * LN2, 1 * LN2]
    assert ev.exceedance_count([7, 10 ** 6, 3], 1e300).count == 0
    with pytest.raises(ValueError):
        ev.exceedance_count([], 1.0)


@given(st.lists(st.integers(1, 10 ** 6), min_size=1, max_size=60), st.floats(0.01, 100))
def test_exceedance_summary_invariants(digits, u):
    s = ev.exceedance_count(digits, u, k=4)
    assert s.count <= s.n
    assert s.top_k == sorted(s.top_k, reverse=True)
    assert s.top_k[0] == max(digits) * LN2
    assert s.count == sum(1 for a in digits if a * LN2 > len(digits) * u) or s.count == sum(
        1 for a in digits if a >= s.threshold_m)


def test_limit_kth_max_cdf_values():
    assert ev.limit_kth_max_cdf(1, 1) == pytest.approx(math.exp(-1), abs=1e-12)
    assert ev.limit_kth_max_cdf(1, 2) == pytest.approx(0.735759, abs=1e-6)
    assert ev.limit_kth_max_cdf(1, 3) == pytest.approx(0.919699, abs=1e-6)
    assert ev.limit_kth_max_cdf(1e12, 1) == pytest.approx(1.0)


@given(st.floats(0.01, 100), st.integers(1, 30))
def test_limit_cdf_is_poisson_cdf(u, k):
    assert abs(ev.limit_kth_max_cdf(u, k) - stats.poisson.cdf(k - 1, 1 / u)) <= 1e-12
    assert ev.limit_kth_max_cdf(u, k + 1) >= ev.limit_kth_max_cdf(u, k)
    assert ev.limit_kth_max_cdf(u * 1.5, k) >= ev.limit_kth_max_cdf(u, k)


def test_poisson_law():
    law = ev.PoissonLaw(3.0)
    assert law.pmf_vector(60).sum() == pytest.approx(1.0, abs=1e-14)
    assert law.pmf(4) == pytest.approx(stats.poisson.pmf(4, 3.0), rel=1e-13)
    assert law.tail_beyond(law.truncation_point()) < 1e-12
    big = ev.PoissonLaw(900.0)
    assert big.pmf(900) == pytest.approx(stats.poisson.pmf(900, 900.0), rel=1e-9)
    assert ev.PoissonLaw(0.0).pmf(0) == 1.0


def test_tv_examples():
    assert ev.tv_distance(ev.PoissonLaw(1), ev.PoissonLaw(1)) == 0.0
    assert ev.tv_distance(ev.PoissonLaw(1), ev.PoissonLaw(1.5)) <= 0.5
    point = ev.EmpiricalDist({0: 10}, 10)
    assert ev.tv_distance(point, ev.PoissonLaw(1)) == pytest.approx(1 - math.exp(-1), abs=1e-12)
    d = ev.tv_details(point, ev.PoissonLaw(1))
    assert d.error_bound < 1e-12


lam = st.floats(0.01, 5.0)


@given(lam, lam)
def test_freedman_inequality(a, b):
    d = ev.tv_details(ev.PoissonLaw(a), ev.PoissonLaw(b))
    assert d.distance <= abs(a - b) + d.error_bound
    assert d.distance == ev.tv_distance(ev.PoissonLaw(b), ev.PoissonLaw(a))


@given(lam, lam, lam)
def test_tv_triangle(a, b, c):
    pa, pb, pc = ev.PoissonLaw(a), ev.PoissonLaw(b), ev.PoissonLaw(c)
    assert ev.tv_distance(pa, pc) <= ev.tv_distance(pa, pb) + ev.tv_distance(pb, pc) + 1e-11


@given(st.lists(st.integers(0, 8), min_size=1, max_size=200), st.lists(st.integers(0, 8), min_size=1,
                                                                           max_size=200))
def test_empirical_tv_properties(xs, ys):
    p, q = ev.EmpiricalDist.from_samples(xs), ev.EmpiricalDist.from_samples(ys)
    d = ev.tv_distance(p, q)
    assert 0 <= d <= 1
    assert d == pytest.approx(ev.tv_distance(q, p), abs=1e-15)
    assert ev.tv_distance(p, p) == 0
    merged = p + q
    assert merged.total_trials == len(xs) + len(ys)
    assert merged.mean() == pytest.approx((sum(xs) + sum(ys)) / (len(xs) + len(ys)))


def test_estimated_dist_lumped_tv():
    w = np.zeros((4, 4))
    w[:, 0] = 0.5
    w[:, 1] = 0.3
    w[:, 2] = 0.15
    w[:, 3] = 0.05
    est = ev.EstimatedDist.from_weights(w)
    pois = ev.PoissonLaw(0.7)
    d = ev.tv_details(est, pois)
    p = pois.pmf_vector(3)
    expect = 0.5 * (np.abs(p - [0.5, 0.3, 0.15]).sum() + abs(pois.tail_beyond(2) - 0.05))
    assert d.distance == pytest.approx(expect, abs=1e-15)
    assert ev.noise_floor(est) == 0.0


def test_estimate_is_deterministic_and_discards_reported():
    a = ev.estimate_exceedance_law(50, 1.0, 3000, seed=4)
    b = ev.estimate_exceedance_law(50, 1.0, 3000, seed=4)
    assert a == b and a.discarded == 0
    one = ev.estimate_exceedance_law(50, 1.0, 1, seed=4)
    assert len(one.counts) == 1
    ex = ev.estimate_exceedance_law(5, 1.0, 300, seed=4, sampler="exact")
    assert ex.total_trials + ex.discarded == 300


def test_exact_sampler_reports_discards():
    from cf_extremes.cf_core import RefinementPolicy
    counts, discarded = ev.exact_sampler_counts(60, [3], 50, 1, RefinementPolicy(16, 2, 64))
    assert discarded > 0 and counts.shape[0] == 50 - discarded


def test_kth_max_duality_and_limits():
    p1 = ev.kth_max_cdf_empirical(400, 1.0, 1, 20_000, seed=3)
    law = ev.estimate_exceedance_law(400, 1.0, 20_000, seed=3)
    assert p1 == law.cdf(0)
    p2 = ev.kth_max_cdf_empirical(400, 1.0, 2, 20_000, seed=3)
    assert p2 == law.cdf(1)
    assert ev.kth_max_cdf_empirical(20, 1e9, 20, 100, seed=1) == 1.0
    with pytest.raises(ValueError):
        ev.kth_max_cdf_empirical(5, 1.0, 6, 10, 0)


def test_weighted_agrees_with_counting():
    us = [0.5, 1.0, 2.0]
    w = ev.weighted_exceedance_laws(300, us, 3000, seed=1)
    c = ev.estimate_exceedance_laws(300, us, 100_000, seed=2)
    for we, ce in zip(w, c):
        for k in range(6):
            se = math.hypot(we.stderr[k], ce.stderr_vector(6)[k])
            assert abs(we.pmf(k) - ce.pmf(k)) <= 4.5 * se


def test_weighted_handles_threshold_one():
    (law,) = ev.weighted_exceedance_laws(3, [0.1], 10, seed=0, levels=5)
    assert law.pmf(3) == 1.0
