"""The ten acceptance criteria, at their stated scales and tolerances."""

import math

import numpy as np
import pytest

from cf_extremes import chen_stein as cs
from cf_extremes import evt_stats as ev
from cf_extremes import oracle, pointproc
from cf_extremes.cf_core import DigitStream, digit_pmf, digit_tail_prob, scaled_threshold
from cf_extremes.cli import fit_rate, sup_tv_curve

SEED = 20240917


def test_criterion_01_gauss_kuzmin_marginal(criterion):
    trials = 10 ** 5
    first = np.array([DigitStream(SEED, t).next_digit() for t in range(trials)])
    freq = np.bincount(first, minlength=7)[1:6] / trials
    p = np.array([digit_pmf(k) for k in range(1, 6)])
    assert p == pytest.approx([0.415037, 0.169925, 0.093109, 0.058894, 0.040642], abs=1e-6)
    z = (freq - p) / np.sqrt(p * (1 - p) / trials)
    ok = np.all(np.abs(z) <= 4)
    criterion(1, ok, f"exact sampler, 1e5 trials, max |z| = {np.abs(z).max():.2f} (limit 4)")
    assert ok


def test_criterion_02_oracle_equivalence(criterion):
    trials = 10 ** 6
    # one bit-exact stream of 3 digits per trial; the n = 1, 2 laws read its prefixes
    digits, discarded = ev.exact_digits(3, trials, SEED)
    kept = digits.shape[0]
    worst, worst_err, ok = 0.0, 0.0, True
    for n in (1, 2, 3):
        for u in (0.5, 1.0, 2.0):
            law = oracle.exact_exceedance_distribution(n, u)
            worst_err = max(worst_err, law.error_bound)
            freq = np.bincount((digits[:, :n] >= law.threshold_m).sum(axis=1), minlength=n + 1) / kept
            p = np.array(law.pmf)
            se = np.sqrt(p * (1 - p) / kept)
            dev = np.abs(freq - p)
            ok &= bool(np.all(dev <= 4 * se + law.error_bound)) and law.error_bound <= 1e-6
            with np.errstate(divide="ignore", invalid="ignore"):
                z = np.where(se > 0, dev / se, 0.0)
            worst = max(worst, float(z.max()))
    criterion(2, ok, f"exact sampler, 1e6 trials ({discarded} discarded), max |z| = {worst:.2f}, "
                     f"max truncation error = {worst_err:.1e}")
    assert ok


def test_criterion_03_poisson_at_desk_scale(criterion):
    n, u = 10 ** 4, 1.0
    law = ev.estimate_exceedance_law(n, u, 10 ** 5, SEED)
    tv = ev.tv_distance(law, ev.PoissonLaw(1 / u))
    floor = ev.noise_floor(law)
    bound = cs.theorem1_bound(n, 1.0)
    ok = tv <= 0.02 and tv <= floor + bound
    criterion(3, ok, f"TV = {tv:.5f} (<= 0.02; noise floor {floor:.5f} + bound {bound:.5f})")
    assert ok


def test_criterion_04_maxima_law(criterion):
    n, trials = 10 ** 4, 10 ** 5
    devs = []
    for k, limit in ((1, math.exp(-1)), (2, 0.735759), (3, 0.919699)):
        assert ev.limit_kth_max_cdf(1.0, k) == pytest.approx(limit, abs=1e-6)
        devs.append(abs(ev.kth_max_cdf_empirical(n, 1.0, k, trials, SEED) - ev.limit_kth_max_cdf(1.0, k)))
    ok = max(devs) <= 0.01
    criterion(4, ok, "|empirical - limit| for k = 1, 2, 3: " + ", ".join(f"{d:.4f}" for d in devs)
              + " (limit 0.01)")
    assert ok


def test_criterion_05_rate_sweep(criterion):
    ns = [2 ** j for j in range(8, 14)]
    us = list(np.linspace(0.5, 4.0, 8))
    # per-trial indicator counting cannot resolve TV below ~2e-3 at 2e5 trials;
    # the level-weighted estimator costs about the same per n and resolves ~1e-5
    counting = sup_tv_curve(ns, us, 2 * 10 ** 5, SEED, "counting")
    unresolved = [n for n, (tv, _, nf, _) in zip(ns, counting) if tv - nf <= nf]
    curve = sup_tv_curve(ns, us, 2000, SEED, "weighted")
    sups = [c[0] for c in curve]
    resolved = all(tv - nf > nf for tv, _, nf, _ in curve)
    slope, se = fit_rate(ns, sups)
    decreasing = all(a > b for a, b in zip(sups, sups[1:]))
    ok = resolved and decreasing and slope <= -0.8
    criterion(5, ok, f"weighted estimator: slope = {slope:.3f} +/- {se:.3f}, decreasing = {decreasing}, "
                     f"sup TV = {', '.join(f'{s:.2e}' for s in sups)}; counting at 2e5 trials is "
                     f"noise-limited at n = {unresolved}")
    assert ok


def test_criterion_06_bound_dominance_chain(criterion):
    mix = cs.DEFAULT_MIXING
    kappa = cs.explicit_kappa(mix)
    ok, checked = True, 0
    for n in np.unique(np.rint(np.geomspace(1e2, 1e6, 41)).astype(int)):
        l = cs.solve_l_n(mix.theta, int(n))
        for u in (0.5, 1.0, 2.0, 4.0):
            exact = cs.tail_discrepancy(int(n), u)
            ok &= exact <= 3 * math.log(2) / (2 * u * u * n)
            total = cs.analytic_bounds_cf(int(n), u, mix).total + cs.freedman_second_order(int(n), u)
            ok &= total <= kappa * max(1 / u, 1 / u ** 2) * l / n
            checked += 1
    criterion(6, ok, f"{checked} grid cells, exact inequalities")
    assert ok


def test_criterion_07_chen_stein_vs_convolution(criterion):
    ok, margins = True, []
    for n in (10, 20):
        for p in (0.05, 0.1):
            pmf = np.array([1.0])
            for _ in range(n):
                pmf = np.convolve(pmf, [1 - p, p])
            pois = ev.PoissonLaw(n * p)
            size = max(pois.truncation_point(), n) + 1
            tv = 0.5 * (np.abs(np.pad(pmf, (0, size - n - 1)) - pois.pmf_vector(size)).sum()
                        + pois.tail_beyond(size - 1))
            bound = cs.theorem2_bound(cs.DependencySpec.independent([p] * n))
            ok &= tv <= bound
            margins.append(f"n={n},p={p}: {tv:.4f} <= {bound:.4f}")
    criterion(7, ok, "; ".join(margins))
    assert ok


def test_criterion_08_point_process(criterion):
    n, trials = 10 ** 4, 10 ** 5
    union = pointproc.IntervalUnion.of((1.0, 2.0), (3.0, pointproc.UNBOUNDED))
    sample = pointproc.PointProcessSample.simulate(n, trials, SEED)
    mean = pointproc.mean_measure_check(n, (1.0, 2.0), trials, SEED, sample)
    avoid = pointproc.avoidance_probability_check(n, union, trials, SEED, sample)
    ok_mean = abs(mean.empirical - mean.exact_finite_n) <= 4 * mean.stderr and mean.limit == 0.5
    ok_avoid = abs(avoid.empirical - avoid.limit) <= 4 * avoid.stderr + avoid.discretization
    ok = ok_mean and ok_avoid
    criterion(8, ok, f"mean (1,2]: {mean.empirical:.4f} vs exact {mean.exact_finite_n:.4f} "
                     f"(z = {mean.z_exact:.2f}); avoidance: {avoid.empirical:.4f} vs "
                     f"{avoid.limit:.6f} +/- 4*{avoid.stderr:.4f}")
    assert ok


def test_criterion_09_freedman_property(criterion):
    grid = np.linspace(0.25, 5.0, 20)
    worst = -math.inf
    for a in grid:
        for b in grid:
            d = ev.tv_details(ev.PoissonLaw(a), ev.PoissonLaw(b))
            worst = max(worst, d.distance - abs(a - b) - d.error_bound)
    ok = worst <= 1e-12
    criterion(9, ok, f"20x20 grid, max(TV - |l1 - l2|) = {worst:.3g}")
    assert ok


def test_criterion_10_l_n_solver(criterion):
    worst = 0.0
    for theta in (1.5, 2.0, 3.29, 10.0):
        for n in np.geomspace(1, 1e9, 91):
            l = cs.solve_l_n(theta, n)
            worst = max(worst, abs(l * theta ** l - n) / n)
    exact = cs.solve_l_n(2, 2) == 1.0 and cs.solve_l_n(2, 8) == 2.0
    ok = worst <= 1e-12 and exact
    criterion(10, ok, f"max relative residual {worst:.2e}, exact points {exact}")
    assert ok
