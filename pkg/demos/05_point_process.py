"""The extremal point process Q_n against its Poisson random measure limit."""
from cf_extremes import pointproc as pp

n, trials = 5000, 40_000
sample = pp.PointProcessSample.simulate(n, trials, seed=4)
print("largest points of trial 0:", sample.points(0)[:5])

for iv in [(1.0, pp.UNBOUNDED), (1.0, 2.0), (0.2, 0.25)]:
    r = pp.mean_measure_check(n, iv, trials, 4, sample)
    print(f"E Q_n{iv}: {r.empirical:.4f} +/- {r.stderr:.4f}  exact {r.exact_finite_n:.4f}  limit {r.limit:.4f}")

union = pp.IntervalUnion.of((1.0, 2.0), (3.0, pp.UNBOUNDED))
a = pp.avoidance_probability_check(n, union, trials, 4, sample)
print(f"P(no points in {union.intervals}) = {a.empirical:.4f} +/- {a.stderr:.4f}, limit {a.limit:.4f}")
