"""Exceedances of a high threshold are nearly Poisson."""
import numpy as np

from cf_extremes import chen_stein as cs
from cf_extremes import evt_stats as ev
from cf_extremes.cf_core import digit_tail_prob, scaled_threshold

n = 10_000
us = [0.5, 1.0, 2.0]
laws = ev.estimate_exceedance_laws(n, us, trials=50_000, seed=3)

for u, law in zip(us, laws):
    m = scaled_threshold(n, u)
    tv_limit = ev.tv_distance(law, ev.PoissonLaw(1 / u))
    tv_mid = ev.tv_distance(law, ev.PoissonLaw(n * digit_tail_prob(m)))
    print(f"u={u}: threshold A >= {m}, mean count {law.mean():.4f} (limit {1 / u})")
    print(f"   TV to Poi(1/u) {tv_limit:.4f}, to Poi(n P(A >= m)) {tv_mid:.4f}, "
          f"noise floor {ev.noise_floor(law):.4f}, bound {cs.theorem1_bound(n, u):.4f}")

# The k-th largest digit has the same law as a count of exceedances
for k in (1, 2, 3):
    p = ev.kth_max_cdf_empirical(n, 1.0, k, 50_000, seed=3)
    print(f"P(M^({k})/n <= 1) = {p:.4f}   limit {ev.limit_kth_max_cdf(1.0, k):.4f}")
