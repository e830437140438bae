"""Explicit Chen-Stein bounds and the exact small-n oracle."""
import numpy as np

from cf_extremes import chen_stein as cs
from cf_extremes import oracle
from cf_extremes.chain import chain_digits

mix = cs.MixingModel(C=2.0, theta=3.29)
print("kappa =", cs.explicit_kappa(mix))
for n in (10 ** 3, 10 ** 5, 10 ** 7):
    b = cs.analytic_bounds_cf(n, 1.0, mix)
    print(f"n={n:>9}: l_n={b.l_n:.3f}  b1={b.b1:.2e} b2={b.b2:.2e} b3={b.b3:.2e}  "
          f"rate bound {cs.theorem1_bound(n, 1.0, mix):.2e}")

# Exact law of the count for n = 3, from Gauss measures of cylinders
law = oracle.exact_exceedance_distribution(3, 1.0)
print("exact law (n=3, u=1):", np.round(law.pmf, 6), "error <=", law.error_bound)
d = chain_digits(3, 10 ** 6, seed=2)
freq = np.bincount((d >= law.threshold_m).sum(axis=1), minlength=4) / d.shape[0]
print("Monte Carlo           :", np.round(freq, 6))
