"""Exact continued fraction digits of Gauss-distributed points."""
from fractions import Fraction

import numpy as np

from cf_extremes.cf_core import DigitStream, digit_pmf, digits_of_rational, gauss_sample

# A sample point is never a float: it is an enclosure with rational endpoints
iv = gauss_sample(seed=7, trial=0, bits=64)
print("enclosure:", float(iv.lo), float(iv.hi), "width", float(iv.width))

# Digits come out lazily; the stream draws more random bits when the
# enclosure straddles a cylinder boundary
stream = DigitStream(seed=7, trial=0)
digits = stream.take(60)
print("first digits:", digits[:20])
print("bits used for 60 digits:", stream.bit_budget_used)

# Rational points terminate, and agree with the Euclidean algorithm
point = DigitStream.from_interval(Fraction(9, 20), Fraction(9, 20))
print("9/20 ->", list(point), "Euclid:", digits_of_rational(9, 20, 10))

# First digits across trials follow the Gauss-Kuzmin law
first = np.array([DigitStream(1, t).next_digit() for t in range(20000)])
freq = np.bincount(first, minlength=6)[1:6] / first.size
for k in range(1, 6):
    print(f"P(A_1 = {k}): empirical {freq[k - 1]:.4f}  exact {digit_pmf(k):.4f}")
