"""Rounding a two-outcome coin to group-sized counts, and how often honest draws overshoot.

Run: python demos/adjust_and_tails.py
"""

from fractions import Fraction

from symba.dist import ChoiceDistribution, TailBoundParams, adjust, empirical_tail, exact_tail, tail_bound

coin = ChoiceDistribution.from_mapping({b"heads": Fraction(72, 100), b"tails": Fraction(28, 100)})

# A group of t = 10 processors must produce every outcome an integral number of times.
small = adjust(coin, t=10, eps=Fraction(1, 100))
print("t = 10 adjusted counts:", dict(zip(small.support, small.counts)), "star:", small.star)

# 8 of those 10 are honest. How often do their draws already exceed a count?
print("exact overshoot chance:", exact_tail(coin, small, Fraction(1, 5)))
print("sampled (10^5 trials):  ", empirical_tail(coin, small, Fraction(1, 5), 100_000, seed=1))

# With large groups the chance shrinks; the closed-form bound is loose but valid.
for n in (1000, 2000, 4000):
    params = TailBoundParams.make(n, Fraction(1, 5), 2)
    big = adjust(coin, params.t, params.eps)
    worst = max(exact_tail(coin, big, params.c).values())
    print(f"n={n:5d} t={params.t:4d}: worst exact tail {worst:.3e}, bound {tail_bound(params):.4f}")
