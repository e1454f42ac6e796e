import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from symba.dist import (
    ChoiceDistribution,
    PreconditionViolated,
    TailBoundParams,
    adjust,
    choose_star,
    default_eps,
    empirical_tail,
    exact_tail,
    tail_bound,
)


def binom_tail(g, p, k):
    # independent oracle: direct binomial sum
    return sum(math.comb(g, j) * p**j * (1 - p) ** (g - j) for j in range(k, g + 1))


def test_star_singleton():
    d = ChoiceDistribution.point(b"m")
    assert choose_star(d) == b"m"


def test_star_unique_max():
    d = ChoiceDistribution.from_mapping({b"m0": Fraction(72, 100), b"m1": Fraction(28, 100)})
    assert choose_star(d) == b"m0"


def test_star_tie_goes_to_smaller_payload():
    d = ChoiceDistribution.from_mapping({b"m1": Fraction(1, 2), b"m0": Fraction(1, 2)})
    assert choose_star(d) == b"m0"


def test_adjust_hand_computed():
    d = ChoiceDistribution.from_mapping({b"m0": 0.72, b"m1": 0.28})
    a = adjust(d, 10, Fraction(1, 100))
    assert a.as_dict() == {b"m0": Fraction(7, 10), b"m1": Fraction(3, 10)}
    assert a.star == b"m0"
    assert a.counts == (7, 3)


def test_adjust_exact_multiple_unchanged():
    d = ChoiceDistribution.from_mapping({b"m0": Fraction(7, 10), b"m1": Fraction(3, 10)})
    a = adjust(d, 10, Fraction(1, 100))
    assert a.as_dict() == {b"m0": Fraction(7, 10), b"m1": Fraction(3, 10)}


@pytest.mark.parametrize("t", [2, 5, 17, 200])
def test_adjust_singleton(t):
    a = adjust(ChoiceDistribution.point(b"m"), t, Fraction(1, 1000), R=1)
    assert a.counts == (t,)
    assert a.as_dict() == {b"m": 1}


def test_adjust_raises_small_eps_window():
    d = ChoiceDistribution.uniform([b"a", b"b"])
    with pytest.raises(PreconditionViolated):
        adjust(d, 4, Fraction(1, 100))  # t must exceed R^2
    with pytest.raises(PreconditionViolated):
        adjust(d, 10, Fraction(3, 20))  # eps >= 1/4 - 1/10


def test_float_masses_normalised():
    d = ChoiceDistribution.from_mapping({b"a": 0.1, b"b": 0.2, b"c": 0.7})
    assert sum(d.mass) == 1
    assert d.prob(b"b") == Fraction(1, 5)


def test_tail_bound_plug_in():
    p = TailBoundParams.make(1000, Fraction(1, 5), 2)
    assert p.eps == Fraction(1, 80)
    assert p.delta == Fraction(1, 80)
    assert p.delta_prime == Fraction(1, 80) * Fraction(8, 1000) / Fraction(24, 10)
    assert tail_bound(p) == pytest.approx(math.exp(-0.0125 * 0.008 / 2.4 * 1000), rel=1e-12)


def test_tail_bound_doubling_squares():
    a = TailBoundParams.make(1000, Fraction(1, 5), 2, Fraction(1, 80))
    b = TailBoundParams.make(2000, Fraction(1, 5), 2, Fraction(1, 80))
    assert tail_bound(b) == pytest.approx(tail_bound(a) ** 2, rel=1e-12)


def test_tail_bound_monotone_in_n():
    vals = [tail_bound(TailBoundParams.make(n, Fraction(1, 5), 2, Fraction(1, 80))) for n in (1000, 1500, 3000)]
    assert vals[0] > vals[1] > vals[2]
    assert all(0 < v < 1 for v in vals)


def test_tail_bound_rejects_small_t():
    with pytest.raises(PreconditionViolated):
        tail_bound(TailBoundParams.make(25, Fraction(1, 5), 2))


def test_default_eps_clipped_to_window():
    assert default_eps(Fraction(1, 5), 2) == Fraction(1, 80)
    clipped = default_eps(Fraction(1), 2, t=5)
    assert 0 < clipped < Fraction(1, 4) - Fraction(1, 5)


def test_empirical_tail_zero_mass():
    d = ChoiceDistribution.from_mapping({b"a": Fraction(1), b"b": Fraction(0)})
    a = adjust(d, 10, Fraction(1, 100))
    freq = empirical_tail(d, a, Fraction(1, 5), 2000, 3)
    assert freq[b"b"] == 0.0


def test_empirical_tail_matches_binomial_sum():
    d = ChoiceDistribution.from_mapping({b"m0": 0.72, b"m1": 0.28})
    a = adjust(d, 10, Fraction(1, 100))
    trials = 100_000
    freq = empirical_tail(d, a, Fraction(1, 5), trials, 1)
    p = binom_tail(8, 0.28, 3)
    se = math.sqrt(p * (1 - p) / trials)
    assert abs(freq[b"m1"] - p) <= 3 * se
    assert exact_tail(d, a, Fraction(1, 5))[b"m1"] == pytest.approx(p, rel=1e-12)


def test_empirical_tail_deterministic():
    d = ChoiceDistribution.uniform([b"x", b"y"])
    a = adjust(d, 10, Fraction(1, 100))
    assert empirical_tail(d, a, Fraction(1, 5), 500, 9) == empirical_tail(d, a, Fraction(1, 5), 500, 9)


@st.composite
def adjust_instances(draw):
    R = draw(st.integers(2, 4))
    t = draw(st.integers(R * R + 1, 200))
    size = draw(st.integers(1, R))
    weights = draw(st.lists(st.integers(0, 1000), min_size=size, max_size=size).filter(lambda w: sum(w) > 0))
    total = sum(weights)
    d = ChoiceDistribution.from_mapping({f"s{i}".encode(): Fraction(w, total) for i, w in enumerate(weights)})
    upper = Fraction(1, R * R) - Fraction(1, t)
    num = draw(st.integers(1, 999))
    eps = upper * Fraction(num, 1000)
    return d, t, eps, R


@settings(max_examples=300, deadline=None)
@given(adjust_instances())
def test_adjust_closeness_properties(inst):
    d, t, eps, R = inst
    a = adjust(d, t, eps, R)
    assert sum(a.mass) == 1
    assert all(k > 0 for k in a.counts)
    for s, rho, rt in zip(d.support, d.mass, a.mass):
        if s == a.star:
            assert rt > rho - R * (eps + Fraction(1, t))
        else:
            assert rt < max(rho, eps) + Fraction(1, t)
            assert rt >= max(rho, eps)
