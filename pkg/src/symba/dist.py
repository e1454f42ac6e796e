"""Choice distributions over a handful of payloads and their integral adjustment.

A protocol step picks its next payload from a distribution on at most ``R``
candidates. For a group of ``t`` processors the adversary wants every
expected count ``rho_s * t`` to be an integer, so each distribution is
replaced by an adjusted one whose masses are positive multiples of ``1/t``.
All adjusted masses are exact :class:`fractions.Fraction` values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

#: Floats are snapped to this denominator before exact arithmetic.
FLOAT_DENOMINATOR = 10**9

Payload = bytes


class PreconditionViolated(ValueError):
    """An arithmetic precondition on ``(t, R, eps)`` or ``c`` does not hold."""

    def __init__(self, inequality: str, **values):
        self.inequality = inequality
        self.values = values
        shown = ", ".join(f"{k}={v}" for k, v in values.items())
        super().__init__(f"violated: {inequality} ({shown})")


def as_fraction(x) -> Fraction:
    """Exact rational for ints, Fractions, decimal strings ('0.01', '1/80') and floats."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, str)):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(round(x * FLOAT_DENOMINATOR), FLOAT_DENOMINATOR)
    return Fraction(x)


@dataclass(frozen=True)
class ChoiceDistribution:
    """Probability mass over a canonically ordered support of payloads."""

    support: tuple[Payload, ...]
    mass: tuple[Fraction, ...]

    def __post_init__(self):
        if len(self.support) != len(self.mass):
            raise ValueError("support and mass differ in length")
        if not self.support:
            raise ValueError("empty support")
        if list(self.support) != sorted(set(self.support)):
            raise ValueError("support must be strictly increasing in payload order")
        if any(m < 0 or m > 1 for m in self.mass):
            raise ValueError("masses must lie in [0, 1]")
        total = sum(self.mass)
        if isinstance(total, Fraction):
            if total != 1:
                raise ValueError(f"masses sum to {total}, not 1")
        elif abs(total - 1) > 1e-12:
            raise ValueError(f"masses sum to {total}, not 1")

    @classmethod
    def from_mapping(cls, probs: Mapping[Payload, object]) -> "ChoiceDistribution":
        """Build from ``{payload: mass}``.

        Exact inputs (ints, Fractions, rational strings) are kept as they are.
        If any mass is a float, all masses are snapped to denominator 10**9 and
        the rounding residue is moved onto the maximal element.
        """
        items = sorted(probs.items())
        support = tuple(p for p, _ in items)
        if any(isinstance(m, float) for _, m in items):
            raw = [float(m) for _, m in items]
            total = sum(raw)
            if total <= 0:
                raise ValueError("masses must have a positive sum")
            raw = [m / total for m in raw]
            star = _argmax(support, raw)
            mass = [as_fraction(m) for m in raw]
            mass[star] = 1 - (sum(mass) - mass[star])
            return cls(support, tuple(mass))
        return cls(support, tuple(as_fraction(m) for _, m in items))

    @classmethod
    def point(cls, payload: Payload) -> "ChoiceDistribution":
        return cls((payload,), (Fraction(1),))

    @classmethod
    def uniform(cls, payloads: Sequence[Payload]) -> "ChoiceDistribution":
        support = tuple(sorted(set(payloads)))
        return cls(support, tuple(Fraction(1, len(support)) for _ in support))

    def __len__(self) -> int:
        return len(self.support)

    def prob(self, payload: Payload) -> Fraction:
        try:
            return self.mass[self.support.index(payload)]
        except ValueError:
            return Fraction(0)

    def positive_support(self) -> tuple[Payload, ...]:
        return tuple(s for s, m in zip(self.support, self.mass) if m > 0)

    def as_dict(self) -> dict[Payload, Fraction]:
        return dict(zip(self.support, self.mass))


@dataclass(frozen=True)
class AdjustedDistribution:
    """Adjusted masses ``count / t``; every count is a positive integer summing to ``t``."""

    support: tuple[Payload, ...]
    counts: tuple[int, ...]
    t: int
    star: Payload
    eps: Fraction
    R: int

    @property
    def mass(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(k, self.t) for k in self.counts)

    def count(self, payload: Payload) -> int:
        try:
            return self.counts[self.support.index(payload)]
        except ValueError:
            return 0

    def as_dict(self) -> dict[Payload, Fraction]:
        return dict(zip(self.support, self.mass))

    def multiset(self) -> tuple[Payload, ...]:
        """The ``t`` payloads realising the adjusted counts, canonically sorted."""
        out: list[Payload] = []
        for s, k in zip(self.support, self.counts):
            out.extend([s] * k)
        return tuple(out)


def _argmax(support: Sequence[Payload], mass: Sequence) -> int:
    best = 0
    for i in range(1, len(support)):
        # support is sorted, so strict '>' keeps the smaller payload on ties
        if mass[i] > mass[best]:
            best = i
    return best


def choose_star(d: ChoiceDistribution) -> Payload:
    """Element of maximal mass; ties go to the smallest payload. Its mass is >= 1/|S|."""
    return d.support[_argmax(d.support, d.mass)]


def check_adjust_preconditions(t: int, R: int, eps: Fraction) -> None:
    if t <= R * R:
        raise PreconditionViolated("t > R^2", t=t, R=R)
    upper = Fraction(1, R * R) - Fraction(1, t)
    if not 0 < eps < upper:
        raise PreconditionViolated("0 < eps < 1/R^2 - 1/t", eps=eps, t=t, R=R, upper=upper)


def adjust(d: ChoiceDistribution, t: int, eps, R: int | None = None) -> AdjustedDistribution:
    """Round every non-maximal mass up to a positive multiple of ``1/t``.

    For ``s != s*`` the adjusted mass is the least positive multiple of ``1/t``
    that is at least ``max(rho_s, eps)``; ``s*`` absorbs the remainder. ``R``
    defaults to the support size.
    """
    eps = as_fraction(eps)
    R = len(d.support) if R is None else R
    if len(d.support) > R:
        raise PreconditionViolated("|S| <= R", size=len(d.support), R=R)
    check_adjust_preconditions(t, R, eps)
    star_idx = _argmax(d.support, d.mass)
    counts = [0] * len(d.support)
    for i, rho in enumerate(d.mass):
        if i != star_idx:
            counts[i] = math.ceil(max(as_fraction(rho), eps) * t)
    counts[star_idx] = t - sum(counts)
    # t > R^2 and eps < 1/R^2 - 1/t leave the star a positive count
    assert all(k > 0 for k in counts), counts
    return AdjustedDistribution(d.support, tuple(counts), t, d.support[star_idx], eps, R)


@dataclass(frozen=True)
class TailBoundParams:
    n: int
    t: int
    c: Fraction
    R: int
    eps: Fraction

    @classmethod
    def make(cls, n: int, c, R: int, eps=None) -> "TailBoundParams":
        c = as_fraction(c)
        t = c * n
        if t.denominator != 1:
            raise PreconditionViolated("t = c*n is an integer", n=n, c=c)
        eps = default_eps(c, R) if eps is None else as_fraction(eps)
        return cls(n, int(t), c, R, eps)

    @property
    def delta(self) -> Fraction:
        return min(self.eps, Fraction(1, 4 * self.R))

    @property
    def delta_prime(self) -> Fraction:
        c = self.c
        return self.delta * c**3 / (3 * (1 - c))

    def validate(self) -> None:
        c = self.c
        if not 0 < c < Fraction(1, 3):
            raise PreconditionViolated("0 < c < 1/3", c=c)
        if self.t != c * self.n:
            raise PreconditionViolated("t = c*n", t=self.t, n=self.n, c=c)
        if self.t <= 2 * self.R**2 / c:
            raise PreconditionViolated("t > (2/c) R^2", t=self.t, c=c, R=self.R)
        upper = c / (2 * self.R**2) - Fraction(1, self.t)
        if not 0 < self.eps < upper:
            raise PreconditionViolated("0 < eps < c/(2R^2) - 1/t", eps=self.eps, upper=upper)


def default_eps(c, R: int, t: int | None = None) -> Fraction:
    """``c / (4R^2)``; with ``t`` given, clipped to half of the window ``(0, 1/R^2 - 1/t)``."""
    eps = as_fraction(c) / (4 * R * R)
    if t is not None:
        half = (Fraction(1, R * R) - Fraction(1, t)) / 2
        if half > 0:
            eps = min(eps, half)
    return eps


def tail_bound(params: TailBoundParams) -> float:
    """Chernoff-style bound ``exp(-delta' n)`` on one payload overshooting its adjusted count."""
    params.validate()
    return math.exp(-float(params.delta_prime) * params.n)


def good_draws(t: int, c) -> int:
    g = (1 - as_fraction(c)) * t
    if g.denominator != 1:
        raise PreconditionViolated("(1-c) t is an integer", t=t, c=c)
    return int(g)


def empirical_tail(
    d: ChoiceDistribution,
    d_tilde: AdjustedDistribution,
    c,
    trials: int,
    seed: int,
) -> dict[Payload, float]:
    """Monte Carlo frequency of ``sum of (1-c)t Bernoulli(rho_s) >= count_s``, per payload.

    Sums of i.i.d. Bernoulli draws are sampled as binomials. Each payload uses
    its own child stream of ``SeedSequence(seed)``.
    """
    g = good_draws(d_tilde.t, c)
    streams = np.random.SeedSequence(seed).spawn(len(d.support))
    out = {}
    for s, rho, ss in zip(d.support, d.mass, streams):
        rng = np.random.default_rng(ss)
        hits = rng.binomial(g, float(rho), size=trials) >= d_tilde.count(s)
        out[s] = float(np.count_nonzero(hits)) / trials
    return out


def exact_tail(d: ChoiceDistribution, d_tilde: AdjustedDistribution, c) -> dict[Payload, float]:
    """``P[Bin((1-c)t, rho_s) >= count_s]`` for each payload."""
    g = good_draws(d_tilde.t, c)
    return {
        s: float(stats.binom.sf(d_tilde.count(s) - 1, g, float(rho)))
        for s, rho in zip(d.support, d.mass)
    }
