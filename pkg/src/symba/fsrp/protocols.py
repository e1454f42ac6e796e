"""Protocol functions: the map from (round, validated multiset) to the next payload distribution.

A protocol function never sees sender identities. Its input is a
:data:`MessageBag`, a canonical sorted tuple of ``((round, payload), count)``
entries, so two views that differ only by a relabelling of senders are the
same Python value.
"""

from __future__ import annotations

from collections import Counter
from typing import Callable, Iterable, Mapping

from ..dist import ChoiceDistribution

MessageBag = tuple[tuple[tuple[int, bytes], int], ...]

VOTE0 = b"vote:0"
VOTE1 = b"vote:1"
VOTES = (VOTE0, VOTE1)


class SupportTooLarge(ValueError):
    pass


def make_bag(entries: Mapping[tuple[int, bytes], int] | Iterable[tuple[int, bytes]]) -> MessageBag:
    """Canonical bag from a ``{(round, payload): count}`` mapping or an iterable of pairs."""
    if not isinstance(entries, Mapping):
        entries = Counter(entries)
    return tuple(sorted((k, v) for k, v in entries.items() if v > 0))


def bag_round(bag: MessageBag, k: int) -> dict[bytes, int]:
    return {p: c for (r, p), c in bag if r == k}


def bag_size(bag: MessageBag) -> int:
    return sum(c for _, c in bag)


def vote_bit(payload: bytes) -> int | None:
    if payload == VOTE0:
        return 0
    if payload == VOTE1:
        return 1
    return None


class ProtocolFunction:
    """Base class. Subclasses define ``initial``, ``_next`` and ``decide``.

    ``next`` memoises ``_next`` and enforces the support bound ``R``.
    """

    name = "abstract"
    R = 1

    def __init__(self, n: int, t: int):
        self.n = n
        self.t = t
        self._cache: dict[tuple[int, MessageBag], ChoiceDistribution] = {}

    def initial(self, bit: int) -> ChoiceDistribution:
        raise NotImplementedError

    def _next(self, k: int, bag: MessageBag) -> ChoiceDistribution:
        raise NotImplementedError

    def decide(self, k: int, bag: MessageBag) -> int | None:
        raise NotImplementedError

    def next(self, k: int, bag: MessageBag) -> ChoiceDistribution:
        key = (k, bag)
        d = self._cache.get(key)
        if d is None:
            d = self._next(k, bag)
            if len(d.support) > self.R:
                raise SupportTooLarge(f"{self.name}: support {len(d.support)} > R={self.R} at round {k}")
            if len(self._cache) > 200_000:
                self._cache.clear()
            self._cache[key] = d
        return d

    def round1_support(self) -> frozenset[bytes]:
        return frozenset(self.initial(0).positive_support()) | frozenset(
            self.initial(1).positive_support()
        )


def _tally(k: int, bag: MessageBag) -> tuple[int, int]:
    c0 = c1 = 0
    for (r, p), c in bag:
        if r == k:
            if p == VOTE0:
                c0 += c
            elif p == VOTE1:
                c1 += c
    return c0, c1


class _VoteDecide(ProtocolFunction):
    def initial(self, bit: int) -> ChoiceDistribution:
        return ChoiceDistribution.point(VOTES[bit])

    def decide(self, k: int, bag: MessageBag) -> int | None:
        if k < 2:
            return None
        c0, c1 = _tally(k, bag)
        quorum = max(self.n - self.t, 1)
        if c0 >= quorum and c1 == 0:
            return 0
        if c1 >= quorum and c0 == 0:
            return 1
        return None


class BenOrStyle(_VoteDecide):
    """Vote the locked bit if it is strong in the last round, otherwise flip a fair coin.

    A bit is strong when it carries at least ``floor`` of the round-``k``
    votes and strictly more than the other bit. The default floor is a strict
    majority of all ``n`` processors (capped at ``n - t`` so unanimous views
    always lock). Two processors can then never lock opposite bits, and when
    ``n > 4t`` a processor that saw only ``b`` votes forces every other view to
    hold at least ``n - 2t >= floor`` votes for ``b``. A processor decides ``b``
    at round ``k >= 2`` when every round-``k`` vote it validated carries ``b``.
    """

    name = "benor-style"
    R = 2

    def __init__(self, n: int, t: int, floor: int | None = None):
        super().__init__(n, t)
        self.floor = min(n // 2 + 1, n - t) if floor is None else floor

    def _next(self, k, bag):
        c0, c1 = _tally(k, bag)
        if c0 >= self.floor and c0 > c1:
            return ChoiceDistribution.point(VOTE0)
        if c1 >= self.floor and c1 > c0:
            return ChoiceDistribution.point(VOTE1)
        return ChoiceDistribution.uniform(VOTES)


class PointMassMajority(_VoteDecide):
    """Deterministic: vote the round majority (ties to 0)."""

    name = "point-mass-deterministic"
    R = 1

    def _next(self, k, bag):
        c0, c1 = _tally(k, bag)
        return ChoiceDistribution.point(VOTE1 if c1 > c0 else VOTE0)


ProtocolFactory = Callable[[int, int], ProtocolFunction]

PROTOCOLS: dict[str, ProtocolFactory] = {
    BenOrStyle.name: BenOrStyle,
    PointMassMajority.name: PointMassMajority,
}


def register(name: str, factory: ProtocolFactory) -> None:
    PROTOCOLS[name] = factory


def make_protocol(name: str, n: int, t: int) -> ProtocolFunction:
    try:
        factory = PROTOCOLS[name]
    except KeyError:
        raise KeyError(f"unknown protocol {name!r}; known: {sorted(PROTOCOLS)}") from None
    return factory(n, t)
