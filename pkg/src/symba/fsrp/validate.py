"""Validation policies deciding which accepted messages a processor may count.

Both policies are good message complete: a message produced by an honest
processor from messages the receiver has also accepted is always marked.
Both are monotone, so adding accepted messages never unmarks anything.

``PerRound`` marks a round-``k`` payload iff some ``n - t`` of the validated
round-``k-1`` messages put it in the support of the protocol function.
``Chained`` additionally demands a nested sequence of validated sets that
explains the sender's whole history.
"""

from __future__ import annotations

import itertools
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Protocol

from .protocols import MessageBag, ProtocolFunction, make_bag

DEFAULT_CHAIN_BUDGET = 100_000


class SearchBudgetExceeded(RuntimeError):
    def __init__(self, sender: int, round: int, budget: int):
        self.sender = sender
        self.round = round
        super().__init__(f"chained validation of ({sender}, round {round}) exceeded {budget} candidates")


class ValidatedView(Protocol):
    validated: dict[tuple[int, int], bytes]
    vcounts: dict[int, Counter]
    vtotal: dict[int, int]


class SimpleView:
    def __init__(self):
        self.validated: dict[tuple[int, int], bytes] = {}
        self.vcounts: dict[int, Counter] = {}
        self.vtotal: dict[int, int] = {}

    def add(self, sender: int, k: int, payload: bytes) -> None:
        self.validated[(sender, k)] = payload
        self.vcounts.setdefault(k, Counter())[payload] += 1
        self.vtotal[k] = self.vtotal.get(k, 0) + 1


def count_vectors(avail: Iterable[tuple[bytes, int]], total: int) -> Iterator[tuple[tuple[bytes, int], ...]]:
    """All ways to pick ``total`` items from the available payload counts, smallest first."""
    items = sorted(avail)
    tail_cap = [0] * (len(items) + 1)
    for i in range(len(items) - 1, -1, -1):
        tail_cap[i] = tail_cap[i + 1] + items[i][1]

    def rec(i: int, remaining: int):
        if i == len(items):
            if remaining == 0:
                yield ()
            return
        p, cap = items[i]
        for x in range(max(0, remaining - tail_cap[i + 1]), min(cap, remaining) + 1):
            for rest in rec(i + 1, remaining - x):
                yield ((p, x),) + rest if x else rest

    return rec(0, total)


class _Policy:
    kind = "abstract"

    def __init__(self, pf: ProtocolFunction, n: int, t: int):
        self.pf = pf
        self.n = n
        self.t = t
        self.quorum = n - t
        self._round1 = pf.round1_support()

    def check(self, view: ValidatedView, sender: int, k: int, payload: bytes) -> bool:
        raise NotImplementedError

    def mark(self, accepted: Iterable[tuple[int, int, bytes]]) -> set[tuple[int, int, bytes]]:
        """Batch form: the fixpoint of repeatedly validating against what is already marked."""
        pending = sorted(set(accepted), key=lambda x: (x[1], x[0], x[2]))
        view = SimpleView()
        marked: set[tuple[int, int, bytes]] = set()
        progress = True
        while progress:
            progress = False
            for item in pending:
                sender, k, payload = item
                if item in marked or (sender, k) in view.validated:
                    continue
                if self.check(view, sender, k, payload):
                    view.add(sender, k, payload)
                    marked.add(item)
                    progress = True
        return marked


class PerRound(_Policy):
    kind = "per-round"

    def __init__(self, pf, n, t):
        super().__init__(pf, n, t)
        self._support: dict[tuple[int, tuple], frozenset[bytes]] = {}

    def reachable(self, k: int, avail: Counter) -> frozenset[bytes]:
        """Union of supports of ``N(k, c)`` over every ``n - t`` sub-multiset ``c`` of round-``k`` payloads."""
        key = (k, tuple(sorted(avail.items())))
        out = self._support.get(key)
        if out is None:
            acc: set[bytes] = set()
            for vec in count_vectors(key[1], self.quorum):
                bag = tuple(((k, p), x) for p, x in vec)
                acc.update(self.pf.next(k, bag).positive_support())
            out = self._support[key] = frozenset(acc)
        return out

    def check(self, view, sender, k, payload):
        if k == 1:
            return payload in self._round1
        if view.vtotal.get(k - 1, 0) < self.quorum:
            return False
        return payload in self.reachable(k - 1, view.vcounts[k - 1])


class Chained(_Policy):
    kind = "chained"

    def __init__(self, pf, n, t, budget: int = DEFAULT_CHAIN_BUDGET):
        super().__init__(pf, n, t)
        self.budget = budget
        self._memo: dict[tuple, bool] = {}

    def check(self, view, sender, k, payload):
        if k == 1:
            return payload in self._round1
        history = []
        for i in range(1, k):
            m = view.validated.get((sender, i))
            if m is None:
                return False
            history.append(m)
        if any(view.vtotal.get(r, 0) < self.quorum for r in range(1, k)):
            return False
        msgs = tuple(history) + (payload,)
        avail = tuple(tuple(sorted(view.vcounts[r].items())) for r in range(1, k))
        key = (msgs, avail)
        hit = self._memo.get(key)
        if hit is None:
            hit = self._memo[key] = self._search(msgs, avail, sender, k)
        return hit

    def _search(self, msgs, avail, sender, k) -> bool:
        # msgs[i] is the sender's round-(i+1) payload; avail[r-1] the round-r counts
        left = [self.budget]

        def extras(used: Counter, i: int):
            slots = []
            for r in range(1, i):
                for p, cap in avail[r - 1]:
                    spare = cap - used.get((r, p), 0)
                    if spare > 0:
                        slots.append(((r, p), spare))
            for combo in itertools.product(*(range(s + 1) for _, s in slots)):
                yield {slot: x for (slot, _), x in zip(slots, combo) if x}

        def level(i: int, prev: Counter) -> bool:
            for vec in count_vectors(avail[i - 1], self.quorum):
                for extra in extras(prev, i):
                    left[0] -= 1
                    if left[0] < 0:
                        raise SearchBudgetExceeded(sender, k, self.budget)
                    s = Counter(prev)
                    for p, x in vec:
                        s[(i, p)] += x
                    for slot, x in extra.items():
                        s[slot] += x
                    bag: MessageBag = make_bag(s)
                    if msgs[i] in self.pf.next(i, bag).positive_support():
                        if i == k - 1 or level(i + 1, s):
                            return True
            return False

        return level(1, Counter())


@dataclass
class HonestHistory:
    """Every processor's honest messages for rounds ``1..k`` plus the nested validated sets behind them.

    ``payloads[(q, i)]`` is q's round-``i`` payload and ``basis[(q, i)]`` the
    set of ``(sender, round)`` pairs q had validated when it computed its
    round-``i+1`` payload.
    """

    k: int
    payloads: dict[tuple[int, int], bytes]
    basis: dict[tuple[int, int], frozenset[tuple[int, int]]]

    def closure(self, sender: int, k: int) -> set[tuple[int, int]]:
        """Smallest set holding ``(sender, k)`` together with the honest history behind every member."""
        out: set[tuple[int, int]] = set()
        todo = [(sender, k)]
        while todo:
            q, i = todo.pop()
            if (q, i) in out:
                continue
            out.add((q, i))
            if i > 1:
                todo.extend((q, j) for j in range(1, i))
                todo.extend(self.basis[(q, i - 1)])
        return out

    def accepted(self, pairs: Iterable[tuple[int, int]]) -> list[tuple[int, int, bytes]]:
        return [(q, i, self.payloads[(q, i)]) for q, i in pairs]


def honest_history(pf: ProtocolFunction, n: int, t: int, k: int, rng: random.Random) -> HonestHistory:
    """Random honest execution of ``k`` rounds in which each processor sees its own random quorums."""
    from ..core import sample

    quorum = n - t
    payloads: dict[tuple[int, int], bytes] = {}
    basis: dict[tuple[int, int], frozenset[tuple[int, int]]] = {}
    for q in range(1, n + 1):
        payloads[(q, 1)] = sample(pf.initial(rng.randrange(2)), rng.random())
    for i in range(1, k):
        for q in range(1, n + 1):
            prev = basis.get((q, i - 1), frozenset())
            chosen = rng.sample(range(1, n + 1), quorum)
            s = prev | {(r, i) for r in chosen}
            basis[(q, i)] = s
            bag = make_bag(Counter((pair[1], payloads[pair]) for pair in s))
            payloads[(q, i + 1)] = sample(pf.next(i, bag), rng.random())
    return HonestHistory(k, payloads, basis)


@dataclass
class CompletenessReport:
    trials: int
    failures: list[tuple[int, int, int]] = field(default_factory=list)  # (trial, sender, round)

    @property
    def passed(self) -> bool:
        return not self.failures


def good_message_completeness_check(
    policy: "_Policy", pf: ProtocolFunction, trials: int, seed: int, max_round: int = 3, extra: float = 0.5
) -> CompletenessReport:
    """Property test: an honest message is marked whenever its honest history has been accepted.

    Each trial draws an honest history, picks a random sender and round
    ``k <= max_round``, and hands ``policy.mark`` the history's closure plus a
    random fraction ``extra`` of the other messages of rounds up to ``k``.
    """
    rng = random.Random(seed)
    n, t = policy.n, policy.t
    report = CompletenessReport(trials)
    for trial in range(trials):
        k = rng.randint(1, max_round)
        hist = honest_history(pf, n, t, k, rng)
        sender = rng.randint(1, n)
        pairs = hist.closure(sender, k)
        pairs |= {pair for pair in hist.payloads if rng.random() < extra}
        target = (sender, k, hist.payloads[(sender, k)])
        if target not in policy.mark(hist.accepted(pairs)):
            report.failures.append((trial, sender, k))
    return report


POLICIES = {PerRound.kind: PerRound, Chained.kind: Chained}


def make_policy(kind: str, pf: ProtocolFunction, n: int, t: int, **kw) -> _Policy:
    try:
        return POLICIES[kind](pf, n, t, **kw)
    except KeyError:
        raise KeyError(f"unknown validation policy {kind!r}") from None
