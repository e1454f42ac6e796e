"""Lockstep execution classes and the chain that connects all-zero to all-one inputs.

Processors are split into ``G = n/t`` groups of ``t`` consecutive ids, the
last ``ct`` of each group being faulty. In a lockstep execution every member
of a group validates the same message multiset each round. Which messages
group ``j`` has validated by the end of round ``i`` is fixed by a table of
*excluded groups*: ``z(i, j)`` is the single group whose round-``i`` messages
group ``j`` does not hear about in round ``i``. From that table we derive, per
``(i, j)``, the set ``Z(i, j)`` of ``(group, round)`` blocks group ``j`` has
validated, the multiset ``S(i, j)`` it feeds to the protocol function, and the
delivery order for every broadcast.

Group ids, rounds and processor ids are all 1-based.
"""

from __future__ import annotations

import json
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Sequence

from .core import Configuration, NotApplicable
from .dist import AdjustedDistribution, ChoiceDistribution, adjust, as_fraction, default_eps
from .fsrp import Processor, make_bag, make_broadcast, make_policy, next_delivery
from .fsrp.protocols import MessageBag, ProtocolFunction

Block = tuple[int, int]  # (group, round)


class MalformedZ(ValueError):
    pass


class HorizonTooSmall(ValueError):
    pass


class ReplayMismatch(AssertionError):
    pass


class PropertyViolation(AssertionError):
    def __init__(self, prop: str, class_index: int | None = None, cell=None, detail: str = ""):
        self.prop = prop
        self.class_index = class_index
        self.cell = cell
        where = [] if class_index is None else [f"class {class_index}"]
        if cell is not None:
            where.append(f"cell {cell}")
        super().__init__(f"property {prop} violated" + (f" at {', '.join(where)}" if where else "") + (f": {detail}" if detail else ""))


# -- layout ----------------------------------------------------------------------


@dataclass(frozen=True)
class GroupLayout:
    n: int
    t: int

    def __post_init__(self):
        if self.t <= 0 or self.n % self.t:
            raise ValueError(f"t={self.t} must divide n={self.n}")
        if (self.t * self.t) % self.n:
            raise ValueError(f"c*t = t^2/n = {Fraction(self.t * self.t, self.n)} is not an integer")

    @classmethod
    def for_groups(cls, groups: int, R: int = 2) -> "GroupLayout":
        """Smallest layout with ``groups`` groups whose group size exceeds ``R^2``.

        The group size is the least multiple of ``groups`` above ``R^2``, which
        makes ``c*t`` integral.
        """
        t = (R * R // groups + 1) * groups
        return cls(groups * t, t)

    @property
    def groups(self) -> int:
        return self.n // self.t

    @property
    def c(self) -> Fraction:
        return Fraction(self.t, self.n)

    @property
    def faulty_per_group(self) -> int:
        return self.t * self.t // self.n

    @property
    def good_per_group(self) -> int:
        return self.t - self.faulty_per_group

    def members(self, g: int) -> range:
        return range((g - 1) * self.t + 1, g * self.t + 1)

    def group_of(self, p: int) -> int:
        return (p - 1) // self.t + 1

    def is_faulty(self, p: int) -> bool:
        return (p - 1) % self.t >= self.good_per_group

    def faulty(self) -> frozenset[int]:
        return frozenset(p for p in range(1, self.n + 1) if self.is_faulty(p))

    def good(self, g: int | None = None) -> list[int]:
        ids = range(1, self.n + 1) if g is None else self.members(g)
        return [p for p in ids if not self.is_faulty(p)]


# -- z table and Z sets ---------------------------------------------------------------


def _derive_blocks(excl: Sequence[Sequence[int]], G: int) -> list[list[frozenset[Block]]]:
    E = len(excl)
    Z: list[list[frozenset[Block]]] = []
    for i in range(1, E + 1):
        row = []
        for j in range(1, G + 1):
            x = excl[i - 1][j - 1]
            heard = [g for g in range(1, G + 1) if g != x]
            acc = {(g, k) for g in heard for k in range(1, i + 1)}
            if i > 1:
                acc |= Z[i - 2][j - 1]
                for g in heard:
                    acc |= Z[i - 2][g - 1]
            row.append(frozenset(acc))
        Z.append(row)
    return Z


@dataclass(frozen=True)
class ZFamily:
    """The excluded-group table ``excl[i-1][j-1]`` with its derived block sets."""

    G: int
    excl: tuple[tuple[int, ...], ...]
    blocks: tuple[tuple[frozenset[Block], ...], ...] = field(repr=False, compare=False, default=())

    def __post_init__(self):
        for row in self.excl:
            if len(row) != self.G or any(not 1 <= x <= self.G for x in row):
                raise MalformedZ(f"bad z row {row} for {self.G} groups")
        if not self.blocks:
            object.__setattr__(self, "blocks", tuple(tuple(r) for r in _derive_blocks(self.excl, self.G)))

    @classmethod
    def canonical(cls, G: int, E: int) -> "ZFamily":
        """Every group excludes the last group in every round."""
        return cls(G, tuple((G,) * G for _ in range(E)))

    @property
    def E(self) -> int:
        return len(self.excl)

    def excluded(self, i: int, j: int) -> int:
        return self.excl[i - 1][j - 1]

    def Z(self, i: int, j: int) -> frozenset[Block]:
        return self.blocks[i - 1][j - 1]

    def z_set(self, i: int, j: int, layout: GroupLayout) -> frozenset[int]:
        x = self.excluded(i, j)
        return frozenset(p for p in range(1, layout.n + 1) if layout.group_of(p) != x)

    def pairs(self, i: int, j: int, layout: GroupLayout) -> frozenset[tuple[int, int]]:
        """``Z(i, j)`` as ``(processor, round)`` pairs."""
        return frozenset((p, k) for g, k in self.Z(i, j) for p in layout.members(g))

    def first_round(self, g: int, k: int, j: int) -> int | None:
        """Least ``i`` with block ``(g, k)`` in ``Z(i, j)``."""
        for i in range(k, self.E + 1):
            if (g, k) in self.blocks[i - 1][j - 1]:
                return i
        return None

    def with_excluded(self, i: int, j: int, x: int) -> "ZFamily":
        rows = [list(r) for r in self.excl]
        rows[i - 1][j - 1] = x
        return ZFamily(self.G, tuple(tuple(r) for r in rows))


def derive_Z(layout: GroupLayout, z: dict[tuple[int, int], Iterable[int]], E: int | None = None) -> ZFamily:
    """Build a :class:`ZFamily` from raw processor sets ``z[(i, j)]``.

    Each set must be the union of all groups but one.
    """
    G = layout.groups
    E = max(i for i, _ in z) if E is None else E
    rows = []
    for i in range(1, E + 1):
        row = []
        for j in range(1, G + 1):
            members = frozenset(z[(i, j)])
            missing = [g for g in range(1, G + 1) if not members & set(layout.members(g))]
            if len(missing) != 1 or len(members) != layout.n - layout.t or any(
                not 1 <= p <= layout.n for p in members
            ):
                raise MalformedZ(f"z({i},{j}) is not the complement of exactly one group")
            row.append(missing[0])
        rows.append(tuple(row))
    return ZFamily(G, tuple(rows))


# -- scheduling permutations ------------------------------------------------------------


@dataclass(frozen=True)
class SchedulePermutations:
    """Receiver order for the broadcast of every ``(processor, round)`` message."""

    layout: GroupLayout
    zf: ZFamily

    def group_order(self, g: int, k: int) -> tuple[int, ...]:
        inf = math.inf
        key = {}
        for j in range(1, self.zf.G + 1):
            r = self.zf.first_round(g, k, j)
            key[j] = inf if r is None else r
        return tuple(sorted(key, key=lambda j: (key[j], j)))

    def perm(self, p: int, k: int) -> tuple[int, ...]:
        order = self.group_order(self.layout.group_of(p), k)
        return tuple(q for j in order for q in self.layout.members(j))


def derive_permutations(zf: ZFamily, layout: GroupLayout) -> SchedulePermutations:
    return SchedulePermutations(layout, zf)


# -- classes ------------------------------------------------------------------------------


@dataclass
class LockstepClass:
    """One class: group inputs, the z table and the per-cell multisets it induces.

    ``blocks[(k, g)]`` lists ``(payload, count)`` for the round-``k`` messages of
    group ``g``; ``S[(i, j)]`` is the bag group ``j`` decides and samples on at
    the end of round ``i``; ``decisions[(i, j)]`` is ``decide(i, S[(i, j)])``.
    """

    index: int
    inputs: tuple[int, ...]
    z: ZFamily
    blocks: dict[Block, tuple[tuple[bytes, int], ...]]
    S: dict[tuple[int, int], MessageBag]
    decisions: dict[tuple[int, int], int | None]

    @property
    def E(self) -> int:
        return self.z.E

    @property
    def G(self) -> int:
        return self.z.G

    def undecided_groups(self) -> list[int]:
        return [
            j
            for j in range(1, self.G + 1)
            if all(self.decisions[(i, j)] is None for i in range(1, self.E + 1))
        ]

    def decided_values(self) -> set[int]:
        return {d for d in self.decisions.values() if d is not None}

    def group_signature(self, j: int):
        return (
            self.inputs[j - 1],
            tuple(self.z.excluded(i, j) for i in range(1, self.E + 1)),
            tuple(self.S[(i, j)] for i in range(1, self.E + 1)),
        )

    def to_record(self) -> dict:
        return {
            "class_index": self.index,
            "inputs_per_group": list(self.inputs),
            "z": [[i, j, self.z.excluded(i, j)] for i in range(1, self.E + 1) for j in range(1, self.G + 1)],
            "S": [
                [i, j, [[r, p.hex(), c] for (r, p), c in self.S[(i, j)]]]
                for i in range(1, self.E + 1)
                for j in range(1, self.G + 1)
            ],
        }


class ClassBuilder:
    """Derives blocks, bags and decisions of a class from inputs and a z table."""

    def __init__(self, layout: GroupLayout, pf: ProtocolFunction, eps=None):
        self.layout = layout
        self.pf = pf
        self.eps = default_eps(layout.c, pf.R, layout.t) if eps is None else as_fraction(eps)
        self._adjusted: dict[ChoiceDistribution, AdjustedDistribution] = {}

    def adjusted(self, d: ChoiceDistribution) -> AdjustedDistribution:
        a = self._adjusted.get(d)
        if a is None:
            a = self._adjusted[d] = adjust(d, self.layout.t, self.eps, self.pf.R)
        return a

    def distribution(self, k: int, g: int, inputs, S) -> ChoiceDistribution:
        """Distribution group ``g`` samples its round-``k`` messages from."""
        if k == 1:
            return self.pf.initial(inputs[g - 1])
        return self.pf.next(k - 1, S[(k - 1, g)])

    def block(self, k, g, inputs, S) -> tuple[tuple[bytes, int], ...]:
        a = self.adjusted(self.distribution(k, g, inputs, S))
        return tuple((p, c) for p, c in zip(a.support, a.counts) if c)

    def build(
        self,
        inputs: Sequence[int],
        zf: ZFamily,
        index: int = 0,
        prev: LockstepClass | None = None,
        from_round: int = 1,
    ) -> LockstepClass:
        """Derive a class; rows below ``from_round`` are copied from ``prev``."""
        G, E = zf.G, zf.E
        inputs = tuple(inputs)
        if prev is None:
            from_round = 1
        blocks = {} if prev is None else {key: v for key, v in prev.blocks.items() if key[0] <= from_round}
        S = {} if prev is None else {key: v for key, v in prev.S.items() if key[0] < from_round}
        dec = {} if prev is None else {key: v for key, v in prev.decisions.items() if key[0] < from_round}
        for i in range(from_round, E + 1):
            if i == 1 or prev is None or i > from_round:
                for g in range(1, G + 1):
                    blocks[(i, g)] = self.block(i, g, inputs, S)
            for j in range(1, G + 1):
                acc: Counter = Counter()
                for g, k in zf.Z(i, j):
                    for p, c in blocks[(k, g)]:
                        acc[(k, p)] += c
                bag = make_bag(acc)
                S[(i, j)] = bag
                dec[(i, j)] = self.pf.decide(i, bag)
        return LockstepClass(index, inputs, zf, blocks, S, dec)


# -- the chain ----------------------------------------------------------------------------


@dataclass
class GeneratorStats:
    classes: int = 0
    max_list: int = 0
    pushes: int = 0


def chain_generator(
    layout: GroupLayout,
    pf: ProtocolFunction,
    E: int,
    eps=None,
    stats: GeneratorStats | None = None,
    builder: ClassBuilder | None = None,
) -> Iterator[LockstepClass]:
    """Lazily emit the chain of classes from all-zero to all-one inputs.

    The list ``L`` holds ``(group, round)`` pairs. Looking at its last pair
    ``(g, r)``, search for the least round ``i`` in ``[r, E]`` and then the least
    group ``j != g`` whose round-``i`` view includes group ``g``. If found, push
    ``(j, i+1)``. Otherwise nobody hears ``g`` from round ``r`` on, so ``g`` can
    be changed unobserved: with a predecessor ``(g', r')`` in the list, make
    ``g`` exclude ``g'`` in round ``r-1``, emit a class and pop; with ``L`` of
    length one, flip ``g``'s inputs to 1, emit, and move on to ``g+1``.
    """
    if E < 1:
        raise HorizonTooSmall(f"E={E} < 1")
    G = layout.groups
    stats = stats if stats is not None else GeneratorStats()
    build = builder or ClassBuilder(layout, pf, eps)
    excl = [[G] * G for _ in range(E)]
    inputs = [0] * G

    def family():
        return ZFamily(G, tuple(tuple(r) for r in excl))

    current = build.build(inputs, family(), 0)
    stats.classes = 1
    yield current
    L: list[tuple[int, int]] = [(1, 1)]
    while True:
        g, r = L[-1]
        stats.max_list = max(stats.max_list, len(L))
        assert r <= E + 1, "list round exceeded E+1"
        found = None
        for i in range(r, E + 1):
            row = excl[i - 1]
            for j in range(1, G + 1):
                if j != g and row[j - 1] != g:
                    found = (i, j)
                    break
            if found:
                break
        if found is not None:
            i, j = found
            assert i + 1 > r
            L.append((j, i + 1))
            stats.pushes += 1
            continue
        if len(L) >= 2:
            prev_g = L[-2][0]
            assert excl[r - 2][g - 1] != prev_g
            excl[r - 2][g - 1] = prev_g
            current = build.build(inputs, family(), stats.classes, current, from_round=r - 1)
            stats.classes += 1
            yield current
            L.pop()
        else:
            inputs[g - 1] = 1
            current = build.build(inputs, family(), stats.classes)
            stats.classes += 1
            yield current
            if g == G:
                return
            L = [(g + 1, 1)]


# -- lockstep driving -----------------------------------------------------------------------


CoinHook = Callable[[int, int, ChoiceDistribution], bytes]


def build_config(
    layout: GroupLayout,
    pf: ProtocolFunction,
    inputs_per_group: Sequence[int],
    round_cap: int,
    policy: str = "per-round",
    broadcast: str = "plain",
    record: bool = False,
) -> Configuration:
    pol = make_policy(policy, pf, layout.n, layout.t)
    bc = make_broadcast(broadcast)
    procs = {
        p: Processor(
            p,
            layout.n,
            layout.t,
            pf,
            pol,
            bc,
            inputs_per_group[layout.group_of(p) - 1],
            faulty=layout.is_faulty(p),
            round_cap=round_cap,
            record=record,
        )
        for p in range(1, layout.n + 1)
    }
    return Configuration(procs, round_cap=round_cap)


class LockstepDriver:
    """Delivers messages so that each group validates exactly ``Z(i, j)`` by the end of round ``i``.

    For round ``i`` it walks every broadcast instance ``(q, k)`` with ``k <= i``,
    earlier rounds first, and advances it along ``perm(q, k)`` until all groups
    whose ``Z(i, j)`` contains ``q``'s block have accepted. Groups are served
    whole and in processor order, so a group's good members close a round
    before its faulty members.
    """

    def __init__(self, config: Configuration, layout: GroupLayout, zf: ZFamily, coins: CoinHook, trace=None):
        self.config = config
        self.layout = layout
        self.zf = zf
        self.perms = derive_permutations(zf, layout)
        self.coins = coins
        self.trace = trace
        self._perm_cache: dict[tuple[int, int], tuple[int, ...]] = {}

    def _step(self, pid, msg_id):
        e = self.config.step(pid, msg_id, self.coins)
        if self.trace is not None:
            self.trace.append(e)

    def start(self) -> None:
        for p in range(1, self.layout.n + 1):
            if not self.config.processes[p].started:
                self._step(p, None)

    def run_round(self, i: int) -> None:
        lay = self.layout
        G = self.zf.G
        for k in range(1, i + 1):
            for q in range(1, lay.n + 1):
                g = lay.group_of(q)
                hearing = [j for j in range(1, G + 1) if (g, k) in self.zf.Z(i, j)]
                if not hearing:
                    continue
                perm = self._perm_cache.get((q, k))
                if perm is None:
                    perm = self._perm_cache[(q, k)] = self.perms.perm(q, k)
                upto = len(hearing) * lay.t
                if {lay.group_of(p) for p in perm[:upto]} != set(hearing):
                    raise ReplayMismatch(f"receivers of ({q},{k}) in round {i} are not a prefix of its order")
                instance = (q, k)
                while (nxt := next_delivery(self.config, instance, perm, upto)) is not None:
                    self._step(*nxt)


def assigned_coins(layout: GroupLayout, cls: LockstepClass) -> CoinHook:
    """Give group members the class's round-``k`` payloads, sorted, in processor order."""

    def hook(pid, k, dist):
        g = layout.group_of(pid)
        block = cls.blocks.get((k, g))
        if block is None:
            return dist.positive_support()[0]
        seq = [p for p, c in block for _ in range(c)]
        p = seq[pid - layout.members(g)[0]]
        if dist.prob(p) <= 0:
            raise ReplayMismatch(f"assigned payload {p!r} is outside the support at ({pid}, round {k})")
        return p

    return hook


@dataclass
class ReplayResult:
    cls: LockstepClass
    config: Configuration
    decisions: dict[int, int | None]
    decided_round: dict[int, int | None]

    def good_decisions(self, layout: GroupLayout) -> dict[int, int | None]:
        return {p: d for p, d in self.decisions.items() if not layout.is_faulty(p)}

    def undecided_good(self, layout: GroupLayout) -> list[int]:
        return [p for p, d in self.good_decisions(layout).items() if d is None]


def replay_class(
    layout: GroupLayout,
    cls: LockstepClass,
    pf: ProtocolFunction,
    coins: CoinHook | None = None,
    policy: str = "per-round",
    broadcast: str = "plain",
) -> ReplayResult:
    """Run the real engine through ``E`` lockstep rounds and compare every view with the class.

    Raises :class:`ReplayMismatch` if any processor's validated pairs or
    multiset at the end of a round differ from ``Z(i, j)`` or ``S(i, j)``.
    """
    config = build_config(layout, pf, cls.inputs, cls.E, policy, broadcast, record=True)
    driver = LockstepDriver(config, layout, cls.z, coins or assigned_coins(layout, cls))
    driver.start()
    for i in range(1, cls.E + 1):
        driver.run_round(i)
    for p, proc in config.processes.items():
        j = layout.group_of(p)
        for i in range(1, cls.E + 1):
            view = proc.views.get(i)
            if view is None:
                raise ReplayMismatch(f"processor {p} did not complete round {i}")
            pairs, bag = view
            if pairs != cls.z.pairs(i, j, layout):
                raise ReplayMismatch(f"processor {p} validated the wrong pairs in round {i}")
            if bag != cls.S[(i, j)]:
                raise ReplayMismatch(f"processor {p} saw a different multiset in round {i}")
    return ReplayResult(
        cls,
        config,
        {p: s.decision for p, s in config.processes.items()},
        {p: s.state.decided_round for p, s in config.processes.items()},
    )


# -- verification ---------------------------------------------------------------------------


@dataclass
class ChainReport:
    classes: int = 0
    witnesses: list[int] = field(default_factory=list)
    first_witness: LockstepClass | None = None
    properties: dict[str, bool] = field(default_factory=dict)
    complete: bool = True
    seconds: float = 0.0

    def as_dict(self) -> dict:
        return {
            "classes": self.classes,
            "witness_count": len(self.witnesses),
            "first_witness": None if self.first_witness is None else self.first_witness.index,
            "properties": self.properties,
            "complete": self.complete,
            "seconds": round(self.seconds, 3),
        }


def check_counts(cls: LockstepClass, layout: GroupLayout, builder: ClassBuilder) -> None:
    """Property 1: every block realises its adjusted counts, and every bag is the sum of its blocks."""
    t = layout.t
    Z = _derive_blocks(cls.z.excl, cls.G)
    for (k, g), block in cls.blocks.items():
        d = builder.distribution(k, g, cls.inputs, cls.S)
        a = builder.adjusted(d)
        expect = {p: c for p, c in zip(a.support, a.counts)}
        got = dict(block)
        if sum(got.values()) != t or any(expect.get(p, 0) != c for p, c in got.items()) or any(
            got.get(p, 0) != c for p, c in expect.items()
        ):
            raise PropertyViolation("1", cls.index, (k, g), f"block {got} vs adjusted counts {expect}")
    for i in range(1, cls.E + 1):
        for j in range(1, cls.G + 1):
            acc: Counter = Counter()
            for g, k in Z[i - 1][j - 1]:
                for p, c in cls.blocks[(k, g)]:
                    acc[(k, p)] += c
            if make_bag(acc) != cls.S[(i, j)]:
                raise PropertyViolation("1", cls.index, (i, j), "multiset is not the union of its blocks")
            if sum(c for (r, _), c in cls.S[(i, j)] if r == i) != layout.n - layout.t:
                raise PropertyViolation("1", cls.index, (i, j), "round count differs from n - t")


def differing_groups(a: LockstepClass, b: LockstepClass) -> list[int]:
    return [j for j in range(1, a.G + 1) if a.group_signature(j) != b.group_signature(j)]


def verify_chain(
    chain: Iterable[LockstepClass],
    pf: ProtocolFunction,
    layout: GroupLayout,
    eps=None,
    replay_endpoints: bool = True,
    deadline: float | None = None,
    on_class: Callable[[LockstepClass], None] | None = None,
) -> ChainReport:
    """Check properties 1 to 4 over a streamed chain, keeping two classes in memory.

    Property 2 is checked as: exactly one group differs between adjacent
    classes in its input, z row or multisets. Properties 3 and 4 replay the
    endpoints in the engine. ``deadline`` (a ``time.monotonic`` value) stops
    early and marks the report incomplete.
    """
    start = time.monotonic()
    builder = ClassBuilder(layout, pf, eps)
    report = ChainReport()
    first = prev = None
    for cls in chain:
        if deadline is not None and time.monotonic() > deadline:
            report.complete = False
            break
        check_counts(cls, layout, builder)
        if first is None:
            first = cls
        else:
            diff = differing_groups(prev, cls)
            if len(diff) != 1:
                raise PropertyViolation("2", cls.index, None, f"groups {diff} differ from class {prev.index}")
        if cls.undecided_groups():
            report.witnesses.append(cls.index)
            if report.first_witness is None:
                report.first_witness = cls
        if on_class is not None:
            on_class(cls)
        report.classes += 1
        prev = cls
    report.properties["1"] = True
    report.properties["2"] = True
    if report.complete and first is not None:
        if any(first.inputs) or not all(prev.inputs):
            raise PropertyViolation("endpoints", prev.index, None, "chain does not run from all-0 to all-1 inputs")
        for prop, cls, bad in (("3", first, 1), ("4", prev, 0)):
            if bad in cls.decided_values():
                raise PropertyViolation(prop, cls.index, None, f"a group decides {bad}")
            if replay_endpoints:
                res = replay_class(layout, cls, pf)
                if bad in res.good_decisions(layout).values():
                    raise PropertyViolation(prop, cls.index, None, f"a good processor decides {bad} in replay")
            report.properties[prop] = True
    report.seconds = time.monotonic() - start
    return report


def find_witness(
    layout: GroupLayout,
    pf: ProtocolFunction,
    start_E: int = 4,
    max_E: int = 64,
    eps=None,
    class_limit: int | None = None,
) -> LockstepClass | None:
    """Double ``E`` from ``start_E`` until the chain contains a class that leaves a group undecided."""
    E = start_E
    while E <= max_E:
        for n_seen, cls in enumerate(chain_generator(layout, pf, E, eps)):
            if cls.undecided_groups():
                return cls
            if class_limit is not None and n_seen >= class_limit:
                break
        E *= 2
    return None


# -- chain files ---------------------------------------------------------------------------


def write_chain(classes: Iterable[LockstepClass], fp) -> int:
    count = 0
    for cls in classes:
        fp.write(json.dumps(cls.to_record(), separators=(",", ":")) + "\n")
        count += 1
    return count


def class_from_record(rec: dict, layout: GroupLayout, pf: ProtocolFunction, eps=None) -> LockstepClass:
    """Rebuild a class from its record, re-deriving everything and checking the stored multisets."""
    G = layout.groups
    E = max(i for i, _, _ in rec["z"])
    rows = [[0] * G for _ in range(E)]
    for i, j, x in rec["z"]:
        rows[i - 1][j - 1] = x
    zf = ZFamily(G, tuple(tuple(r) for r in rows))
    cls = ClassBuilder(layout, pf, eps).build(rec["inputs_per_group"], zf, rec["class_index"])
    for i, j, items in rec["S"]:
        stored = tuple(((r, bytes.fromhex(p)), c) for r, p, c in items)
        if stored != cls.S[(i, j)]:
            raise PropertyViolation("1", cls.index, (i, j), "stored multiset differs from the derived one")
    return cls


def read_chain(fp, layout: GroupLayout, pf: ProtocolFunction, eps=None) -> Iterator[LockstepClass]:
    for line in fp:
        if line.strip():
            yield class_from_record(json.loads(line), layout, pf, eps)


__all__ = [
    "ChainReport", "ClassBuilder", "GeneratorStats", "GroupLayout", "HorizonTooSmall",
    "LockstepClass", "LockstepDriver", "MalformedZ", "NotApplicable", "PropertyViolation",
    "ReplayMismatch", "ReplayResult", "SchedulePermutations", "ZFamily", "assigned_coins",
    "build_config", "chain_generator", "class_from_record", "derive_Z", "derive_permutations",
    "differing_groups", "find_witness", "read_chain", "replay_class", "verify_chain", "write_chain",
]
