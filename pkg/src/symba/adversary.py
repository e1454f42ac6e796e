"""Steering a live randomized execution into a target lockstep class.

The attacker controls message delivery and the coins of the faulty
processors, nothing else. Round by round it delivers broadcasts in the
target's lockstep order, looks at what the good members of each group
sampled, and picks the faulty members' payloads so that every payload ``s``
is sent exactly ``count_s`` times by the group, where ``count_s / t`` is the
adjusted mass of ``s``. That is possible iff the good members did not
overshoot any count. Once some group overshoots, the run has escaped the class
and continues under benign-fair scheduling while the faulty members keep
voting for whichever payload has been sent least.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .core import BenignFair, CoinStreams, Configuration, StopCondition, run_until
from .dist import AdjustedDistribution, ChoiceDistribution
from .fsrp.protocols import ProtocolFunction
from .lockstep import ClassBuilder, GroupLayout, LockstepClass, LockstepDriver, build_config


class ConfigInvalid(ValueError):
    def __init__(self, violations: Sequence[str] | str):
        self.violations = [violations] if isinstance(violations, str) else list(violations)
        super().__init__("; ".join(self.violations))


class _Fail:
    __slots__ = ()

    def __repr__(self):
        return "FAIL"

    def __bool__(self):
        return False


FAIL = _Fail()


def fill_faulty_choices(good_choices: Iterable[bytes], dtilde: AdjustedDistribution, ct: int):
    """Payloads for the ``ct`` faulty members that complete the group's counts, or ``FAIL``.

    Each payload ``s`` gets multiplicity ``count_s - good_count_s``. If any of
    those is negative the good members overshot and the result is ``FAIL``.
    The returned tuple is canonically sorted.
    """
    good = Counter(good_choices)
    if sum(good.values()) != dtilde.t - ct:
        raise ValueError(f"expected {dtilde.t - ct} good choices, got {sum(good.values())}")
    if any(s not in dtilde.support for s in good):
        raise ValueError("a good choice lies outside the support")
    deficits = {s: dtilde.count(s) - good.get(s, 0) for s in dtilde.support}
    if any(v < 0 for v in deficits.values()):
        return FAIL
    out = tuple(s for s in dtilde.support for _ in range(deficits[s]))
    assert len(out) == ct
    return out


def fill_success_probability(d: ChoiceDistribution, dtilde: AdjustedDistribution, draws: int) -> Fraction:
    """Exact chance that ``draws`` samples from ``d`` stay within every adjusted count.

    Sums the multinomial probability over all count vectors ``x`` with
    ``sum(x) = draws`` and ``x_s <= count_s``.
    """
    support = list(d.support)
    caps = [dtilde.count(s) for s in support]
    mass = [Fraction(m) for m in d.mass]
    total = Fraction(0)

    def rec(i, left, coef, prob):
        nonlocal total
        if i == len(support) - 1:
            if left <= caps[i]:
                total += coef * prob * mass[i] ** left
            return
        for x in range(min(caps[i], left) + 1):
            rec(i + 1, left - x, coef * math.comb(left, x), prob * mass[i] ** x)

    rec(0, draws, 1, Fraction(1))
    return total


def class_oracle(target: LockstepClass, layout: GroupLayout, pf: ProtocolFunction, eps=None) -> list[list[Fraction]]:
    """``oracle[k-1][g-1]``: chance that group ``g``'s round-``k`` fill succeeds given the run is in class."""
    builder = ClassBuilder(layout, pf, eps)
    out = []
    for k in range(1, target.E + 1):
        row = []
        for g in range(1, target.G + 1):
            d = builder.distribution(k, g, target.inputs, target.S)
            row.append(fill_success_probability(d, builder.adjusted(d), layout.good_per_group))
        out.append(row)
    return out


@dataclass
class RunRecord:
    seed: int
    scheduler: str
    inputs: list[int]
    rounds_used: int
    decided: dict[int, int | None]
    in_class_through_round: int = 0
    first_escape_round: int | None = None
    per_round_group_success: list[list[bool]] = field(default_factory=list)
    events: int = 0

    @property
    def all_decided(self) -> bool:
        return all(v is not None for v in self.decided.values())

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["decided"] = {str(p): v for p, v in self.decided.items()}
        return rec

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_record(cls, rec: dict) -> "RunRecord":
        rec = dict(rec)
        rec["decided"] = {int(p): v for p, v in rec["decided"].items()}
        return cls(**rec)


def audit(config: Configuration, inputs: Iterable[int]) -> list[str]:
    """Agreement and validity over good deciders; returns a list of problems."""
    good = [config.processes[p] for p in config.good]
    decided = {s.decision for s in good if s.decision is not None}
    problems = []
    if len(decided) > 1:
        problems.append("agreement: good processors decided different bits")
    good_inputs = {s.input_bit for s in good}
    if decided - good_inputs:
        problems.append(f"validity: decided {sorted(decided)} but good inputs were {sorted(good_inputs)}")
    return problems


def _rounds_used(config: Configuration, cap: int) -> tuple[int, dict[int, int | None]]:
    decided = {p: config.processes[p].decision for p in config.good}
    if any(v is None for v in decided.values()):
        return cap, decided
    return max(config.processes[p].state.decided_round for p in config.good), decided


class BalancingContinuation:
    """Benign-fair delivery; faulty processors send the least-sent payload of the round so far."""

    name = "benign-fair"

    def __init__(self, seed: int, faulty: frozenset[int]):
        self.inner = BenignFair(seed)
        self.faulty = faulty

    def next_event(self, config):
        return self.inner.next_event(config)

    def coin(self, config, pid, k, dist):
        if pid not in self.faulty:
            return None
        return balance_choice(config, k, dist)


def balance_choice(config: Configuration, k: int, dist: ChoiceDistribution) -> bytes:
    sent = Counter(s.sent.get(k) for s in config.processes.values())
    live = dist.positive_support()
    return min(live, key=lambda p: (sent.get(p, 0), p))


class AttackState:
    """Fill decisions and success flags per (round, group) for one run."""

    def __init__(self, target: LockstepClass, layout: GroupLayout, pf: ProtocolFunction, eps=None):
        self.target = target
        self.layout = layout
        self.builder = ClassBuilder(layout, pf, eps)
        self.fills: dict[tuple[int, int], object] = {}
        self.success: dict[tuple[int, int], bool] = {}
        self.escaped_at: int | None = None

    def steering(self, k: int) -> bool:
        return k <= self.target.E and (self.escaped_at is None or k <= self.escaped_at)

    def dtilde(self, k: int, g: int) -> AdjustedDistribution:
        t = self.target
        return self.builder.adjusted(self.builder.distribution(k, g, t.inputs, t.S))

    def fill(self, config: Configuration, k: int, g: int):
        key = (k, g)
        if key not in self.fills:
            good = [config.processes[q].sent.get(k) for q in self.layout.good(g)]
            if any(p is None for p in good):
                raise RuntimeError(f"faulty member of group {g} closed round {k - 1} before its good members")
            self.fills[key] = fill_faulty_choices(good, self.dtilde(k, g), self.layout.faulty_per_group)
        return self.fills[key]

    def record_round(self, config: Configuration, k: int) -> bool:
        """Mark round-``k`` success per group from the payloads actually sent."""
        ok_all = True
        for g in range(1, self.layout.groups + 1):
            sent = Counter(config.processes[q].sent.get(k) for q in self.layout.members(g))
            ok = dict(sent) == dict(self.target.blocks[(k, g)])
            self.success[(k, g)] = ok
            ok_all &= ok
        if not ok_all and self.escaped_at is None:
            self.escaped_at = k
        return ok_all


def attack_run(
    target: LockstepClass,
    layout: GroupLayout,
    pf: ProtocolFunction,
    seed: int,
    K: int = 64,
    eps=None,
    policy: str = "per-round",
    broadcast: str = "plain",
    max_events: int = 10_000_000,
) -> RunRecord:
    """Drive one seeded execution toward ``target`` and let it run to decision or round ``K``."""
    return attack_execution(target, layout, pf, seed, K, eps, policy, broadcast, max_events)[0]


def attack_execution(
    target: LockstepClass,
    layout: GroupLayout,
    pf: ProtocolFunction,
    seed: int,
    K: int = 64,
    eps=None,
    policy: str = "per-round",
    broadcast: str = "plain",
    max_events: int = 10_000_000,
    record_views: bool = False,
) -> tuple[RunRecord, Configuration]:
    """:func:`attack_run` that also returns the final configuration.

    With ``record_views`` every processor keeps its per-round validated view.
    """
    if target.G != layout.groups or len(target.inputs) != layout.groups:
        raise ConfigInvalid(f"target has {target.G} groups but the layout has {layout.groups}")
    if K < target.E:
        raise ConfigInvalid(f"round cap K={K} is below the class horizon E={target.E}")
    config = build_config(layout, pf, target.inputs, K, policy, broadcast, record=record_views)
    streams = CoinStreams(seed)
    state = AttackState(target, layout, pf, eps)
    faulty = layout.faulty()

    def coins(pid, k, dist):
        if pid not in faulty:
            return streams(pid, k, dist)
        if state.steering(k):
            fill = state.fill(config, k, layout.group_of(pid))
            if fill is not FAIL:
                g = layout.group_of(pid)
                idx = pid - layout.members(g)[layout.good_per_group]
                choice = fill[idx]
                if dist.prob(choice) > 0:
                    return choice
        return balance_choice(config, k, dist)

    driver = LockstepDriver(config, layout, target.z, coins)
    driver.start()
    in_class = 0
    if state.record_round(config, 1):
        for i in range(1, target.E + 1):
            driver.run_round(i)
            in_class = i
            if i == target.E:
                break
            if not state.record_round(config, i + 1):
                break
    continuation = BalancingContinuation(seed, faulty)
    config, _ = run_until(
        config,
        continuation,
        StopCondition(all_decided=True, round_cap=K),
        seed,
        record_trace=False,
        inplace=True,
        streams=streams,
        max_events=max_events,
    )
    rounds, decided = _rounds_used(config, K)
    grid = [
        [state.success[(k, g)] for g in range(1, layout.groups + 1)]
        for k in range(1, target.E + 1)
        if (k, 1) in state.success
    ]
    record = RunRecord(
        seed=seed,
        scheduler="adversary-lockstep",
        inputs=list(target.inputs),
        rounds_used=rounds,
        decided=decided,
        in_class_through_round=in_class,
        first_escape_round=state.escaped_at,
        per_round_group_success=grid,
        events=config.steps,
    )
    return record, config


def baseline_run(
    inputs: Sequence[int],
    layout: GroupLayout,
    pf: ProtocolFunction,
    seed: int,
    K: int = 64,
    policy: str = "per-round",
    broadcast: str = "plain",
    max_events: int = 10_000_000,
) -> RunRecord:
    """Benign-fair scheduling with every processor, faulty ones included, sampling honestly."""
    if len(inputs) != layout.groups:
        raise ConfigInvalid(f"{len(inputs)} group inputs for {layout.groups} groups")
    config = build_config(layout, pf, inputs, K, policy, broadcast)
    config, _ = run_until(
        config,
        BenignFair(seed),
        StopCondition(all_decided=True, round_cap=K),
        seed,
        record_trace=False,
        inplace=True,
        max_events=max_events,
    )
    rounds, decided = _rounds_used(config, K)
    return RunRecord(
        seed=seed,
        scheduler="benign-fair",
        inputs=list(inputs),
        rounds_used=rounds,
        decided=decided,
        events=config.steps,
    )
