"""The round loop run by every processor.

Round ``k`` ends the moment a processor has validated ``n - t`` round-``k``
messages from distinct senders. It then decides on everything validated so
far, samples its round-``k+1`` payload from the protocol function and
broadcasts it. Decided processors keep running: the protocol function's
output doubles as the default message, and the first decision is final.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from ..core import CoinSource, Message
from .protocols import MessageBag, ProtocolFunction, SupportTooLarge, make_bag


@dataclass
class RoundState:
    """Per-processor protocol state; ``current_round`` is the round being collected (0 before start)."""

    current_round: int = 0
    broadcast_value: bytes | None = None
    validated: dict[tuple[int, int], bytes] = field(default_factory=dict)
    accepted: dict[tuple[int, int], bytes] = field(default_factory=dict)
    decision: int | None = None
    decided_round: int | None = None
    bag: Counter = field(default_factory=Counter)  # (round, payload) -> count over validated

    def copy(self) -> "RoundState":
        return RoundState(
            self.current_round,
            self.broadcast_value,
            dict(self.validated),
            dict(self.accepted),
            self.decision,
            self.decided_round,
            Counter(self.bag),
        )


def round_step(state: RoundState, pf: ProtocolFunction, coins: CoinSource, pid: int = 0):
    """Close round ``k = state.current_round`` on the validated multiset.

    Records a first decision if ``decide`` returns one, samples the next
    payload from ``pf.next(k, bag)`` and moves the state to round ``k + 1``.
    Round 0 samples from ``pf.initial`` of the input bit stored in
    ``broadcast_value`` (``b"0"`` or ``b"1"``). Returns ``(payload, decision)``.
    """
    k = state.current_round
    if k == 0:
        dist = pf.initial(int(state.broadcast_value == b"1"))
    else:
        bag: MessageBag = make_bag(state.bag)
        d = pf.decide(k, bag)
        if d is not None and state.decision is None:
            state.decision = d
            state.decided_round = k
        dist = pf.next(k, bag)
    if len(dist.support) > pf.R:
        raise SupportTooLarge(f"support {len(dist.support)} > R={pf.R}")
    live = dist.positive_support()
    payload = live[0] if len(live) == 1 else coins(pid, k + 1, dist)
    state.current_round = k + 1
    state.broadcast_value = payload
    return payload, state.decision


class Processor:
    """A processor running the round loop over a broadcast layer and a validation policy.

    ``round_cap`` stops the loop after that round completes. With
    ``record=True`` the processor keeps, per completed round, the validated
    ``(sender, round)`` pairs and the bag it decided on.
    """

    def __init__(
        self,
        pid: int,
        n: int,
        t: int,
        pf: ProtocolFunction,
        policy,
        broadcast,
        input_bit: int,
        faulty: bool = False,
        round_cap: int | None = None,
        record: bool = False,
    ):
        self.pid = pid
        self.n = n
        self.t = t
        self.pf = pf
        self.policy = policy
        self.broadcast = broadcast
        self.input_bit = input_bit
        self.faulty = faulty
        self.round_cap = round_cap
        self.record = record
        self.state = RoundState(broadcast_value=b"1" if input_bit else b"0")
        self.bstate = broadcast.new_state()
        self.accepted_instances: set[tuple[int, int]] = set()
        self.pending: dict[int, dict[int, bytes]] = {}
        self.vcounts: dict[int, Counter] = {}
        self.vtotal: dict[int, int] = {}
        self.round_senders: dict[int, list[int]] = {}
        self.sent: dict[int, bytes] = {}
        self.completed_round = 0
        self.halted = False
        self.views: dict[int, tuple[frozenset, MessageBag]] = {}

    # -- engine interface -----------------------------------------------------

    @property
    def started(self) -> bool:
        return self.state.current_round > 0 or self.halted

    @property
    def decision(self) -> int | None:
        return self.state.decision

    @property
    def validated(self) -> dict[tuple[int, int], bytes]:
        return self.state.validated

    def has_accepted(self, instance) -> bool:
        return instance in self.accepted_instances

    def step(self, msg: Message | None, coins: CoinSource) -> list[tuple[int, Message]]:
        out: list[tuple[int, Message]] = []
        if self.state.current_round == 0 and not self.halted:
            # any first step starts the processor
            self._send_next(coins, out)
        if msg is None:
            return out
        if msg.instance in self.accepted_instances:
            return out
        got, sends = self.broadcast.receive(self.pid, self.bstate, msg, self.n, self.t)
        out.extend(sends)
        if got is None:
            return out
        self.accepted_instances.add(msg.instance)
        origin, k, payload = got
        self.state.accepted[(origin, k)] = payload
        self.pending.setdefault(k, {})[origin] = payload
        self._settle(coins, out)
        return out

    def clone(self) -> "Processor":
        c = Processor.__new__(Processor)
        c.__dict__.update(self.__dict__)
        c.state = self.state.copy()
        c.bstate = self.broadcast.clone_state(self.bstate)
        c.accepted_instances = set(self.accepted_instances)
        c.pending = {k: dict(v) for k, v in self.pending.items()}
        c.vcounts = {k: Counter(v) for k, v in self.vcounts.items()}
        c.vtotal = dict(self.vtotal)
        c.round_senders = {k: list(v) for k, v in self.round_senders.items()}
        c.sent = dict(self.sent)
        c.views = dict(self.views)
        return c

    def state_key(self) -> tuple:
        s = self.state
        return (
            s.current_round,
            s.broadcast_value,
            tuple(sorted(s.validated.items())),
            tuple(sorted(s.accepted.items())),
            s.decision,
            s.decided_round,
            self.halted,
        )

    # -- internals --------------------------------------------------------------

    def _settle(self, coins, out) -> None:
        progress = True
        while progress:
            progress = False
            for k in sorted(self.pending):
                waiting = self.pending[k]
                for sender in list(waiting):
                    payload = waiting[sender]
                    if self.policy.check(self, sender, k, payload):
                        del waiting[sender]
                        self._mark(sender, k, payload, coins, out)
                        progress = True
                if not waiting:
                    del self.pending[k]

    def _mark(self, sender, k, payload, coins, out) -> None:
        s = self.state
        s.validated[(sender, k)] = payload
        s.bag[(k, payload)] += 1
        self.vcounts.setdefault(k, Counter())[payload] += 1
        self.vtotal[k] = self.vtotal.get(k, 0) + 1
        if k == s.current_round and not self.halted:
            senders = self.round_senders.setdefault(k, [])
            senders.append(sender)
            if len(senders) == self.n - self.t:
                self._complete(coins, out)

    def _complete(self, coins, out) -> None:
        k = self.state.current_round
        if self.record:
            self.views[k] = (frozenset(self.state.validated), make_bag(self.state.bag))
        self.completed_round = k
        if self.round_cap is not None and k >= self.round_cap:
            bag = make_bag(self.state.bag)
            d = self.pf.decide(k, bag)
            if d is not None and self.state.decision is None:
                self.state.decision = d
                self.state.decided_round = k
            self.halted = True
            return
        self._send_next(coins, out)

    def _send_next(self, coins, out) -> None:
        payload, _ = round_step(self.state, self.pf, coins, self.pid)
        k = self.state.current_round
        self.sent[k] = payload
        out.extend(self.broadcast.originate(self.pid, k, payload, self.n))
        if self.n - self.t <= 0:
            # an empty quorum closes every round at once
            self._complete(coins, out)
