"""Broadcast layers and schedules that realise any acceptance order.

Two layers are provided. ``PlainBroadcast`` is a direct send to every
processor; a receiver accepts on delivery. ``BrachaBroadcast`` is the
echo/ready reliable broadcast: echo after the sender's INIT, send READY after
more than ``(n+t)/2`` matching echoes or ``t+1`` matching readies, accept after
``2t+1`` matching readies. Instances are keyed by ``(origin, round)`` and never
share state.
"""

from __future__ import annotations

from typing import Sequence

from ..core import CoinStreams, Configuration, Event, Instance, Message

Accepted = tuple[int, int, bytes]  # (origin, round, payload)


class PlainBroadcast:
    kind = "plain"

    def new_state(self):
        return None

    def clone_state(self, state):
        return None

    def originate(self, pid: int, k: int, payload: bytes, n: int):
        m = Message(pid, k, payload, (pid, k), "send")
        return [(q, m) for q in range(1, n + 1)]

    def receive(self, pid, state, msg: Message, n: int, t: int):
        if msg.kind != "send" or msg.sender != msg.instance[0]:
            return None, []
        return (msg.sender, msg.round, msg.payload), []


class _Tally:
    __slots__ = ("echoed", "readied", "accepted", "echoes", "readies")

    def __init__(self):
        self.echoed = False
        self.readied = False
        self.accepted = False
        self.echoes: dict[bytes, set[int]] = {}
        self.readies: dict[bytes, set[int]] = {}

    def copy(self) -> "_Tally":
        c = _Tally()
        c.echoed, c.readied, c.accepted = self.echoed, self.readied, self.accepted
        c.echoes = {p: set(s) for p, s in self.echoes.items()}
        c.readies = {p: set(s) for p, s in self.readies.items()}
        return c


class BrachaBroadcast:
    kind = "bracha"

    def new_state(self):
        return {}

    def clone_state(self, state):
        return {k: v.copy() for k, v in state.items()}

    def originate(self, pid, k, payload, n):
        m = Message(pid, k, payload, (pid, k), "init")
        return [(q, m) for q in range(1, n + 1)]

    def _all(self, pid, kind, msg, n):
        m = Message(pid, msg.round, msg.payload, msg.instance, kind)
        return [(q, m) for q in range(1, n + 1)]

    def receive(self, pid, state, msg: Message, n: int, t: int):
        inst = state.get(msg.instance)
        if inst is None:
            inst = state[msg.instance] = _Tally()
        out = []
        if msg.kind == "init":
            if msg.sender == msg.instance[0] and not inst.echoed:
                inst.echoed = True
                out += self._all(pid, "echo", msg, n)
            return None, out
        if msg.kind == "echo":
            senders = inst.echoes.setdefault(msg.payload, set())
            senders.add(msg.sender)
            if not inst.readied and 2 * len(senders) > n + t:
                inst.readied = True
                out += self._all(pid, "ready", msg, n)
            return None, out
        if msg.kind == "ready":
            senders = inst.readies.setdefault(msg.payload, set())
            senders.add(msg.sender)
            if not inst.readied and len(senders) >= t + 1:
                inst.readied = True
                out += self._all(pid, "ready", msg, n)
            if not inst.accepted and len(senders) >= 2 * t + 1:
                inst.accepted = True
                return (msg.instance[0], msg.round, msg.payload), out
            return None, out
        return None, out


BROADCASTS = {PlainBroadcast.kind: PlainBroadcast, BrachaBroadcast.kind: BrachaBroadcast}


def make_broadcast(kind: str):
    try:
        return BROADCASTS[kind]()
    except KeyError:
        raise KeyError(f"unknown broadcast {kind!r}") from None


def next_delivery(
    config: Configuration, instance: Instance, order: Sequence[int], upto: int
) -> tuple[int, int] | None:
    """Next ``(processor, message id)`` moving ``instance`` toward acceptance by ``order[:upto]``.

    Returns ``None`` once every processor in the prefix has accepted. Only
    messages of this instance are ever delivered.
    """
    targets = [q for q in order[:upto] if not config.processes[q].has_accepted(instance)]
    if not targets:
        return None
    inits: dict[int, int] = {}
    echoes: list[tuple[int, int]] = []
    readies: dict[int, int] = {}
    sends: dict[int, int] = {}
    for i in config.instance_messages(instance):
        addressee, m = config.buffer[i]
        if m.kind == "send":
            sends.setdefault(addressee, i)
        elif m.kind == "init":
            inits.setdefault(addressee, i)
        elif m.kind == "echo":
            echoes.append((addressee, i))
        else:
            readies.setdefault(addressee, i)
    if sends:
        q = targets[0]
        if q in sends:
            return q, sends[q]
        raise RuntimeError(f"no message of instance {instance} buffered for {q}")
    if inits:
        for q in order:
            if q in inits:
                return q, inits[q]
    if echoes:
        return echoes[0]
    q = targets[0]
    if q in readies:
        return q, readies[q]
    raise RuntimeError(f"instance {instance} cannot reach processor {q}")


def broadcast_schedule(
    config: Configuration,
    instance: Instance,
    pi: Sequence[int],
    coins=None,
) -> tuple[list[Event], list[int]]:
    """A schedule under which ``instance`` is accepted in the order ``pi``.

    Returns ``(events, prefix_ends)``: after the first ``prefix_ends[i]``
    events exactly ``pi[0..i]`` have accepted. ``config`` is not modified;
    any coins drawn along the way come from ``coins`` (seed 0 by default).
    """
    c = config.clone()
    coins = coins or CoinStreams(0)
    events: list[Event] = []
    ends: list[int] = []
    for i in range(1, len(pi) + 1):
        while (step := next_delivery(c, instance, pi, i)) is not None:
            events.append(c.step(step[0], step[1], coins))
        ends.append(len(events))
    return events, ends
