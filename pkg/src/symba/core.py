"""Event-driven engine for asynchronous message-passing executions.

A :class:`Configuration` holds every processor's state plus the message
buffer. An :class:`Event` ``(processor, received, local_randomness)`` moves
one processor forward: the received message (if any) leaves the buffer, the
processor runs its protocol logic and any messages it sends enter the
buffer. Which event comes next is decided by a scheduler policy.

Processor states are duck-typed; the engine needs ``pid``, ``faulty``,
``started``, ``decision``, ``completed_round``, ``step(msg, coins)``,
``clone()`` and ``state_key()``.
"""

from __future__ import annotations

import hashlib
import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Protocol, Sequence

import numpy as np

#: Implementation limit on payload length; the model itself puts no bound on it.
MAX_PAYLOAD_BYTES = 4096

Payload = bytes
Instance = tuple[int, int]  # (origin, round) of one Broadcast invocation
CoinSource = Callable[[int, int, object], Payload]


class NotApplicable(Exception):
    def __init__(self, message: str, index: int | None = None):
        self.index = index
        super().__init__(message if index is None else f"event {index}: {message}")


class CapExceeded(Exception):
    """The event budget ran out before the stop condition held."""

    def __init__(self, message: str, trace: "Trace"):
        self.trace = trace
        super().__init__(message)


class PayloadTooLarge(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class Message:
    sender: int
    round: int
    payload: Payload
    instance: Instance
    kind: str = "send"

    def __post_init__(self):
        if len(self.payload) > MAX_PAYLOAD_BYTES:
            raise PayloadTooLarge(f"payload of {len(self.payload)} bytes exceeds {MAX_PAYLOAD_BYTES}")


@dataclass(frozen=True, slots=True)
class Event:
    processor: int
    received: int | None = None  # buffer id of the delivered message
    local_randomness: tuple[Payload, ...] | None = None


Schedule = Sequence[Event]


class Process(Protocol):
    pid: int
    faulty: bool
    started: bool
    decision: int | None
    completed_round: int

    def step(self, msg: Message | None, coins: CoinSource) -> list[tuple[int, Message]]: ...
    def clone(self) -> "Process": ...
    def state_key(self) -> tuple: ...


class Configuration:
    """Processor states and the in-flight message buffer.

    ``buffer`` maps a message id to ``(addressee, message)`` and keeps
    insertion order, so iteration goes from oldest to newest.
    """

    def __init__(self, processes: dict[int, Process], round_cap: int | None = None):
        self.processes = processes
        self.round_cap = round_cap
        self.buffer: dict[int, tuple[int, Message]] = {}
        self.by_instance: dict[Instance, dict[int, None]] = {}
        self.enqueued_by: dict[int, int] = {}
        self.next_id = 1
        self.steps = 0
        self.good = tuple(sorted(p for p, s in processes.items() if not s.faulty))
        self.good_decided = 0
        self.good_capped = 0
        self.unstarted = sorted(processes)

    # -- queries -----------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.processes)

    def applicable(self, event: Event) -> bool:
        if event.processor not in self.processes:
            return False
        if event.received is None:
            return True
        entry = self.buffer.get(event.received)
        return entry is not None and entry[0] == event.processor

    def pending_for(self, pid: int) -> list[int]:
        return [i for i, (a, _) in self.buffer.items() if a == pid]

    def instance_messages(self, instance: Instance) -> Iterable[int]:
        return self.by_instance.get(instance, ())

    def all_good_decided(self) -> bool:
        return self.good_decided == len(self.good)

    def decisions(self) -> dict[int, int | None]:
        return {p: s.decision for p, s in sorted(self.processes.items())}

    # -- transitions -------------------------------------------------------

    def step(self, pid: int, msg_id: int | None, coins: CoinSource) -> Event:
        """Apply one step in place, drawing any randomness from ``coins``.

        Returns the realised event with the sampled outcomes recorded.
        """
        proc = self.processes.get(pid)
        if proc is None:
            raise NotApplicable(f"unknown processor {pid}")
        msg = None
        if msg_id is not None:
            entry = self.buffer.get(msg_id)
            if entry is None or entry[0] != pid:
                raise NotApplicable(f"message {msg_id} is not buffered for processor {pid}")
            addressee, msg = entry
            if msg.sender != self.enqueued_by[msg_id]:
                raise AssertionError("sender authenticity violated")
            del self.buffer[msg_id]
            del self.enqueued_by[msg_id]
            ids = self.by_instance[msg.instance]
            del ids[msg_id]
            if not ids:
                del self.by_instance[msg.instance]
        was_started = proc.started

        drawn: list[Payload] = []

        def recording(p, r, dist):
            out = coins(p, r, dist)
            drawn.append(out)
            return out

        was_decided = proc.decision is not None
        was_capped = self.round_cap is not None and proc.completed_round >= self.round_cap
        sends = proc.step(msg, recording)
        self.steps += 1
        if not was_started and proc.started:
            self.unstarted.remove(pid)
        if not proc.faulty:
            if not was_decided and proc.decision is not None:
                self.good_decided += 1
            if (
                not was_capped
                and self.round_cap is not None
                and proc.completed_round >= self.round_cap
            ):
                self.good_capped += 1
        for addressee, m in sends:
            if m.sender != pid:
                raise AssertionError(f"processor {pid} tried to send as {m.sender}")
            self._enqueue(addressee, m)
        return Event(pid, msg_id, tuple(drawn) if drawn else None)

    def _enqueue(self, addressee: int, m: Message) -> None:
        i = self.next_id
        self.next_id += 1
        self.buffer[i] = (addressee, m)
        self.enqueued_by[i] = m.sender
        self.by_instance.setdefault(m.instance, {})[i] = None

    def apply(self, event: Event) -> None:
        """Apply a recorded event in place, replaying its logged randomness."""
        if not self.applicable(event):
            raise NotApplicable(
                f"message {event.received} is not buffered for processor {event.processor}"
            )
        outcomes = iter(event.local_randomness or ())

        def replay(p, r, dist):
            try:
                out = next(outcomes)
            except StopIteration:
                raise NotApplicable("event carries too few random outcomes") from None
            if out not in dist.positive_support():
                raise NotApplicable(f"recorded outcome {out!r} is outside the support")
            return out

        self.step(event.processor, event.received, replay)
        if next(outcomes, None) is not None:
            raise NotApplicable("event carries unused random outcomes")

    def clone(self) -> "Configuration":
        c = Configuration.__new__(Configuration)
        c.processes = {p: s.clone() for p, s in self.processes.items()}
        c.round_cap = self.round_cap
        c.buffer = dict(self.buffer)
        c.by_instance = {k: dict(v) for k, v in self.by_instance.items()}
        c.enqueued_by = dict(self.enqueued_by)
        c.next_id = self.next_id
        c.steps = self.steps
        c.good = self.good
        c.good_decided = self.good_decided
        c.good_capped = self.good_capped
        c.unstarted = list(self.unstarted)
        return c

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for pid in sorted(self.processes):
            h.update(repr((pid, self.processes[pid].state_key())).encode())
        for i, (a, m) in self.buffer.items():
            h.update(repr((i, a, m.sender, m.round, m.payload, m.instance, m.kind)).encode())
        return h.hexdigest()


# -- folds over events ---------------------------------------------------------


def apply_event(config: Configuration, event: Event) -> Configuration:
    """Successor configuration ``e(C)``; ``config`` itself is left untouched."""
    nxt = config.clone()
    nxt.apply(event)
    return nxt


@dataclass
class Trace:
    events: list[Event] = field(default_factory=list)
    quiescent: bool = False

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def append(self, e: Event) -> None:
        self.events.append(e)


def run_schedule(config: Configuration, schedule: Schedule) -> tuple[Configuration, Trace]:
    """Left fold of :func:`apply_event` over ``schedule``."""
    c = config.clone()
    trace = Trace()
    for i, e in enumerate(schedule):
        try:
            c.apply(e)
        except NotApplicable as err:
            raise NotApplicable(str(err), index=i) from None
        trace.append(e)
    return c, trace


# -- trace export -------------------------------------------------------------


def trace_records(trace: Iterable[Event]) -> Iterator[dict]:
    for i, e in enumerate(trace):
        yield {
            "step_index": i,
            "processor": e.processor,
            "delivered_message_id": e.received,
            "randomness_outcome": None
            if e.local_randomness is None
            else [p.hex() for p in e.local_randomness],
        }


def dump_trace(trace: Iterable[Event], fp) -> None:
    for rec in trace_records(trace):
        fp.write(json.dumps(rec, separators=(",", ":")) + "\n")


def load_trace(fp) -> list[Event]:
    out = []
    for line in fp:
        if not line.strip():
            continue
        rec = json.loads(line)
        rnd = rec["randomness_outcome"]
        out.append(
            Event(
                rec["processor"],
                rec["delivered_message_id"],
                None if rnd is None else tuple(bytes.fromhex(x) for x in rnd),
            )
        )
    return out


# -- randomness and scheduling ---------------------------------------------------


def sample(dist, u: float) -> Payload:
    """Inverse-CDF draw from a :class:`~symba.dist.ChoiceDistribution`."""
    acc = 0.0
    last = None
    for s, m in zip(dist.support, dist.mass):
        if m <= 0:
            continue
        acc += float(m)
        last = s
        if u < acc:
            return s
    return last


class CoinStreams:
    """One seeded generator per processor, created on first use."""

    def __init__(self, seed: int):
        self.seed = seed
        self._rngs: dict[int, np.random.Generator] = {}

    def __call__(self, pid: int, round: int, dist) -> Payload:
        rng = self._rngs.get(pid)
        if rng is None:
            rng = self._rngs[pid] = np.random.default_rng([self.seed, pid])
        return sample(dist, rng.random())


class SchedulerPolicy(Protocol):
    name: str

    def next_event(self, config: Configuration) -> tuple[int, int | None] | None: ...

    def coin(self, config: Configuration, pid: int, round: int, dist) -> Payload | None: ...


class BenignFair:
    """Seeded random delivery biased toward old messages.

    Unstarted processors are started first, in a seeded random order. After
    that each step delivers one of the ``window`` oldest buffered messages,
    chosen uniformly, so the oldest message is delivered with probability at
    least ``1/window`` per step and nothing starves.
    """

    name = "benign-fair"

    def __init__(self, seed: int, window: int | None = None):
        self.seed = seed
        self.window = window
        self._rng = np.random.default_rng([seed, 0])
        self._block = np.empty(0)
        self._pos = 0

    def _uniform(self) -> float:
        if self._pos >= len(self._block):
            self._block = self._rng.random(4096)
            self._pos = 0
        u = self._block[self._pos]
        self._pos += 1
        return float(u)

    def next_event(self, config: Configuration):
        if config.unstarted:
            k = int(self._uniform() * len(config.unstarted))
            return config.unstarted[k], None
        size = len(config.buffer)
        if size == 0:
            return None
        w = min(size, self.window or 2 * config.n)
        k = int(self._uniform() * w)
        msg_id = next(itertools.islice(config.buffer, k, None))
        return config.buffer[msg_id][0], msg_id

    def coin(self, config, pid, round, dist):
        return None


@dataclass(frozen=True)
class StopCondition:
    """Holds as soon as any configured condition holds."""

    all_decided: bool = False
    round_cap: int | None = None
    event_cap: int | None = None
    predicate: Callable[[Configuration], bool] | None = None

    def holds(self, config: Configuration, events: int) -> bool:
        if self.all_decided and config.all_good_decided():
            return True
        if self.round_cap is not None:
            if config.round_cap == self.round_cap:
                if config.good_capped == len(config.good):
                    return True
            elif all(config.processes[p].completed_round >= self.round_cap for p in config.good):
                return True
        if self.event_cap is not None and events >= self.event_cap:
            return True
        return self.predicate is not None and self.predicate(config)


def run_until(
    config: Configuration,
    scheduler: SchedulerPolicy,
    stop: StopCondition,
    seed: int,
    *,
    record_trace: bool = True,
    max_events: int = 10_000_000,
    inplace: bool = False,
    streams: CoinStreams | None = None,
) -> tuple[Configuration, Trace]:
    """Ask ``scheduler`` for events and apply them until ``stop`` holds or nothing is left.

    Good processors draw coins from :class:`CoinStreams` seeded with ``seed``
    unless the scheduler's ``coin`` hook supplies an outcome; pass ``streams``
    to continue existing streams instead.
    """
    c = config if inplace else config.clone()
    streams = streams or CoinStreams(seed)

    def coins(pid, r, dist):
        out = scheduler.coin(c, pid, r, dist)
        return streams(pid, r, dist) if out is None else out

    trace = Trace()
    events = 0
    while True:
        if stop.holds(c, events):
            break
        if events >= max_events:
            raise CapExceeded(f"no stop after {events} events", trace)
        choice = scheduler.next_event(c)
        if choice is None:
            trace.quiescent = True
            break
        e = c.step(choice[0], choice[1], coins)
        events += 1
        if record_trace:
            trace.append(e)
    return c, trace
