import io

import pytest

from symba.core import (
    BenignFair,
    CoinStreams,
    Event,
    Message,
    NotApplicable,
    PayloadTooLarge,
    StopCondition,
    apply_event,
    dump_trace,
    load_trace,
    run_schedule,
    run_until,
)
from symba.core import MAX_PAYLOAD_BYTES

from conftest import make_config

MIXED = [0, 1] * 12 + [1]


def benign(config, seed, cap=64, record_trace=True):
    return run_until(config, BenignFair(seed), StopCondition(all_decided=True, round_cap=cap), seed,
                     record_trace=record_trace)


def test_empty_delivery_step_touches_only_stepper():
    c = make_config(4, 1, [0, 0, 1, 1])
    before = {p: s.state_key() for p, s in c.processes.items()}
    nxt = apply_event(c, Event(2, None, None))
    after = {p: s.state_key() for p, s in nxt.processes.items()}
    assert [p for p in before if before[p] != after[p]] == [2]
    assert {m.sender for _, m in nxt.buffer.values()} == {2}
    assert len(nxt.buffer) == 4
    assert c.buffer == {}


def test_delivery_removes_message():
    c = make_config(4, 1, [0, 0, 1, 1])
    c.step(1, None, CoinStreams(0))
    mid = next(i for i, (a, _) in c.buffer.items() if a == 3)
    c.step(3, mid, CoinStreams(0))
    assert mid not in c.buffer


def test_inapplicable_event_rejected():
    c = make_config(4, 1, [0, 0, 1, 1])
    c.step(1, None, CoinStreams(0))
    mid = next(i for i, (a, _) in c.buffer.items() if a == 3)
    with pytest.raises(NotApplicable):
        c.step(2, mid, CoinStreams(0))
    with pytest.raises(NotApplicable):
        c.apply(Event(9, None, None))


def test_payload_cap():
    Message(1, 1, b"x" * MAX_PAYLOAD_BYTES, (1, 1))
    with pytest.raises(PayloadTooLarge):
        Message(1, 1, b"x" * (MAX_PAYLOAD_BYTES + 1), (1, 1))


def test_empty_schedule_is_identity():
    c = make_config(4, 1, [0, 1, 0, 1])
    d, trace = run_schedule(c, [])
    assert d.fingerprint() == c.fingerprint()
    assert len(trace) == 0


def test_unanimous_zero_all_decide_zero():
    c, _ = benign(make_config(25, 5, [0] * 25), 3)
    assert set(c.decisions().values()) == {0}


def test_seeded_run_repeats_exactly():
    a, ta = benign(make_config(25, 5, MIXED, round_cap=64), 7)
    b, tb = benign(make_config(25, 5, MIXED, round_cap=64), 7)
    fa, fb = io.StringIO(), io.StringIO()
    dump_trace(ta, fa)
    dump_trace(tb, fb)
    assert fa.getvalue() == fb.getvalue()
    assert a.fingerprint() == b.fingerprint()


def test_replay_of_recorded_run_matches():
    c0 = make_config(10, 2, [0, 1] * 5, round_cap=64)
    final, trace = benign(c0, 11)
    buf = io.StringIO()
    dump_trace(trace, buf)
    buf.seek(0)
    events = load_trace(buf)
    assert events == list(trace)
    again, _ = run_schedule(c0, events)
    assert again.fingerprint() == final.fingerprint()
    assert again.decisions() == final.decisions()
    again2, _ = run_schedule(c0, events)
    assert again2.fingerprint() == again.fingerprint()


def test_schedule_fold_associativity():
    c0 = make_config(10, 2, [0, 1] * 5, round_cap=64)
    _, trace = benign(c0, 5)
    events = list(trace)
    cut = len(events) // 3
    whole, _ = run_schedule(c0, events)
    first, _ = run_schedule(c0, events[:cut])
    second, _ = run_schedule(first, events[cut:])
    assert whole.fingerprint() == second.fingerprint()


def test_replay_rejects_out_of_support_randomness():
    c0 = make_config(10, 2, [0, 1] * 5, round_cap=64)
    _, trace = benign(c0, 5)
    events = list(trace)
    i = next(i for i, e in enumerate(events) if e.local_randomness)
    bad = Event(events[i].processor, events[i].received, (b"junk",))
    with pytest.raises(NotApplicable) as err:
        run_schedule(c0, events[:i] + [bad])
    assert err.value.index == i


def test_good_inputs_validity_and_agreement_over_seeds():
    for seed in range(20):
        c, _ = benign(make_config(10, 2, [0, 1] * 5, faulty={9, 10}, round_cap=64), seed, record_trace=False)
        decided = {c.processes[p].decision for p in c.good}
        assert len(decided - {None}) <= 1


def test_quiescent_stop():
    c = make_config(4, 1, [0, 0, 0, 0], round_cap=1)
    c, trace = run_until(c, BenignFair(0), StopCondition(), 0)
    assert trace.quiescent
    assert c.buffer == {}
