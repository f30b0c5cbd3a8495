from __future__ import annotations

import random
from math import comb

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from byzreduce import codec
from byzreduce.memory import (
    Cell,
    Event,
    EventLog,
    InterleavingAdversary,
    LogError,
    Memory,
    SchedulingError,
    Snapshot,
    Write,
    enumerate_interleavings,
    execute,
    interleaving_count,
    snapshot_view,
    validate_snapshots,
)


def writer(p, k, tag="w"):
    """Program of k writes to p's own cells, snapshotting in between."""
    def prog():
        for j in range(k):
            if j % 2:
                yield Snapshot(f"{tag}{j}")
            else:
                yield Write(Cell("c", j, p), (p, j), f"{tag}{j}")
    return prog


def test_single_write():
    log = execute([writer(0, 1)])
    assert [(e.process, e.kind) for e in log] == [(0, "write")]


def test_explicit_alternation():
    log = execute([writer(0, 2), writer(1, 2)], InterleavingAdversary("explicit", sequence=(0, 1, 0, 1)))
    assert [e.process for e in log] == [0, 1, 0, 1]


def test_seeded_random_replay_is_byte_identical():
    progs = [writer(0, 9), writer(1, 7)]
    a = codec.dumps(execute(progs, InterleavingAdversary(seed=5)).to_json())
    b = codec.dumps(execute(progs, InterleavingAdversary(seed=5)).to_json())
    assert a == b


def test_adversary_picking_finished_process_fails():
    with pytest.raises(SchedulingError):
        execute([writer(0, 1), writer(1, 3)], InterleavingAdversary("explicit", sequence=(0, 0)))


def test_crash_stops_process():
    log = execute([writer(0, 4), writer(1, 4)], InterleavingAdversary(seed=1, crash=(1, 2)))
    assert log.crashed() == 1
    ts = [e.timestamp for e in log if e.process == 1]
    crash_t = next(e.timestamp for e in log if e.kind == "crash")
    assert ts[-1] == crash_t and sum(e.process == 1 and e.kind != "crash" for e in log) == 2


def test_swmr_and_log_rules_enforced():
    with pytest.raises(LogError):
        EventLog((Event(0, 0, "write", Cell("c", 0, 1), 5),))
    with pytest.raises(LogError):
        EventLog((Event(0, 0, "crash"), Event(1, 0, "snapshot")))
    with pytest.raises(LogError):
        EventLog((Event(1, 0, "snapshot"), Event(1, 1, "snapshot")))
    with pytest.raises(LogError):
        EventLog((Event(0, 0, "crash"), Event(1, 1, "crash")))

    def rogue():
        yield Write(Cell("c", 0, 1), 1)
    with pytest.raises(LogError):
        execute([rogue])


@pytest.mark.parametrize("a,b", [(2, 1), (3, 3), (1, 4), (2, 2)])
def test_enumeration_counts_binomial(a, b):
    logs = list(enumerate_interleavings([writer(0, a), writer(1, b)], max_events=12))
    assert len(logs) == comb(a + b, a) == interleaving_count(a, b)
    assert len({tuple((e.process, e.label) for e in log) for log in logs}) == len(logs)
    assert all(validate_snapshots(log) == [] for log in logs)


def test_enumeration_with_crashes():
    logs = list(enumerate_interleavings([writer(0, 2), writer(1, 1)], max_events=6, crashes=True))
    crashed = [log for log in logs if log.crashed() is not None]
    assert len(logs) - len(crashed) == 3
    assert crashed and all(validate_snapshots(log) == [] for log in logs)


def test_enumeration_bound():
    with pytest.raises(ValueError):
        list(enumerate_interleavings([writer(0, 20), writer(1, 20)], max_events=24))
    with pytest.raises(ValueError):
        list(enumerate_interleavings([writer(0, 1)], max_events=25))


def test_snapshot_view_examples():
    c0, c1 = Cell("c", 0, 0), Cell("c", 1, 1)
    log = EventLog((Event(0, 0, "snapshot"), Event(1, 0, "write", c0, 5), Event(2, 1, "write", c1, 7),
                    Event(3, 1, "snapshot")))
    assert snapshot_view(log, 0) == Memory()
    assert snapshot_view(log, 0)[c0] is None
    assert snapshot_view(log, 3) == Memory({c0: 5, c1: 7})
    with pytest.raises(KeyError):
        snapshot_view(log, 9)


def random_log(rng: random.Random) -> EventLog:
    events, t = [], 0
    crashed = None
    for _ in range(rng.randint(1, 12)):
        p = rng.randrange(2)
        if p == crashed:
            continue
        kind = rng.choice(["write", "write", "snapshot", "crash"] if crashed is None else ["write", "snapshot"])
        if kind == "write":
            events.append(Event(t, p, "write", Cell("c", rng.randrange(3), p), rng.randrange(10)))
        else:
            events.append(Event(t, p, kind))
            if kind == "crash":
                crashed = p
        t += rng.randint(1, 3)
    return EventLog(tuple(events))


def replay_oracle(log: EventLog, t: int) -> dict:
    cells = {}
    for e in sorted(log.events, key=lambda e: e.timestamp):
        if e.timestamp < t and e.kind == "write":
            cells[e.cell] = e.value
    return cells


@settings(max_examples=600)
@given(st.integers(0, 10**9))
def test_snapshot_view_matches_replay(seed):
    rng = random.Random(seed)
    log = random_log(rng)
    t = rng.choice(log.events).timestamp
    assert dict(snapshot_view(log, t).items()) == replay_oracle(log, t)


@given(st.integers(0, 10**6), st.integers(1, 6), st.integers(1, 6))
def test_generated_logs_are_linearizable_and_crash_monotone(seed, a, b):
    adv = InterleavingAdversary(seed=seed, crash=(seed % 2, seed % 4) if seed % 3 else None)
    log = execute([writer(0, a), writer(1, b)], adv)
    assert validate_snapshots(log) == []
    c = log.crashed()
    if c is not None:
        ct = next(e.timestamp for e in log if e.kind == "crash")
        assert not any(e.process == c and e.timestamp > ct for e in log)


def test_log_json_roundtrip():
    log = execute([writer(0, 5), writer(1, 5)], InterleavingAdversary(seed=3, crash=(0, 2)))
    assert EventLog.from_json(log.to_json()) == log
    adv = InterleavingAdversary("explicit", 4, (0, 1, 1), (1, 3))
    assert InterleavingAdversary.from_json(adv.to_json()) == adv
    with pytest.raises(ValueError):
        InterleavingAdversary("chaos")
