from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from byzreduce.algorithms import make_algorithms
from byzreduce.analysis import slot_records
from byzreduce.atom import activate
from byzreduce.geometry import Configuration, LocalState, is_legitimate_now, max_multiplicity, pt, swap
from byzreduce.memory import InterleavingAdversary, Memory, execute
from byzreduce.reduction import (
    ConfigError,
    ReductionTrace,
    TraceCorruption,
    decode,
    gathering_rules,
    getview,
    reference_run,
    run_consensus,
    run_formation_consensus,
)
from byzreduce.slot import CLAIM, DEFER, flag_cell, val_cell


def committed(cells, k, v, owner=0):
    cells[val_cell(k, owner)] = v
    cells[flag_cell(k, owner)] = CLAIM


def test_decode():
    ref = pt(3, 4)
    assert decode(ref, ref) == 0
    assert decode(ref + pt(1, 0), ref) == 1
    assert decode(pt(-7, 2), ref) == 1


def test_getview_all_committed():
    n = 4
    cells = {}
    for k in range(n):
        committed(cells, k, LocalState(0, pt(0, 0)))
    q, c, pending = getview(0, n, Memory(cells), n, gathering_rules(n, pt(0, 0)))
    assert q and pending is None
    assert c.locations() == (pt(0, 0),) * (n + 1)


def test_getview_places_slot_by_robot_index():
    n = 3
    cells = {}
    for k in range(1, 4):
        committed(cells, k, LocalState(k, pt(k, 0)))
    _, c, _ = getview(1, 4, Memory(cells), n, gathering_rules(n, None))
    assert [r.state for r in c.robots[:n]] == [3, 1, 2]


def contended_view(n, g, x0, x1):
    cells = {}
    for k in range(n):
        if k == g:
            cells[val_cell(k, 0)], cells[val_cell(k, 1)] = x0, x1
            cells[flag_cell(k, 0)] = DEFER
        else:
            committed(cells, k, LocalState(0, pt(k, k)))
    return Memory(cells)


@pytest.mark.parametrize("g", range(4))
def test_getview_uncommitted_slot_and_swap(g):
    n = 4
    x0, x1 = LocalState(0, pt(0, 0)), LocalState(0, pt(1, 0))
    view = contended_view(n, g, x0, x1)
    rules = gathering_rules(n, None)
    q0, c0, p0 = getview(0, n, view, n, rules)
    q1, c1, p1 = getview(1, n, view, n, rules)
    assert not q0 and not q1 and p0 == p1 == g
    assert c0[g] == x0 and c0[n] == x1
    assert c0 == swap(c1, g)


def test_getview_rejects_corrupt_views():
    n = 3
    cells = {val_cell(0, 0): LocalState(0, pt(0, 0))}
    for k in (1, 2):
        committed(cells, k, LocalState(0, pt(0, 0)))
    with pytest.raises(TraceCorruption):
        getview(0, n, Memory(cells), n, gathering_rules(n, None))
    with pytest.raises(ValueError):
        getview(0, 1, Memory(), n, gathering_rules(n, None))


def test_reference_run_examples():
    algs = make_algorithms("move-to-max", 4)
    assert reference_run(algs, 0) == pt(0, 0)
    assert reference_run(algs, 1) == pt(1, 0)


def replay_reference(algs, locs):
    n = len(algs) - 1
    robots = [LocalState(algs[u].init, locs[u]) for u in range(n)]
    r = 0
    while True:
        where = [x.location for x in robots]
        if all(p == where[0] for p in where):
            return where[0]
        helper = max_multiplicity(where)[0]
        c = Configuration(tuple(robots) + (LocalState(None, helper),))
        robots[r % n] = activate(c, r % n, algs)
        r += 1


def test_reference_run_scattered_start_matches_replay():
    algs = make_algorithms("move-to-max", 4)
    start = [pt(0, 0), pt(1, 0), pt(2, 0), pt(3, 0)]
    assert reference_run(algs, 0, initial=start) == replay_reference(algs, start)


def test_reference_run_reports_non_gathering():
    with pytest.raises(RuntimeError):
        reference_run(make_algorithms("stay-put", 3), 0, max_rounds=50, initial=[pt(0, 0), pt(1, 0), pt(2, 0)])


def test_setup_errors():
    with pytest.raises(ConfigError):
        run_consensus((0, 1), "move-to-max", n=2)
    with pytest.raises(ConfigError):
        run_consensus((0, 2), "move-to-max", n=3)
    with pytest.raises(ConfigError):
        run_consensus((0, 1), make_algorithms("move-to-max", 3)[:3])


@pytest.mark.parametrize("proposals", [(0, 0), (1, 1), (0, 1), (1, 0)])
def test_solo_survivor_decides_its_proposal(proposals):
    tr = run_consensus(proposals, "move-to-max", InterleavingAdversary(crash=(1, 0)), n=4)
    assert tr.crashed == 1 and tr.decision_values() == {0: proposals[0]}


@pytest.mark.parametrize("proposal", [0, 1])
def test_common_proposal_is_adversary_independent(proposal):
    n = 4
    seqs = set()
    for seed in range(50):
        tr = run_consensus((proposal, proposal), "center-of-gravity", InterleavingAdversary(seed=seed), n=n)
        assert tr.decision_values() == {0: proposal, 1: proposal}
        recs = slot_records(tr.log)
        for r in recs:
            if r.values[0] is not None and r.values[1] is not None:
                assert r.values[0] == r.values[1]
        seqs.add(tuple(r.committed_value() for r in recs if r.committer is not None))
        # every slot commits before a later slot is entered
        done_at = {}
        for e in tr.log:
            if e.kind == "write" and e.cell.name == "flag":
                done_at.setdefault(e.cell.index, e.timestamp)
            if e.kind == "write" and e.cell.name == "val":
                assert all(k in done_at for k in range(e.cell.index))
    # the simulated execution never depends on the adversary (decision slots may differ)
    shortest = min(seqs, key=len)
    assert all(s[:len(shortest)] == shortest for s in seqs)


@settings(max_examples=60)
@given(st.integers(0, 2**31), st.integers(3, 6), st.sampled_from([(0, 0), (0, 1), (1, 0), (1, 1)]))
def test_init_slots_encode_proposals(seed, n, proposals):
    tr = run_consensus(proposals, "move-to-max", InterleavingAdversary(seed=seed), n=n)
    for r in slot_records(tr.log):
        if r.j < n and r.committer is not None:
            v = r.committed_value()
            assert v.location in (pt(0, 0), pt(1, 0)) and v.state == 0


@pytest.mark.parametrize("seed", range(10))
def test_deciding_looks_like_crashing(seed):
    tr = run_consensus((0, 1), "move-to-max", InterleavingAdversary(seed=seed), n=3)
    for p, d in tr.decisions.items():
        events = list(tr.log)
        last = max(i for i, e in enumerate(events) if e.process == p)
        assert events[last].kind == "snapshot"
        kept = events[:last] + events[last + 1:]
        mine = sum(e.process == p for e in kept)
        adv = InterleavingAdversary("explicit", sequence=tuple(e.process for e in kept), crash=(p, mine))
        algs = make_algorithms("move-to-max", 3)
        crashed = run_consensus((0, 1), algs, adv)
        strip = [(e.process, e.kind, e.cell, e.value) for e in crashed.log if e.kind != "crash"]
        assert strip[:len(kept)] == [(e.process, e.kind, e.cell, e.value) for e in kept]


def test_gathering_point_translates():
    algs = make_algorithms("move-to-max", 5)
    a = run_consensus((0, 0), algs, InterleavingAdversary(seed=3))
    b = run_consensus((1, 1), algs, InterleavingAdversary(seed=3))
    assert a.decisions[0]["at"] + pt(1, 0) == b.decisions[0]["at"]


def test_trace_json_roundtrip():
    tr = run_consensus((0, 1), "move-to-max", InterleavingAdversary(seed=9, crash=(0, 7)), n=4)
    again = ReductionTrace.from_json(tr.to_json())
    assert again.to_json() == tr.to_json()
    with pytest.raises(ValueError):
        ReductionTrace.from_json({"format": "other"})


def test_halting_is_reported_not_fatal():
    # stay-put never gathers a mixed placement, so both processes hit the bound
    tr = run_consensus((0, 1), "stay-put", InterleavingAdversary(seed=1), n=3, max_slots=12)
    assert tr.decisions == {} and tr.halted == {0: 12, 1: 12}


@pytest.mark.parametrize("proposals,want", [((0, 0), 0), ((1, 1), 1)])
def test_line_formation_reduction(proposals, want):
    tr = run_formation_consensus(proposals, "line-former", "line", pt(0, 1), InterleavingAdversary(seed=2), n=4)
    assert set(tr.decision_values().values()) == {want}


def test_two_gathering_is_rejected():
    with pytest.raises(ConfigError):
        run_formation_consensus((0, 1), "move-to-max", "2-gathering", pt(1, 0), n=4)
