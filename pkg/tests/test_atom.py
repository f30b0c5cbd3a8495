from __future__ import annotations

import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from byzreduce.algorithms import make_algorithms
from byzreduce.atom import ExecutionTrace, Schedule, activate, check_k_bounded, check_step, run, step, step_mismatch
from byzreduce.geometry import Configuration, LocalState, max_multiplicity, observe, pt


def small_config(rng: random.Random, n: int) -> Configuration:
    return Configuration.from_locations([pt(rng.randint(0, 4), rng.randint(0, 4)) for _ in range(n + 1)],
                                        [0] * n + [None])


def test_empty_activation_is_identity():
    c = Configuration.from_locations([pt(1, 2)] * 4)
    assert step(c, [], None, make_algorithms("move-to-max", 3)) == c


def test_stay_put_advances_state_only():
    algs = make_algorithms("stay-put", 3)
    c = Configuration.from_locations([pt(0, 0), pt(1, 0), pt(2, 5), pt(3, 3)], [0, 0, 0, None])
    nxt = step(c, [0, 2], None, algs)
    assert nxt.locations() == c.locations()
    assert [r.state for r in nxt] == [1, 0, 1, None]


def test_move_to_max_straggler_joins():
    n = 4
    algs = make_algorithms("move-to-max", n)
    c = Configuration.from_locations([pt(0, 0)] * (n - 1) + [pt(5, 5), pt(0, 0)], [0] * n + [None])
    # hand translation: the straggler sees the crowd at (-5,-5)
    assert max_multiplicity(observe(c, n - 1))[0] == pt(-5, -5)
    assert step(c, [n - 1], None, algs)[n - 1].location == pt(0, 0)


def test_byzantine_needs_position():
    c = Configuration.from_locations([pt(0, 0)] * 4)
    with pytest.raises(ValueError):
        step(c, [3], None, make_algorithms("stay-put", 3))
    moved = step(c, [3], pt(7, 7), make_algorithms("stay-put", 3))
    assert moved[3].location == pt(7, 7)


def test_step_is_fully_synchronous_look():
    # two robots activated together both observe the old configuration
    algs = make_algorithms("center-of-gravity", 3)
    c = Configuration.from_locations([pt(0, 0), pt(4, 0), pt(8, 0), pt(0, 4)], [0, 0, 0, None])
    both = step(c, [0, 1], None, algs)
    assert both[0] == activate(c, 0, algs) and both[1] == activate(c, 1, algs)


def resimulate(c, nxt, x, algs, byzantine):
    """Explicit two sub-steps: the Byzantine move and robot x's cycle, in order."""
    n = c.n
    b = nxt[n].location
    if byzantine == "after":
        mid = step(c, [x], None, algs)
        want = step(mid, [n], b, algs)
    else:
        mid = step(c, [n], b, algs)
        want = step(mid, [x], None, algs)
    return all(nxt[i] == want[i] for i in range(n))


@pytest.mark.parametrize("byzantine", ["after", "before"])
def test_check_step_matches_resimulation(byzantine):
    rng = random.Random(11)
    agree = 0
    for case in range(500):
        n = rng.randint(3, 6)
        algs = make_algorithms(rng.choice(["move-to-max", "center-of-gravity", "line-former"]), n)
        c = small_config(rng, n)
        x = rng.randrange(n)
        b = pt(rng.randint(0, 4), rng.randint(0, 4))
        nxt = step(step(c, [x], None, algs), [n], b, algs) if byzantine == "after" else \
            step(step(c, [n], b, algs), [x], None, algs)
        if case % 3 == 1:  # perturb an unrelated correct robot
            y = (x + 1) % n
            nxt = nxt.replace(y, LocalState(nxt[y].state, nxt[y].location + pt(1, 0)))
        elif case % 3 == 2:  # random unrelated successor
            nxt = small_config(rng, n)
        got = check_step(c, nxt, x, algs, byzantine)
        assert got == resimulate(c, nxt, x, algs, byzantine)
        agree += 1
    assert agree == 500


def test_check_step_names_the_differing_entry():
    algs = make_algorithms("move-to-max", 3)
    c = Configuration.from_locations([pt(0, 0), pt(0, 0), pt(3, 0), pt(9, 9)], [0, 0, 0, None])
    nxt = step(c, [2], None, algs)
    assert check_step(c, nxt, 2, algs)
    bad = nxt.replace(0, LocalState(0, pt(1, 1)))
    assert "entry 0" in step_mismatch(c, bad, 2, algs)
    assert not check_step(c, nxt, 3, algs)  # the Byzantine robot is not a valid x


def test_run_empty_and_stay_put():
    algs = make_algorithms("stay-put", 3)
    c0 = Configuration.from_locations([pt(0, 0), pt(1, 0), pt(2, 0), pt(3, 0)], [0, 0, 0, None])
    assert run(algs, c0, Schedule()).configs == (c0,)
    sched = Schedule.centralized([0, 1, 2, 0, 2])
    trace = run(algs, c0, sched)
    assert all(c.locations() == c0.locations() for c in trace.configs)
    assert ExecutionTrace.from_json(trace.to_json()) == trace


def test_k_bounded_examples():
    assert check_k_bounded(Schedule.centralized([0, 1, 2, 3] * 5)) == 1
    assert check_k_bounded(Schedule.centralized([0, 1, 1, 0])) == 2
    assert check_k_bounded(Schedule()) == 1
    # the Byzantine robot's own windows are ignored
    assert check_k_bounded(Schedule.centralized([3, 0, 0, 0, 3]), byzantine=3) == 1
    assert check_k_bounded(Schedule.centralized([3, 0, 0, 0, 3])) == 3


def naive_k(rounds, byzantine=None):
    k = 1
    for i, a in enumerate(rounds):
        for robot in a:
            if robot == byzantine:
                continue
            later = [j for j in range(i + 1, len(rounds)) if robot in rounds[j]]
            if not later:
                continue
            window = rounds[i + 1:later[0]]
            for other in set().union(*window) if window else ():
                k = max(k, sum(other in r for r in window))
    return k


@settings(max_examples=600)
@given(st.lists(st.frozensets(st.integers(0, 4), min_size=1, max_size=3), max_size=14),
       st.one_of(st.none(), st.just(4)))
def test_k_bounded_matches_window_scan(rounds, byz):
    assert check_k_bounded(Schedule(tuple(rounds)), byzantine=byz) == naive_k(rounds, byz)
