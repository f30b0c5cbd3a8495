from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from byzreduce.cli import MUTANTS
from byzreduce.memory import BOTTOM, InterleavingAdversary, enumerate_interleavings, execute
from byzreduce.slot import (
    CLAIM,
    DEFER,
    at_most_one_claim,
    check_slot_properties,
    exhaustive_slot_check,
    flag_cell,
    read_status,
    solo_log,
    submit,
    submit_program,
    val_cell,
)


def view(v0=BOTTOM, v1=BOTTOM, f0=BOTTOM, f1=BOTTOM, j=0):
    cells = {val_cell(j, 0): v0, val_cell(j, 1): v1, flag_cell(j, 0): f0, flag_cell(j, 1): f1}
    return {c: v for c, v in cells.items() if v is not BOTTOM}


def test_status_rules():
    assert read_status(view(5, f0=CLAIM)) == (5, BOTTOM, 0)
    assert read_status(view(5, 7, f1=CLAIM, f0=DEFER)) == (5, 7, 1)
    assert read_status(view(5, 7, DEFER, DEFER)) == (5, 7, 0)
    assert read_status(view(5, 7, DEFER)) == (5, 7, None)
    assert read_status(view(9, 9, f1=DEFER)) == (9, 9, 0)
    assert read_status(view(5)) == (5, BOTTOM, None)
    assert read_status(view(5, 7, DEFER, j=3), 3) == (5, 7, None)


def test_solo_submit_commits_own_value():
    log = solo_log(0, 5)
    assert read_status({e.cell: e.value for e in log if e.kind == "write"}) == (5, BOTTOM, 0)
    assert check_slot_properties(log, (5, 5))["passed"]


def test_submit_rejects_empty_value():
    with pytest.raises(ValueError):
        next(submit(0, 0, BOTTOM))


def test_sequential_log_all_pass():
    log = execute([submit_program(0, 5), submit_program(1, 7)],
                  InterleavingAdversary("explicit", sequence=(0, 0, 0, 1, 1, 1)))
    rep = check_slot_properties(log, (5, 7))
    assert rep["passed"] and rep["reads"] == 4


def test_crash_between_snapshot_and_flag_makes_commitment_vacuous():
    # p1 writes and snapshots, then crashes before its flag; p0 defers
    log = execute([submit_program(0, 5), submit_program(1, 7)],
                  InterleavingAdversary("explicit", sequence=(1, 1, 0, 0, 0), crash=(1, 2)))
    rep = check_slot_properties(log, (5, 7))
    assert rep["e"][1] == float("inf")
    assert rep["passed"]
    final = {e.cell: e.value for e in log if e.kind == "write"}
    assert read_status(final).s is None


@pytest.mark.parametrize("values", [(9, 9), (1, 1)])
def test_common_value_commits_on_every_interleaving(values):
    programs = [submit_program(0, values[0]), submit_program(1, values[1])]
    for log in enumerate_interleavings(programs, max_events=6):
        final = {e.cell: e.value for e in log if e.kind == "write"}
        st_ = read_status(final)
        assert st_.s is not None and st_.value() == values[0]


def test_exhaustive_all_pass():
    summary = exhaustive_slot_check()
    assert summary["passed"], summary["failures"][:3]
    assert summary["crash_free"] == 40
    assert summary["claims_ok"]


@given(st.tuples(st.integers(0, 3), st.integers(0, 3)))
def test_exhaustive_any_values(values):
    assert exhaustive_slot_check([values])["passed"]


def test_at_most_one_claim_everywhere():
    programs = [submit_program(0, 1), submit_program(1, 2)]
    assert all(at_most_one_claim(log) for log in enumerate_interleavings(programs, 6, crashes=True))


@pytest.mark.parametrize("mutant,broken", [("claim-blind", "no_contention_commitment"),
                                           ("no-common-value", "common_value_commitment")])
def test_mutant_rules_are_caught(mutant, broken):
    summary = exhaustive_slot_check(status_rule=MUTANTS[mutant])
    assert not summary["passed"]
    assert summary["pass_counts"][broken] < summary["schedules"]


def test_status_index_and_value_stability():
    for values in [(5, 7), (3, 3)]:
        programs = [submit_program(0, values[0]), submit_program(1, values[1])]
        for log in enumerate_interleavings(programs, 6, crashes=True):
            cells, seen = {}, None
            for e in log:
                if e.kind == "write":
                    cells[e.cell] = e.value
                s = read_status(cells)
                if s.s is None:
                    continue
                if seen is None:
                    seen = s
                else:
                    assert s.value() == seen.value()
                    if values[0] != values[1]:
                        assert s.s == seen.s


def test_blocking_needs_a_crash_inside_a_submission():
    programs = [submit_program(0, 5), submit_program(1, 7)]
    for log in enumerate_interleavings(programs, 6, crashes=True):
        final = {e.cell: e.value for e in log if e.kind == "write"}
        if read_status(final).s is None:
            c = log.crashed()
            assert c is not None
            mine = [e for e in log if e.process == c and e.kind != "crash"]
            # value written, flag missing: the crash fell inside the submission
            assert mine[0].cell.name == "val" and len(mine) in (1, 2)
