"""Write-once two-process ``slot`` object (safe agreement) over SWMR cells.

Each slot j uses four cells: ``val`` and ``flag`` for each process.
``submit_i(v)`` is three primitives: write the value, take a snapshot, then
write CLAIM if the peer's value was still empty or DEFER otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Mapping, NamedTuple, Optional

from .memory import (
    BOTTOM,
    Cell,
    EventLog,
    InterleavingAdversary,
    Snapshot,
    Write,
    enumerate_interleavings,
    execute,
)

CLAIM = "CLAIM"
DEFER = "DEFER"
INF = math.inf


def val_cell(j: int, i: int) -> Cell:
    return Cell("val", j, i)


def flag_cell(j: int, i: int) -> Cell:
    return Cell("flag", j, i)


class SlotStatus(NamedTuple):
    v0: Any
    v1: Any
    s: Optional[int]

    def value(self) -> Any:
        """The committed value, or BOTTOM when uncommitted."""
        return BOTTOM if self.s is None else (self.v0, self.v1)[self.s]


def read_status(view: Mapping[Cell, Any], j: int = 0) -> SlotStatus:
    """Derive slot j's (v0, v1, s) from a snapshot-consistent view."""
    v = (view.get(val_cell(j, 0), BOTTOM), view.get(val_cell(j, 1), BOTTOM))
    f = (view.get(flag_cell(j, 0), BOTTOM), view.get(flag_cell(j, 1), BOTTOM))
    if f[0] == CLAIM:
        return SlotStatus(v[0], v[1], 0)
    if f[1] == CLAIM:
        return SlotStatus(v[0], v[1], 1)
    if f[0] == DEFER and f[1] == DEFER:
        return SlotStatus(v[0], v[1], 0)
    if DEFER in f and v[0] is not BOTTOM and v[1] is not BOTTOM and v[0] == v[1]:
        return SlotStatus(v[0], v[1], 0)
    return SlotStatus(v[0], v[1], None)


StatusRule = Callable[[Mapping[Cell, Any], int], SlotStatus]


def submit(i: int, j: int, v: Any, tag: str = "submit"):
    """Generator fragment: p_i submits v to slot j (three primitives)."""
    if v is BOTTOM:
        raise ValueError("cannot submit the empty value")
    yield Write(val_cell(j, i), v, f"{tag}:{j}:val")
    view = yield Snapshot(f"{tag}:{j}:snap")
    flag = CLAIM if view[val_cell(j, 1 - i)] is BOTTOM else DEFER
    yield Write(flag_cell(j, i), flag, f"{tag}:{j}:flag")


def submit_program(i: int, v: Any, j: int = 0):
    """Zero-argument factory for a lone submission, as taken by memory-sim."""
    return lambda: submit(i, j, v)


@dataclass
class SubmissionTimes:
    """Begin/end timestamps of each process's submission (INF if absent)."""

    b: list[float]
    e: list[float]


def submission_times(log: EventLog, j: int = 0) -> SubmissionTimes:
    b, e = [INF, INF], [INF, INF]
    for ev in log.events:
        if ev.kind != "write" or ev.cell.index != j:
            continue
        if ev.cell.name == "val":
            b[ev.process] = ev.timestamp
        elif ev.cell.name == "flag":
            e[ev.process] = ev.timestamp
    return SubmissionTimes(b, e)


def _views(log: EventLog) -> list[tuple[float, dict]]:
    """(read time, cells) for a read right after each prefix of the log.

    A read "at t + 0.5" sees every write with timestamp <= t.
    """
    out = [(-0.5, {})]
    cells: dict = {}
    for ev in log.events:
        if ev.kind == "write":
            cells[ev.cell] = ev.value
        out.append((ev.timestamp + 0.5, dict(cells)))
    return out


def check_slot_properties(
    log: EventLog,
    values: tuple[Any, Any],
    j: int = 0,
    status_rule: StatusRule = read_status,
) -> dict:
    """Evaluate the six slot properties on one log, reading at every gap.

    Reads are placed at every inter-event point once at least one submission
    has completed, which is when Algorithm-style callers read the slot.
    Persistency is checked in the refined form: the status index is stable
    when the two submitted values differ, the committed value always is.
    """
    times = submission_times(log, j)
    first_end = min(times.e)
    reads = []
    for t, cells in _views(log):
        if t > first_end:
            reads.append((t, status_rule(cells, j)))

    names = ["validity", "contended_value_detection", "persistency", "commitment",
             "no_contention_commitment", "common_value_commitment"]
    report: dict = {name: {"passed": True, "witness": None} for name in names}

    def fail(name: str, t: float, detail: str) -> None:
        if report[name]["passed"]:
            report[name] = {"passed": False, "witness": {"read_at": t, "detail": detail}}

    distinct = values[0] != values[1]
    first_commit: Optional[tuple[float, SlotStatus]] = None
    for t, st in reads:
        for i in (0, 1):
            w = (st.v0, st.v1)[i]
            if w is not BOTTOM and w != values[i]:
                fail("validity", t, f"w{i}={w!r} but v{i}={values[i]!r}")
        if st.s is not None and (st.v0, st.v1)[st.s] is BOTTOM:
            fail("validity", t, f"status {st.s} selects an empty value")
        if st.s is None and (st.v0 is BOTTOM or st.v1 is BOTTOM):
            fail("contended_value_detection", t, f"uncommitted read {st}")
        if first_commit is not None:
            t0, st0 = first_commit
            if st.s is None:
                fail("persistency", t, f"status {st0.s} at {t0} reverted to empty")
            elif distinct and st.s != st0.s:
                fail("persistency", t, f"status {st0.s} at {t0} became {st.s}")
            elif st.value() != st0.value():
                fail("persistency", t, f"committed value {st0.value()!r} became {st.value()!r}")
        elif st.s is not None:
            first_commit = (t, st)
        if t > max(times.e) and st.s is None:
            fail("commitment", t, "uncommitted after both submissions ended")
        for i in (0, 1):
            if times.e[i] < times.b[1 - i] and t > times.e[i] and st.s != i:
                fail("no_contention_commitment", t, f"e{i}={times.e[i]} < b{1 - i}={times.b[1 - i]} but s={st.s}")
        if not distinct and t > first_end and st.s is None:
            fail("common_value_commitment", t, "equal values yet uncommitted")

    report["reads"] = len(reads)
    report["b"] = times.b
    report["e"] = times.e
    report["passed"] = all(report[name]["passed"] for name in names)
    return report


def at_most_one_claim(log: EventLog, j: int = 0) -> bool:
    flags = [ev.value for ev in log.events if ev.kind == "write" and ev.cell == flag_cell(j, ev.process)]
    return flags.count(CLAIM) <= 1


def exhaustive_slot_check(
    value_pairs: Iterable[tuple[Any, Any]] = ((5, 7), (9, 9)),
    status_rule: StatusRule = read_status,
    crashes: bool = True,
) -> dict:
    """All interleavings (and single-crash variants) of two submits per value pair."""
    names = ["validity", "contended_value_detection", "persistency", "commitment",
             "no_contention_commitment", "common_value_commitment"]
    summary: dict = {"schedules": 0, "crash_free": 0, "reads": 0,
                     "pass_counts": {k: 0 for k in names}, "failures": [], "claims_ok": True}
    for pair in value_pairs:
        programs = [submit_program(0, pair[0]), submit_program(1, pair[1])]
        for log in enumerate_interleavings(programs, max_events=6, crashes=crashes):
            rep = check_slot_properties(log, pair, status_rule=status_rule)
            summary["schedules"] += 1
            summary["crash_free"] += log.crashed() is None
            summary["reads"] += rep["reads"]
            summary["claims_ok"] &= at_most_one_claim(log)
            for k in names:
                if rep[k]["passed"]:
                    summary["pass_counts"][k] += 1
                elif len(summary["failures"]) < 20:
                    summary["failures"].append({"values": list(pair), "property": k,
                                                "order": [[e.process, e.kind] for e in log.events],
                                                "witness": rep[k]["witness"]})
    summary["passed"] = not summary["failures"] and summary["claims_ok"]
    return summary


def solo_log(i: int, v: Any) -> EventLog:
    return execute([submit_program(i, v)], InterleavingAdversary())
