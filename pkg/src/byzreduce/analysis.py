"""Post-hoc analysis of reduction traces.

From a finished trace this module derives committers, critical slots,
validators and the simulated configurations, then checks that consecutive
simulated configurations form an admissible robot execution, together with
the consensus properties of the run. All checks are per-trace witnesses;
they do not prove the general statements.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

from . import codec
from .algorithms import RobotAlgorithm, make_algorithms
from .atom import ExecutionTrace, Schedule, check_k_bounded, run, step_mismatch
from .geometry import Configuration, LocalState, swap
from .memory import BOTTOM, Cell, EventLog, Memory, validate_snapshots
from .reduction import ReductionTrace, Rules, TraceCorruption, decode, getview, rules_for_trace
from .slot import read_status

INF = math.inf


@dataclass
class SlotRecord:
    j: int
    values: list = field(default_factory=lambda: [BOTTOM, BOTTOM])
    b: list = field(default_factory=lambda: [INF, INF])
    e: list = field(default_factory=lambda: [INF, INF])
    flags: list = field(default_factory=lambda: [BOTTOM, BOTTOM])
    status: Optional[int] = None
    committer: Optional[int] = None

    @property
    def blocked(self) -> bool:
        return self.status is None and self.committer is not None

    def value_of(self, i: int) -> Any:
        return self.values[i]

    def committed_value(self) -> Any:
        return BOTTOM if self.committer is None else self.values[self.committer]

    def to_json(self) -> dict:
        def ts(x: float) -> Optional[int]:
            return None if x == INF else int(x)

        return {
            "j": self.j,
            "submissions": [
                {"p": i, "value": codec.encode_value(self.values[i]), "b": ts(self.b[i]), "e": ts(self.e[i]),
                 "flag": self.flags[i]}
                for i in (0, 1) if self.values[i] is not BOTTOM
            ],
            "status": self.status,
            "committer": self.committer,
        }


def slot_records(log: EventLog) -> list[SlotRecord]:
    """Per-slot submissions, timestamps and final status, from the writes in the log."""
    recs: dict[int, SlotRecord] = {}
    final: dict[Cell, Any] = {}
    for ev in log.events:
        if ev.kind != "write":
            continue
        final[ev.cell] = ev.value
        rec = recs.setdefault(ev.cell.index, SlotRecord(ev.cell.index))
        if ev.cell.name == "val":
            rec.values[ev.process] = ev.value
            rec.b[ev.process] = ev.timestamp
        else:
            rec.flags[ev.process] = ev.value
            rec.e[ev.process] = ev.timestamp
    out = []
    for j in sorted(recs):
        rec = recs[j]
        rec.status = read_status(final, j).s
        if rec.status is not None:
            rec.committer = rec.status
        else:
            finished = [i for i in (0, 1) if rec.flags[i] is not BOTTOM]
            # Blocked forever: the peer stopped inside its submission.
            rec.committer = finished[0] if len(finished) == 1 else None
        out.append(rec)
    return out


class TraceAnalysis:
    """Everything derived from one reduction trace, computed once.

    Slot j is critical when the process that did not commit it entered j+n
    while j was still uncommitted, and j+n has the other committer.
    ``observer="committer"`` instead inspects the committer's own view at
    j+n; that reading admits traces whose simulated configurations do not
    connect, and is kept only to exhibit them.
    """

    def __init__(self, trace: ReductionTrace, algorithms: Optional[Sequence[RobotAlgorithm]] = None,
                 rules: Optional[Rules] = None, observer: str = "peer"):
        if observer not in ("peer", "committer"):
            raise ValueError(f"observer must be 'peer' or 'committer', not {observer!r}")
        self.observer = observer
        self.trace = trace
        self.n = n = trace.n
        self.algorithms = list(algorithms) if algorithms is not None else make_algorithms(trace.algorithm, n)
        self.rules = rules or rules_for_trace(trace, self.algorithms)
        self.records = {r.j: r for r in slot_records(trace.log)}

        # horizon: last slot such that every slot up to it has a committer
        h = -1
        while (h + 1) in self.records and self.records[h + 1].committer is not None:
            h += 1
        self.horizon = h

        # entry snapshots (getview) and the views they returned, by independent replay
        self.entry: list[dict[int, int]] = [{}, {}]
        self.views: dict[tuple[int, int], Memory] = {}
        cells: dict[Cell, Any] = {}
        for ev in trace.log.events:
            if ev.kind == "write":
                cells[ev.cell] = ev.value
            elif ev.kind == "snapshot" and ev.label.startswith("getview:"):
                j = int(ev.label.split(":")[1])
                self.entry[ev.process][j] = ev.timestamp
                self.views[(ev.process, j)] = Memory(cells)
        self.snapshot_mismatches = validate_snapshots(trace.log)

        self._observed: dict[tuple[int, int], tuple[bool, Configuration, Optional[int]]] = {}
        self.critical: dict[int, bool] = {}
        self.provisional: set[int] = set()
        for j in range(0, h + 1):
            self.critical[j] = self._criticality(j)
        self.val = self.compute_validators(h)

        # the final entered slot may carry no submissions (decision or bound)
        self.last = h
        if h + 1 >= n:
            enterers = [i for i in (0, 1) if (h + 1) in self.entry[i]]
            if enterers:
                self.val[h + 1] = enterers[0]
                self.last = h + 1
        self.sim: dict[int, Configuration] = {}
        self.swaps: dict[int, int] = {}
        for j in range(n, self.last + 1):
            self.sim[j], self.swaps[j] = self._simulated(j)

    # -- observations -------------------------------------------------
    def observed(self, i: int, j: int) -> tuple[bool, Configuration, Optional[int]]:
        """p_i's getview result on entering slot j (replayed from its snapshot)."""
        key = (i, j)
        if key not in self._observed:
            if key not in self.views:
                raise KeyError(f"p{i} never entered slot {j}")
            self._observed[key] = getview(i, j, self.views[key], self.n, self.rules)
        return self._observed[key]

    def status_in_view(self, i: int, j: int, k: int) -> Optional[int]:
        return read_status(self.views[(i, j)], k).s

    # -- committers, criticality, validators ---------------------------
    def committer(self, j: int) -> int:
        c = self.records[j].committer
        if c is None:
            raise KeyError(f"slot {j} has no committer")
        return c

    def _criticality(self, j: int) -> bool:
        c = self.committer(j)
        if j + self.n > self.horizon:
            self.provisional.add(j)
            return False
        # the process that raced ahead is the one that did not commit j
        o = 1 - c if self.observer == "peer" else c
        if (j + self.n) not in self.entry[o]:
            return False
        uncommitted = self.status_in_view(o, j + self.n, j) is None
        return uncommitted and c != self.committer(j + self.n)

    def compute_validators(self, horizon: int) -> dict[int, int]:
        """val(j) = val(j+n) for critical j with j+n <= horizon, else c(j)."""
        val: dict[int, int] = {}
        for j in range(horizon, -1, -1):
            if self.critical.get(j) and j + self.n <= horizon:
                val[j] = val[j + self.n]
            else:
                val[j] = self.committer(j)
        return val

    def validator_value(self, k: int) -> Any:
        return self.records[k].values[self.val[k]]

    # -- simulated configurations ---------------------------------------
    def _simulated(self, j: int) -> tuple[Configuration, int]:
        i = self.val[j]
        if j not in self.entry[i]:
            raise TraceCorruption(f"validator p{i} of slot {j} never entered it")
        q, c, pending = self.observed(i, j)
        if pending is None:
            return c, self.n
        a = pending % self.n
        want = self.validator_value(pending)
        if c.robots[a] == want:
            return c, self.n
        if c.robots[self.n] == want:
            return swap(c, a), a
        raise TraceCorruption(f"slot {pending}'s validator value appears nowhere in p{i}'s view of slot {j}")

    def t(self, j: int) -> int:
        return self.entry[self.val[j]][j]

    # -- checks ----------------------------------------------------------
    def admissibility(self) -> dict:
        n = self.n
        violations = []
        helper_ok = True
        for j in range(n, self.last + 1):
            _, _, pending = self.observed(self.val[j], j)
            if pending is None:
                c = self.sim[j]
                want = self.rules.helper([r.location for r in c.robots[:n]])
                if c.robots[n].location != want:
                    helper_ok = False
                    violations.append({"slot": j, "check": "helper", "detail": f"Byzantine at {c.robots[n].location}, helper {want}"})
        for j in range(n, self.last):
            a = j % n
            cj, cn = self.sim[j], self.sim[j + 1]
            why = step_mismatch(cj, cn, a, self.algorithms)
            if why is not None:
                violations.append({"slot": j, "check": "transition", "detail": why})
            vj = self.validator_value(j)
            if cn.robots[a] != vj:
                violations.append({"slot": j, "check": "validator_submission",
                                   "detail": f"C_{j + 1}[{a}]={cn.robots[a]} but v_{j}={vj}"})
            if not self.t(j) < self.t(j + 1):
                violations.append({"slot": j, "check": "entry_order", "detail": f"t_{j}={self.t(j)} >= t_{j + 1}={self.t(j + 1)}"})
        for t in self.snapshot_mismatches:
            violations.append({"slot": None, "check": "snapshot", "detail": f"snapshot at t={t} disagrees with replay"})

        derived, marks = self.derived_execution()
        schedule = derived.schedule if derived is not None else Schedule()
        k = check_k_bounded(schedule, byzantine=n)
        replay_ok = derived is None or self._replay_matches(derived, marks)
        if not replay_ok:
            violations.append({"slot": None, "check": "replay", "detail": "derived schedule does not reproduce the simulated configurations"})
        return {
            "passed": not violations,
            "violations": violations,
            "steps": max(0, self.last - n),
            "observed_k": k,
            "k_le_n": k <= n,
            "k_le_n_minus_1": k <= n - 1,
            "centralized": schedule.is_centralized(),
            "helper_placement": helper_ok,
            "critical_slots": sorted(j for j, c in self.critical.items() if c),
            "reassigned": sorted(j for j in self.critical if self.val.get(j) != self.records[j].committer),
            "swaps": {str(j): g for j, g in sorted(self.swaps.items()) if g != n},
            "derived": derived,
        }

    def derived_execution(self) -> tuple[Optional[ExecutionTrace], list[int]]:
        """Centralized schedule: robot j mod n, then the Byzantine robot if it moved.

        Also returns, per simulated step, the round index at which C_j appears.
        """
        n = self.n
        if n not in self.sim:
            return None, []
        rounds, moves, marks = [], [], [0]
        byz = self.sim[n].robots[n].location
        for j in range(n, self.last):
            rounds.append(frozenset([j % n]))
            moves.append(None)
            b = self.sim[j + 1].robots[n].location
            if b != byz:
                rounds.append(frozenset([n]))
                moves.append(b)
                byz = b
            marks.append(len(rounds))
        return run(self.algorithms, self.sim[n], Schedule(tuple(rounds), tuple(moves))), marks

    def _replay_matches(self, derived: ExecutionTrace, marks: list[int]) -> bool:
        n = self.n

        def strip(c: Configuration) -> tuple:
            return c.robots[:n] + (c.robots[n].location,)

        return all(strip(derived.configs[r]) == strip(self.sim[n + m]) for m, r in enumerate(marks))

    def consensus(self) -> dict:
        tr = self.trace
        dec = tr.decision_values()
        agreement = len(dec) < 2 or dec[0] == dec[1]
        validity = all(v in tr.proposals for v in dec.values())
        if tr.proposals[0] == tr.proposals[1]:
            validity = validity and all(v == tr.proposals[0] for v in dec.values())
        decode_ok = True
        if self.rules.kind == "gathering" and tr.rules.get("reference_point") is not None:
            ref = codec.decode_point(tr.rules["reference_point"])
            decode_ok = all(d["value"] == decode(d["at"], ref) for d in tr.decisions.values())
        # each recorded decision must follow from the decider's own view
        replayed = True
        for p, d in tr.decisions.items():
            if (p, d["slot"]) not in self.views:
                replayed = False
                continue
            q, c, _ = self.observed(p, d["slot"])
            if not (q and self.rules.legitimate(c) and self.rules.decide(c) == (d["value"], d["at"])):
                replayed = False
        crashed = tr.crashed
        survivors = [i for i in (0, 1) if i != crashed]
        terminated = all(i in tr.decisions for i in survivors)
        return {
            "passed": agreement and validity and decode_ok and replayed,
            "agreement": agreement,
            "validity": validity,
            "decode_consistent": decode_ok,
            "decisions_replayed": replayed,
            "termination": {"terminated": terminated, "crashed": crashed, "decided": sorted(dec),
                            "halted": sorted(tr.halted)},
            "decisions": {str(p): v for p, v in sorted(dec.items())},
        }

    def report(self) -> dict:
        adm = self.admissibility()
        derived = adm.pop("derived")
        cons = self.consensus()
        return {
            "note": "per-trace witnesses of the lemmas, not proofs",
            "n": self.n,
            "horizon": self.horizon,
            "admissibility": adm,
            "consensus": cons,
            "validators": {str(j): self.val[j] for j in sorted(self.val)},
            "committers": {str(j): self.records[j].committer for j in sorted(self.records)
                           if self.records[j].committer is not None},
            "provisional": sorted(self.provisional),
            "derived_execution": None if derived is None else derived.to_json(),
            "passed": adm["passed"] and cons["passed"],
        }


def compute_criticality(trace: ReductionTrace, j: int, analysis: Optional[TraceAnalysis] = None) -> bool:
    a = analysis or TraceAnalysis(trace)
    if j + a.n > a.horizon:
        raise ValueError(f"criticality of slot {j} is undefined: slot {j + a.n} lies beyond the horizon {a.horizon}")
    return a.critical[j]


def compute_validators(trace: ReductionTrace, horizon: Optional[int] = None) -> dict[int, int]:
    a = TraceAnalysis(trace)
    return a.compute_validators(a.horizon if horizon is None else horizon)


def simulated_configuration(trace: ReductionTrace, j: int) -> Configuration:
    return TraceAnalysis(trace).sim[j]


def check_lemma_admissible(trace: ReductionTrace, algorithms: Optional[Sequence[RobotAlgorithm]] = None) -> dict:
    return TraceAnalysis(trace, algorithms).admissibility()


def check_consensus_properties(trace: ReductionTrace, reference_points: Optional[dict] = None) -> dict:
    a = TraceAnalysis(trace)
    rep = a.consensus()
    if reference_points is not None and a.rules.kind == "gathering":
        ref = reference_points.get(0)
        ok = all(d["value"] == decode(d["at"], ref) for d in trace.decisions.values())
        rep["decode_consistent"] = rep["decode_consistent"] and ok
        rep["passed"] = rep["passed"] and ok
    return rep


def critical_witness_sequence(n: int, j: int = 1) -> tuple[int, ...]:
    """Explicit interleaving that makes slot j (1 <= j < n) critical.

    Both processes fill slots before j in turn. At slot j, p1 writes and
    snapshots but holds back its flag. Meanwhile p0 defers, runs ahead
    through slot j+n and commits it. Then p1 claims j, so c(j) = 1 while
    p0, which entered j+n with j uncommitted, commits j+n.
    """
    if not 1 <= j < n:
        raise ValueError(f"need 1 <= j < n, got j={j}, n={n}")
    seq = [0, 0, 0, 1, 1, 1] * j
    seq += [1, 1]                    # p1: val, snapshot of slot j
    seq += [0, 0, 0]                 # p0: val, snapshot, DEFER
    seq += [0, 0, 0] * (n - 1 - j)   # p0 claims the remaining init slots
    seq += [0, 0, 0, 0] * (j + 1)    # p0: getview + submit for slots n..j+n
    return tuple(seq)
