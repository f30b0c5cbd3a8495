"""Consensus from Byzantine gathering (and from bivalent formations).

Two simulator processes share an unbounded array of slots. Slot j holds the
post-cycle local state of robot ``j mod n``; the first n slots hold the
initial placement that encodes each process's proposal. Every main-loop pass
rebuilds the robot configuration from the last n slots (getview), decides if
the simulated robots are gathered, and otherwise submits the next move.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Callable, Optional, Sequence

from . import codec
from .algorithms import RobotAlgorithm, make_algorithms
from .atom import activate
from .geometry import (
    Configuration,
    LocalState,
    Point,
    is_legitimate_now,
    max_multiplicity,
    pt,
)
from .memory import BOTTOM, EventLog, InterleavingAdversary, Memory, Snapshot, execute
from .slot import read_status, submit

if TYPE_CHECKING:
    from .formations import FormationSpec

BYZANTINE_STATE = None


class TraceCorruption(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Rules:
    """How proposals are encoded, the helper placed, and decisions decoded."""

    kind: str
    n: int
    encode: Callable[[int, int], Point]
    helper: Callable[[Sequence[Point]], Point]
    legitimate: Callable[[Configuration], bool]
    decide: Callable[[Configuration], "tuple[int, Any]"]
    describe: dict = field(default_factory=dict)


def decode(point: Point, reference_point: Point) -> int:
    return 0 if point == reference_point else 1


def _helper_max(locs: Sequence[Point]) -> Point:
    return max_multiplicity(locs)[0]


def _gathering_encode(i: int, proposal: int) -> Point:
    return pt(proposal, 0)


def gathering_rules(n: int, reference_point: Optional[Point]) -> Rules:
    def decide(c: Configuration) -> tuple[int, Point]:
        m = max_multiplicity(c.locations())[0]
        if reference_point is None:
            raise RuntimeError("gathering rules built without a reference point cannot decide")
        return decode(m, reference_point), m

    return Rules("gathering", n, _gathering_encode, _helper_max, is_legitimate_now, decide,
                 {"kind": "gathering",
                  "reference_point": None if reference_point is None else codec.encode_point(reference_point)})


def formation_rules(formation: "FormationSpec", n: int, x: Point, reference_invariant: Any = None) -> Rules:
    from .formations import best_fit

    def encode(i: int, proposal: int) -> Point:
        return pt(i, 0) + x if proposal else pt(i, 0)

    def helper(locs: Sequence[Point]) -> Point:
        return best_fit(formation, locs).helper

    def legitimate(c: Configuration) -> bool:
        return formation.correct_member(c.locations()[:-1])

    def decide(c: Configuration) -> tuple[int, Any]:
        inv = formation.invariant(c.locations()[:-1])
        return (0 if inv == reference_invariant else 1), inv

    return Rules("formation", n, encode, helper, legitimate, decide,
                 {"kind": "formation", "formation": formation.name, "x": codec.encode_point(x)})


def getview(i: int, u: int, view: Memory, n: int, rules: Rules) -> tuple[bool, Configuration, Optional[int]]:
    """Build p_i's configuration for main-loop pass u from slots u-n..u-1.

    Returns (all committed?, configuration, index of the uncommitted slot).
    Slot k is stored at robot index k mod n. An uncommitted slot contributes
    p_i's own submission for its robot and the peer's submission as the
    Byzantine robot; otherwise the Byzantine robot sits at the helper point.
    """
    if u < n:
        raise ValueError(f"getview needs u >= n, got u={u}")
    robots: list[Optional[LocalState]] = [None] * (n + 1)
    pending = None
    for k in range(u - n, u):
        st = read_status(view, k)
        if st.s is not None:
            robots[k % n] = st.value()
            continue
        mine, other = (st.v0, st.v1)[i], (st.v0, st.v1)[1 - i]
        if mine is BOTTOM or other is BOTTOM:
            raise TraceCorruption(f"slot {k} uncommitted without both submissions in p{i}'s view at u={u}")
        if pending is not None:
            raise TraceCorruption(f"slots {pending} and {k} both uncommitted in p{i}'s view at u={u}")
        robots[k % n] = mine
        robots[n] = other
        pending = k
    if pending is None:
        robots[n] = LocalState(BYZANTINE_STATE, rules.helper([r.location for r in robots[:n]]))
    return pending is None, Configuration(tuple(robots)), pending


def simulator(i: int, proposal: int, algorithms: Sequence[RobotAlgorithm], rules: Rules,
              max_slots: int, out: dict):
    """Program of simulator process p_i (a memory-sim generator)."""
    n = rules.n
    for u in range(n):
        yield from submit(i, u, LocalState(algorithms[u].init, rules.encode(u, proposal)), "init")
    u = n
    while u < max_slots:
        view = yield Snapshot(f"getview:{u}")
        q, c, _ = getview(i, u, view, n, rules)
        if q and rules.legitimate(c):
            value, where = rules.decide(c)
            out["decision"] = {"value": value, "slot": u, "at": where}
            return
        move = activate(c, u % n, algorithms)
        yield from submit(i, u, move, "main")
        u += 1
    out["halted"] = u


@dataclass(frozen=True)
class ReductionTrace:
    n: int
    proposals: tuple[int, int]
    algorithm: str
    rules: dict
    adversary: dict
    max_slots: int
    log: EventLog
    decisions: dict
    halted: dict

    @property
    def crashed(self) -> Optional[int]:
        return self.log.crashed()

    def both_decided(self) -> bool:
        return len(self.decisions) == 2

    def decision_values(self) -> dict[int, int]:
        return {p: d["value"] for p, d in self.decisions.items()}

    def to_json(self) -> dict:
        from .analysis import slot_records

        def enc_at(at: Any) -> Any:
            return codec.encode_point(at) if isinstance(at, Point) else codec.encode_value(at)

        return {
            "format": "reduction-trace/1",
            "n": self.n,
            "proposals": list(self.proposals),
            "algorithm": self.algorithm,
            "rules": self.rules,
            "adversary": self.adversary,
            "max_slots": self.max_slots,
            "crashed": self.crashed,
            "decisions": {str(p): {"value": d["value"], "slot": d["slot"], "at": enc_at(d["at"])}
                          for p, d in sorted(self.decisions.items())},
            "halted": {str(p): u for p, u in sorted(self.halted.items())},
            "slots": [rec.to_json() for rec in slot_records(self.log)],
            "events": self.log.to_json(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ReductionTrace":
        if obj.get("format") != "reduction-trace/1":
            raise ValueError("not a reduction trace")

        def dec_at(at: Any) -> Any:
            if isinstance(at, list) and len(at) == 2 and all(isinstance(a, str) for a in at):
                return codec.decode_point(at)
            return codec.decode_value(at)

        return cls(
            n=obj["n"],
            proposals=tuple(obj["proposals"]),
            algorithm=obj["algorithm"],
            rules=obj["rules"],
            adversary=obj["adversary"],
            max_slots=obj["max_slots"],
            log=EventLog.from_json(obj["events"]),
            decisions={int(p): {"value": d["value"], "slot": d["slot"], "at": dec_at(d["at"])}
                       for p, d in obj["decisions"].items()},
            halted={int(p): u for p, u in obj["halted"].items()},
        )


def _check_setup(n: int, proposals: Sequence[int], algorithms: Sequence[RobotAlgorithm]) -> None:
    if n <= 2:
        raise ConfigError(f"the robot system needs n > 2 correct robots (got n={n})")
    if len(proposals) != 2 or any(p not in (0, 1) for p in proposals):
        raise ConfigError(f"proposals must be a pair of bits, got {proposals!r}")
    if len(algorithms) != n + 1:
        raise ConfigError(f"expected {n + 1} robot algorithms, got {len(algorithms)}")


def reference_run(algorithms: Sequence[RobotAlgorithm], proposal: int, max_rounds: int = 10_000,
                  rules: Optional[Rules] = None, initial: Optional[Sequence[Point]] = None) -> Any:
    """Where the benign, fault-free simulation from a common proposal ends up.

    Round-robin over correct robots, Byzantine robot at the helper point
    before every activation; stops at the first legitimate configuration.
    Returns the gathering point (or, for formation rules, the final pattern's
    invariant).
    """
    n = len(algorithms) - 1
    rules = rules or gathering_rules(n, None)
    locs = list(initial) if initial is not None else [rules.encode(u, proposal) for u in range(n)]
    if len(locs) != n:
        raise ValueError(f"initial placement needs {n} points")
    robots = [LocalState(algorithms[u].init, locs[u]) for u in range(n)]
    for r in range(max_rounds + 1):
        c = Configuration(tuple(robots) + (LocalState(BYZANTINE_STATE, rules.helper([x.location for x in robots])),))
        if rules.legitimate(c):
            if rules.kind == "gathering":
                return max_multiplicity(c.locations())[0]
            return rules.decide(c)[1]
        if r == max_rounds:
            break
        robots[r % n] = activate(c, r % n, algorithms)
    raise RuntimeError(f"the benign execution did not reach a legitimate configuration in {max_rounds} rounds")


def reference_pattern_invariant(formation: "FormationSpec", algorithms: Sequence[RobotAlgorithm],
                                x: Point, max_rounds: int = 10_000) -> Any:
    n = len(algorithms) - 1
    rules = formation_rules(formation, n, x, None)
    locs = [rules.encode(u, 0) for u in range(n)]
    robots = [LocalState(algorithms[u].init, locs[u]) for u in range(n)]
    for r in range(max_rounds + 1):
        c = Configuration(tuple(robots) + (LocalState(BYZANTINE_STATE, rules.helper([q.location for q in robots])),))
        if rules.legitimate(c):
            return formation.invariant(c.locations()[:-1]), c
        robots[r % n] = activate(c, r % n, algorithms)
    raise RuntimeError("the benign formation execution did not terminate")


def _run(proposals: Sequence[int], algorithms: Sequence[RobotAlgorithm], rules: Rules,
         adversary: InterleavingAdversary, max_slots: int) -> ReductionTrace:
    outs: list[dict] = [{}, {}]
    programs = [
        (lambda i=i: simulator(i, proposals[i], algorithms, rules, max_slots, outs[i]))
        for i in (0, 1)
    ]
    log = execute(programs, adversary)
    decisions = {i: outs[i]["decision"] for i in (0, 1) if "decision" in outs[i]}
    halted = {i: outs[i]["halted"] for i in (0, 1) if "halted" in outs[i]}
    return ReductionTrace(rules.n, tuple(proposals), algorithms[0].name, rules.describe,
                          adversary.to_json(), max_slots, log, decisions, halted)


def run_consensus(proposals: Sequence[int], algorithms: Sequence[RobotAlgorithm] | str = "move-to-max",
                  adversary: InterleavingAdversary = InterleavingAdversary(),
                  max_slots: Optional[int] = None, n: Optional[int] = None) -> ReductionTrace:
    """Run both simulator processes to completion under ``adversary``."""
    if isinstance(algorithms, str):
        if n is None:
            raise ConfigError("n is required when the algorithm is given by name")
        if n <= 2:
            raise ConfigError(f"the robot system needs n > 2 correct robots (got n={n})")
        algorithms = make_algorithms(algorithms, n)
    n = len(algorithms) - 1
    _check_setup(n, proposals, algorithms)
    max_slots = 64 * n if max_slots is None else max_slots
    ref = reference_run(algorithms, 0)
    return _run(proposals, algorithms, gathering_rules(n, ref), adversary, max_slots)


def run_formation_consensus(proposals: Sequence[int], algorithms: Sequence[RobotAlgorithm] | str,
                            formation: "FormationSpec | str", x: Point,
                            adversary: InterleavingAdversary = InterleavingAdversary(),
                            max_slots: Optional[int] = None, n: Optional[int] = None) -> ReductionTrace:
    """Formation variant: proposal 0 starts robots at (i, 0), proposal 1 at (i, 0) + x."""
    from .formations import check_bivalency_witness, get_formation

    if isinstance(algorithms, str):
        if n is None or n <= 2:
            raise ConfigError(f"the robot system needs n > 2 correct robots (got n={n})")
        algorithms = make_algorithms(algorithms, n)
    n = len(algorithms) - 1
    _check_setup(n, proposals, algorithms)
    if isinstance(formation, str):
        formation = get_formation(formation, n + 1)
    if not formation.has_invariant:
        raise ConfigError(f"formation {formation.name!r} has no separating invariant, so no bivalency witness exists")
    max_slots = 64 * n if max_slots is None else max_slots
    ref_inv, ref_config = reference_pattern_invariant(formation, algorithms, x)
    cert = check_bivalency_witness(formation, ref_config.locations(), x, fuzz_pairs=200)
    if not cert["certified"]:
        raise ConfigError(f"formation {formation.name!r} is not certified bivalent for x={x}: {cert['reason']}")
    rules = formation_rules(formation, n, x, ref_inv)
    return _run(proposals, algorithms, rules, adversary, max_slots)


def rules_for_trace(trace: ReductionTrace, algorithms: Sequence[RobotAlgorithm]) -> Rules:
    """Rebuild the encode/helper/decide rules a trace was produced with."""
    desc = trace.rules
    if desc["kind"] == "gathering":
        ref = desc.get("reference_point")
        return gathering_rules(trace.n, None if ref is None else codec.decode_point(ref))
    from .formations import get_formation

    formation = get_formation(desc["formation"], trace.n + 1)
    x = codec.decode_point(desc["x"])
    ref_inv, _ = reference_pattern_invariant(formation, algorithms, x)
    return formation_rules(formation, trace.n, x, ref_inv)
