"""Command-line entry point: run reductions, verify traces, check the slot
object exhaustively, drive raw robot executions and query formations.

Exit codes: 0 pass, 1 property violation, 2 usage or parse error,
3 slot bound exhausted.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

from . import codec
from .algorithms import ALGORITHM_NAMES, make_algorithms
from .analysis import TraceAnalysis, critical_witness_sequence, slot_records
from .atom import Schedule, check_k_bounded, run
from .formations import (
    FORMATION_NAMES,
    check_bivalency_witness,
    get_formation,
    kernel_fact,
    same_class_chain,
    sample_member,
)
from .geometry import Configuration, Point, is_legitimate_now, pt
from .memory import MAX_ENUMERATION_EVENTS, InterleavingAdversary, LogError
from .reduction import ConfigError, ReductionTrace, TraceCorruption, run_consensus, run_formation_consensus
from .slot import CLAIM, DEFER, SlotStatus, exhaustive_slot_check, flag_cell, read_status

EXIT_OK, EXIT_VIOLATION, EXIT_USAGE, EXIT_BOUND = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything that determines one reduction run."""

    n: int = 4
    proposals: tuple[int, int] = (0, 1)
    algorithm: str = "move-to-max"
    seed: int = 0
    crash: Optional[tuple[int, int]] = None
    formation: Optional[str] = None
    x: Point = field(default_factory=lambda: pt(1, 0))
    max_slots: Optional[int] = None
    sequence: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.n <= 2:
            raise ConfigError(f"the robot system needs n > 2 correct robots (got n={self.n})")
        if len(self.proposals) != 2 or any(p not in (0, 1) for p in self.proposals):
            raise ConfigError(f"proposals must be two bits, got {self.proposals!r}")

    def adversary(self) -> InterleavingAdversary:
        strategy = "explicit" if self.sequence else "random"
        return InterleavingAdversary(strategy, self.seed, self.sequence, self.crash)

    def run(self) -> ReductionTrace:
        if self.formation is None:
            return run_consensus(self.proposals, self.algorithm, self.adversary(), self.max_slots, self.n)
        return run_formation_consensus(self.proposals, self.algorithm, self.formation, self.x,
                                       self.adversary(), self.max_slots, self.n)


PROPOSAL_PAIRS = ((0, 0), (0, 1), (1, 0), (1, 1))


def random_scenario(seed: int) -> ScenarioConfig:
    """The adversarial batch: n in 3..6, any proposal pair, a crash half the time."""
    rng = random.Random(seed)
    n = rng.choice((3, 4, 5, 6))
    proposals = rng.choice(PROPOSAL_PAIRS)
    crash = (rng.randrange(2), rng.randrange(8 * n)) if rng.random() < 0.5 else None
    return ScenarioConfig(n=n, proposals=proposals, seed=rng.randrange(2**31), crash=crash)


def verify(trace: ReductionTrace, declared_slots: Optional[list] = None) -> dict:
    """All lemma and consensus checks on one trace, as a JSON-ready report."""
    try:
        report = TraceAnalysis(trace).report()
    except (TraceCorruption, KeyError, ValueError) as exc:
        return {"passed": False, "error": f"{type(exc).__name__}: {exc}"}
    if declared_slots is not None:
        actual = [r.to_json() for r in slot_records(trace.log)]
        bad = [a["j"] for a, d in zip(actual, declared_slots) if a != d]
        if len(actual) != len(declared_slots):
            bad.append(min(len(actual), len(declared_slots)))
        report["slot_summary"] = {"consistent": not bad, "mismatched_slots": bad}
        if bad:
            report["passed"] = False
    return report


# -- argument parsing helpers -----------------------------------------------------

def parse_pair(text: str) -> tuple[int, int]:
    parts = text.replace(" ", "").split(",")
    if len(parts) != 2:
        raise UsageError(f"expected two comma-separated values, got {text!r}")
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise UsageError(f"expected integers in {text!r}") from None


def parse_point(text: str) -> Point:
    parts = text.replace(" ", "").split(",")
    if len(parts) != 2:
        raise UsageError(f"a point is 'x,y', got {text!r}")
    try:
        return pt(parts[0], parts[1])
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"bad rational coordinates in {text!r}") from None


def parse_points(text: str) -> list[Point]:
    return [parse_point(p) for p in text.split(";") if p.strip()]


def write_json(path: Optional[str], obj: Any) -> None:
    text = codec.dumps(obj)
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


# -- subcommands ------------------------------------------------------------------

def cmd_reduce(args: argparse.Namespace) -> int:
    sequence: tuple[int, ...] = ()
    if args.critical_witness is not None:
        sequence = critical_witness_sequence(args.n, args.critical_witness)
    elif args.sequence:
        sequence = tuple(int(c) for c in args.sequence.replace(",", ""))
    config = ScenarioConfig(
        n=args.n, proposals=parse_pair(args.proposals), algorithm=args.algorithm, seed=args.seed,
        crash=None if args.crash is None else parse_pair(args.crash.replace(":", ",")),
        formation=args.formation, x=parse_point(args.x), max_slots=args.max_slots, sequence=sequence,
    )
    trace = config.run()
    out = args.out or f"trace-n{config.n}-s{config.seed}.json"
    write_json(out, trace.to_json())
    recs = slot_records(trace.log)
    committed = sum(r.status is not None for r in recs)
    blocked = sum(r.blocked for r in recs)
    print(f"trace: {out}")
    print(f"n={config.n} proposals={config.proposals[0]},{config.proposals[1]} algorithm={config.algorithm}")
    for p in (0, 1):
        if p in trace.decisions:
            d = trace.decisions[p]
            print(f"p{p}: decided {d['value']} at slot {d['slot']}")
        elif trace.crashed == p:
            print(f"p{p}: crashed")
        else:
            print(f"p{p}: halted at slot {trace.halted.get(p)} (slot bound {trace.max_slots})")
    if trace.crashed is not None and (1 - trace.crashed) in trace.decisions:
        print(f"survivor decision: p{1 - trace.crashed} decided alone")
    print(f"slots: {len(recs)} used, {committed} committed, {blocked} blocked by the crash, "
          f"{len(recs) - committed - blocked} uncommitted")
    return EXIT_BOUND if trace.halted else EXIT_OK


def cmd_verify_trace(args: argparse.Namespace) -> int:
    path = Path(args.path)
    try:
        obj = json.loads(path.read_text())
        trace = ReductionTrace.from_json(obj)
        declared = obj["slots"]
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError, LogError) as exc:
        print(f"cannot parse {path}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = verify(trace, declared)
    out = args.out or str(path.with_name(path.stem + ".report.json"))
    write_json(out, report)
    print(f"report: {out}")
    if report["passed"]:
        print("all checks passed")
        return EXIT_OK
    if "error" in report:
        print(f"trace rejected: {report['error']}")
    for v in report.get("admissibility", {}).get("violations", []):
        print(f"violation at slot {v['slot']}: {v['check']}: {v['detail']}")
    summary = report.get("slot_summary", {})
    if summary.get("mismatched_slots"):
        print(f"slot summary disagrees with the event log at slots {summary['mismatched_slots']}")
    cons = report.get("consensus")
    if cons is not None and not cons["passed"]:
        print(f"consensus check failed: {cons}")
    return EXIT_VIOLATION


def _no_common_value_rule(view, j: int = 0) -> SlotStatus:
    """Mutant status rule: drops the common-value clause."""
    st = read_status(view, j)
    f = (view.get(flag_cell(j, 0)), view.get(flag_cell(j, 1)))
    if st.s is not None and CLAIM not in f and f != (DEFER, DEFER):
        return SlotStatus(st.v0, st.v1, None)
    return st


def _claim_blind_rule(view, j: int = 0) -> SlotStatus:
    """Mutant status rule: ignores CLAIM flags."""
    st = read_status(view, j)
    f = (view.get(flag_cell(j, 0)), view.get(flag_cell(j, 1)))
    return st if DEFER in f else SlotStatus(st.v0, st.v1, None)


MUTANTS = {"claim-blind": _claim_blind_rule, "no-common-value": _no_common_value_rule}


def cmd_check_slot(args: argparse.Namespace) -> int:
    if args.max_events > MAX_ENUMERATION_EVENTS:
        print(f"max-events {args.max_events} exceeds the tractability bound {MAX_ENUMERATION_EVENTS}", file=sys.stderr)
        return EXIT_USAGE
    if args.max_events < 6:
        print("two submissions need 6 primitives; raise --max-events", file=sys.stderr)
        return EXIT_USAGE
    pairs = [parse_pair(v) for v in args.values] if args.values else [(5, 7), (9, 9)]
    rule = MUTANTS[args.mutant] if args.mutant else read_status
    summary = exhaustive_slot_check(pairs, status_rule=rule, crashes=not args.no_crashes)
    print(f"schedules: {summary['schedules']} ({summary['crash_free']} crash-free), reads: {summary['reads']}")
    for name, count in summary["pass_counts"].items():
        print(f"  {name}: {count}/{summary['schedules']}")
    if args.out:
        write_json(args.out, summary)
    if summary["failures"]:
        first = summary["failures"][0]
        print(f"first failure: {first['property']} for values {first['values']}: {first['witness']['detail']}")
    return EXIT_OK if summary["passed"] else EXIT_VIOLATION


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.n <= 2:
        raise ConfigError(f"the robot system needs n > 2 correct robots (got n={args.n})")
    rng = random.Random(args.seed)
    algorithms = make_algorithms(args.algorithm, args.n)
    if args.init:
        locs = parse_points(args.init)
        if len(locs) != args.n + 1:
            raise UsageError(f"--init needs {args.n + 1} points, got {len(locs)}")
    else:
        locs = [pt(rng.randint(0, 4), rng.randint(0, 4)) for _ in range(args.n + 1)]
    c0 = Configuration.from_locations(locs, [a.init for a in algorithms[:-1]] + [None])
    rounds, moves = [], []
    for _ in range(args.rounds):
        if args.scheduler == "centralized":
            active = frozenset([rng.randrange(args.n + 1)])
        else:
            active = frozenset(i for i in range(args.n + 1) if rng.random() < 0.5) or frozenset([rng.randrange(args.n + 1)])
        rounds.append(active)
        moves.append(pt(rng.randint(0, 4), rng.randint(0, 4)) if args.n in active else None)
    schedule = Schedule(tuple(rounds), tuple(moves))
    trace = run(algorithms, c0, schedule)
    k = check_k_bounded(schedule)
    final = trace.configs[-1]
    if args.out:
        write_json(args.out, trace.to_json())
    print(f"rounds: {len(schedule)}, k-bound of the schedule: {k}")
    print("final: " + " ".join(f"({p.x},{p.y})" for p in final.locations()))
    print(f"correct robots gathered: {is_legitimate_now(final)}")
    return EXIT_OK


def cmd_formations(args: argparse.Namespace) -> int:
    points = parse_points(args.points) if args.points else None
    arity = len(points) if points else args.n + 1
    formation = get_formation(args.formation, arity)
    if args.action == "membership":
        if points is None:
            raise UsageError("--points is required")
        fit = formation.best_fit(points)
        result = {"formation": formation.name, "member": formation.member(points),
                  "in_f1": formation.in_f1(points), "best_fit_count": fit.count,
                  "helper": None if fit.helper is None else codec.encode_point(fit.helper)}
        code = EXIT_OK
    elif args.action == "chain":
        if points is None or not args.target:
            raise UsageError("--points and --target are required")
        chain = same_class_chain(formation, points, parse_points(args.target), seed=args.seed)
        result = {"formation": formation.name, "found": chain is not None,
                  "chain": None if chain is None else chain.to_json()}
        code = EXIT_OK if chain is not None else EXIT_VIOLATION
    elif args.action == "certify":
        if points is None:
            points = list(sample_member(formation, random.Random(args.seed)))
        result = check_bivalency_witness(formation, points, parse_point(args.x), fuzz_pairs=args.fuzz,
                                         seed=args.seed)
        code = EXIT_OK if result["certified"] else EXIT_VIOLATION
    else:
        result = kernel_fact(args.formation, args.grid)
        code = EXIT_OK if result["holds"] else EXIT_VIOLATION
    write_json(args.out, result)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="byzreduce", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("reduce", help="run the two-process consensus reduction")
    r.add_argument("--n", type=int, default=4, help="number of correct robots (n > 2)")
    r.add_argument("--proposals", default="0,1")
    r.add_argument("--algorithm", default="move-to-max", choices=ALGORITHM_NAMES)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--crash", help="P:K crashes process P right after its K-th primitive")
    r.add_argument("--formation", choices=FORMATION_NAMES)
    r.add_argument("--x", default="0,1", help="translation separating the two proposals (formations)")
    r.add_argument("--max-slots", type=int)
    r.add_argument("--sequence", help="explicit process order, e.g. 0011010")
    r.add_argument("--critical-witness", type=int, metavar="J",
                   help="use the scripted schedule that makes slot J critical")
    r.add_argument("--out")
    r.set_defaults(func=cmd_reduce)

    v = sub.add_parser("verify-trace", help="check every lemma and consensus property on a trace")
    v.add_argument("path")
    v.add_argument("--out", help="report path (default: beside the trace)")
    v.set_defaults(func=cmd_verify_trace)

    c = sub.add_parser("check-slot", help="exhaustively check the slot object")
    c.add_argument("--max-events", type=int, default=6)
    c.add_argument("--values", action="append", help="value pair a,b (repeatable)")
    c.add_argument("--no-crashes", action="store_true")
    c.add_argument("--mutant", choices=sorted(MUTANTS), help=argparse.SUPPRESS)
    c.add_argument("--out")
    c.set_defaults(func=cmd_check_slot)

    s = sub.add_parser("simulate", help="raw robot execution under a random schedule")
    s.add_argument("--n", type=int, default=4)
    s.add_argument("--algorithm", default="move-to-max", choices=ALGORITHM_NAMES)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--rounds", type=int, default=20)
    s.add_argument("--scheduler", choices=("centralized", "ssync"), default="centralized")
    s.add_argument("--init", help="n+1 points 'x,y;x,y;...' (the last is the Byzantine robot)")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("formations", help="membership, chains, bivalency certificates, kernel facts")
    f.add_argument("action", choices=("membership", "chain", "certify", "kernel"))
    f.add_argument("--formation", choices=FORMATION_NAMES, default="circle")
    f.add_argument("--n", type=int, default=5, help="correct robots; patterns have n+1 points")
    f.add_argument("--points", help="pattern 'x,y;x,y;...'")
    f.add_argument("--target", help="second pattern for 'chain'")
    f.add_argument("--x", default="1000000,0")
    f.add_argument("--fuzz", type=int, default=10_000)
    f.add_argument("--grid", type=int, default=5)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out")
    f.set_defaults(func=cmd_formations)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
