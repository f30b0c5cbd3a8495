"""Two-process SWMR shared memory with atomic snapshots, crash faults and
adversarial interleaving control.

Programs are generator factories. A generator yields primitive operations
(:class:`Write` or :class:`Snapshot`) one at a time; a snapshot is answered
via ``send`` with a read-only :class:`Memory`. Work between primitives is free.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from math import comb
from types import MappingProxyType
from typing import Any, Callable, Generator, Iterator, Mapping, NamedTuple, Optional, Sequence

from . import codec

BOTTOM = None
MAX_ENUMERATION_EVENTS = 24


class Cell(NamedTuple):
    """A single-writer register, owned by process ``owner``."""

    name: str
    index: int
    owner: int


@dataclass(frozen=True)
class Write:
    cell: Cell
    value: Any
    label: str = ""


@dataclass(frozen=True)
class Snapshot:
    label: str = ""


Primitive = Write | Snapshot
Program = Generator[Primitive, Any, Any]
ProgramFactory = Callable[[], Program]


class Memory(Mapping):
    """Immutable view of cell contents; unwritten cells read as ``BOTTOM``."""

    def __init__(self, cells: Mapping[Cell, Any] | None = None):
        self._cells = dict(cells or {})

    def __getitem__(self, cell: Cell) -> Any:
        return self._cells.get(cell, BOTTOM)

    def __iter__(self) -> Iterator[Cell]:
        return iter(self._cells)

    def __len__(self) -> int:
        return len(self._cells)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Memory):
            return NotImplemented
        return self._cells == other._cells

    def __repr__(self) -> str:
        return f"Memory({self._cells!r})"


@dataclass(frozen=True)
class Event:
    timestamp: int
    process: int
    kind: str  # "write" | "snapshot" | "crash"
    cell: Optional[Cell] = None
    value: Any = None
    label: str = ""
    # The view handed to the program; not part of the log's identity.
    view: Optional[Memory] = field(default=None, compare=False, repr=False)

    def to_json(self) -> dict:
        out: dict[str, Any] = {"t": self.timestamp, "p": self.process, "kind": self.kind}
        if self.label:
            out["label"] = self.label
        if self.kind == "write":
            out["cell"] = list(self.cell)
            out["value"] = codec.encode_value(self.value)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "Event":
        cell = Cell(*obj["cell"]) if "cell" in obj else None
        value = codec.decode_value(obj["value"]) if "value" in obj else None
        return cls(obj["t"], obj["p"], obj["kind"], cell, value, obj.get("label", ""))


class LogError(ValueError):
    pass


@dataclass(frozen=True)
class EventLog:
    events: tuple[Event, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(self.events))
        crashed: set[int] = set()
        prev = None
        for e in self.events:
            if prev is not None and e.timestamp <= prev:
                raise LogError(f"timestamps not strictly increasing at t={e.timestamp}")
            prev = e.timestamp
            if e.process in crashed:
                raise LogError(f"process {e.process} acts at t={e.timestamp} after crashing")
            if e.kind == "crash":
                if crashed:
                    raise LogError("more than one process crashes")
                crashed.add(e.process)
            elif e.kind == "write":
                if e.cell is None or e.cell.owner != e.process:
                    raise LogError(f"process {e.process} writes {e.cell} it does not own (t={e.timestamp})")
            elif e.kind != "snapshot":
                raise LogError(f"unknown event kind {e.kind!r}")

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def crashed(self) -> Optional[int]:
        for e in self.events:
            if e.kind == "crash":
                return e.process
        return None

    def to_json(self) -> list[dict]:
        return [e.to_json() for e in self.events]

    @classmethod
    def from_json(cls, obj: list) -> "EventLog":
        return cls(tuple(Event.from_json(e) for e in obj))


def snapshot_view(log: EventLog, t: int) -> Memory:
    """Cell contents seen by an atomic snapshot at timestamp t."""
    if not any(e.timestamp == t for e in log.events):
        raise KeyError(f"no event with timestamp {t}")
    cells = {}
    for e in log.events:
        if e.timestamp >= t:
            break
        if e.kind == "write":
            cells[e.cell] = e.value
    return Memory(cells)


def validate_snapshots(log: EventLog) -> list[int]:
    """Timestamps of snapshot events whose recorded view disagrees with a replay."""
    bad = []
    replay: dict[Cell, Any] = {}
    for e in log.events:
        if e.kind == "write":
            replay[e.cell] = e.value
        elif e.kind == "snapshot" and e.view is not None and dict(e.view.items()) != replay:
            bad.append(e.timestamp)
    return bad


@dataclass(frozen=True)
class InterleavingAdversary:
    """Who moves next.

    ``random`` draws uniformly among enabled processes from ``seed``;
    ``explicit`` follows ``sequence`` and then alternates round-robin.
    ``crash=(p, k)`` crashes process p right after its k-th primitive.
    """

    strategy: str = "random"
    seed: int = 0
    sequence: tuple[int, ...] = ()
    crash: Optional[tuple[int, int]] = None

    def __post_init__(self) -> None:
        if self.strategy not in ("random", "explicit"):
            raise ValueError(f"unknown adversary strategy {self.strategy!r}")
        object.__setattr__(self, "sequence", tuple(self.sequence))
        if self.crash is not None:
            p, k = self.crash
            if p not in (0, 1) or k < 0:
                raise ValueError(f"bad crash point {self.crash!r}")
            object.__setattr__(self, "crash", (int(p), int(k)))

    def to_json(self) -> dict:
        return {
            "strategy": self.strategy,
            "seed": self.seed,
            "sequence": list(self.sequence),
            "crash": None if self.crash is None else list(self.crash),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "InterleavingAdversary":
        crash = obj.get("crash")
        return cls(obj.get("strategy", "random"), obj.get("seed", 0), tuple(obj.get("sequence", ())),
                   None if crash is None else tuple(crash))

    def chooser(self) -> Callable[[Sequence[int]], int]:
        if self.strategy == "random":
            rng = random.Random(self.seed)
            return lambda enabled: enabled[0] if len(enabled) == 1 else rng.choice(enabled)
        script = iter(self.sequence)
        turn = itertools.count()

        def pick(enabled: Sequence[int]) -> int:
            nxt = next(script, None)
            if nxt is None:
                return enabled[next(turn) % len(enabled)]
            return nxt
        return pick


class SchedulingError(RuntimeError):
    pass


class _Runner:
    """Steps a pair of programs one primitive at a time."""

    def __init__(self, factories: Sequence[ProgramFactory]):
        self.gens = [f() for f in factories]
        self.pending: list[Optional[Primitive]] = []
        self.cells: dict[Cell, Any] = {}
        self.events: list[Event] = []
        self.done_count = [0] * len(self.gens)
        self.crashed: Optional[int] = None
        for g in self.gens:
            self.pending.append(self._advance(g, None))

    @staticmethod
    def _advance(gen: Program, reply: Any) -> Optional[Primitive]:
        try:
            return gen.send(reply)
        except StopIteration:
            return None

    def enabled(self) -> list[int]:
        return [p for p, op in enumerate(self.pending) if op is not None and p != self.crashed]

    def crash(self, p: int) -> None:
        self.events.append(Event(len(self.events), p, "crash"))
        self.crashed = p
        self.pending[p] = None
        self.gens[p].close()

    def run_one(self, p: int) -> None:
        op = self.pending[p]
        if op is None or p == self.crashed:
            raise SchedulingError(f"process {p} is not enabled")
        t = len(self.events)
        if isinstance(op, Write):
            if op.cell.owner != p:
                raise LogError(f"process {p} writes {op.cell} it does not own")
            self.cells[op.cell] = op.value
            self.events.append(Event(t, p, "write", op.cell, op.value, op.label))
            reply = None
        else:
            reply = Memory(self.cells)
            self.events.append(Event(t, p, "snapshot", label=op.label, view=reply))
        self.done_count[p] += 1
        self.pending[p] = self._advance(self.gens[p], reply)


def execute(
    programs: Sequence[ProgramFactory],
    adversary: InterleavingAdversary = InterleavingAdversary(),
    max_events: int = 10**6,
) -> EventLog:
    """Run the programs to completion under the adversary and return the log."""
    runner = _Runner(programs)
    pick = adversary.chooser()
    crash = adversary.crash

    def maybe_crash() -> None:
        if crash is not None and runner.crashed is None:
            p, k = crash
            if runner.done_count[p] == k and runner.pending[p] is not None:
                runner.crash(p)

    maybe_crash()
    while True:
        enabled = runner.enabled()
        if not enabled:
            break
        if len(runner.events) >= max_events:
            raise SchedulingError(f"event budget {max_events} exhausted")
        p = pick(enabled)
        if p not in enabled:
            raise SchedulingError(f"adversary picked process {p}, enabled are {enabled}")
        runner.run_one(p)
        maybe_crash()
    return EventLog(tuple(runner.events))


def _primitive_counts(programs: Sequence[ProgramFactory], budget: int) -> list[int]:
    counts = []
    for f in programs:
        g, reply, c = f(), None, 0
        try:
            while True:
                op = g.send(reply)
                c += 1
                if c > budget:
                    break
                reply = Memory() if isinstance(op, Snapshot) else None
        except StopIteration:
            pass
        counts.append(c)
    return counts


def enumerate_interleavings(
    programs: Sequence[ProgramFactory],
    max_events: int = MAX_ENUMERATION_EVENTS,
    crashes: bool = False,
) -> Iterator[EventLog]:
    """Every distinct total order of the programs' primitives.

    With ``crashes=True`` each crash-free order is followed by all orders in
    which one process stops after k of its primitives (k from 0 up to one
    less than its total), the crash event placed right after its k-th
    primitive. Programs may branch on snapshot results; the search replays
    prefixes, so programs must be deterministic.
    """
    if max_events > MAX_ENUMERATION_EVENTS:
        raise ValueError(f"max_events {max_events} exceeds the tractability bound {MAX_ENUMERATION_EVENTS}")
    counts = _primitive_counts(programs, max_events)
    if sum(counts) > max_events:
        raise ValueError(f"programs emit {sum(counts)}+ primitives, above max_events={max_events}")

    def explore(prefix: list[int], crash: Optional[tuple[int, int]]) -> Iterator[EventLog]:
        runner = _Runner(programs)

        def maybe_crash() -> None:
            if crash is not None and runner.crashed is None:
                p, k = crash
                if runner.done_count[p] == k:
                    runner.crash(p)
        maybe_crash()
        for p in prefix:
            runner.run_one(p)
            maybe_crash()
        enabled = runner.enabled()
        if not enabled:
            yield EventLog(tuple(runner.events))
            return
        for p in enabled:
            yield from explore(prefix + [p], crash)

    yield from explore([], None)
    if crashes:
        for p in range(len(programs)):
            for k in range(counts[p]):
                yield from explore([], (p, k))


def interleaving_count(a: int, b: int) -> int:
    return comb(a + b, a)
