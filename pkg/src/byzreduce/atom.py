"""ATOM-model execution engine with one Byzantine robot (index n)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

from . import codec
from .algorithms import RobotAlgorithm
from .geometry import Configuration, LocalState, Point, observe


@dataclass(frozen=True)
class Schedule:
    """Activation sets per round plus the Byzantine robot's target (if active)."""

    rounds: tuple[frozenset, ...] = ()
    byzantine_moves: tuple[Optional[Point], ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "rounds", tuple(frozenset(r) for r in self.rounds))
        moves = tuple(self.byzantine_moves) or (None,) * len(self.rounds)
        object.__setattr__(self, "byzantine_moves", moves)
        if len(self.rounds) != len(self.byzantine_moves):
            raise ValueError("rounds and byzantine_moves differ in length")

    @classmethod
    def centralized(cls, order: Iterable[int]) -> "Schedule":
        return cls(tuple(frozenset([i]) for i in order))

    def is_centralized(self) -> bool:
        return all(len(r) == 1 for r in self.rounds)

    def __len__(self) -> int:
        return len(self.rounds)


@dataclass(frozen=True)
class ExecutionTrace:
    configs: tuple[Configuration, ...]
    schedule: Schedule = field(default_factory=Schedule)

    def __post_init__(self) -> None:
        if len(self.configs) != len(self.schedule) + 1:
            raise ValueError("an execution trace has exactly one more configuration than rounds")

    def to_json(self) -> dict:
        return {
            "n": self.configs[0].n,
            "configs": [codec.encode_config(c) for c in self.configs],
            "schedule": [
                {"active": sorted(r), "byz": None if b is None else codec.encode_point(b)}
                for r, b in zip(self.schedule.rounds, self.schedule.byzantine_moves)
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ExecutionTrace":
        configs = tuple(codec.decode_config(c) for c in obj["configs"])
        if any(c.n != obj["n"] for c in configs):
            raise ValueError("configuration size disagrees with n")
        rounds = tuple(frozenset(r["active"]) for r in obj["schedule"])
        moves = tuple(None if r["byz"] is None else codec.decode_point(r["byz"]) for r in obj["schedule"])
        return cls(configs, Schedule(rounds, moves))


def activate(config: Configuration, i: int, algorithms: Sequence[RobotAlgorithm]) -> LocalState:
    """One atomic look-compute-move cycle of correct robot i against ``config``."""
    me = config.robots[i]
    dest, new_state = algorithms[i](observe(config, i), me.state)
    return LocalState(new_state, me.location + dest)


def step(
    config: Configuration,
    activated: Iterable[int],
    byz_pos: Optional[Point],
    algorithms: Sequence[RobotAlgorithm],
) -> Configuration:
    """Perform one ATOM round: every active robot observes ``config`` and moves."""
    activated = set(activated)
    n = config.n
    if any(not 0 <= i <= n for i in activated):
        raise IndexError(f"activation set {sorted(activated)} outside [0, {n}]")
    if n in activated and byz_pos is None:
        raise ValueError("the Byzantine robot is active but no position was supplied")
    robots = list(config.robots)
    for i in activated:
        if i != n:
            robots[i] = activate(config, i, algorithms)
    if n in activated:
        robots[n] = LocalState(config.robots[n].state, byz_pos)
    return Configuration(tuple(robots))


def step_mismatch(
    config: Configuration,
    nxt: Configuration,
    x: int,
    algorithms: Sequence[RobotAlgorithm],
    byzantine: str = "after",
) -> Optional[str]:
    """Why ``config --x--> nxt`` does not hold, or None when it does.

    The Byzantine position is taken from ``nxt[n]``. With ``byzantine="after"``
    robot x moves first and the Byzantine robot relocates afterwards; with
    ``"before"`` the Byzantine robot relocates first and x observes it there.
    """
    n = config.n
    if nxt.n != n:
        return f"size mismatch: {n + 1} vs {nxt.n + 1} robots"
    if not 0 <= x < n:
        return f"robot {x} is not a correct robot"
    b = nxt.robots[n].location
    if byzantine == "after":
        base = config
    elif byzantine == "before":
        base = config.replace(n, LocalState(config.robots[n].state, b))
    else:
        raise ValueError(f"byzantine must be 'after' or 'before', not {byzantine!r}")
    expect = activate(base, x, algorithms)
    for i in range(n):
        want = expect if i == x else config.robots[i]
        if nxt.robots[i] != want:
            role = "activated robot" if i == x else "idle robot"
            return f"entry {i} ({role}): expected {want}, found {nxt.robots[i]}"
    return None


def check_step(
    config: Configuration,
    nxt: Configuration,
    x: int,
    algorithms: Sequence[RobotAlgorithm],
    byzantine: str = "after",
) -> bool:
    return step_mismatch(config, nxt, x, algorithms, byzantine) is None


def run(algorithms: Sequence[RobotAlgorithm], c0: Configuration, schedule: Schedule) -> ExecutionTrace:
    configs = [c0]
    for active, b in zip(schedule.rounds, schedule.byzantine_moves):
        configs.append(step(configs[-1], active, b, algorithms))
    return ExecutionTrace(tuple(configs), schedule)


def check_k_bounded(schedule: Schedule, byzantine: Optional[int] = None) -> int:
    """Smallest k for which the schedule is k-bounded.

    Between two consecutive activations of a robot, count how often every
    other robot is activated; k is the largest such count (at least 1).
    Windows anchored at the ``byzantine`` robot are skipped: it may stay in
    place at will, so its silent rounds are not visible activations.
    """
    last: dict[int, int] = {}
    k = 1
    # counts[a][b]: activations of b since a's last activation
    counts: dict[int, dict[int, int]] = {}
    for r, active in enumerate(schedule.rounds):
        for a in active:
            if a in last and a != byzantine:
                k = max(k, max(counts[a].values(), default=0))
        for a in active:
            last[a] = r
            counts[a] = {}
        for a in counts:
            if a in active:
                continue
            for b in active:
                counts[a][b] = counts[a].get(b, 0) + 1
    return k
