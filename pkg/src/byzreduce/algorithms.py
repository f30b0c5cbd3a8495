"""Sample robot algorithms used as plug-ins for the simulator.

None of these tolerates a Byzantine robot; they exist to drive executions.
Each keeps an activation counter as its internal state so the robots are
non-oblivious in a visible way.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Callable

from .geometry import ORIGIN, LocationMultiset, Point, max_multiplicity

Transition = Callable[[LocationMultiset, Any], "tuple[Point, Any]"]


@dataclass(frozen=True)
class RobotAlgorithm:
    """Deterministic map (local observation, state) -> (local destination, state)."""

    name: str
    transition: Transition
    init: Any = 0

    def __call__(self, observation: LocationMultiset, state: Any) -> tuple[Point, Any]:
        return self.transition(observation, state)


def _tick(state: Any) -> Any:
    return state + 1 if isinstance(state, int) else state


def _stay_put(obs: LocationMultiset, state: Any) -> tuple[Point, Any]:
    return ORIGIN, _tick(state)


def _move_to_max(obs: LocationMultiset, state: Any) -> tuple[Point, Any]:
    return max_multiplicity(obs)[0], _tick(state)


def _center_of_gravity(obs: LocationMultiset, state: Any) -> tuple[Point, Any]:
    k = len(obs)
    sx = sum((p.x for p in obs), Fraction(0))
    sy = sum((p.y for p in obs), Fraction(0))
    return Point(sx / k, sy / k), _tick(state)


def _line_former(obs: LocationMultiset, state: Any) -> tuple[Point, Any]:
    # Drop vertically onto the horizontal line through the lowest observed robot.
    return Point(Fraction(0), min(p.y for p in obs)), _tick(state)


_TRANSITIONS: dict[str, Transition] = {
    "stay-put": _stay_put,
    "move-to-max": _move_to_max,
    "center-of-gravity": _center_of_gravity,
    "line-former": _line_former,
}

ALGORITHM_NAMES = tuple(sorted(_TRANSITIONS))


def make_algorithms(name: str, n: int) -> list[RobotAlgorithm]:
    """One algorithm instance per robot r_0..r_n (r_n's copy is never run)."""
    try:
        fn = _TRANSITIONS[name]
    except KeyError:
        raise ValueError(f"unknown algorithm {name!r}; choose from {', '.join(ALGORITHM_NAMES)}") from None
    return [RobotAlgorithm(name, fn, 0) for _ in range(n + 1)]


def register_algorithm(name: str, transition: Transition) -> None:
    """Make a user transition available by name (e.g. to the CLI)."""
    _TRANSITIONS[name] = transition
    global ALGORITHM_NAMES
    ALGORITHM_NAMES = tuple(sorted(_TRANSITIONS))
