"""Exact planar geometry and robot configurations for the ATOM model.

Coordinates are ``fractions.Fraction`` throughout so co-location, multiplicity
and concyclicity are decided exactly.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Iterable, Iterator, NamedTuple, Sequence


def _q(v: Any) -> Fraction:
    if isinstance(v, Fraction):
        return v
    if isinstance(v, float):
        raise TypeError("float coordinates are not allowed; use int, str or Fraction")
    return Fraction(v)


class Point(NamedTuple):
    x: Fraction
    y: Fraction

    def __add__(self, other: "Point") -> "Point":  # type: ignore[override]
        return Point(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Point") -> "Point":
        return Point(self.x - other.x, self.y - other.y)

    def __neg__(self) -> "Point":
        return Point(-self.x, -self.y)

    def __repr__(self) -> str:
        return f"Point({self.x}, {self.y})"


def pt(x: Any, y: Any) -> Point:
    """Build a Point, coercing ints/strings like ``"3/5"`` to Fractions."""
    return Point(_q(x), _q(y))


ORIGIN = pt(0, 0)


@dataclass(frozen=True)
class LocationMultiset:
    """A multiset of points, stored as a sorted tuple so equality is structural."""

    points: tuple[Point, ...]

    def __init__(self, points: Iterable[Point] = ()):
        object.__setattr__(self, "points", tuple(sorted(points)))

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self) -> Iterator[Point]:
        return iter(self.points)

    def __contains__(self, p: object) -> bool:
        return p in self.points

    def counts(self) -> Counter:
        return Counter(self.points)

    def count(self, p: Point) -> int:
        return self.points.count(p)

    def distinct(self) -> list[Point]:
        return sorted(set(self.points))

    def translate(self, t: Point) -> "LocationMultiset":
        return LocationMultiset(p + t for p in self.points)

    def intersection_size(self, other: "LocationMultiset") -> int:
        return sum((self.counts() & other.counts()).values())

    def __repr__(self) -> str:
        return "{" + ", ".join(f"({p.x},{p.y})" for p in self.points) + "}"


def max_multiplicity(points: Iterable[Point]) -> tuple[Point, int]:
    """Return the most populated point and its count.

    Ties go to the lexicographically smallest point (x first, then y).
    """
    counts = Counter(points)
    if not counts:
        raise ValueError("max_multiplicity of an empty multiset")
    best = max(counts.values())
    return min(p for p, c in counts.items() if c == best), best


class LocalState(NamedTuple):
    """Internal state plus global location of one robot."""

    state: Any
    location: Point


@dataclass(frozen=True)
class Configuration:
    """An (n+1)-tuple of local states; index n is the Byzantine robot."""

    robots: tuple[LocalState, ...]

    def __post_init__(self) -> None:
        if not isinstance(self.robots, tuple):
            object.__setattr__(self, "robots", tuple(self.robots))
        if len(self.robots) < 4:
            raise ValueError(f"a configuration needs n+1 >= 4 robots (n > 2), got {len(self.robots)}")

    @classmethod
    def from_locations(cls, locations: Sequence[Point], states: Sequence[Any] | None = None) -> "Configuration":
        if states is None:
            states = [None] * len(locations)
        return cls(tuple(LocalState(s, p) for s, p in zip(states, locations, strict=True)))

    @property
    def n(self) -> int:
        return len(self.robots) - 1

    def __len__(self) -> int:
        return len(self.robots)

    def __getitem__(self, i: int) -> LocalState:
        return self.robots[i]

    def __iter__(self) -> Iterator[LocalState]:
        return iter(self.robots)

    def locations(self) -> tuple[Point, ...]:
        return tuple(r.location for r in self.robots)

    def location_multiset(self) -> LocationMultiset:
        return LocationMultiset(self.locations())

    def replace(self, i: int, local: LocalState) -> "Configuration":
        robots = list(self.robots)
        robots[i] = local
        return Configuration(tuple(robots))

    def translate(self, t: Point) -> "Configuration":
        return Configuration(tuple(LocalState(r.state, r.location + t) for r in self.robots))


def _check_index(config: Configuration, i: int) -> None:
    if not 0 <= i <= config.n:
        raise IndexError(f"robot index {i} outside [0, {config.n}]")


def observe(config: Configuration, i: int) -> LocationMultiset:
    """Snapshot of all robot positions in robot i's local frame (shared axes).

    The observer itself appears at the origin, and co-located robots are
    reported with their exact multiplicity.
    """
    _check_index(config, i)
    origin = config.robots[i].location
    return LocationMultiset(r.location - origin for r in config.robots)


def swap(config: Configuration, k: int) -> Configuration:
    """Exchange entries k and n (the Byzantine slot)."""
    _check_index(config, k)
    n = config.n
    if k == n:
        return config
    robots = list(config.robots)
    robots[k], robots[n] = robots[n], robots[k]
    return Configuration(tuple(robots))


def is_legitimate_now(config: Configuration) -> bool:
    """All correct robots (indices 0..n-1) share one location."""
    locs = config.locations()[:-1]
    return all(p == locs[0] for p in locs)


def is_semi_legitimate(config: Configuration) -> bool:
    """At least n of the n+1 entries are co-located."""
    return max_multiplicity(config.locations())[1] >= config.n
