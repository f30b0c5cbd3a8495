"""Formation families over exact rational points: membership, 1-neighbours,
chains, best-fit helpers and bivalency certificates.

A family F is a set of location multisets of size ``arity`` (n correct robots
plus one Byzantine). Two patterns are 1-neighbours when they share at least
n points, and F1 is every pattern sharing at least n points with a member.
Circles and lines carry an invariant (their supporting curve). Whenever two
neighbouring F1 patterns must share enough points to pin that curve down,
the invariant separates equivalence classes.
"""

from __future__ import annotations

import itertools
import math
import random
from collections import Counter, deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Any, Callable, Iterable, Iterator, Optional, Sequence

from . import codec
from .geometry import LocationMultiset, Point, pt

Support = tuple  # canonical key of a circle (cx, cy, r2) or line (a, b, c)


# -- exact predicates ----------------------------------------------------------

def cross(o: Point, a: Point, b: Point) -> Fraction:
    return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)


def collinear(a: Point, b: Point, c: Point) -> bool:
    return cross(a, b, c) == 0


def _det3(m: Sequence[Sequence[Fraction]]) -> Fraction:
    return (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))


def det4(m: Sequence[Sequence[Fraction]]) -> Fraction:
    total = Fraction(0)
    for c in range(4):
        minor = [[row[k] for k in range(4) if k != c] for row in m[1:]]
        total += (-1) ** c * m[0][c] * _det3(minor)
    return total


def concyclic4(a: Point, b: Point, c: Point, d: Point) -> bool:
    """The four points lie on one circle or one line (|x^2+y^2 x y 1| = 0)."""
    return det4([[p.x * p.x + p.y * p.y, p.x, p.y, Fraction(1)] for p in (a, b, c, d)]) == 0


def circle_through(a: Point, b: Point, c: Point) -> Optional[Support]:
    """Canonical (cx, cy, r^2) of the circle through three points, None if collinear."""
    d = 2 * cross(a, b, c)
    if d == 0:
        return None
    a2, b2, c2 = a.x ** 2 + a.y ** 2, b.x ** 2 + b.y ** 2, c.x ** 2 + c.y ** 2
    cx = (a2 * (b.y - c.y) + b2 * (c.y - a.y) + c2 * (a.y - b.y)) / d
    cy = (a2 * (c.x - b.x) + b2 * (a.x - c.x) + c2 * (b.x - a.x)) / d
    return (cx, cy, (a.x - cx) ** 2 + (a.y - cy) ** 2)


def on_circle(p: Point, circle: Support) -> bool:
    cx, cy, r2 = circle
    return (p.x - cx) ** 2 + (p.y - cy) ** 2 == r2


def line_through(a: Point, b: Point) -> Support:
    """Canonical (a, b, c) with ax + by = c and the first nonzero of (a, b) equal to 1."""
    if a == b:
        raise ValueError("a line needs two distinct points")
    la, lb = b.y - a.y, a.x - b.x
    lc = la * a.x + lb * a.y
    s = la if la != 0 else lb
    return (la / s, lb / s, lc / s)


def on_line(p: Point, line: Support) -> bool:
    return line[0] * p.x + line[1] * p.y == line[2]


def encode_support(support: Optional[Support]) -> Optional[tuple[str, ...]]:
    return None if support is None else tuple(codec.encode_rational(v) for v in support)


# -- membership ----------------------------------------------------------------

def _distinct(points: Sequence[Point]) -> bool:
    return len(set(points)) == len(points)


def circle_membership(points: Iterable[Point]) -> bool:
    """Distinct points on one genuine circle (collinear sets are excluded)."""
    p = list(points)
    if len(p) < 3 or not _distinct(p):
        return False
    base = next(((a, b, c) for a, b, c in itertools.combinations(p, 3) if not collinear(a, b, c)), None)
    if base is None:
        return False
    return all(concyclic4(*base, q) for q in p if q not in base)


def line_membership(points: Iterable[Point]) -> bool:
    p = list(points)
    if len(p) < 2 or not _distinct(p):
        return False
    return all(collinear(p[0], p[1], q) for q in p[2:])


def two_gathering_membership(points: Iterable[Point]) -> bool:
    return len(set(points)) <= 2


# -- best fit ------------------------------------------------------------------

@dataclass(frozen=True)
class BestFit:
    """Best F-member P' for a location multiset L.

    ``count`` is max over members P of |L n P|; ``helper`` is the canonical
    point of P' \\ L (None when L already fills P').
    """

    pattern: tuple[Point, ...]
    count: int
    helper: Optional[Point]
    support: Any


def _directions() -> Iterator[tuple[int, int]]:
    """Primitive integer directions in a fixed order of growing size."""
    from math import gcd

    size = 1
    while True:
        ring = [(p, q) for p in range(0, size + 1) for q in range(-size, size + 1)
                if max(abs(p), abs(q)) == size and (p > 0 or q > 0) and gcd(p, q) == 1]
        yield from sorted(ring)
        size += 1


def circle_points(circle: Support, anchor: Point) -> Iterator[Point]:
    """Rational points of a circle, from second intersections of lines through ``anchor``."""
    cx, cy, r2 = circle
    if not on_circle(anchor, circle):
        raise ValueError("anchor is not on the circle")
    ax, ay = anchor.x - cx, anchor.y - cy
    for dx, dy in _directions():
        s = -2 * (dx * ax + dy * ay) / Fraction(dx * dx + dy * dy)
        if s != 0:
            yield Point(anchor.x + s * dx, anchor.y + s * dy)


def line_points(line: Support, anchor: Point) -> Iterator[Point]:
    a, b, _ = line
    d = Point(b, -a)
    k = 1
    while True:
        yield Point(anchor.x + k * d.x, anchor.y + k * d.y)
        yield Point(anchor.x - k * d.x, anchor.y - k * d.y)
        k += 1


def _complete(points_iter: Iterator[Point], taken: set[Point], need: int) -> list[Point]:
    out: list[Point] = []
    for q in points_iter:
        if len(out) >= need:
            break
        if q not in taken and q not in out:
            out.append(q)
    return sorted(out)


def _fit_curve(arity: int, locs: Sequence[Point], found: tuple[Support, list[Point], Point],
               points_of: Callable[[Support, Point], Iterator[Point]]) -> BestFit:
    support, on_it, anchor = found
    kept = on_it[:arity]
    extra = _complete(points_of(support, anchor), set(locs), arity - len(kept))
    helper = extra[0] if extra else None
    return BestFit(tuple(sorted(kept + extra)), len(kept), helper, support)


def _circle_fallback(distinct: list[Point]) -> tuple[Support, Point]:
    if len(distinct) >= 2:
        a, b = distinct[0], distinct[1]
        c = Point((a.x + b.x) / 2, (a.y + b.y) / 2)
        return (c.x, c.y, (a.x - c.x) ** 2 + (a.y - c.y) ** 2), a
    a = distinct[0] if distinct else pt(0, 0)
    return (a.x + 1, a.y, Fraction(1)), a


def _line_fallback(distinct: list[Point]) -> tuple[Support, Point]:
    a = distinct[0] if distinct else pt(0, 0)
    return (Fraction(0), Fraction(1), a.y), a


def _integral(points: Sequence[Point]) -> list[tuple[int, int]]:
    """Points scaled by a common denominator; incidence tests become integer ones."""
    d = 1
    for p in points:
        d = math.lcm(d, p.x.denominator, p.y.denominator)
    return [(int(p.x * d), int(p.y * d)) for p in points]


def _best_sets(distinct: Sequence[Point], size: int,
               hits: Callable[[list[tuple[int, int]], tuple[int, ...], int], bool]) -> list[int]:
    """Bitmasks of the largest point sets cut out by supports through ``size`` points."""
    z = _integral(distinct)
    best: set[int] = set()
    top = 0
    for base in itertools.combinations(range(len(z)), size):
        if not hits(z, base, -1):
            continue
        mask = 0
        for k in range(len(z)):
            if k in base or hits(z, base, k):
                mask |= 1 << k
        c = mask.bit_count()
        if c > top:
            top, best = c, {mask}
        elif c == top:
            best.add(mask)
    return sorted(best)


def _circle_hits(z: list[tuple[int, int]], base: tuple[int, ...], k: int) -> bool:
    (ax, ay), (bx, by), (cx, cy) = (z[i] for i in base)
    if k < 0:  # the base must not be collinear
        return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax) != 0
    dx, dy = z[k]
    rows = [(px - ax, py - ay) for px, py in ((bx, by), (cx, cy), (dx, dy))]
    m = [(u, v, u * u + v * v) for u, v in rows]
    return (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])) == 0


def _line_hits(z: list[tuple[int, int]], base: tuple[int, ...], k: int) -> bool:
    if k < 0:
        return True
    (ax, ay), (bx, by) = (z[i] for i in base)
    px, py = z[k]
    return (bx - ax) * (py - ay) - (by - ay) * (px - ax) == 0


def _support_from_sets(distinct: list[Point], masks: list[int], size: int,
                       make: Callable[..., Optional[Support]], on: Callable[[Point, Support], bool],
                       fallback: Callable[[list[Point]], tuple[Support, Point]]) -> tuple[Support, list[Point], Point]:
    if not masks:
        support, anchor = fallback(distinct)
        return support, [p for p in distinct if on(p, support)], anchor
    options = []
    for m in masks:
        on_it = [p for k, p in enumerate(distinct) if m >> k & 1]
        options.append((make(*on_it[:size]), on_it))
    support, on_it = min(options)
    return support, on_it, on_it[0]


@lru_cache(maxsize=1 << 16)
def circle_support(locs: tuple[Point, ...]) -> tuple[Support, list[Point], Point]:
    """Circle through the most distinct points (ties: smallest (cx, cy, r^2))."""
    distinct = sorted(set(locs))
    masks = _best_sets(distinct, 3, _circle_hits)
    return _support_from_sets(distinct, masks, 3, circle_through, on_circle, _circle_fallback)


@lru_cache(maxsize=1 << 16)
def line_support(locs: tuple[Point, ...]) -> tuple[Support, list[Point], Point]:
    """Line through the most distinct points (ties: smallest (a, b, c))."""
    distinct = sorted(set(locs))
    masks = _best_sets(distinct, 2, _line_hits)
    return _support_from_sets(distinct, masks, 2, line_through, on_line, _line_fallback)


def best_fit_circle(arity: int, locs: Sequence[Point]) -> BestFit:
    return _fit_curve(arity, locs, circle_support(tuple(sorted(locs))), circle_points)


def best_fit_line(arity: int, locs: Sequence[Point]) -> BestFit:
    return _fit_curve(arity, locs, line_support(tuple(sorted(locs))), line_points)


def best_fit_two_gathering(arity: int, locs: Sequence[Point]) -> BestFit:
    ranked = sorted(Counter(locs).items(), key=lambda kv: (-kv[1], kv[0]))[:2]
    if not ranked:
        return BestFit((pt(0, 0),) * arity, 0, pt(0, 0), ())
    kept: list[Point] = []
    for p, k in ranked:
        kept += [p] * k
    kept = kept[:arity]
    top = ranked[0][0]
    fill = arity - len(kept)
    pattern = tuple(sorted(kept + [top] * fill))
    return BestFit(pattern, len(kept), top if fill else None, tuple(p for p, _ in ranked))


# -- families --------------------------------------------------------------------

@dataclass(frozen=True)
class FormationSpec:
    """A formation family of multisets with ``arity`` = n + 1 locations."""

    name: str
    arity: int
    membership: Callable[[Sequence[Point]], bool]
    fit: Callable[[int, Sequence[Point]], BestFit]
    support_of: Optional[Callable[[tuple[Point, ...]], tuple[Support, list[Point], Point]]] = field(default=None, repr=False)
    has_invariant: bool = False
    kernel_bound: Optional[int] = None  # most points two distinct supports share
    on_support: Optional[Callable[[Point, Support], bool]] = field(default=None, repr=False)
    support_points: Optional[Callable[[Support, Point], Iterator[Point]]] = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.arity - 1

    def _check(self, points: Sequence[Point]) -> list[Point]:
        p = list(points)
        if len(p) != self.arity:
            raise ValueError(f"{self.name} patterns have {self.arity} points, got {len(p)}")
        return p

    def member(self, points: Sequence[Point]) -> bool:
        return self.membership(self._check(points))

    def best_fit(self, points: Sequence[Point]) -> BestFit:
        return self.fit(self.arity, list(points))

    def fit_count(self, points: Sequence[Point]) -> tuple[int, Any]:
        """(max |L n P| over members P, the best support), without completing P."""
        if self.support_of is None:
            fit = self.best_fit(points)
            return fit.count, fit.support
        support, on_it, _ = self.support_of(tuple(sorted(points)))
        return min(len(on_it), self.arity), support

    def in_f1(self, points: Sequence[Point]) -> bool:
        """Shares at least n points with some member."""
        return self.fit_count(self._check(points))[0] >= self.n

    def correct_member(self, points: Sequence[Point]) -> bool:
        """The n correct locations are a sub-multiset of some member."""
        p = list(points)
        if len(p) != self.n:
            raise ValueError(f"expected {self.n} correct locations, got {len(p)}")
        return self.fit_count(p)[0] == self.n

    def invariant(self, points: Sequence[Point]) -> Optional[tuple[str, ...]]:
        """Supporting curve holding at least n of the points, canonically encoded."""
        if not self.has_invariant:
            raise ValueError(f"the {self.name} family has no invariant")
        count, support = self.fit_count(points)
        if count < self.n:
            return None
        return encode_support(support)

    def neighbor(self, points: Sequence[Point], rng: random.Random, spread: int = 6) -> tuple[Point, ...]:
        """A random F1 1-neighbour: one entry replaced, keeping n on a member."""
        p = self._check(points)
        while True:
            q = list(p)
            i = rng.randrange(len(q))
            if self.support_points is not None and rng.random() < 0.5:
                support, _, anchor = self.support_of(tuple(sorted(p)))
                gen = self.support_points(support, anchor)
                q[i] = next(itertools.islice(gen, rng.randrange(12), None))
            elif self.name == "2-gathering" and rng.random() < 0.5:
                q[i] = rng.choice(p)
            else:
                q[i] = pt(Fraction(rng.randint(-spread, spread), rng.randint(1, 3)),
                          Fraction(rng.randint(-spread, spread), rng.randint(1, 3)))
            q.sort()
            if self.in_f1(q):
                return tuple(q)


def one_neighbor(p: Sequence[Point], q: Sequence[Point], n: Optional[int] = None) -> bool:
    """|P n Q| >= n as multisets (n defaults to |P| - 1)."""
    if len(p) != len(q):
        raise ValueError(f"cardinality mismatch: {len(p)} vs {len(q)}")
    n = len(p) - 1 if n is None else n
    return LocationMultiset(p).intersection_size(LocationMultiset(q)) >= n


FORMATION_NAMES = ("circle", "line", "2-gathering")


def get_formation(name: str, arity: int) -> FormationSpec:
    if arity < 4:
        raise ValueError(f"formations need n + 1 >= 4 robots, got {arity}")
    if name == "circle":
        return FormationSpec("circle", arity, circle_membership, best_fit_circle, circle_support,
                             True, 2, on_circle, circle_points)
    if name == "line":
        return FormationSpec("line", arity, line_membership, best_fit_line, line_support,
                             True, 1, on_line, line_points)
    if name == "2-gathering":
        return FormationSpec("2-gathering", arity, two_gathering_membership, best_fit_two_gathering)
    raise ValueError(f"unknown formation {name!r}; choose from {', '.join(FORMATION_NAMES)}")


def best_fit(formation: FormationSpec, locs: Iterable[Point]) -> BestFit:
    """M_F and m_F: the member sharing most points with ``locs`` and its completion."""
    return formation.best_fit(list(locs))


def sample_member(formation: FormationSpec, rng: random.Random, spread: int = 8) -> tuple[Point, ...]:
    """A random member of the family with small rational coordinates."""
    def rand_point() -> Point:
        return pt(rng.randint(-spread, spread), rng.randint(-spread, spread))

    a = formation.arity
    while True:
        if formation.name == "2-gathering":
            p0, p1 = rand_point(), rand_point()
            k = rng.randint(0, a)
            return tuple(sorted([p0] * k + [p1] * (a - k)))
        x, y = rand_point(), rand_point()
        if x == y:
            continue
        if formation.name == "line":
            support, anchor = line_through(x, y), x
        else:
            z = rand_point()
            support = circle_through(x, y, z)
            if support is None:
                continue
            anchor = x
        pts = [anchor] + list(itertools.islice(formation.support_points(support, anchor), 3 * a))
        pts = sorted(set(pts))
        rng.shuffle(pts)
        return tuple(sorted(pts[:a]))


# -- chains ----------------------------------------------------------------------

@dataclass(frozen=True)
class Chain:
    patterns: tuple[tuple[Point, ...], ...]

    def __len__(self) -> int:
        return len(self.patterns)

    def verify(self, formation: FormationSpec) -> list[str]:
        """Independent re-check of every element and edge; empty when sound."""
        problems = []
        for k, p in enumerate(self.patterns):
            if not formation.in_f1(p):
                problems.append(f"element {k} is not in F1")
        for k, (p, q) in enumerate(zip(self.patterns, self.patterns[1:])):
            if not one_neighbor(p, q, formation.n):
                problems.append(f"edge {k} shares fewer than {formation.n} points")
        return problems

    def to_json(self) -> list:
        return [[codec.encode_point(x) for x in p] for p in self.patterns]


def _replace_one(p: list[Point], old: Point, new: Point) -> list[Point]:
    q = list(p)
    q[q.index(old)] = new
    return sorted(q)


def _two_gathering_chain(p: Sequence[Point], q: Sequence[Point]) -> Chain:
    """P ~ Q ~ Q' ~ P': gather P on its majority point, walk it over to P''s
    majority point one robot at a time, then spread to P'."""
    def majority(x: Sequence[Point]) -> Point:
        return sorted(Counter(x).items(), key=lambda kv: (-kv[1], kv[0]))[0][0]

    cur = sorted(p)
    out = [tuple(cur)]
    m0, m1 = majority(p), majority(q)
    for x in sorted(set(p) - {m0}):
        while x in cur:
            cur = _replace_one(cur, x, m0)
            out.append(tuple(cur))
    if m0 != m1:
        while m0 in cur:
            cur = _replace_one(cur, m0, m1)
            out.append(tuple(cur))
    for x in sorted(q):
        if x != m1 and Counter(cur)[x] < Counter(q)[x]:
            while Counter(cur)[x] < Counter(q)[x]:
                cur = _replace_one(cur, m1, x)
                out.append(tuple(cur))
    if tuple(cur) != tuple(sorted(q)):
        raise AssertionError("two-gathering chain construction missed its target")
    return Chain(tuple(out))


def same_class_chain(formation: FormationSpec, p: Sequence[Point], q: Sequence[Point],
                     strategy: str = "auto", max_nodes: int = 2000, branching: int = 8,
                     seed: int = 0) -> Optional[Chain]:
    """A verified chain of 1-neighbours from P to P', or None within the bound.

    None only means the bounded search gave up; it never proves separation.
    """
    p, q = tuple(sorted(p)), tuple(sorted(q))
    for name, x in (("P", p), ("P'", q)):
        if not formation.in_f1(x):
            raise ValueError(f"{name} is not in F1 of the {formation.name} family")
    if p == q:
        return Chain((p,))
    if strategy == "auto":
        strategy = "explicit" if formation.name == "2-gathering" else "search"
    if strategy == "explicit":
        if formation.name != "2-gathering":
            raise ValueError("the explicit construction exists only for 2-gathering")
        chain = _two_gathering_chain(p, q)
    elif strategy == "search":
        chain = _search_chain(formation, p, q, max_nodes, branching, seed)
        if chain is None:
            return None
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    problems = chain.verify(formation)
    if problems:
        raise AssertionError(f"chain failed verification: {problems}")
    return chain


def _search_chain(formation: FormationSpec, p: tuple, q: tuple, max_nodes: int,
                  branching: int, seed: int) -> Optional[Chain]:
    rng = random.Random(seed)
    parent: dict[tuple, Optional[tuple]] = {p: None}
    frontier = deque([p])
    while frontier and len(parent) < max_nodes:
        cur = frontier.popleft()
        if one_neighbor(cur, q, formation.n):
            path = [q, cur]
            while parent[path[-1]] is not None:
                path.append(parent[path[-1]])
            return Chain(tuple(reversed(path)))
        for _ in range(branching):
            nxt = formation.neighbor(cur, rng)
            if nxt not in parent:
                parent[nxt] = cur
                frontier.append(nxt)
    return None


# -- bivalency certificates -------------------------------------------------------

def _grid_supports(formation_name: str, size: int, min_points: int) -> tuple[list[Point], list[Support], list[int]]:
    """Grid points, and every support through grid points with its point bitmask."""
    grid = [pt(x, y) for x in range(size) for y in range(size)]
    found: dict[Support, int] = {}
    if formation_name == "circle":
        combos = (circle_through(a, b, c) for a, b, c in itertools.combinations(grid, 3))
        on = on_circle
    elif formation_name == "line":
        combos = (line_through(a, b) for a, b in itertools.combinations(grid, 2))
        on = on_line
    else:
        raise ValueError(f"no supports for {formation_name!r}")
    for s in combos:
        if s is not None and s not in found:
            found[s] = sum(1 << k for k, p in enumerate(grid) if on(p, s))
    keys = sorted(s for s, m in found.items() if m.bit_count() >= min_points)
    return grid, keys, [found[s] for s in keys]


def kernel_fact(formation_name: str, size: int = 5) -> dict:
    """Exhaustively check that distinct supports through grid points share at
    most the kernel bound of grid points (2 for circles, 1 for lines)."""
    bound = {"circle": 2, "line": 1}.get(formation_name)
    if bound is None:
        raise ValueError(f"no kernel fact for {formation_name!r}")
    _, keys, masks = _grid_supports(formation_name, size, 0)
    worst, witness = 0, None
    for a, b in itertools.combinations(range(len(keys)), 2):
        k = (masks[a] & masks[b]).bit_count()
        if k > worst:
            worst, witness = k, (keys[a], keys[b])
    return {"formation": formation_name, "grid": size, "supports": len(keys),
            "pairs": len(keys) * (len(keys) - 1) // 2, "max_shared": worst, "bound": bound,
            "holds": worst <= bound,
            "witness": None if worst <= bound else [encode_support(s) for s in witness]}


@lru_cache(maxsize=None)
def grid_step_invariance(formation_name: str, arity: int, size: int = 5) -> dict:
    """Every F1 pattern on a size x size grid against every grid 1-neighbour in F1.

    An F1 pattern is n distinct points on a support plus one more grid point;
    a neighbour replaces a single entry by any grid point. Its invariant is
    the support holding at least n of its distinct points.
    """
    n = arity - 1
    grid, keys, masks = _grid_supports(formation_name, size, n)
    by_point: list[list[int]] = [[] for _ in grid]
    for sid, m in enumerate(masks):
        for k in range(len(grid)):
            if m >> k & 1:
                by_point[k].append(sid)

    def held(candidates: Iterable[int], dmask: int) -> Any:
        h = tuple(sorted(sid for sid in candidates if (masks[sid] & dmask).bit_count() >= n))
        return h if h else None

    seen: set[tuple[int, ...]] = set()
    pairs = changes = 0
    witness = None
    for sid, m in enumerate(masks):
        on = [k for k in range(len(grid)) if m >> k & 1]
        for core in itertools.combinations(on, n):
            for extra in range(len(grid)):
                pat = tuple(sorted(core + (extra,)))
                if pat in seen:
                    continue
                seen.add(pat)
                dmask = 0
                for k in pat:
                    dmask |= 1 << k
                # one replacement moves a support's tally by at most one
                tally = Counter(s for k in set(pat) for s in by_point[k])
                cands = [s for s, c in tally.items() if c >= n - 1]
                inv = held(cands, dmask)
                for i, a in enumerate(pat):
                    base = dmask if pat.count(a) > 1 else dmask & ~(1 << a)
                    for r in range(len(grid)):
                        if r == a:
                            continue
                        inv2 = held(cands, base | 1 << r)
                        if inv2 is None:
                            continue
                        pairs += 1
                        if inv2 != inv:
                            changes += 1
                            if witness is None:
                                nb = sorted(pat[:i] + (r,) + pat[i + 1:])
                                witness = {"from": [codec.encode_point(grid[k]) for k in pat],
                                           "to": [codec.encode_point(grid[k]) for k in nb]}
    return {"grid": size, "patterns": len(seen), "pairs": pairs, "changes": changes,
            "holds": changes == 0, "witness": witness}


def fuzz_step_invariance(formation: FormationSpec, starts: Sequence[Sequence[Point]], pairs: int,
                         seed: int = 0, walk: int = 25) -> dict:
    """Random walks through F1 from each start, comparing invariants per step."""
    rng = random.Random(seed)
    done = changes = 0
    witness = None
    while done < pairs:
        cur = tuple(sorted(starts[done % len(starts)]))
        for _ in range(min(walk, pairs - done)):
            nxt = formation.neighbor(cur, rng)
            done += 1
            if formation.invariant(cur) != formation.invariant(nxt):
                changes += 1
                if witness is None:
                    witness = {"from": [codec.encode_point(x) for x in cur],
                               "to": [codec.encode_point(x) for x in nxt]}
            cur = nxt
    return {"pairs": done, "changes": changes, "holds": changes == 0, "witness": witness}


def check_bivalency_witness(formation: FormationSpec, pattern: Sequence[Point], x: Point,
                            fuzz_pairs: int = 10_000, grid: Optional[int] = 5, seed: int = 0) -> dict:
    """Certify that P and P + x lie in different classes of F1 under ~.

    The argument: the invariants differ, and it is constant on every
    1-neighbour step because two neighbouring F1 patterns share at least
    n - 2 points lying on both supports, which exceeds what two distinct
    supports can share. Fuzzing and an exhaustive grid sweep back this up.
    """
    p = tuple(sorted(pattern))
    px = tuple(sorted(a + x for a in p))
    cert: dict[str, Any] = {
        "formation": formation.name,
        "arity": formation.arity,
        "pattern": [codec.encode_point(a) for a in p],
        "x": codec.encode_point(x),
        "member": formation.member(p),
    }
    if not cert["member"]:
        cert.update(certified=False, reason="the pattern is not a member of the family")
        return cert
    if not formation.has_invariant:
        chain = same_class_chain(formation, p, px)
        cert.update(certified=False, reason=f"the {formation.name} family has no separating invariant",
                    chain=None if chain is None else chain.to_json(),
                    chain_length=None if chain is None else len(chain))
        return cert
    inv0, inv1 = formation.invariant(p), formation.invariant(px)
    n = formation.n
    shared = n - 2  # common points, minus one off-support point on each side
    bound_ok = shared > formation.kernel_bound
    cert.update(invariants=[inv0, inv1], separated=inv0 != inv1,
                shared_on_both=shared, kernel_bound=formation.kernel_bound, bound_argument=bound_ok)
    fuzz = fuzz_step_invariance(formation, [p, px], fuzz_pairs, seed) if fuzz_pairs else None
    sweep = grid_step_invariance(formation.name, formation.arity, grid) if grid else None
    cert["fuzz"] = fuzz
    cert["grid"] = sweep
    reasons = []
    if not cert["separated"]:
        reasons.append("P and P + x have the same supporting curve")
    if not bound_ok:
        reasons.append(f"neighbouring F1 patterns need only share {shared} points on both supports, "
                       f"and two distinct {formation.name}s can share {formation.kernel_bound}")
    if fuzz is not None and not fuzz["holds"]:
        reasons.append(f"fuzzing found {fuzz['changes']} invariant changes")
    if sweep is not None and not sweep["holds"]:
        reasons.append(f"the grid sweep found {sweep['changes']} invariant changes")
    cert["certified"] = not reasons
    cert["reason"] = "; ".join(reasons) if reasons else "separated supports, step-invariant"
    return cert
