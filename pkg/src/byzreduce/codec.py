"""Canonical JSON encoding for points, local states, configurations and values.

Rationals are written as ``"p/q"`` strings. Output of :func:`dumps` is
byte-stable: sorted keys, fixed separators, trailing newline.
"""

from __future__ import annotations

import json
from fractions import Fraction
from typing import Any

from .geometry import Configuration, LocalState, LocationMultiset, Point


def encode_rational(q: Fraction) -> str:
    return f"{q.numerator}/{q.denominator}"


def decode_rational(s: str | int) -> Fraction:
    return Fraction(s)


def encode_point(p: Point) -> list[str]:
    return [encode_rational(p.x), encode_rational(p.y)]


def decode_point(obj: list) -> Point:
    if not isinstance(obj, list) or len(obj) != 2:
        raise ValueError(f"malformed point: {obj!r}")
    return Point(decode_rational(obj[0]), decode_rational(obj[1]))


def encode_state(state: Any) -> Any:
    """Internal states must be JSON scalars or (nested) tuples of them."""
    if isinstance(state, tuple):
        return [encode_state(s) for s in state]
    if state is None or isinstance(state, (bool, int, str)):
        return state
    raise TypeError(f"unserializable robot state {state!r}")


def decode_state(obj: Any) -> Any:
    if isinstance(obj, list):
        return tuple(decode_state(s) for s in obj)
    return obj


def encode_local(ls: LocalState) -> dict:
    return {"state": encode_state(ls.state), "loc": encode_point(ls.location)}


def decode_local(obj: dict) -> LocalState:
    return LocalState(decode_state(obj["state"]), decode_point(obj["loc"]))


def encode_config(c: Configuration) -> list[dict]:
    return [encode_local(r) for r in c.robots]


def decode_config(obj: list) -> Configuration:
    return Configuration(tuple(decode_local(r) for r in obj))


def encode_multiset(m: LocationMultiset) -> list[list[str]]:
    return [encode_point(p) for p in m.points]


def decode_multiset(obj: list) -> LocationMultiset:
    return LocationMultiset(decode_point(p) for p in obj)


def encode_value(v: Any) -> Any:
    """Tagged encoding for values stored in shared-memory cells."""
    if isinstance(v, LocalState):
        return {"local": encode_local(v)}
    if isinstance(v, Point):
        return {"point": encode_point(v)}
    if v is None or isinstance(v, (bool, int, str)):
        return v
    if isinstance(v, tuple):
        return {"tuple": [encode_value(x) for x in v]}
    raise TypeError(f"unserializable cell value {v!r}")


def decode_value(obj: Any) -> Any:
    if isinstance(obj, dict):
        if "local" in obj:
            return decode_local(obj["local"])
        if "point" in obj:
            return decode_point(obj["point"])
        if "tuple" in obj:
            return tuple(decode_value(x) for x in obj["tuple"])
        raise ValueError(f"unknown tagged value {obj!r}")
    return obj


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, ensure_ascii=True) + "\n"
