"""Arithmetic on the circle S = R / 2piZ.

Angles are plain floats (or float arrays) kept in the canonical range
[0, 2pi).  Boundary membership uses the fixed tolerance ``BOUNDARY_TOL``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

TWO_PI = 2.0 * np.pi
BOUNDARY_TOL = 1e-12

__all__ = [
    "TWO_PI",
    "BOUNDARY_TOL",
    "wrap",
    "circ_dist",
    "signed_diff",
    "arc_length",
    "CircleInterval",
    "interval_contains",
]


def wrap(x):
    """Reduce radians to [0, 2pi).

    Works elementwise on arrays.  Non-finite input raises ``DomainError``.
    """
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("cannot wrap non-finite angle")
    out = np.mod(arr, TWO_PI)
    # np.mod(-1e-17, 2pi) rounds to 2pi
    out = np.where(out >= TWO_PI, 0.0, out)
    if out.ndim == 0:
        return float(out)
    return out


def circ_dist(a, b):
    """Geodesic distance |a - b|_S, a value in [0, pi]."""
    d = wrap(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    out = np.minimum(d, TWO_PI - d)
    if np.ndim(out) == 0:
        return float(out)
    return out


def signed_diff(a, b):
    """Representative of a - b in (-pi, pi]."""
    d = wrap(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    out = np.where(d > np.pi, d - TWO_PI, d)
    if np.ndim(out) == 0:
        return float(out)
    return out


def arc_length(start, end):
    """Length of the counterclockwise arc from ``start`` to ``end``."""
    return wrap(np.asarray(end, dtype=float) - np.asarray(start, dtype=float))


@dataclass(frozen=True)
class CircleInterval:
    """Open arc traversed counterclockwise from ``start`` to ``end``."""

    start: float
    end: float

    def __post_init__(self):
        object.__setattr__(self, "start", wrap(self.start))
        object.__setattr__(self, "end", wrap(self.end))

    @property
    def length(self) -> float:
        return arc_length(self.start, self.end)

    def reversed(self) -> "CircleInterval":
        return CircleInterval(self.end, self.start)

    def contains(self, x):
        return interval_contains(self, x)


def interval_contains(iv: CircleInterval, x):
    """True where ``x`` lies strictly inside the arc (boundary excluded).

    An arc with ``start == end`` is empty.
    """
    length = iv.length
    d = arc_length(iv.start, x)
    inside = (d > BOUNDARY_TOL) & (d < length - BOUNDARY_TOL)
    if np.ndim(inside) == 0:
        return bool(inside)
    return inside
