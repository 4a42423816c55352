"""
Simplification error measures: SED, PED, DAD and SAD
"""

import math
from enum import Enum
from typing import Optional, Sequence, Tuple

from trajectory import Point, Trajectory

Coord = Tuple[float, float, float]


class ErrorMeasure(str, Enum):
    """Point-error kernels used by the error-driven simplifiers"""
    SED = "sed"
    PED = "ped"
    DAD = "dad"
    SAD = "sad"

    @classmethod
    def parse(cls, name: str) -> "ErrorMeasure":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValueError(f"Unknown error measure {name!r}; expected one of {[m.value for m in cls]}")


def sed(ps: Coord, pe: Coord, p: Coord) -> float:
    """Distance from p to the synchronized position on ps->pe at p's time"""
    dt = pe[2] - ps[2]
    if dt == 0:
        return math.hypot(p[0] - ps[0], p[1] - ps[1])
    ratio = (p[2] - ps[2]) / dt
    sx = ps[0] + (pe[0] - ps[0]) * ratio
    sy = ps[1] + (pe[1] - ps[1]) * ratio
    return math.hypot(p[0] - sx, p[1] - sy)


def ped(ps: Coord, pe: Coord, p: Coord) -> float:
    """Perpendicular distance from p to the line through ps and pe"""
    dx = pe[0] - ps[0]
    dy = pe[1] - ps[1]
    length = math.hypot(dx, dy)
    if length == 0:
        return math.hypot(p[0] - ps[0], p[1] - ps[1])
    return abs(dx * (p[1] - ps[1]) - dy * (p[0] - ps[0])) / length


def dad(ps: Coord, pe: Coord, p: Coord, p_next: Coord) -> float:
    """Unsigned heading difference in [0, pi] between p->p_next and ps->pe"""
    ax = pe[0] - ps[0]
    ay = pe[1] - ps[1]
    bx = p_next[0] - p[0]
    by = p_next[1] - p[1]
    if (ax == 0 and ay == 0) or (bx == 0 and by == 0):
        return 0.0
    return abs(math.atan2(ax * by - ay * bx, ax * bx + ay * by))


def _speed(a: Coord, b: Coord) -> float:
    dt = b[2] - a[2]
    if dt == 0:
        return 0.0
    return math.hypot(b[0] - a[0], b[1] - a[1]) / abs(dt)


def sad(ps: Coord, pe: Coord, p: Coord, p_next: Coord) -> float:
    """Absolute difference between the speed of p->p_next and of ps->pe"""
    return abs(_speed(p, p_next) - _speed(ps, pe))


def _as_coord(p) -> Coord:
    if isinstance(p, Point):
        return (p.x, p.y, p.t)
    return p


def point_error(measure: ErrorMeasure, ps, pe, p, p_next=None) -> float:
    """
    Error of point p against the anchor segment ps->pe

    Args:
        measure: Error kernel
        ps, pe: Anchor segment endpoints (Point or (x, y, t))
        p: Original point
        p_next: Point following p in the original trajectory (DAD and SAD only)

    Returns:
        Nonnegative error (meters, radians or meters/second)
    """
    measure = ErrorMeasure(measure)
    ps, pe, p = _as_coord(ps), _as_coord(pe), _as_coord(p)
    if measure is ErrorMeasure.SED:
        return sed(ps, pe, p)
    if measure is ErrorMeasure.PED:
        return ped(ps, pe, p)
    if p_next is None:
        raise ValueError(f"{measure.name} needs the point following p")
    p_next = _as_coord(p_next)
    if measure is ErrorMeasure.DAD:
        return dad(ps, pe, p, p_next)
    return sad(ps, pe, p, p_next)


def _kernel(measure: ErrorMeasure):
    return {
        ErrorMeasure.SED: lambda ps, pe, p, nxt: sed(ps, pe, p),
        ErrorMeasure.PED: lambda ps, pe, p, nxt: ped(ps, pe, p),
        ErrorMeasure.DAD: dad,
        ErrorMeasure.SAD: sad,
    }[ErrorMeasure(measure)]


def segment_error(measure: ErrorMeasure, traj: Trajectory, start: int, end: int) -> float:
    """Max point error over indices [start, end) against segment start->end"""
    coords = traj.coords
    ps, pe = coords[start], coords[end]
    kernel = _kernel(measure)
    error = 0.0
    for i in range(start, end):
        e = kernel(ps, pe, coords[i], coords[i + 1])
        if e > error:
            error = e
    return error


def trajectory_error(measure: ErrorMeasure, traj: Trajectory, kept: Sequence[int]) -> float:
    """Max segment error over consecutive kept indices"""
    error = 0.0
    for start, end in zip(kept[:-1], kept[1:]):
        e = segment_error(measure, traj, start, end)
        if e > error:
            error = e
    return error


def max_error_point(measure: ErrorMeasure, traj: Trajectory, start: int, end: int) -> Tuple[float, Optional[int]]:
    """
    Interior point of (start, end) with the largest error, ties by smallest index

    Returns:
        (error, index), or (0.0, None) when the segment has no interior point
    """
    coords = traj.coords
    ps, pe = coords[start], coords[end]
    kernel = _kernel(measure)
    best, best_index = -1.0, None
    for i in range(start + 1, end):
        e = kernel(ps, pe, coords[i], coords[i + 1])
        if e > best:
            best, best_index = e, i
    if best_index is None:
        return 0.0, None
    return best, best_index
