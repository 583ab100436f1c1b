"""Fixed points, periodic orbits, multipliers and corner itineraries."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .errors import (CornerOutsideCycle, IterateHitsCorner,
                     MultipleCornersInInterval, OrbitThroughCorner,
                     PointOutsideCycle)
from .logvalue import LogValue
from .plmap import (DEFAULT_PIECE_BUDGET, IntervalQ, PiecewiseAffine, Q,
                    Side, corners, is_corner, iterate, iterate_on, orbit_of,
                    slope_at)


@dataclass(frozen=True)
class PeriodicOrbit:
    """Orbit listed in dynamical order starting from its smallest point."""

    points: tuple[Fraction, ...]

    @property
    def period(self) -> int:
        return len(self.points)

    @property
    def base(self) -> Fraction:
        return self.points[0]

    @classmethod
    def through(cls, f: PiecewiseAffine, x, period: int) -> PeriodicOrbit:
        pts = orbit_of(f, x, period - 1)
        i = pts.index(min(pts))
        return cls(tuple(pts[i:] + pts[:i]))


@dataclass(frozen=True)
class FixedSegment:
    interval: IntervalQ


@dataclass(frozen=True)
class Multiplier:
    log_abs: LogValue
    sign: int

    @property
    def value(self) -> Fraction:
        return self.sign * self.log_abs.mantissa


@dataclass(frozen=True)
class SigmaVector:
    """``(corner index, ±1)`` pairs, one per corner of the map."""

    signs: tuple[tuple[int, int], ...]
    slots: tuple[int, ...] = ()


def fixed_points(f: PiecewiseAffine):
    pts, segs = f.kernel.fixed_points()
    return list(pts), [FixedSegment(IntervalQ(a, b)) for a, b in segs]


def minimal_period(f: PiecewiseAffine, x, bound: int) -> int | None:
    """Smallest ``k <= bound`` with ``f^k(x) = x``."""
    k = f.kernel
    y = Q(x)
    for n in range(1, bound + 1):
        y = k.evaluate(y)
        if y == x:
            return n
    return None


def periodic_points(f: PiecewiseAffine, p: int, piece_budget: int = DEFAULT_PIECE_BUDGET):
    """Orbits of minimal period exactly ``p`` plus the diagonal segments of ``f^p``."""
    if p < 1:
        raise ValueError("period must be >= 1")
    g = iterate(f, p, piece_budget)
    pts, segs = fixed_points(g)
    return _group(f, pts, p), segs


def periodic_points_in(f: PiecewiseAffine, p: int, interval: IntervalQ,
                       piece_budget: int = DEFAULT_PIECE_BUDGET):
    """As :func:`periodic_points`, but only orbits through ``interval``."""
    g = iterate_on(f, p, interval, piece_budget)
    pts, segs = fixed_points(g)
    return _group(f, pts, p), segs


def _group(f, pts, p):
    seen = set()
    orbits = []
    for x in pts:
        if x in seen or minimal_period(f, x, p) != p:
            continue
        orb = PeriodicOrbit.through(f, x, p)
        seen.update(orb.points)
        orbits.append(orb)
    orbits.sort(key=lambda o: o.base)
    return orbits


def multiplier(f: PiecewiseAffine, orbit: PeriodicOrbit) -> Multiplier:
    m = Fraction(1)
    for x in orbit.points:
        if is_corner(f, x):
            raise OrbitThroughCorner(f"orbit passes through the corner {x}", point=x)
        side = Side.RIGHT if x < f.breakpoints[-1] else Side.LEFT
        m *= slope_at(f, x, side)
    return Multiplier(LogValue(abs(m)), 1 if m > 0 else -1)


def one_sided_multipliers(f: PiecewiseAffine, orbit: PeriodicOrbit):
    """Products of left and right slopes along an orbit, for corner orbits."""
    out = []
    for side in (Side.LEFT, Side.RIGHT):
        m = Fraction(1)
        for x in orbit.points:
            s = side
            if x == f.breakpoints[0]:
                s = Side.RIGHT
            elif x == f.breakpoints[-1]:
                s = Side.LEFT
            m *= slope_at(f, x, s)
        out.append(Multiplier(LogValue(abs(m)), 1 if m > 0 else -1))
    return tuple(out)


def corner_slots(f: PiecewiseAffine, cycle) -> list[int]:
    """Index of the cycle interval holding each corner, enforcing one per interval."""
    slots = []
    for c in corners(f):
        hits = [k for k, J in enumerate(cycle.intervals) if c.location in J]
        if not hits:
            raise CornerOutsideCycle(f"corner {c.location} lies in no cycle interval")
        slots.append(hits[0])
    if len(set(slots)) != len(slots):
        raise MultipleCornersInInterval("a cycle interval contains more than one corner")
    return slots


def sigma_signs(f: PiecewiseAffine, cycle, x) -> SigmaVector:
    x = Q(x)
    if x not in cycle.intervals[0]:
        raise PointOutsideCycle(f"{x} is not in {cycle.intervals[0]}")
    slots = corner_slots(f, cycle)
    if not slots:
        return SigmaVector(())
    orbit = orbit_of(f, x, max(slots))
    signs = []
    for j, (c, k) in enumerate(zip(corners(f), slots)):
        y = orbit[k]
        if y == c.location:
            raise IterateHitsCorner(f"f^{k}({x}) equals the corner {y}")
        signs.append((j, 1 if y > c.location else -1))
    return SigmaVector(tuple(signs), tuple(slots))
