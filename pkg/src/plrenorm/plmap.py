"""Continuous piecewise-affine maps with exact rational nodes."""

from __future__ import annotations

import bisect
import contextlib
import contextvars
import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from ._kernel import KMap
from .errors import (DomainViolation, NonMonotoneBreakpoints, NotInvariant,
                     PieceBudgetExceeded, RangeViolation, ZeroSlopePiece)
from .logvalue import LogValue

DEFAULT_PIECE_BUDGET = 10 ** 6

_meter: contextvars.ContextVar[dict | None] = contextvars.ContextVar(
    "plrenorm_piece_meter", default=None)


@contextlib.contextmanager
def piece_meter():
    """Record the largest iterate built inside the block."""
    usage = {"max_pieces": 0, "compositions": 0}
    token = _meter.set(usage)
    try:
        yield usage
    finally:
        _meter.reset(token)


def _note_pieces(n):
    usage = _meter.get()
    if usage is not None:
        usage["compositions"] += 1
        if n > usage["max_pieces"]:
            usage["max_pieces"] = n


def Q(x) -> Fraction:
    """Coerce ints, Fractions and ``"p/q"`` strings to a Fraction."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        raise TypeError("floats are not accepted; pass an exact rational")
    return Fraction(x)


class Side(enum.Enum):
    LEFT = "left"
    RIGHT = "right"


class Orientation(enum.Enum):
    PRESERVE = "preserve"
    FLIP = "flip"
    AUTO = "auto"


@dataclass(frozen=True)
class IntervalQ:
    lo: Fraction
    hi: Fraction

    def __post_init__(self):
        lo, hi = Q(self.lo), Q(self.hi)
        if lo > hi:
            raise ValueError(f"interval endpoints out of order: [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def length(self) -> Fraction:
        return self.hi - self.lo

    @property
    def degenerate(self) -> bool:
        return self.lo == self.hi

    def __contains__(self, x) -> bool:
        return self.lo <= x <= self.hi

    def interior_contains(self, x) -> bool:
        return self.lo < x < self.hi

    def contains_interval(self, other: IntervalQ) -> bool:
        return self.lo <= other.lo and other.hi <= self.hi

    def meets(self, other: IntervalQ) -> bool:
        """Closed intervals share at least one point."""
        return not (self.hi < other.lo or other.hi < self.lo)

    def __str__(self):
        return f"[{self.lo}, {self.hi}]"


class PiecewiseAffine:
    """Continuous piecewise-affine function on ``[breakpoints[0], breakpoints[-1]]``.

    Nodes are stored immutably; restricted iterates produced by
    :func:`iterate_on` are instances of this class rather than :class:`PLMap`.
    """

    __slots__ = ("breakpoints", "values", "_k")

    def __init__(self, breakpoints, values, _kernel=None):
        object.__setattr__(self, "breakpoints", tuple(breakpoints))
        object.__setattr__(self, "values", tuple(values))
        object.__setattr__(self, "_k", _kernel)

    def __setattr__(self, name, value):
        raise AttributeError("maps are immutable")

    @property
    def kernel(self) -> KMap:
        k = self._k
        if k is None:
            k = KMap(self.breakpoints, self.values)
            object.__setattr__(self, "_k", k)
        return k

    @classmethod
    def _from_kernel(cls, k):
        return cls(k.breakpoints(), k.values(), _kernel=k)

    @property
    def domain(self) -> IntervalQ:
        return IntervalQ(self.breakpoints[0], self.breakpoints[-1])

    @property
    def npieces(self) -> int:
        return len(self.breakpoints) - 1

    def slopes(self) -> list[Fraction]:
        b, v = self.breakpoints, self.values
        return [(v[i + 1] - v[i]) / (b[i + 1] - b[i]) for i in range(len(b) - 1)]

    def __call__(self, x) -> Fraction:
        x = Q(x)
        if not self.breakpoints[0] <= x <= self.breakpoints[-1]:
            raise DomainViolation(f"{x} outside the domain {self.domain}")
        return self.kernel.evaluate(x)

    def piece_index(self, x, side: Side = Side.RIGHT) -> int:
        """Index of the affine piece adjacent to ``x`` on ``side``."""
        b = self.breakpoints
        n = len(b) - 1
        if side is Side.RIGHT:
            if not b[0] <= x < b[-1]:
                raise DomainViolation(f"no piece to the right of {x}")
            return bisect.bisect_right(b, x) - 1
        if not b[0] < x <= b[-1]:
            raise DomainViolation(f"no piece to the left of {x}")
        return min(bisect.bisect_left(b, x) - 1, n - 1)

    def image(self, interval: IntervalQ) -> IntervalQ:
        d = self.domain
        if not d.contains_interval(interval):
            raise DomainViolation(f"{interval} not inside the domain {d}")
        lo, hi = self.kernel.image(interval.lo, interval.hi)
        return IntervalQ(lo, hi)

    def restrict(self, interval: IntervalQ) -> PiecewiseAffine:
        if not self.domain.contains_interval(interval) or interval.degenerate:
            raise DomainViolation(f"cannot restrict to {interval}")
        return PiecewiseAffine._from_kernel(self.kernel.restrict(interval.lo, interval.hi))

    def __eq__(self, other):
        if not isinstance(other, PiecewiseAffine):
            return NotImplemented
        return self.breakpoints == other.breakpoints and self.values == other.values

    def __hash__(self):
        return hash((self.breakpoints, self.values))

    def __repr__(self):
        pts = ", ".join(f"({b}, {v})" for b, v in zip(self.breakpoints, self.values))
        return f"{type(self).__name__}[{pts}]"


class PLMap(PiecewiseAffine):
    """A validated continuous piecewise-affine self-map of [0, 1]."""

    __slots__ = ()


@dataclass(frozen=True)
class Corner:
    location: Fraction
    slope_left: Fraction
    slope_right: Fraction

    @property
    def v(self) -> LogValue:
        """Jump of ``log|Df|`` across the corner."""
        return LogValue(abs(self.slope_right) / abs(self.slope_left))

    @property
    def is_turning(self) -> bool:
        return (self.slope_left > 0) != (self.slope_right > 0)


def _merge(bps, vals):
    out_b, out_v = [bps[0]], [vals[0]]
    for i in range(1, len(bps) - 1):
        b0, v0 = out_b[-1], out_v[-1]
        if (vals[i] - v0) * (bps[i + 1] - bps[i]) == (vals[i + 1] - vals[i]) * (bps[i] - b0):
            continue
        out_b.append(bps[i])
        out_v.append(vals[i])
    out_b.append(bps[-1])
    out_v.append(vals[-1])
    return out_b, out_v


def make_plmap(breakpoints: Sequence, values: Sequence) -> PLMap:
    """Validate nodes, merge collinear pieces and build a :class:`PLMap`."""
    bps = [Q(b) for b in breakpoints]
    vals = [Q(v) for v in values]
    if len(bps) != len(vals) or len(bps) < 2:
        raise NonMonotoneBreakpoints("need equal-length node lists with at least two entries")
    if bps[0] != 0 or bps[-1] != 1:
        raise NonMonotoneBreakpoints("breakpoints must start at 0 and end at 1")
    for a, b in zip(bps, bps[1:]):
        if not a < b:
            raise NonMonotoneBreakpoints(f"breakpoints not strictly increasing at {a}, {b}")
    for i, v in enumerate(vals):
        if not 0 <= v <= 1:
            raise RangeViolation(f"value {v} at breakpoint {bps[i]} outside [0, 1]")
    for i in range(len(vals) - 1):
        if vals[i] == vals[i + 1]:
            raise ZeroSlopePiece(f"flat piece on [{bps[i]}, {bps[i + 1]}]")
    bps, vals = _merge(bps, vals)
    return PLMap(bps, vals)


def tent(s) -> PLMap:
    """Symmetric tent map with slopes ``±s``."""
    s = Q(s)
    return make_plmap([0, Fraction(1, 2), 1], [0, s / 2, 0])


def identity() -> PLMap:
    return make_plmap([0, 1], [0, 1])


def evaluate(f: PiecewiseAffine, x) -> Fraction:
    return f(x)


def slope_at(f: PiecewiseAffine, x, side: Side) -> Fraction:
    x = Q(x)
    i = f.piece_index(x, side)
    b, v = f.breakpoints, f.values
    return (v[i + 1] - v[i]) / (b[i + 1] - b[i])


def corners(f: PiecewiseAffine) -> list[Corner]:
    s = f.slopes()
    return [Corner(f.breakpoints[i + 1], s[i], s[i + 1])
            for i in range(len(s) - 1) if s[i] != s[i + 1]]


def is_corner(f: PiecewiseAffine, x) -> bool:
    b = f.breakpoints
    i = bisect.bisect_left(b, x)
    if not (0 < i < len(b) - 1 and b[i] == x):
        return False
    s = f.slopes()
    return s[i - 1] != s[i]


def variation(f: PiecewiseAffine) -> LogValue:
    """Total variation of ``log|Df|`` as an exact LogValue (mantissa >= 1)."""
    m = Fraction(1)
    for c in corners(f):
        r = abs(c.slope_right) / abs(c.slope_left)
        m *= r if r >= 1 else 1 / r
    return LogValue(m)


def iterate(f: PLMap, n: int, piece_budget: int = DEFAULT_PIECE_BUDGET) -> PLMap:
    """Explicit representation of the ``n``-th iterate of ``f``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    k = f.kernel
    g = k
    for _ in range(n - 1):
        g = k.compose(g, 0, 1, piece_budget)
        _note_pieces(g.npieces)
    if g.npieces > piece_budget:
        raise PieceBudgetExceeded(f"f has more than {piece_budget} pieces",
                                  pieces=g.npieces, budget=piece_budget)
    return PLMap._from_kernel(g) if g is not k else f


def iterate_on(f: PiecewiseAffine, n: int, interval: IntervalQ,
               piece_budget: int = DEFAULT_PIECE_BUDGET) -> PiecewiseAffine:
    """The ``n``-th iterate of ``f`` restricted to ``interval``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if interval.degenerate:
        raise DomainViolation("cannot restrict to a degenerate interval")
    k = f.kernel
    g = k.restrict(interval.lo, interval.hi)
    for _ in range(n - 1):
        g = k.compose(g, interval.lo, interval.hi, piece_budget)
        _note_pieces(g.npieces)
    if g.npieces > piece_budget:
        raise PieceBudgetExceeded(f"restriction has more than {piece_budget} pieces",
                                  pieces=g.npieces, budget=piece_budget)
    return PiecewiseAffine._from_kernel(g)


def restrict_rescale(g: PiecewiseAffine, J: IntervalQ,
                     orientation: Orientation = Orientation.PRESERVE) -> PLMap:
    """Affine conjugate of ``g|J`` transported to [0, 1].

    ``g`` may be a full map or one already restricted to a domain containing
    ``J``. AUTO flips when ``g`` reverses orientation at the left end of ``J``.
    """
    if J.degenerate:
        raise DomainViolation("rescaling needs a nondegenerate interval")
    h = g.restrict(J) if g.domain != J else g
    img = h.image(J)
    if not J.contains_interval(img):
        raise NotInvariant(f"image {img} of {J} is not contained in it")
    if orientation is Orientation.AUTO:
        orientation = Orientation.FLIP if h.slopes()[0] < 0 else Orientation.PRESERVE
    lo, width = J.lo, J.length
    if orientation is Orientation.PRESERVE:
        bps = [(b - lo) / width for b in h.breakpoints]
        vals = [(v - lo) / width for v in h.values]
    else:
        hi = J.hi
        bps = [(hi - b) / width for b in reversed(h.breakpoints)]
        vals = [(hi - v) / width for v in reversed(h.values)]
    return make_plmap(bps, vals)


def orbit_of(f: PiecewiseAffine, x, n: int) -> list[Fraction]:
    """``[x, f(x), ..., f^n(x)]``."""
    x = Q(x)
    if not f.breakpoints[0] <= x <= f.breakpoints[-1]:
        raise DomainViolation(f"{x} outside the domain {f.domain}")
    k = f.kernel
    out = [x]
    for _ in range(n):
        x = k.evaluate(x)
        out.append(x)
    return out


def piecewise(points: Iterable[tuple]) -> PLMap:
    """Build a map from ``(x, f(x))`` node pairs."""
    pts = list(points)
    return make_plmap([p[0] for p in pts], [p[1] for p in pts])
