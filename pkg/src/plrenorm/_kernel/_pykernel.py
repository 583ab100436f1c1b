"""Pure-Python exact kernel over :class:`fractions.Fraction`.

This is the reference implementation; ``_ckernel`` mirrors every method
with GMP rationals and must return identical results.
"""

from bisect import bisect_left, bisect_right
from fractions import Fraction

from ..errors import PieceBudgetExceeded

BACKEND = "python"

HULL_CONVERGED = 0
HULL_OVERLAP = 1
HULL_UNCONVERGED = 2


def _merge_collinear(xs, vs):
    if len(xs) <= 2:
        return xs, vs
    out_x = [xs[0]]
    out_v = [vs[0]]
    for i in range(1, len(xs) - 1):
        x0, v0 = out_x[-1], out_v[-1]
        x1, v1 = xs[i], vs[i]
        x2, v2 = xs[i + 1], vs[i + 1]
        if (v1 - v0) * (x2 - x1) == (v2 - v1) * (x1 - x0):
            continue
        out_x.append(x1)
        out_v.append(v1)
    out_x.append(xs[-1])
    out_v.append(vs[-1])
    return out_x, out_v


class KMap:
    """Continuous piecewise-affine function given by its nodes.

    No validation beyond what the arithmetic needs; callers own the
    invariants (strictly increasing nodes, at least one piece).
    """

    __slots__ = ("_x", "_v")

    def __init__(self, breakpoints, values):
        self._x = [Fraction(b) for b in breakpoints]
        self._v = [Fraction(v) for v in values]
        if len(self._x) != len(self._v) or len(self._x) < 2:
            raise ValueError("need matching node lists of length >= 2")

    def breakpoints(self):
        return list(self._x)

    def values(self):
        return list(self._v)

    @property
    def npieces(self):
        return len(self._x) - 1

    @property
    def lo(self):
        return self._x[0]

    @property
    def hi(self):
        return self._x[-1]

    def _piece(self, x):
        xs = self._x
        if x < xs[0] or x > xs[-1]:
            raise ValueError(f"{x} outside [{xs[0]}, {xs[-1]}]")
        i = bisect_right(xs, x) - 1
        return min(i, len(xs) - 2)

    def evaluate(self, x):
        x = Fraction(x)
        i = self._piece(x)
        x0, x1 = self._x[i], self._x[i + 1]
        v0, v1 = self._v[i], self._v[i + 1]
        if x == x0:
            return v0
        return v0 + (v1 - v0) * (x - x0) / (x1 - x0)

    def slope(self, i):
        return (self._v[i + 1] - self._v[i]) / (self._x[i + 1] - self._x[i])

    def image(self, lo, hi):
        """Exact image ``[min, max]`` of the closed interval ``[lo, hi]``."""
        a = self.evaluate(lo)
        b = self.evaluate(hi)
        mn, mx = (a, b) if a <= b else (b, a)
        xs = self._x
        for i in range(bisect_right(xs, lo), bisect_left(xs, hi)):
            v = self._v[i]
            if v < mn:
                mn = v
            elif v > mx:
                mx = v
        return mn, mx

    def restrict(self, lo, hi):
        lo = Fraction(lo)
        hi = Fraction(hi)
        xs = self._x
        inner = range(bisect_right(xs, lo), bisect_left(xs, hi))
        nx = [lo] + [xs[i] for i in inner] + [hi]
        nv = [self.evaluate(lo)] + [self._v[i] for i in inner] + [self.evaluate(hi)]
        return KMap(nx, nv)

    def compose(self, inner, lo, hi, budget):
        """``self ∘ inner`` on ``[lo, hi]`` with collinear pieces merged."""
        lo = Fraction(lo)
        hi = Fraction(hi)
        fx, fv = self._x, self._v
        gx = inner._x
        first = bisect_right(gx, lo)
        last = bisect_left(gx, hi)
        nodes = [lo] + gx[first:last] + [hi]
        gvals = [inner.evaluate(lo)] + inner._v[first:last] + [inner.evaluate(hi)]
        out_x = [lo]
        out_v = [self.evaluate(gvals[0])]
        for k in range(len(nodes) - 1):
            x0, x1 = nodes[k], nodes[k + 1]
            y0, y1 = gvals[k], gvals[k + 1]
            if y0 < y1:
                idx = range(bisect_right(fx, y0), bisect_left(fx, y1))
            else:
                idx = range(bisect_left(fx, y0) - 1, bisect_right(fx, y1) - 1, -1)
            scale = (x1 - x0) / (y1 - y0)
            for j in idx:
                out_x.append(x0 + (fx[j] - y0) * scale)
                out_v.append(fv[j])
            out_x.append(x1)
            out_v.append(self.evaluate(y1))
            if budget is not None and len(out_x) - 1 > 8 * budget + 16:
                raise PieceBudgetExceeded(
                    f"composition needs more than {budget} pieces",
                    pieces=len(out_x) - 1, budget=budget)
        out_x, out_v = _merge_collinear(out_x, out_v)
        if budget is not None and len(out_x) - 1 > budget:
            raise PieceBudgetExceeded(
                f"composition needs more than {budget} pieces",
                pieces=len(out_x) - 1, budget=budget)
        return KMap(out_x, out_v)

    def fixed_points(self):
        """Isolated solutions of ``f(x) = x`` and slope-1 diagonal segments."""
        pts = []
        segs = []
        xs, vs = self._x, self._v
        for i in range(len(xs) - 1):
            x0, x1, v0, v1 = xs[i], xs[i + 1], vs[i], vs[i + 1]
            a = (v1 - v0) / (x1 - x0)
            if a == 1:
                if v0 == x0:
                    if segs and segs[-1][1] == x0:
                        segs[-1] = (segs[-1][0], x1)
                    else:
                        segs.append((x0, x1))
                continue
            x = (v0 - a * x0) / (1 - a)
            if x0 <= x <= x1 and (not pts or pts[-1] != x):
                pts.append(x)
        if segs:
            pts = [p for p in pts if not any(s <= p <= t for s, t in segs)]
        return pts, segs

    def preimages(self, y):
        y = Fraction(y)
        out = []
        xs, vs = self._x, self._v
        for i in range(len(xs) - 1):
            v0, v1 = vs[i], vs[i + 1]
            if min(v0, v1) <= y <= max(v0, v1):
                x = xs[i] + (y - v0) * (xs[i + 1] - xs[i]) / (v1 - v0)
                if not out or out[-1] != x:
                    out.append(x)
        return out

    def hull_cycle(self, slots, points, q, max_rounds):
        """Smallest family ``J_0..J_{q-1}`` with seed points and ``f(J_k) ⊆ J_{k+1}``.

        Returns ``(status, intervals, previous_first)`` where ``status`` is one
        of the ``HULL_*`` codes. Intervals are ``(lo, hi)`` pairs or ``None``
        for slots never reached.
        """
        J = [None] * q
        for k, p in zip(slots, points):
            p = Fraction(p)
            cur = J[k]
            J[k] = (p, p) if cur is None else (min(cur[0], p), max(cur[1], p))
            if _overlaps(J, k):
                return HULL_OVERLAP, J, None
        prev0 = J[0]
        for _ in range(max_rounds):
            changed = False
            prev0 = J[0]
            for k in range(q):
                if J[k] is None:
                    continue
                a, b = self.image(J[k][0], J[k][1])
                m = (k + 1) % q
                cur = J[m]
                if cur is None:
                    J[m] = (a, b)
                elif a < cur[0] or b > cur[1]:
                    J[m] = (min(a, cur[0]), max(b, cur[1]))
                else:
                    continue
                changed = True
                if _overlaps(J, m):
                    return HULL_OVERLAP, J, prev0
            if not changed:
                return HULL_CONVERGED, J, prev0
        return HULL_UNCONVERGED, J, prev0


def _overlaps(J, m):
    a, b = J[m]
    for k, other in enumerate(J):
        if k == m or other is None:
            continue
        if not (b < other[0] or other[1] < a):
            return True
    return False
