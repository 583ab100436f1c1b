"""Cycles of intervals, nested pairs, splittings and renormalization towers."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

from ._kernel import HULL_CONVERGED, HULL_UNCONVERGED
from .errors import (AmbiguousSplitting, CandidateBudgetExceeded,
                     DegenerateInterval, NoSplittingFound, NotDisjoint,
                     NotInvariant, NotNested, PieceBudgetExceeded,
                     PLRenormError, RaggedNesting)
from .orbits import PeriodicOrbit, periodic_points_in
from .plmap import (DEFAULT_PIECE_BUDGET, IntervalQ, Orientation, PLMap,
                    PiecewiseAffine, corners, iterate, iterate_on, orbit_of,
                    restrict_rescale)

STRICT = "strict"
MAXIMAL = "maximal"

DEFAULT_HULL_ROUNDS = 32
DEFAULT_CANDIDATE_BUDGET = 400


@dataclass(frozen=True)
class Cycle:
    """Pairwise disjoint closed intervals in dynamical order."""

    intervals: tuple[IntervalQ, ...]

    @property
    def q(self) -> int:
        return len(self.intervals)

    def sorted_intervals(self) -> list[IntervalQ]:
        return sorted(self.intervals, key=lambda J: J.lo)

    def index_of(self, x) -> int | None:
        for k, J in enumerate(self.intervals):
            if x in J:
                return k
        return None

    def __contains__(self, x) -> bool:
        return self.index_of(x) is not None

    def interior_contains(self, x) -> bool:
        return any(J.interior_contains(x) for J in self.intervals)

    def boundary_points(self) -> list[Fraction]:
        return sorted(p for J in self.intervals for p in (J.lo, J.hi))

    def as_set(self) -> frozenset:
        return frozenset(self.intervals)


def _check_disjoint(intervals):
    s = sorted(intervals, key=lambda J: J.lo)
    for a, b in zip(s, s[1:]):
        if not a.hi < b.lo:
            raise NotDisjoint(f"{a} and {b} are not disjoint")


def validate_cycle(f: PiecewiseAffine, intervals: Sequence[IntervalQ]) -> Cycle:
    """Check a family is a cycle of intervals and put it in dynamical order.

    The first interval given keeps index 0.
    """
    ints = list(intervals)
    if not ints:
        raise ValueError("a cycle needs at least one interval")
    for J in ints:
        if J.degenerate:
            raise DegenerateInterval(f"{J} is degenerate")
    _check_disjoint(ints)
    order = [0]
    remaining = set(range(1, len(ints)))
    cur = 0
    for step in range(len(ints)):
        img = f.image(ints[cur])
        nxt = next((k for k, J in enumerate(ints) if J.contains_interval(img)), None)
        if nxt is None:
            raise NotInvariant(f"image {img} of {ints[cur]} lies in no interval")
        if step == len(ints) - 1:
            if nxt != 0:
                raise NotInvariant("intervals are not permuted cyclically")
            break
        if nxt not in remaining:
            raise NotInvariant("intervals are not permuted cyclically")
        remaining.discard(nxt)
        order.append(nxt)
        cur = nxt
    return Cycle(tuple(ints[k] for k in order))


# -- cycle search -------------------------------------------------------------

def _hull(f, q, seeds, rounds, piece_budget):
    slots = [s for s, _ in seeds]
    pts = [p for _, p in seeds]
    status, J, prev0 = f.kernel.hull_cycle(slots, pts, q, rounds)
    extrapolations = 0
    while status == HULL_UNCONVERGED and extrapolations < 2:
        extra = _extrapolate(f, q, J, prev0, piece_budget)
        if not extra:
            return None
        extrapolations += 1
        slots = slots + [0] * len(extra)
        pts = pts + extra
        status, J, prev0 = f.kernel.hull_cycle(slots, pts, q, rounds)
    if status != HULL_CONVERGED or any(j is None for j in J):
        return None
    try:
        return validate_cycle(f, [IntervalQ(a, b) for a, b in J])
    except PLRenormError:
        return None


def _extrapolate(f, q, J, prev0, piece_budget):
    """Guess the limit of a creeping first interval: nearest fixed point of f^q."""
    if prev0 is None:
        return []
    lo, hi = J[0]
    others = [j for j in J[1:] if j is not None]
    out = []
    if lo < prev0[0]:
        left = max([b for a, b in others if b < lo], default=Fraction(0))
        if left < lo:
            g = iterate_on(f, q, IntervalQ(left, lo), piece_budget)
            pts, segs = g.kernel.fixed_points()
            cand = [p for p in pts if p < lo and p > left] + [b for a, b in segs if b < lo]
            if cand:
                out.append(max(cand))
    if hi > prev0[1]:
        right = min([a for a, b in others if a > hi], default=Fraction(1))
        if hi < right:
            g = iterate_on(f, q, IntervalQ(hi, right), piece_budget)
            pts, segs = g.kernel.fixed_points()
            cand = [p for p in pts if hi < p < right] + [a for a, b in segs if a > hi]
            if cand:
                out.append(min(cand))
    return out


def hull_cycles(f: PiecewiseAffine, q: int, rounds: int = DEFAULT_HULL_ROUNDS,
                piece_budget: int = DEFAULT_PIECE_BUDGET, placement_tries: int = 4):
    """Smallest cycles of ``q`` intervals generated by corner orbits.

    Each corner in turn seeds interval 0; corners left outside the resulting
    cycle are then tried in the nearest free intervals. Results with more
    corners inside come first.
    """
    cs = sorted(corners(f), key=lambda c: (not c.is_turning, c.location))
    found = {}
    for c in cs:
        seeds = [(0, c.location)]
        cyc = _hull(f, q, seeds, rounds, piece_budget)
        if cyc is None:
            continue
        for other in cs:
            if other.location in cyc:
                continue
            dist = sorted(range(q), key=lambda k: _distance(cyc.intervals[k], other.location))
            for k in dist[:placement_tries]:
                trial = _hull(f, q, seeds + [(k, other.location)], rounds, piece_budget)
                if trial is not None:
                    seeds = seeds + [(k, other.location)]
                    cyc = trial
                    break
        found.setdefault(cyc.as_set(), cyc)
    out = list(found.values())
    out.sort(key=lambda cy: (-sum(c.location in cy for c in cs),
                             sum(J.length for J in cy.intervals)))
    return out


def _distance(J, x):
    if x < J.lo:
        return J.lo - x
    if x > J.hi:
        return x - J.hi
    return Fraction(0)


def scan_cycles(f: PiecewiseAffine, q: int, piece_budget: int = DEFAULT_PIECE_BUDGET,
                candidate_budget: int = DEFAULT_CANDIDATE_BUDGET):
    """Maximal cycles whose first interval has endpoints in a candidate set.

    Candidates are 0, 1, the nodes and fixed points of ``f^q``, their images
    under one and two applications of ``f^q``, and the preimages of the fixed
    points.
    """
    g = iterate(f, q, piece_budget)
    gk = g.kernel
    pts, segs = gk.fixed_points()
    base = set(g.breakpoints) | set(pts) | {s for seg in segs for s in seg}
    cand = set(base)
    layer = base
    for _ in range(2):
        layer = {gk.evaluate(x) for x in layer}
        cand |= layer
    for p in pts:
        cand.update(gk.preimages(p))
    cand = sorted(cand)
    if len(cand) > candidate_budget:
        raise CandidateBudgetExceeded(
            f"{len(cand)} candidate endpoints exceed the budget {candidate_budget}")
    fk = f.kernel
    found = {}
    for i, e1 in enumerate(cand):
        for e2 in cand[i + 1:]:
            a, b = gk.image(e1, e2)
            if a < e1 or b > e2:
                continue
            ints = [(e1, e2)]
            ok = True
            for _ in range(q - 1):
                lo, hi = fk.image(*ints[-1])
                if lo == hi or any(not (hi < c or d < lo) for c, d in ints):
                    ok = False
                    break
                ints.append((lo, hi))
            if not ok:
                continue
            try:
                cyc = validate_cycle(f, [IntervalQ(a, b) for a, b in ints])
            except PLRenormError:
                continue
            found.setdefault(cyc.as_set(), cyc)
    cycles = list(found.values())
    maximal = [c for c in cycles
               if not any(d is not c and _dominated(c, d) for d in cycles)]
    maximal.sort(key=lambda cy: min(J.lo for J in cy.intervals))
    return maximal


def _dominated(a: Cycle, b: Cycle) -> bool:
    return a.as_set() != b.as_set() and all(
        any(J2.contains_interval(J) for J2 in b.intervals) for J in a.intervals)


def find_cycles(f: PiecewiseAffine, q: int, method: str = "both", *,
                piece_budget: int = DEFAULT_PIECE_BUDGET,
                candidate_budget: int = DEFAULT_CANDIDATE_BUDGET,
                rounds: int = DEFAULT_HULL_ROUNDS):
    """Verified cycles of exactly ``q`` intervals, sorted by leftmost endpoint.

    ``method`` is ``"hull"`` (corner-orbit closures), ``"scan"`` (candidate
    endpoint scan) or ``"both"``. For ``q = 1`` the whole interval is always
    included.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    found = {}
    if method in ("hull", "both"):
        for c in hull_cycles(f, q, rounds, piece_budget):
            found.setdefault(c.as_set(), c)
    if method in ("scan", "both"):
        for c in scan_cycles(f, q, piece_budget, candidate_budget):
            found.setdefault(c.as_set(), c)
    if q == 1:
        whole = Cycle((f.domain,))
        found.setdefault(whole.as_set(), whole)
    return sorted(found.values(), key=lambda cy: (min(J.lo for J in cy.intervals),
                                                  -sum(J.length for J in cy.intervals)))


# -- nesting ------------------------------------------------------------------

@dataclass(frozen=True)
class Gap:
    outer_index: int
    interval: IntervalQ   # read as the open interval
    left: int             # inner index of the neighbour on the left
    right: int            # inner index of the neighbour on the right


@dataclass(frozen=True)
class NestedPair:
    outer: Cycle
    inner: Cycle
    ratio: int
    gaps: tuple[Gap, ...]
    containing: tuple[int, ...]   # outer index holding each inner interval

    def inner_in(self, outer_index: int) -> list[int]:
        """Inner indices inside one outer interval, left to right."""
        ks = [k for k, o in enumerate(self.containing) if o == outer_index]
        return sorted(ks, key=lambda k: self.inner.intervals[k].lo)

    def gap_index_of(self, x) -> int | None:
        for i, g in enumerate(self.gaps):
            if g.interval.interior_contains(x):
                return i
        return None

    def extended_neighbors(self, gap: Gap):
        """Inner indices left of the left neighbour and right of the right one."""
        row = self.inner_in(gap.outer_index)
        i, j = row.index(gap.left), row.index(gap.right)
        return (row[i - 1] if i > 0 else None,
                row[j + 1] if j + 1 < len(row) else None)

    def span(self, gap: Gap) -> IntervalQ:
        """Interval between the extended neighbours (outer ends when absent)."""
        L, R = self.extended_neighbors(gap)
        I = self.outer.intervals[gap.outer_index]
        lo = self.inner.intervals[L].hi if L is not None else I.lo
        hi = self.inner.intervals[R].lo if R is not None else I.hi
        return IntervalQ(lo, hi)


def nest(f: PiecewiseAffine, outer: Cycle, inner: Cycle) -> NestedPair:
    if outer.as_set() == inner.as_set():
        raise NotNested("a cycle is not nested in itself")
    containing = []
    for J in inner.intervals:
        hits = [k for k, I in enumerate(outer.intervals) if I.contains_interval(J)]
        if not hits:
            raise NotNested(f"{J} lies in no interval of the outer cycle")
        containing.append(hits[0])
    counts = [containing.count(k) for k in range(outer.q)]
    if len(set(counts)) != 1:
        raise RaggedNesting(f"outer intervals hold {counts} inner intervals")
    a = counts[0]
    if a < 2:
        raise NotNested("inner cycle must have more intervals than the outer one")
    gaps = []
    for k in range(outer.q):
        row = sorted((j for j, o in enumerate(containing) if o == k),
                     key=lambda j: inner.intervals[j].lo)
        for l, r in zip(row, row[1:]):
            gaps.append(Gap(k, IntervalQ(inner.intervals[l].hi, inner.intervals[r].lo), l, r))
    return NestedPair(outer, inner, a, tuple(gaps), tuple(containing))


def is_doubling(pair: NestedPair) -> bool:
    return pair.ratio == 2


# -- splittings ---------------------------------------------------------------

@dataclass(frozen=True)
class Splitting:
    points: tuple[Fraction, ...]        # indexed like pair.gaps
    orbits: tuple[PeriodicOrbit, ...]
    rule: str = "single-orbit"


def _gap_orbits(f, pair, gap_ids, periods, piece_budget):
    out = {}
    for gi in gap_ids:
        G = pair.gaps[gi].interval
        for p in periods:
            orbits, _ = periodic_points_in(f, p, G, piece_budget)
            for orb in orbits:
                slots = [pair.gap_index_of(x) for x in orb.points]
                if None in slots or len(set(slots)) != len(slots):
                    continue
                out.setdefault(orb.points, (orb, frozenset(slots)))
    return list(out.values())


def find_splitting(f: PiecewiseAffine, pair: NestedPair, max_period: int | None = None,
                   piece_budget: int = DEFAULT_PIECE_BUDGET,
                   tie_break: bool = True) -> Splitting:
    """Periodic points, one in each gap, forming whole orbits.

    A single orbit visiting every gap once is preferred (smallest point wins);
    otherwise the lexicographically first exact cover by orbits ordered by
    (period, smallest point) is returned.
    """
    n = len(pair.gaps)
    if n == 0:
        return Splitting((), (), "vacuous")
    q = pair.outer.q
    if max_period is None:
        max_period = n
    if n <= max_period:
        singles = [o for o, s in _gap_orbits(f, pair, [0], [n], piece_budget) if len(s) == n]
        if singles:
            if len(singles) > 1 and not tie_break:
                raise AmbiguousSplitting(f"{len(singles)} single-orbit splittings")
            orb = min(singles, key=lambda o: o.base)
            return _splitting(pair, [orb], "single-orbit")
    periods = list(range(q, max_period + 1, q))
    cands = _gap_orbits(f, pair, range(n), periods, piece_budget)
    cands.sort(key=lambda t: (t[0].period, t[0].base))
    solutions = []
    _cover(cands, frozenset(), n, [], solutions, 1 if tie_break else 2)
    if not solutions:
        raise NoSplittingFound(f"no splitting with periods <= {max_period}")
    if len(solutions) > 1 and not tie_break:
        raise AmbiguousSplitting("several exact covers of the gaps")
    return _splitting(pair, solutions[0], "exact-cover")


def _cover(cands, used, n, chosen, out, limit):
    if len(out) >= limit:
        return
    if len(used) == n:
        out.append(list(chosen))
        return
    target = min(set(range(n)) - used)
    for orb, slots in cands:
        if target in slots and not (slots & used):
            chosen.append(orb)
            _cover(cands, used | slots, n, chosen, out, limit)
            chosen.pop()
            if len(out) >= limit:
                return


def _splitting(pair, orbits, rule):
    pts = [None] * len(pair.gaps)
    for orb in orbits:
        for x in orb.points:
            pts[pair.gap_index_of(x)] = x
    return Splitting(tuple(pts), tuple(orbits), rule)


# -- trapping and renormalization -------------------------------------------

def maximal_trapping(f: PiecewiseAffine, cycle: Cycle,
                     piece_budget: int = DEFAULT_PIECE_BUDGET) -> list[IntervalQ]:
    """Enlarge interval 0 to its maximal ``f^q``-invariant interval, carry it forward.

    The search for interval 0 stays between the neighbouring cycle intervals.
    Interval ``j`` of the result is the image of the enlarged interval 0 under
    ``f^j``; neighbouring results may share endpoints.
    """
    q = cycle.q
    J0 = cycle.intervals[0]
    others = cycle.intervals[1:]
    lo = max([J.hi for J in others if J.hi < J0.lo], default=Fraction(0))
    hi = min([J.lo for J in others if J.lo > J0.hi], default=Fraction(1))
    D = IntervalQ(lo, hi)
    g = iterate_on(f, q, D, piece_budget).kernel
    g2 = iterate_on(f, 2 * q, D, piece_budget).kernel
    z = {D.lo, D.hi}
    for k in (g, g2):
        pts, segs = k.fixed_points()
        z.update(pts)
        z.update(s for seg in segs for s in seg)
    cand = set(z)
    for y in z:
        cand.update(g.preimages(y))
    lefts = sorted(c for c in cand if c <= J0.lo)
    rights = sorted((c for c in cand if c >= J0.hi), reverse=True)
    M = None
    for L in lefts:
        for R in rights:
            a, b = g.image(L, R)
            if L <= a and b <= R:
                M = IntervalQ(L, R)
                break
        if M is not None:
            break
    if M is None:
        M = J0
    out = [M]
    for _ in range(q - 1):
        out.append(f.image(out[-1]))
    return out


def renormalize(f: PiecewiseAffine, cycle: Cycle, j: int = 0, mode: str = STRICT,
                orientation: Orientation = Orientation.AUTO,
                piece_budget: int = DEFAULT_PIECE_BUDGET) -> PLMap:
    """``f^q`` on interval ``j`` (or its trapping enlargement), rescaled to [0, 1]."""
    if not 0 <= j < cycle.q:
        raise IndexError(f"interval index {j} out of range")
    J = cycle.intervals[j] if mode == STRICT else maximal_trapping(f, cycle, piece_budget)[j]
    g = iterate_on(f, cycle.q, J, piece_budget)
    return restrict_rescale(g, J, orientation)


# -- towers -------------------------------------------------------------------

@dataclass
class RenormTower:
    base_map: PLMap
    cycles: list[Cycle] = field(default_factory=list)
    pairs: list[NestedPair] = field(default_factory=list)
    splittings: list[Splitting | None] = field(default_factory=list)
    splitting_errors: list[str | None] = field(default_factory=list)
    renormalized_maps: list[PLMap | None] = field(default_factory=list)
    complete: list[bool] = field(default_factory=list)
    searched_q: list[tuple[int, ...]] = field(default_factory=list)
    corners_interior: list[bool] = field(default_factory=list)
    corners_contained: list[bool] = field(default_factory=list)
    corner_orbit_horizon: int = 0
    partial: bool = False
    partial_reason: str | None = None

    @property
    def depth(self) -> int:
        return len(self.pairs)

    @property
    def q_sequence(self) -> list[int]:
        return [c.q for c in self.cycles]

    def level(self, n: int) -> Cycle:
        """Cycle of level ``n`` (levels count from 1)."""
        return self.cycles[n - 1]


def _corner_flags(f, cycle):
    cs = [c.location for c in corners(f)]
    return (all(cycle.interior_contains(c) for c in cs),
            all(c in cycle for c in cs))


def build_tower(f: PLMap, max_depth: int = 8, max_q: int = 64,
                piece_budget: int = DEFAULT_PIECE_BUDGET,
                rounds: int = DEFAULT_HULL_ROUNDS,
                splittings: bool = True) -> RenormTower:
    """Greedy chain of nested cycles rooted at the smallest corner-containing cycle.

    Each level takes the smallest admissible number of intervals, so the
    recorded completeness holds within the searched range of ``q`` values.
    """
    tower = RenormTower(base_map=f, corner_orbit_horizon=4 * max_q)
    try:
        _grow(tower, f, max_depth, max_q, piece_budget, rounds, splittings)
    except PieceBudgetExceeded as exc:
        tower.partial = True
        tower.partial_reason = str(exc)
        exc.partial = tower
        raise
    return tower


def _grow(tower, f, max_depth, max_q, piece_budget, rounds, splittings):
    cs = [c.location for c in corners(f)]
    # q = 1 always admits the whole interval, so the root never needs q > 1
    root = Cycle((f.domain,))
    for cyc in hull_cycles(f, 1, rounds, piece_budget):
        if all(c in cyc for c in cs) and all(
                all(y in cyc for y in orbit_of(f, c, tower.corner_orbit_horizon))
                for c in cs):
            root = cyc
            break
    _append_level(tower, root, _level_data(tower, f, root, piece_budget))
    while tower.depth < max_depth:
        prev = tower.cycles[-1]
        nxt, searched = None, []
        for a in itertools.count(2):
            q = a * prev.q
            if q > max_q:
                break
            searched.append(q)
            for cyc in hull_cycles(f, q, rounds, piece_budget):
                try:
                    pair = nest(f, prev, cyc)
                except NotNested:
                    continue
                nxt = (cyc, pair)
                break
            if nxt is not None:
                break
        if nxt is None:
            break
        cyc, pair = nxt
        split, err = None, "not computed"
        if splittings:
            try:
                split, err = find_splitting(f, pair, piece_budget=piece_budget), None
            except NoSplittingFound as exc:
                err = str(exc)
        level = _level_data(tower, f, cyc, piece_budget)
        tower.pairs.append(pair)
        tower.searched_q.append(tuple(searched))
        tower.complete.append(True)
        tower.splittings.append(split)
        tower.splitting_errors.append(err)
        _append_level(tower, cyc, level)


def _level_data(tower, f, cyc, piece_budget):
    # computed in full before anything is appended, so a budget error
    # leaves a consistent partial tower
    interior, contained = _corner_flags(f, cyc)
    try:
        g = renormalize(f, cyc, 0, STRICT, Orientation.AUTO, piece_budget)
    except NotInvariant:
        g = None
    return interior, contained, g


def _append_level(tower, cyc, level):
    interior, contained, g = level
    tower.cycles.append(cyc)
    tower.corners_interior.append(interior)
    tower.corners_contained.append(contained)
    tower.renormalized_maps.append(g)


# -- intersection multiplicity ------------------------------------------------

def intersection_multiplicity(intervals: Sequence[IntervalQ]) -> int:
    """Largest number of closed intervals sharing a point (endpoint sweep)."""
    events = []
    for J in intervals:
        events.append((J.lo, 0))
        events.append((J.hi, 1))
    events.sort()
    best = cur = 0
    for _, kind in events:
        if kind == 0:
            cur += 1
            best = max(best, cur)
        else:
            cur -= 1
    return best
