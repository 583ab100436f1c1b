"""Exact certificates: expansion witnesses and the boundary/splitting ledger.

Every logarithmic statement is moved to multiplicative form, so each boolean
below is decided by an exact rational comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from .cycles import (Cycle, NestedPair, RenormTower, Splitting, hull_cycles,
                     intersection_multiplicity, nest)
from .errors import (ConstructionFailed, CornerOnBoundary,
                     CornerOnSplittingPoint, HypothesisNotMet,
                     MultipleCornersInInterval, NotNested, OrbitThroughCorner,
                     PLRenormError, PointOutsideCycle)
from .logvalue import LogValue
from .orbits import (Multiplier, PeriodicOrbit, SigmaVector, minimal_period,
                     multiplier, one_sided_multipliers, periodic_points,
                     sigma_signs)
from .plmap import (DEFAULT_PIECE_BUDGET, IntervalQ, PiecewiseAffine, Side,
                    corners, is_corner, iterate_on, orbit_of, slope_at,
                    variation)

LEMMA_MULTIPLICITY = 11


def _abs_slope(f, x):
    side = Side.RIGHT if x < f.breakpoints[-1] else Side.LEFT
    return abs(slope_at(f, x, side))


# -- ledger quantities --------------------------------------------------------

def beta(f: PiecewiseAffine, cycle: Cycle) -> LogValue:
    """Sum of ``log|Df|`` over the boundary points of the cycle union."""
    m = Fraction(1)
    for y in cycle.boundary_points():
        if is_corner(f, y):
            raise CornerOnBoundary(f"boundary point {y} is a corner")
        m *= _abs_slope(f, y)
    return LogValue(m)


def mu(f: PiecewiseAffine, splitting: Splitting) -> LogValue:
    """Sum of ``log|Df|`` over the splitting points."""
    m = Fraction(1)
    for x in splitting.points:
        if is_corner(f, x):
            raise CornerOnSplittingPoint(f"splitting point {x} is a corner")
        m *= _abs_slope(f, x)
    return LogValue(m)


@dataclass
class RecurrenceReport:
    level: int
    ok: bool
    beta_n: LogValue
    beta_next: LogValue
    mu_n: LogValue
    mismatches: list = field(default_factory=list)


def verify_ledger_recurrence(f: PiecewiseAffine, tower: RenormTower, n: int) -> RecurrenceReport:
    """Check ``B_{n+1} = B_n + 2 M_n`` as ``β_{n+1} = β_n · μ_n²``."""
    if not 1 <= n < len(tower.cycles):
        raise HypothesisNotMet(f"tower has no levels {n} and {n + 1}")
    outer, inner = tower.level(n), tower.level(n + 1)
    pair = tower.pairs[n - 1]
    splitting = tower.splittings[n - 1]
    if splitting is None:
        raise HypothesisNotMet(f"level {n} has no splitting: {tower.splitting_errors[n - 1]}")
    missing = [c.location for c in corners(f) if c.location not in inner]
    if missing:
        raise HypothesisNotMet(f"corners {missing} escape the level-{n + 1} cycle")
    b_n = beta(f, outer)
    b_next = beta(f, inner)
    m_n = mu(f, splitting)
    ok = b_next.mantissa == b_n.mantissa * m_n.mantissa ** 2
    mismatches = [] if ok else _partner_mismatches(f, pair, splitting)
    return RecurrenceReport(n, ok, b_n, b_next, m_n, mismatches)


def _partner_mismatches(f, pair, splitting):
    """Inner boundary points whose slope differs from the point it is matched with."""
    out = []
    ends = {}
    for gi, g in enumerate(pair.gaps):
        ends[g.interval.lo] = splitting.points[gi]
        ends[g.interval.hi] = splitting.points[gi]
    for k, J in enumerate(pair.inner.intervals):
        I = pair.outer.intervals[pair.containing[k]]
        for y, fallback in ((J.lo, I.lo), (J.hi, I.hi)):
            partner = ends.get(y, fallback)
            if _abs_slope(f, y) != _abs_slope(f, partner):
                out.append((y, partner))
    return out


# -- multiplier scan ----------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str          # attracting | neutral | neutral-segment | corner-orbit | splitting
    period: int | None
    detail: object
    mantissa: Fraction | None = None


def multiplier_scan(f: PiecewiseAffine, tower: RenormTower | None = None,
                    max_period: int = 4,
                    piece_budget: int = DEFAULT_PIECE_BUDGET) -> list[Violation]:
    """Periodic orbits up to ``max_period`` that are not expanding.

    Splitting multipliers of the tower that fail to exceed 1 are listed too.
    An empty result certifies expansion on the scanned range.
    """
    out = []
    for p in range(1, max_period + 1):
        orbits, segs = periodic_points(f, p, piece_budget)
        for seg in segs:
            out.append(Violation("neutral-segment", p, seg.interval, Fraction(1)))
        for orb in orbits:
            try:
                m = multiplier(f, orb).log_abs.mantissa
            except OrbitThroughCorner:
                left, right = one_sided_multipliers(f, orb)
                worst = min(left.log_abs.mantissa, right.log_abs.mantissa)
                if worst <= 1:
                    out.append(Violation("corner-orbit", p, orb, worst))
                continue
            if m < 1:
                out.append(Violation("attracting", p, orb, m))
            elif m == 1:
                out.append(Violation("neutral", p, orb, m))
    if tower is not None:
        for n, s in enumerate(tower.splittings, start=1):
            if s is None:
                continue
            try:
                m = mu(f, s).mantissa
            except CornerOnSplittingPoint:
                continue
            if m <= 1:
                out.append(Violation("splitting", None, n, m))
    return out


# -- derivative identity along a cycle ----------------------------------------

@dataclass
class IdentityReport:
    level: int
    x: Fraction
    ok: bool
    lhs: Fraction          # |Df^q(x)|²
    rhs: Fraction          # mantissa of B_n · Π ratio_j^σ_j
    sigma: SigmaVector


def derivative_sign_identity(f: PiecewiseAffine, tower: RenormTower, n: int,
                             x=None) -> IdentityReport:
    """``2 log|Df^q(x)| = B_n + Σ σ_j v_j`` checked exactly at ``x``.

    The left side comes from the slope chain along the orbit of ``x``, the
    right side from the boundary product and the corner table. ``x``
    defaults to the left endpoint of the level's interval 0.
    """
    cycle = tower.level(n)
    if x is None:
        x = cycle.intervals[0].lo
    x = Fraction(x)
    if x not in cycle.intervals[0]:
        raise PointOutsideCycle(f"{x} is not in {cycle.intervals[0]}")
    sigma = sigma_signs(f, cycle, x)
    orbit = orbit_of(f, x, cycle.q - 1)
    lhs = Fraction(1)
    for y in orbit:
        if is_corner(f, y):
            from .errors import IterateHitsCorner
            raise IterateHitsCorner(f"orbit of {x} meets the corner {y}")
        lhs *= _abs_slope(f, y)
    lhs = lhs ** 2
    rhs = beta(f, cycle).mantissa
    cs = corners(f)
    for j, s in sigma.signs:
        r = abs(cs[j].slope_right) / abs(cs[j].slope_left)
        rhs *= r if s > 0 else 1 / r
    return IdentityReport(n, x, lhs == rhs, lhs, rhs, sigma)


# -- uniform bound on renormalizations ----------------------------------------

@dataclass(frozen=True)
class DerivativeBound:
    value: LogValue
    vacuous: bool
    level: int | None


def renorm_derivative_bound(tower: RenormTower) -> DerivativeBound:
    """Largest ``|slope|`` among the rescaled first-return maps of the tower."""
    if tower.depth == 0:
        return DerivativeBound(LogValue.zero(), True, None)
    best, level = Fraction(1), None
    for n, R in enumerate(tower.renormalized_maps[1:], start=2):
        if R is None:
            continue
        m = max(abs(s) for s in R.slopes())
        if m > best:
            best, level = m, n
    return DerivativeBound(LogValue(best), False, level)


# -- expansion lemma ----------------------------------------------------------

@dataclass
class HypothesisReport:
    non_doubling: bool
    corners_inside: bool
    horizon: int
    intermediate_searched: tuple[int, ...] = ()


def lemma_hypotheses(f: PiecewiseAffine, pair: NestedPair, horizon: int | None = None,
                     piece_budget: int = DEFAULT_PIECE_BUDGET) -> HypothesisReport:
    """Raise :class:`HypothesisNotMet` unless the pair is a non-doubling nesting
    with every corner and its orbit inside the inner cycle."""
    if pair.ratio == 2:
        raise HypothesisNotMet("the inner cycle is a doubling of the outer one")
    searched = ()
    if pair.ratio % 2 == 0:
        mid_q = pair.inner.q // 2
        searched = (mid_q,)
        for mid in hull_cycles(f, mid_q, piece_budget=piece_budget):
            try:
                nest(f, pair.outer, mid)
                if nest(f, mid, pair.inner).ratio == 2:
                    raise HypothesisNotMet(
                        f"the inner cycle doubles an intermediate cycle of {mid_q} intervals")
            except NotNested:
                continue
    if horizon is None:
        horizon = 10 * pair.inner.q
    for c in corners(f):
        if any(y not in pair.inner for y in orbit_of(f, c.location, horizon)):
            raise HypothesisNotMet(f"the orbit of the corner {c.location} leaves the inner cycle")
    return HypothesisReport(True, True, horizon, searched)


@dataclass
class GapTransition:
    gap_index: int
    source_gap: IntervalQ      # G (open)
    target_gap: IntervalQ      # G' (open)
    target_index: int
    K: IntervalQ
    T: IntervalQ               # closure of the maximal domain
    D: IntervalQ
    point: Fraction
    period: int
    slope_K: Fraction
    slope_D: Fraction


def _orbit_period(splitting: Splitting, x):
    for orb in splitting.orbits:
        if x in orb.points:
            return orb.period
    raise ValueError(f"{x} is not a splitting point")


def maximal_splitting_domain(f, pair, gap_index, x, p, piece_budget=DEFAULT_PIECE_BUDGET):
    """Closure of the largest interval around ``x`` inside the gap whose ``f^p``
    image meets the inner cycle only in the two neighbours of the gap."""
    gap = pair.gaps[gap_index]
    G = gap.interval
    g = iterate_on(f, p, G, piece_budget)
    banned = [J for k, J in enumerate(pair.inner.intervals) if k not in (gap.left, gap.right)]
    lo, hi = G.lo, G.hi
    b, v = g.breakpoints, g.values
    for i in range(len(b) - 1):
        x0, x1, y0, y1 = b[i], b[i + 1], v[i], v[i + 1]
        for J in banned:
            c, d = max(J.lo, min(y0, y1)), min(J.hi, max(y0, y1))
            if c > d:
                continue
            # affine preimage of [c, d] inside this piece
            t0 = x0 + (c - y0) * (x1 - x0) / (y1 - y0)
            t1 = x0 + (d - y0) * (x1 - x0) / (y1 - y0)
            t0, t1 = min(t0, t1), max(t0, t1)
            if t1 < x:
                lo = max(lo, t1)
            elif t0 > x:
                hi = min(hi, t0)
            else:
                raise ConstructionFailed(f"the splitting point {x} maps into a banned interval")
    return IntervalQ(lo, hi), g


def _affine_preimage(g, T, target):
    """A sub-interval of ``T`` mapped by one affine piece of ``g`` onto ``target``."""
    b, v = g.breakpoints, g.values
    for i in range(len(b) - 1):
        x0, x1 = max(b[i], T.lo), min(b[i + 1], T.hi)
        if x0 >= x1:
            continue
        y0, y1 = g(x0), g(x1)
        if min(y0, y1) <= target.lo and target.hi <= max(y0, y1):
            s = (y1 - y0) / (x1 - x0)
            t0 = x0 + (target.lo - y0) / s
            t1 = x0 + (target.hi - y0) / s
            return IntervalQ(min(t0, t1), max(t0, t1)), s
    return None, None


def gap_transition(f: PiecewiseAffine, pair: NestedPair, gap_index: int,
                   splitting: Splitting, piece_budget: int = DEFAULT_PIECE_BUDGET,
                   check_hypotheses: bool = True) -> GapTransition:
    """Build the maximal domain T, the interval K mapped onto another gap and
    the interval D around the splitting point mapped onto its own gap."""
    if check_hypotheses:
        lemma_hypotheses(f, pair, piece_budget=piece_budget)
    gap = pair.gaps[gap_index]
    G = gap.interval
    x = splitting.points[gap_index]
    p = _orbit_period(splitting, x)
    T, g = maximal_splitting_domain(f, pair, gap_index, x, p, piece_budget)
    same = [i for i, h in enumerate(pair.gaps) if h.outer_index == gap.outer_index and i != gap_index]
    adjacent = [i for i in same if pair.gaps[i].left == gap.right or pair.gaps[i].right == gap.left]
    order = adjacent + sorted(set(same) - set(adjacent),
                              key=lambda i: abs(pair.gaps[i].interval.lo - G.lo))
    K = sK = target = None
    for i in order:
        K, sK = _affine_preimage(g, T, pair.gaps[i].interval)
        if K is not None:
            target = i
            break
    diag = {"gap": str(G), "T": str(T), "period": p, "point": str(x),
            "pieces": g.npieces, "tried": order}
    if K is None:
        raise ConstructionFailed("no interval of T is mapped affinely onto another gap", diag)
    j = g.piece_index(x, Side.RIGHT if x < g.breakpoints[-1] else Side.LEFT)
    piece = IntervalQ(max(g.breakpoints[j], T.lo), min(g.breakpoints[j + 1], T.hi))
    D, sD = _affine_preimage(g.restrict(piece), piece, G)
    if D is None or x not in D:
        raise ConstructionFailed("the piece through the splitting point does not cover its gap", diag)
    return GapTransition(gap_index, G, pair.gaps[target].interval, target, K, T, D, x, p, sK, sD)


def verify_transition(f: PiecewiseAffine, tr: GapTransition) -> bool:
    """Recompute ``f^p`` on K and D and confirm both are affine and onto their gaps."""
    G, H = tr.source_gap, tr.target_gap
    ok = (tr.T.lo >= G.lo and tr.T.hi <= G.hi and tr.T.contains_interval(tr.K)
          and tr.T.contains_interval(tr.D) and tr.point in tr.D and G != H)
    for J, target in ((tr.K, H), (tr.D, G)):
        if not ok or J.degenerate:
            return False
        g = iterate_on(f, tr.period, J)
        ok = g.npieces == 1 and g.image(J) == target
    return ok


@dataclass
class ExpansionCertificate:
    witness: PeriodicOrbit
    multiplier: Multiplier
    variation_mantissa: Fraction       # ρ with V = log ρ
    threshold_mantissa: Fraction       # e^{-11V} = ρ^{-11}
    margin_ok: bool
    margin_fraction: Fraction          # (m - 1)·ρ^11 - 1
    hypotheses: HypothesisReport
    candidates: int


def _margin(m: Fraction, rho: Fraction) -> Fraction:
    return (m - 1) * rho ** LEMMA_MULTIPLICITY - 1


def expansion_witness(f: PiecewiseAffine, pair: NestedPair, splitting: Splitting,
                      piece_budget: int = DEFAULT_PIECE_BUDGET) -> ExpansionCertificate:
    """First splitting orbit with ``|Df^p(x)| >= 1 + e^{-11V}``.

    The check is ``(m - 1)·ρ^11 >= 1`` with ``m`` the multiplier mantissa and
    ``ρ`` the variation mantissa. When no orbit passes, the best candidate is
    returned with ``margin_ok = False``; that is an anomaly worth reporting.
    """
    hyp = lemma_hypotheses(f, pair, piece_budget=piece_budget)
    rho = variation(f).mantissa
    best = None
    for orb in splitting.orbits:
        mult = multiplier(f, orb)
        margin = _margin(mult.log_abs.mantissa, rho)
        cert = ExpansionCertificate(orb, mult, rho, 1 / rho ** LEMMA_MULTIPLICITY,
                                    margin >= 0, margin, hyp, len(splitting.orbits))
        if margin >= 0:
            return cert
        if best is None or margin > best.margin_fraction:
            best = cert
    if best is None:
        raise HypothesisNotMet("the splitting is empty")
    return best


def reverify_expansion(f: PiecewiseAffine, cert: ExpansionCertificate) -> bool:
    """Recheck a certificate from scratch with plain evaluation and slopes."""
    x = cert.witness.base
    p = cert.witness.period
    if minimal_period(f, x, p) != p:
        return False
    m = Fraction(1)
    for y in orbit_of(f, x, p - 1):
        if is_corner(f, y):
            return False
        m *= abs(slope_at(f, y, Side.RIGHT if y < f.breakpoints[-1] else Side.LEFT))
    rho = Fraction(1)
    s = f.slopes()
    for a, b in zip(s, s[1:]):
        if a != b:
            r = abs(b) / abs(a)
            rho *= max(r, 1 / r)
    margin = (m - 1) * rho ** LEMMA_MULTIPLICITY - 1
    return (cert.margin_ok == (margin >= 0) and margin == cert.margin_fraction
            and m == cert.multiplier.log_abs.mantissa and rho == cert.variation_mantissa
            and cert.threshold_mantissa == 1 / rho ** LEMMA_MULTIPLICITY)


@dataclass
class MultiplicityReport:
    gap_index: int
    T: IntervalQ
    orbit_of_T: list[IntervalQ]
    multiplicity: int
    multiplicity_ok: bool
    variation_on_T: LogValue
    variation_bound: LogValue          # 11·V
    variation_ok: bool


def orbit_multiplicity_check(f: PiecewiseAffine, pair: NestedPair, gap_index: int,
                             splitting: Splitting,
                             piece_budget: int = DEFAULT_PIECE_BUDGET) -> MultiplicityReport:
    """Overlap of ``T, f(T), ..., f^{p-1}(T)`` and the variation of ``log|Df^p|`` on T."""
    lemma_hypotheses(f, pair, piece_budget=piece_budget)
    x = splitting.points[gap_index]
    p = _orbit_period(splitting, x)
    T, g = maximal_splitting_domain(f, pair, gap_index, x, p, piece_budget)
    images = [T]
    for _ in range(p - 1):
        images.append(f.image(images[-1]))
    w = intersection_multiplicity(images)
    var_T = variation(g.restrict(T)) if not T.degenerate else LogValue.zero()
    bound = variation(f) * LEMMA_MULTIPLICITY
    return MultiplicityReport(gap_index, T, images, w, w <= LEMMA_MULTIPLICITY,
                              var_T, bound, var_T <= bound)


# -- full ledger --------------------------------------------------------------

@dataclass
class LedgerLevel:
    n: int
    q: int
    beta: LogValue | None = None
    mu: LogValue | None = None
    recurrence_ok: bool | None = None
    recurrence: RecurrenceReport | None = None
    identity_checks: list = field(default_factory=list)   # (x, ok)
    errors: dict = field(default_factory=dict)


@dataclass
class LedgerReport:
    levels: list[LedgerLevel]
    violations: list[Violation]
    renorm_bound: DerivativeBound
    beta_sequence: list[Fraction | None]
    increasing: bool | None      # None when the premise (all μ > 1) fails


def ledger(f: PiecewiseAffine, tower: RenormTower, max_period: int = 4,
           piece_budget: int = DEFAULT_PIECE_BUDGET) -> LedgerReport:
    """Per-level boundary/splitting sums, their recurrence and the side checks."""
    if tower.depth < 1:
        raise HypothesisNotMet("the ledger needs a tower of depth >= 1")
    levels = []
    for n, cyc in enumerate(tower.cycles, start=1):
        lv = LedgerLevel(n, cyc.q)
        try:
            lv.beta = beta(f, cyc)
        except PLRenormError as exc:
            lv.errors["beta"] = f"{type(exc).__name__}: {exc}"
        if n <= tower.depth:
            s = tower.splittings[n - 1]
            if s is None:
                lv.errors["mu"] = tower.splitting_errors[n - 1] or "no splitting"
            else:
                try:
                    lv.mu = mu(f, s)
                except PLRenormError as exc:
                    lv.errors["mu"] = f"{type(exc).__name__}: {exc}"
            try:
                rep = verify_ledger_recurrence(f, tower, n)
                lv.recurrence, lv.recurrence_ok = rep, rep.ok
            except PLRenormError as exc:
                lv.errors["recurrence"] = f"{type(exc).__name__}: {exc}"
        try:
            rep = derivative_sign_identity(f, tower, n)
            lv.identity_checks.append((rep.x, rep.ok))
        except PLRenormError as exc:
            lv.errors["identity"] = f"{type(exc).__name__}: {exc}"
        levels.append(lv)
    violations = multiplier_scan(f, tower, max_period, piece_budget)
    seq = [lv.beta.mantissa if lv.beta is not None else None for lv in levels]
    mus = [lv.mu for lv in levels[:tower.depth]]
    increasing = None
    if all(m is not None and m.mantissa > 1 for m in mus) and None not in seq:
        increasing = all(a < b for a, b in zip(seq, seq[1:]))
    return LedgerReport(levels, violations, renorm_derivative_bound(tower), seq, increasing)
