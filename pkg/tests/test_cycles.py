import random
from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from plrenorm.cycles import (MAXIMAL, STRICT, Cycle, build_tower, find_cycles,
                             find_splitting, hull_cycles, intersection_multiplicity,
                             is_doubling, maximal_trapping, nest, renormalize,
                             scan_cycles, validate_cycle)
from plrenorm.errors import (DegenerateInterval, NoSplittingFound, NotDisjoint,
                             NotInvariant, NotNested, PieceBudgetExceeded)
from plrenorm.plmap import IntervalQ, Orientation, identity, make_plmap, tent

from .conftest import TWO_CORNER_HIT, rationals

I = IntervalQ
T75_CYCLE = [I(F(21, 50), F(721, 1250)), I(F(147, 250), F(7, 10))]
CORPUS = [tent(F(7, 5)), tent(F(19, 16)), tent(F(5, 4)), tent(F(11, 10)),
          make_plmap(*TWO_CORNER_HIT)]


def test_validate_cycle_examples():
    f = tent(F(7, 5))
    assert validate_cycle(f, T75_CYCLE).q == 2
    assert validate_cycle(f, [I(F(21, 50), F(7, 10))]).q == 1
    with pytest.raises(NotDisjoint):
        validate_cycle(tent(2), [I(0, F(1, 4)), I(F(1, 4), F(1, 2))])
    with pytest.raises(DegenerateInterval):
        validate_cycle(f, [I(F(1, 2), F(1, 2))])
    with pytest.raises(NotInvariant):
        validate_cycle(tent(2), [I(0, F(1, 4))])


def test_validate_cycle_puts_intervals_in_dynamical_order():
    f = tent(F(19, 16))
    level = build_tower(f).level(3)
    shuffled = [level.intervals[0]] + list(reversed(level.intervals[1:]))
    assert validate_cycle(f, shuffled) == level


def test_find_cycles_examples():
    f = tent(F(7, 5))
    assert Cycle(tuple(T75_CYCLE)) in find_cycles(f, 2)
    assert find_cycles(tent(2), 2) == []
    assert find_cycles(tent(2), 2, "scan") == []
    assert Cycle((I(0, 1),)) in find_cycles(identity(), 1)


@pytest.mark.parametrize("f", CORPUS, ids=repr)
def test_hull_cycles_sit_inside_scanned_cycles(f):
    for cyc in build_tower(f).cycles[1:]:
        scanned = scan_cycles(f, cyc.q)
        assert any(all(any(D.contains_interval(J) for D in s.intervals) for J in cyc.intervals)
                   for s in scanned)


@pytest.mark.parametrize("f", CORPUS, ids=repr)
@pytest.mark.parametrize("q", [1, 2, 3, 4])
def test_every_found_cycle_validates(f, q):
    for cyc in find_cycles(f, q):
        assert validate_cycle(f, list(cyc.intervals)) == cyc
        for k, J in enumerate(cyc.intervals):
            assert cyc.intervals[(k + 1) % q].contains_interval(f.image(J))


def test_nest_examples():
    f = tent(F(7, 5))
    core = validate_cycle(f, [I(F(21, 50), F(7, 10))])
    pair = nest(f, core, validate_cycle(f, T75_CYCLE))
    assert pair.ratio == 2 and is_doubling(pair)
    assert [g.interval for g in pair.gaps] == [I(F(721, 1250), F(147, 250))]
    with pytest.raises(NotNested):
        nest(f, core, core)
    t = build_tower(tent(F(19, 16)))
    p2 = t.pairs[1]
    assert (p2.outer.q, p2.inner.q, p2.ratio, len(p2.gaps)) == (2, 4, 2, 2)


def test_non_doubling_pair_from_the_two_corner_family(hit_map):
    t = build_tower(hit_map)
    assert t.q_sequence == [1, 3]
    assert t.pairs[0].ratio == 3 and not is_doubling(t.pairs[0])


def test_splitting_examples():
    f = tent(F(7, 5))
    t = build_tower(f)
    assert t.splittings[0].points == (F(7, 12),)
    t = build_tower(tent(F(19, 16)))
    s = t.splittings[1]
    assert len(s.orbits) == 1 and s.orbits[0].period == 2
    assert [t.pairs[1].gap_index_of(x) for x in s.points] == [0, 1]
    with pytest.raises(NoSplittingFound):
        find_splitting(tent(F(19, 16)), t.pairs[1], max_period=1)


def test_maximal_trapping_examples():
    f = tent(F(7, 5))
    assert maximal_trapping(f, Cycle(tuple(T75_CYCLE))) == [I(F(5, 12), F(7, 12)),
                                                            I(F(7, 12), F(7, 10))]
    assert maximal_trapping(identity(), Cycle((I(0, 1),))) == [I(0, 1)]


def test_maximal_trapping_is_idempotent_on_the_core():
    f = tent(F(7, 5))
    core = Cycle((I(F(21, 50), F(7, 10)),))
    big = maximal_trapping(f, core)
    assert maximal_trapping(f, Cycle(tuple(big))) == big


def test_renormalize_examples():
    f = tent(F(7, 5))
    assert renormalize(f, Cycle(tuple(T75_CYCLE)), 0, MAXIMAL, Orientation.FLIP) == tent(F(49, 25))
    g = tent(F(19, 16))
    level = build_tower(g).level(2)
    assert renormalize(g, level, 0, MAXIMAL, Orientation.FLIP) == tent(F(361, 256))
    assert renormalize(identity(), Cycle((I(0, 1),)), 0, STRICT, Orientation.PRESERVE) == identity()


@pytest.mark.parametrize("s", [F(7, 5), F(19, 16), F(5, 4), F(11, 10), F(13, 10), F(141, 100)])
def test_tent_square_law(s):
    t = build_tower(tent(s))
    assert renormalize(tent(s), t.level(2), 0, MAXIMAL, Orientation.FLIP) == tent(s * s)


@pytest.mark.parametrize("f", CORPUS, ids=repr)
def test_tower_invariants(f):
    t = build_tower(f)
    qs = t.q_sequence
    assert all(b >= 2 * a for a, b in zip(qs, qs[1:]))
    for pair, s in zip(t.pairs, t.splittings):
        assert len(pair.gaps) == pair.outer.q * (pair.ratio - 1)
        pts = set(s.points)
        assert {f(x) for x in pts} == pts
        assert all(pair.gaps[i].interval.interior_contains(x) for i, x in enumerate(s.points))


@pytest.mark.parametrize("f", CORPUS, ids=repr)
def test_renormalization_conjugacy(f):
    rng = random.Random(7)
    t = build_tower(f)
    for cyc, R in zip(t.cycles, t.renormalized_maps):
        J = cyc.intervals[0]
        flip = R != renormalize(f, cyc, 0, STRICT, Orientation.PRESERVE)
        for _ in range(50):
            x = J.lo + J.length * F(rng.randrange(10 ** 6), 10 ** 6)
            y = x
            for _ in range(cyc.q):
                y = f(y)
            h = (lambda z: (J.hi - z) / J.length) if flip else (lambda z: (z - J.lo) / J.length)
            assert h(y) == R(h(x))


@pytest.mark.parametrize("s, depth", [(F(7, 5), 1), (F(19, 16), 2), (F(3, 2), 0), (2, 0)])
def test_tent_tower_depths(s, depth):
    assert build_tower(tent(s)).depth == depth


def test_tower_respects_the_depth_cap():
    t = build_tower(tent(F(7, 5)), max_depth=0)
    assert t.depth == 0 and t.q_sequence == [1]


def test_intersection_multiplicity_examples():
    assert intersection_multiplicity([]) == 0
    assert intersection_multiplicity([I(0, F(1, 2)), I(F(1, 4), F(3, 4)), I(F(5, 8), 1)]) == 2
    assert intersection_multiplicity([I(0, 1)] * 3) == 3
    assert intersection_multiplicity([I(0, F(1, 2)), I(F(1, 2), 1)]) == 2


@given(st.lists(st.tuples(rationals(), rationals()), max_size=12))
def test_intersection_multiplicity_matches_pointwise_count(pairs):
    ints = [I(min(a, b), max(a, b)) for a, b in pairs]
    pts = {p for J in ints for p in (J.lo, J.hi)}
    brute = max((sum(p in J for J in ints) for p in pts), default=0)
    assert intersection_multiplicity(ints) == brute


@pytest.mark.parametrize("budget", [1, 2])
def test_partial_tower_is_consistent(hit_map, budget):
    with pytest.raises(PieceBudgetExceeded) as info:
        build_tower(hit_map, piece_budget=budget)
    t = info.value.partial
    assert t.partial
    assert len(t.cycles) == len(t.renormalized_maps) == len(t.corners_interior)
    assert len(t.pairs) == len(t.splittings) == max(0, len(t.cycles) - 1)
