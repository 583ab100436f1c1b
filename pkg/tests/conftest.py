"""Shared strategies and reference maps."""

from fractions import Fraction as F

import pytest
from hypothesis import settings, strategies as st

from plrenorm.plmap import make_plmap, tent

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

TWO_CORNER_HIT = ([0, F(2, 5), F(3, 5), 1], [0, F(37, 40), F(9, 10), 0])


def rationals(lo=F(0), hi=F(1), max_den=64):
    """Rationals in ``[lo, hi]`` with bounded denominators."""
    return st.builds(lambda d, t: lo + (hi - lo) * F(t % (d + 1), d),
                     st.integers(1, max_den), st.integers(0, 10 ** 6))


@st.composite
def plmaps(draw, max_pieces=5, max_den=32):
    n = draw(st.integers(1, max_pieces))
    inner = draw(st.lists(rationals(max_den=max_den), min_size=n - 1, max_size=n - 1,
                          unique=True).filter(lambda xs: all(0 < x < 1 for x in xs)))
    bps = [F(0)] + sorted(inner) + [F(1)]
    vals = [draw(rationals(max_den=max_den))]
    for _ in range(n):
        vals.append(draw(rationals(max_den=max_den).filter(lambda v, last=vals[-1]: v != last)))
    return make_plmap(bps, vals)


@pytest.fixture
def hit_map():
    return make_plmap(*TWO_CORNER_HIT)


@pytest.fixture
def t75():
    return tent(F(7, 5))


@pytest.fixture
def t1916():
    return tent(F(19, 16))


# acceptance verdicts, printed once at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: int(c[1:])):
        verdict, desc = ACCEPTANCE[cid]
        terminalreporter.write_line(f"{verdict} {cid}: {desc}")
