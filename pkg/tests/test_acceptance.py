"""Acceptance criteria A1 to A9, each checked exactly and reported as PASS or FAIL."""

import csv
import io
import json
import time
from contextlib import contextmanager
from fractions import Fraction as F
from importlib import resources

import pytest

from plrenorm.certify import (beta, derivative_sign_identity, expansion_witness,
                              ledger, multiplier_scan, mu, reverify_expansion,
                              verify_ledger_recurrence)
from plrenorm.cli import canonical, expansion_analysis, main, to_jsonable
from plrenorm.cycles import MAXIMAL, build_tower, renormalize
from plrenorm.orbits import PeriodicOrbit, multiplier, periodic_points
from plrenorm.plmap import (Orientation, iterate, make_plmap, tent,
                            variation)

from .conftest import ACCEPTANCE, TWO_CORNER_HIT
from .test_orbits import brute_periodic_points

TWO_CORNER = [F(0), F(2, 5), F(3, 5), F(1)]


@contextmanager
def criterion(cid, desc):
    try:
        yield
    except BaseException:
        ACCEPTANCE[cid] = ("FAIL", desc)
        print(f"FAIL {cid}: {desc}")
        raise
    ACCEPTANCE[cid] = ("PASS", desc)
    print(f"PASS {cid}: {desc}")


def power_depth(s):
    k = 0
    while s ** (2 ** (k + 1)) <= 2:
        k += 1
    return k


def tent_file(tmp_path, s):
    p = tmp_path / f"tent_{s.numerator}_{s.denominator}.json"
    p.write_text(json.dumps({"name": f"tent {s}", "breakpoints": ["0", "1/2", "1"],
                             "values": ["0", str(s / 2), "0"]}))
    return str(p)


@pytest.fixture(scope="module")
def default_sweep(tmp_path_factory):
    """The documented twocorner grid swept for expansion hits with default jobs."""
    out = tmp_path_factory.mktemp("sweep") / "default.csv"
    family = str(resources.files("plrenorm") / "data" / "twocorner_default.json")
    code = main(["sweep", family, "--what", "expansion", "--csv", str(out),
                 "-o", str(out.with_suffix(".json"))])
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    summary = json.loads(out.with_suffix(".json").read_text())
    return code, rows, summary


def hit_rows(rows):
    return [r for r in rows if r["hypothesis_met"] == "true"]


def row_map(r):
    return make_plmap(TWO_CORNER, [0, F(r["a"]), F(r["b"]), 0])


def test_a1_tent_tower_depths(tmp_path, capsys):
    with criterion("A1", "tent tower depths {1, 2, 0, 0} and q sequences match s^(2^k) <= 2"):
        cases = {F(7, 5): [1, 2], F(19, 16): [1, 2, 4], F(3, 2): [1], F(2): [1]}
        for s, qs in cases.items():
            t0 = time.perf_counter()
            code = main(["tower", tent_file(tmp_path, s)])
            elapsed = time.perf_counter() - t0
            tower = json.loads(capsys.readouterr().out)["results"]["tower"]
            assert code == 0
            assert tower["q_sequence"] == qs
            assert tower["depth"] == len(qs) - 1 == power_depth(s)
            assert elapsed < 1.0


def test_a2_renormalization_squares_the_slope():
    with criterion("A2", "renormalizing tent(s) gives tent(s^2) exactly, twice for 19/16"):
        t0 = time.perf_counter()
        for s in (F(7, 5), F(19, 16)):
            f = tent(s)
            R = renormalize(f, build_tower(f).level(2), 0, MAXIMAL, Orientation.FLIP)
            assert (R.breakpoints, R.values) == (tent(s * s).breakpoints, tent(s * s).values)
        g = renormalize(tent(F(19, 16)), build_tower(tent(F(19, 16))).level(2), 0, MAXIMAL,
                        Orientation.FLIP)
        R2 = renormalize(g, build_tower(g).level(2), 0, MAXIMAL, Orientation.FLIP)
        target = tent(F(19, 16) ** 4)
        assert (R2.breakpoints, R2.values) == (target.breakpoints, target.values)
        assert time.perf_counter() - t0 < 1.0


def test_a3_ledger_recurrence():
    with criterion("A3", "beta_2 = beta_1 * mu_1^2 for tent(7/5); recurrence at both tent(19/16) levels"):
        t0 = time.perf_counter()
        f = tent(F(7, 5))
        t = build_tower(f)
        b1, m1, b2 = beta(f, t.level(1)), mu(f, t.splittings[0]), beta(f, t.level(2))
        assert (b1.mantissa, m1.mantissa, b2.mantissa) == (F(49, 25), F(7, 5), F(2401, 625))
        assert F(2401, 625) == F(49, 25) * F(7, 5) ** 2
        assert verify_ledger_recurrence(f, t, 1).ok
        g = tent(F(19, 16))
        tg = build_tower(g)
        assert all(verify_ledger_recurrence(g, tg, n).ok for n in (1, 2))
        assert time.perf_counter() - t0 < 1.0


def test_a4_expansion_certificates_on_twocorner_sweep(default_sweep):
    with criterion("A4", "every non-doubling twocorner hit has (m-1)*rho^11 >= 1 and re-verifies"):
        code, rows, summary = default_sweep
        hits = hit_rows(rows)
        assert len(rows) >= 10 ** 4
        assert hits
        assert code == 0 and summary["results"]["anomalies"] == 0
        for r in hits:
            assert r["margin_ok"] == "true" and r["reverified"] == "true", r
            assert F(r["margin_fraction"]) >= 0
            assert int(r["ratio"]) != 2
        # recompute every hit outside the sweep and check it from scratch
        for r in hits:
            f = row_map(r)
            t = build_tower(f, max_q=12)
            found, _ = expansion_analysis(f, t)
            assert found and len(found) == int(r["hits"])
            for h in found:
                cert = h["certificate"]
                assert cert.margin_ok and reverify_expansion(f, cert)
                m, rho = cert.multiplier.log_abs.mantissa, variation(f).mantissa
                assert (m - 1) * rho ** 11 >= 1
            assert str(found[0]["certificate"].margin_fraction) == r["margin_fraction"]


def test_a5_multiplicity_bound_on_every_hit(default_sweep):
    with criterion("A5", "orbit of T has intersection multiplicity <= 11 and Var <= 11V on every hit"):
        _, rows, _ = default_sweep
        hits = hit_rows(rows)
        assert hits
        for r in hits:
            assert r["multiplicity_ok"] == "true" and r["variation_ok"] == "true", r
            assert r["transitions_ok"] == "true", r
        for r in hits:
            f = row_map(r)
            found, _ = expansion_analysis(f, build_tower(f, max_q=12))
            rho = variation(f).mantissa
            for h in found:
                for m in h["multiplicity"]:
                    assert m.multiplicity <= 11
                    assert m.variation_on_T.mantissa <= rho ** 11


def test_a6_derivative_sign_identity():
    with criterion("A6", "sign identity holds at the interval endpoints, tent(7/5) level 1, tent(19/16) levels 1-2"):
        f = tent(F(7, 5))
        r = derivative_sign_identity(f, build_tower(f), 1)
        assert r.ok and r.x == F(21, 50)
        g = tent(F(19, 16))
        tg = build_tower(g)
        for n in (1, 2):
            r = derivative_sign_identity(g, tg, n)
            assert r.ok and r.x == tg.level(n).intervals[0].lo


def test_a7_orbit_machinery_against_brute_force():
    with criterion("A7", "periodic points of tent(2) match brute force for p <= 6; {2/5, 4/5} has multiplier -4"):
        t0 = time.perf_counter()
        f = tent(2)
        for p in range(1, 7):
            orbits, segs = periodic_points(f, p)
            assert segs == []
            pts = {x for o in orbits for x in o.points}
            assert pts == brute_periodic_points(f, p)
            # every fixed point of f^p, of any minimal period dividing p
            total = sum(len(o.points) for d in range(1, p + 1) if p % d == 0
                        for o in periodic_points(f, d)[0])
            assert total == 2 ** p == iterate(f, p).npieces
        m = multiplier(f, PeriodicOrbit((F(2, 5), F(4, 5))))
        assert m.log_abs.mantissa == 4 and m.sign == -1 and m.value == -4
        assert time.perf_counter() - t0 < 5.0


def test_a8_monotone_ledger(default_sweep):
    with criterion("A8", "beta strictly increases when every mu > 1; no scan violations for the tents"):
        corpus = [tent(s) for s in (F(7, 5), F(19, 16), F(5, 4), F(11, 10), F(41, 40), F(13, 10))]
        corpus += [make_plmap([0, c, 1], [0, v, 0])
                   for c, v in ((F(2, 5), F(7, 10)), (F(9, 20), F(13, 20)))]
        corpus.append(make_plmap(*TWO_CORNER_HIT))
        _, rows, _ = default_sweep
        deep = [r for r in rows if int(r["depth"]) >= 1]
        corpus += [row_map(r) for r in deep[::40]]
        premise = 0
        for f in corpus:
            t = build_tower(f, max_q=16)
            if t.depth < 1:
                continue
            rep = ledger(f, t)
            if rep.increasing is not None:
                premise += 1
                seq = rep.beta_sequence
                assert all(a < b for a, b in zip(seq, seq[1:])), (f, seq)
                assert rep.increasing
        assert premise >= 6
        for s in (F(7, 5), F(19, 16)):
            g = tent(s)
            assert multiplier_scan(g, build_tower(g), 4) == []


def test_a9_determinism_and_parallel_equivalence(tmp_path, capsys):
    with criterion("A9", "sweep CSVs identical for --jobs 1 and --jobs 3; certificates reproduce bit for bit"):
        fam = tmp_path / "grid.json"
        fam.write_text(json.dumps({
            "kind": "twocorner",
            "parameters": [{"name": "a", "lo": "9/10", "hi": "19/20", "step": "1/400"},
                           {"name": "b", "lo": "1401/1600", "hi": "1599/1600", "step": "1/400"}],
            "breakpoints": ["0", "2/5", "3/5", "1"], "values": ["0", "a", "b", "0"],
            "options": {"max_q": 12}}))
        outs = []
        for jobs in ("1", "3"):
            out = tmp_path / f"jobs{jobs}.csv"
            assert main(["sweep", str(fam), "--what", "expansion", "--jobs", jobs,
                         "--csv", str(out), "-o", str(tmp_path / "r.json")]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
        assert len(outs[0].splitlines()) > 400
        assert b'"true","true"' in outs[0]

        def certificate():
            f = make_plmap(*TWO_CORNER_HIT)
            t = build_tower(f, max_q=12)
            n = next(i for i, p in enumerate(t.pairs, start=1) if p.ratio != 2)
            return canonical(to_jsonable(expansion_witness(f, t.pairs[n - 1], t.splittings[n - 1])))
        assert certificate() == certificate()

        hit = tmp_path / "hit.json"
        hit.write_text(json.dumps({"name": "hit", "breakpoints": [str(x) for x in TWO_CORNER_HIT[0]],
                                   "values": [str(x) for x in TWO_CORNER_HIT[1]]}))
        reports = []
        for _ in range(2):
            assert main(["certify", str(hit), "--what", "expansion"]) == 0
            rep = json.loads(capsys.readouterr().out)
            rep.pop("timing")
            reports.append(canonical(rep))
        assert reports[0] == reports[1]
