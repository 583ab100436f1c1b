"""Command-line front end: documents, exit codes, reports and sweeps."""

import csv
import io
import json
import subprocess
import sys
from fractions import Fraction as F

import pytest
from hypothesis import given

from plrenorm.cli import (EXIT_BUDGET, EXIT_FAILED, EXIT_HYPOTHESIS, EXIT_INPUT,
                          EXIT_OK, RATIONAL, canonical, main, parse_rational,
                          to_jsonable)
from plrenorm.errors import InputError
from plrenorm.logvalue import LogValue

from .conftest import TWO_CORNER_HIT, rationals


def write(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(json.dumps(doc, indent=1) if not isinstance(doc, str) else doc)
    return str(p)


def tent_doc(s):
    s = F(s)
    return {"name": f"tent {s}", "breakpoints": ["0", "1/2", "1"], "values": ["0", str(s / 2), "0"]}


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def report(argv, capsys):
    code, out, _ = run(argv, capsys)
    return code, json.loads(out)


@pytest.fixture
def docs(tmp_path):
    bps, vals = TWO_CORNER_HIT
    return {
        "t75": write(tmp_path, "t75.json", tent_doc(F(7, 5))),
        "t1916": write(tmp_path, "t1916.json", tent_doc(F(19, 16))),
        "t2": write(tmp_path, "t2.json", tent_doc(2)),
        "id": write(tmp_path, "id.json", {"name": "identity", "breakpoints": ["0", "1"],
                                          "values": ["0", "1"]}),
        "hit": write(tmp_path, "hit.json", {"name": "hit", "breakpoints": [str(x) for x in bps],
                                            "values": [str(x) for x in vals]}),
    }


# -- analyze ------------------------------------------------------------------

def test_analyze_tent(docs, capsys):
    code, rep = report(["analyze", docs["t75"]], capsys)
    assert code == EXIT_OK
    r = rep["results"]
    assert [c["location"] for c in r["corners"]] == ["1/2"]
    assert r["variation"]["mantissa"] == "1"
    assert r["fixed_points"] == ["0", "7/12"]


def test_analyze_identity_has_no_corners(docs, capsys):
    code, rep = report(["analyze", docs["id"]], capsys)
    assert code == EXIT_OK and rep["results"]["corners"] == []


@pytest.mark.parametrize("bad,field", [
    ('{"name": "x",\n "breakpoints": ["0", "1/0", "1"],\n "values": ["0", "1", "0"]}', "breakpoints[1]"),
    ('{"name": "x",\n "breakpoints": ["0", "0.5", "1"],\n "values": ["0", "1", "0"]}', "breakpoints[1]"),
    ('{"name": "x",\n "breakpoints": ["0", "1"],\n "values": ["0", "2", "0"]}', None),
    ('{"name": "x", "breakpoints": ["0", "1"]}', "values"),
    ('{"name": "x", "breakpoints": ', None),
])
def test_malformed_input_exit_2(tmp_path, capsys, bad, field):
    code, out, err = run(["analyze", write(tmp_path, "bad.json", bad)], capsys)
    assert code == EXIT_INPUT and out == ""
    assert "input error" in err
    if field:
        assert field in err


def test_bad_rational_diagnostic_has_line(tmp_path, capsys):
    doc = '{"name": "x",\n "breakpoints": ["0", "1/0", "1"],\n "values": ["0", "1", "0"]}'
    _, _, err = run(["analyze", write(tmp_path, "bad.json", doc)], capsys)
    assert "line 2, field breakpoints[1]" in err


def test_missing_file_and_bad_args(tmp_path, capsys):
    assert run(["analyze", str(tmp_path / "nope.json")], capsys)[0] == EXIT_INPUT
    assert run(["frobnicate"], capsys)[0] == EXIT_INPUT


# -- tower --------------------------------------------------------------------

@pytest.mark.parametrize("key,depth,qs", [("t1916", 2, [1, 2, 4]), ("t75", 1, [1, 2]), ("t2", 0, [1])])
def test_tower_depths(docs, capsys, key, depth, qs):
    code, rep = report(["tower", docs[key]], capsys)
    t = rep["results"]["tower"]
    assert code == EXIT_OK and t["depth"] == depth and t["q_sequence"] == qs


def test_tower_max_depth_zero(docs, capsys):
    code, rep = report(["tower", docs["t75"], "--max-depth", "0"], capsys)
    assert code == EXIT_OK and rep["results"]["tower"]["depth"] == 0


def test_tower_budget_exceeded_is_partial(docs, capsys):
    code, rep = report(["tower", docs["t1916"], "--budget", "1"], capsys)
    assert code == EXIT_BUDGET
    t = rep["results"]["tower"]
    assert t["partial"] is True and "error" in rep["results"]
    assert len(t["levels"]) in (0, len(t["pairs"]) + 1)


def test_tower_endpoints_are_rational_strings(docs, capsys):
    _, rep = report(["tower", docs["t1916"]], capsys)
    for lv in rep["results"]["tower"]["levels"]:
        for J in lv["intervals"]:
            assert all(isinstance(x, str) and RATIONAL.fullmatch(x) for x in J)


# -- certify ------------------------------------------------------------------

def test_certify_recurrence_tent_19_16(docs, capsys):
    code, rep = report(["certify", docs["t1916"], "--what", "recurrence"], capsys)
    assert code == EXIT_OK
    assert [c["ok"] for c in rep["results"]["checks"]] == [True, True]


def test_certify_expansion_on_doubling(docs, capsys):
    code, rep = report(["certify", docs["t75"], "--what", "expansion"], capsys)
    assert code == EXIT_HYPOTHESIS
    assert "doubling" in rep["results"]["hypothesis_not_met"]


def test_certify_ledger_depth_zero(docs, capsys):
    code, rep = report(["certify", docs["t2"], "--what", "ledger"], capsys)
    assert code == EXIT_HYPOTHESIS and "hypothesis_not_met" in rep["results"]


@pytest.mark.parametrize("what", ["ledger", "identity", "recurrence"])
def test_certify_tent_checks_pass(docs, capsys, what):
    assert run(["certify", docs["t1916"], "--what", what], capsys)[0] == EXIT_OK
    assert run(["certify", docs["t75"], "--what", what], capsys)[0] == EXIT_OK


@pytest.mark.parametrize("what", ["expansion", "multiplicity"])
def test_certify_hit_passes(docs, capsys, what):
    code, rep = report(["certify", docs["hit"], "--what", what], capsys)
    assert code == EXIT_OK
    if what == "expansion":
        h = rep["results"]["hits"][0]
        assert h["certificate"]["margin_ok"] is True and h["reverified"] is True


def test_certify_missing_level(docs, capsys):
    assert run(["certify", docs["t75"], "--what", "identity", "--level", "9"], capsys)[0] == EXIT_HYPOTHESIS


def test_exit_codes_distinct():
    assert len({EXIT_OK, EXIT_INPUT, EXIT_BUDGET, EXIT_FAILED, EXIT_HYPOTHESIS}) == 5


# -- reports ------------------------------------------------------------------

def test_report_fields_and_determinism(docs, capsys):
    _, a = report(["certify", docs["hit"], "--what", "expansion"], capsys)
    _, b = report(["certify", docs["hit"], "--what", "expansion"], capsys)
    for k in ("command", "argv", "input_sha256", "version", "results", "budget", "determinism_hash"):
        assert k in a
    assert a["determinism_hash"] == b["determinism_hash"]
    a.pop("timing"), b.pop("timing")
    assert canonical(a) == canonical(b)


def test_approx_fields_are_marked(docs, capsys):
    _, rep = report(["analyze", docs["hit"]], capsys)

    def walk(node):
        if isinstance(node, dict):
            for k, v in node.items():
                if isinstance(v, float):
                    assert k.endswith("_approx"), k
                walk(v)
        elif isinstance(node, list):
            for v in node:
                assert not isinstance(v, float)
                walk(v)
    rep.pop("timing")
    walk(rep)


def test_output_file(docs, tmp_path, capsys):
    out = tmp_path / "r.json"
    code, stdout, _ = run(["tower", docs["t75"], "-o", str(out)], capsys)
    assert code == EXIT_OK and stdout == ""
    assert json.loads(out.read_text())["results"]["tower"]["depth"] == 1


@given(rationals(F(-5), F(5), 10 ** 6))
def test_rationals_round_trip(x):
    s = to_jsonable(x)
    assert isinstance(s, str) and RATIONAL.fullmatch(s) and parse_rational(s) == x


def test_logvalue_serialization():
    d = to_jsonable(LogValue(F(49, 25)))
    assert d["mantissa"] == "49/25" and isinstance(d["value_approx"], float)


@pytest.mark.parametrize("s", ["1/0", "0.5", "+1", "1/-2", "01/2x", "", " 1"])
def test_parse_rejects(s):
    with pytest.raises(InputError):
        parse_rational(s, "f")


def test_module_entry_point(docs):
    r = subprocess.run([sys.executable, "-m", "plrenorm", "tower", docs["t75"]],
                       capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["results"]["tower"]["q_sequence"] == [1, 2]


# -- sweeps -------------------------------------------------------------------

def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


def tent_family(tmp_path, lo="11/10", hi="2", step="1/100"):
    return write(tmp_path, "tents.json", {"kind": "tent", "parameters": [
        {"name": "s", "lo": lo, "hi": hi, "step": step}]})


def power_oracle(s):
    k = 0
    while s ** (2 ** (k + 1)) <= 2:
        k += 1
    return k


def test_tent_sweep_depth_matches_power_oracle(tmp_path, capsys):
    out = tmp_path / "d.csv"
    code, _, _ = run(["sweep", tent_family(tmp_path), "--what", "depth", "--jobs", "1",
                      "--csv", str(out)], capsys)
    rows = read_csv(out.read_text())
    assert code == EXIT_OK and len(rows) == 91
    for r in rows:
        assert int(r["depth"]) == power_oracle(F(r["s"])), r["s"]


def test_sweep_empty_range(tmp_path, capsys):
    code, out, _ = run(["sweep", tent_family(tmp_path, lo="2", hi="3/2")], capsys)
    assert code == EXIT_OK
    assert read_csv(out) == [] and out.startswith('"s","depth"')


def test_sweep_rejects_nonpositive_step(tmp_path, capsys):
    assert run(["sweep", tent_family(tmp_path, step="0")], capsys)[0] == EXIT_INPUT


def test_sweep_jobs_identical(tmp_path, capsys):
    fam = write(tmp_path, "tc.json", {
        "kind": "twocorner",
        "parameters": [{"name": "a", "lo": "9/10", "hi": "19/20", "step": "1/80"},
                       {"name": "b", "lo": "71/80", "hi": "73/80", "step": "1/80"}],
        "breakpoints": ["0", "2/5", "3/5", "1"], "values": ["0", "a", "b", "0"],
        "options": {"max_q": 12}})
    texts = []
    for jobs in ("1", "2"):
        out = tmp_path / f"j{jobs}.csv"
        code, _, _ = run(["sweep", fam, "--what", "expansion", "--jobs", jobs, "--csv", str(out)], capsys)
        assert code == EXIT_OK
        texts.append(out.read_bytes())
    assert texts[0] == texts[1]
    rows = read_csv(texts[0].decode())
    assert any(r["hypothesis_met"] == "true" and r["margin_ok"] == "true" for r in rows)
    # rows sorted by the exact parameter tuple
    keys = [(F(r["a"]), F(r["b"])) for r in rows]
    assert keys == sorted(keys)


def test_sweep_rationals_quoted(tmp_path, capsys):
    out = tmp_path / "q.csv"
    run(["sweep", tent_family(tmp_path, lo="7/5", hi="7/5"), "--jobs", "1", "--csv", str(out)], capsys)
    line = out.read_text().splitlines()[1]
    assert line.startswith('"7/5",')
