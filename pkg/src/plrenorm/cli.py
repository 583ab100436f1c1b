"""Command-line front end: JSON map and family documents in, JSON reports out.

Exit codes: 0 success, 2 malformed input, 3 piece budget exceeded,
4 a requested check came out false (or an anomaly was found), 5 the
hypotheses of the requested check do not hold.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import enum
import hashlib
import io
import itertools
import json
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction

from . import __version__
from ._kernel import BACKEND
from .certify import (derivative_sign_identity, expansion_witness, gap_transition,
                      ledger, lemma_hypotheses, orbit_multiplicity_check,
                      reverify_expansion, verify_ledger_recurrence,
                      verify_transition)
from .cycles import Cycle, RenormTower, build_tower
from .errors import (BudgetError, ConstructionFailed, HypothesisNotMet,
                     InputError, MapError, PieceBudgetExceeded, PLRenormError)
from .logvalue import LogValue
from .orbits import fixed_points
from .plmap import (DEFAULT_PIECE_BUDGET, IntervalQ, PiecewiseAffine, corners,
                    make_plmap, piece_meter, variation)

EXIT_OK, EXIT_INPUT, EXIT_BUDGET, EXIT_FAILED, EXIT_HYPOTHESIS = 0, 2, 3, 4, 5

RATIONAL = re.compile(r"-?[0-9]+(/[1-9][0-9]*)?")
NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


# -- parsing ------------------------------------------------------------------

def _line_of(text: str, key: str) -> int | None:
    i = text.find(f'"{key}"')
    return text.count("\n", 0, i) + 1 if i >= 0 else None


def parse_rational(s, field: str = None, text: str = "") -> Fraction:
    if not isinstance(s, str) or not RATIONAL.fullmatch(s):
        raise InputError(f"{s!r} is not a rational string like \"-3/4\"",
                         line=_line_of(text, field.split(".")[0].split("[")[0]) if field else None,
                         field=field)
    return Fraction(s)


def _load_json(path: str):
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    text = raw.decode("utf-8", errors="replace")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(exc.msg, line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise InputError("top level must be a JSON object", line=1)
    return doc, raw, text


def _rational_list(doc, key, text, prefix=""):
    items = doc.get(key)
    if not isinstance(items, list):
        raise InputError("expected a list of rational strings",
                         line=_line_of(text, key), field=prefix + key)
    return [parse_rational(v, f"{prefix}{key}[{i}]", text) for i, v in enumerate(items)]


def map_from_document(doc: dict, text: str = "", prefix: str = ""):
    name = doc.get("name", "")
    if not isinstance(name, str):
        raise InputError("name must be a string", line=_line_of(text, "name"), field=prefix + "name")
    bps = _rational_list(doc, "breakpoints", text, prefix)
    vals = _rational_list(doc, "values", text, prefix)
    try:
        f = make_plmap(bps, vals)
    except MapError as exc:
        raise InputError(str(exc), line=_line_of(text, "values"), field=prefix + "values") from None
    return name, f


def load_map(path: str):
    doc, raw, text = _load_json(path)
    name, f = map_from_document(doc, text)
    return name, f, raw


@dataclasses.dataclass
class Family:
    kind: str
    names: list[str]
    grids: list[list[Fraction]]
    breakpoints: list = dataclasses.field(default_factory=list)
    values: list = dataclasses.field(default_factory=list)
    maps: list = dataclasses.field(default_factory=list)
    options: dict = dataclasses.field(default_factory=dict)

    def members(self):
        """``(parameter tuple, breakpoints, values)`` in parameter order."""
        if self.kind == "explicit":
            for name, f in self.maps:
                yield (name,), list(f.breakpoints), list(f.values)
            return
        for combo in itertools.product(*self.grids):
            env = dict(zip(self.names, combo))
            if self.kind == "tent":
                s = env["s"]
                yield combo, [Fraction(0), Fraction(1, 2), Fraction(1)], [Fraction(0), s / 2, Fraction(0)]
            else:
                fill = [env[v] if isinstance(v, str) else v for v in self.values]
                yield combo, list(self.breakpoints), fill


def _grid(lo, hi, step):
    out, x = [], lo
    while x <= hi:
        out.append(x)
        x += step
    return out


def _template(doc, key, names, text):
    items = doc.get(key)
    if not isinstance(items, list):
        raise InputError("expected a template list", line=_line_of(text, key), field=key)
    out = []
    for i, v in enumerate(items):
        if isinstance(v, str) and NAME.fullmatch(v):
            if v not in names:
                raise InputError(f"unknown parameter {v!r}", line=_line_of(text, key), field=f"{key}[{i}]")
            out.append(v)
        else:
            out.append(parse_rational(v, f"{key}[{i}]", text))
    return out


def load_family(path: str):
    doc, raw, text = _load_json(path)
    kind = doc.get("kind")
    if kind not in ("tent", "twocorner", "explicit"):
        raise InputError(f"kind must be tent, twocorner or explicit, got {kind!r}",
                         line=_line_of(text, "kind"), field="kind")
    options = doc.get("options", {})
    if not isinstance(options, dict) or any(
            k not in ("max_depth", "max_q", "budget") or not isinstance(v, int) or v < 0
            for k, v in options.items()):
        raise InputError("options takes non-negative integers max_depth, max_q, budget",
                         line=_line_of(text, "options"), field="options")
    if kind == "explicit":
        maps = doc.get("maps")
        if not isinstance(maps, list):
            raise InputError("explicit families need a list of maps", line=_line_of(text, "maps"), field="maps")
        fam = Family(kind, ["name"], [], options=options)
        for i, m in enumerate(maps):
            if not isinstance(m, dict):
                raise InputError("each map must be an object", field=f"maps[{i}]")
            fam.maps.append(map_from_document(m, text, f"maps[{i}]."))
        return fam, raw
    params = doc.get("parameters")
    if not isinstance(params, list) or not params:
        raise InputError("parameters must be a non-empty list", line=_line_of(text, "parameters"),
                         field="parameters")
    names, grids = [], []
    for i, p in enumerate(params):
        where = f"parameters[{i}]"
        if not isinstance(p, dict) or not isinstance(p.get("name"), str) or not NAME.fullmatch(p["name"]):
            raise InputError("each parameter needs a name", line=_line_of(text, "parameters"), field=where)
        lo, hi, step = (parse_rational(p.get(k), f"{where}.{k}", text) for k in ("lo", "hi", "step"))
        if step <= 0:
            raise InputError("step must be positive", line=_line_of(text, "step"), field=f"{where}.step")
        names.append(p["name"])
        grids.append(_grid(lo, hi, step))
    fam = Family(kind, names, grids, options=options)
    if kind == "tent":
        if names != ["s"]:
            raise InputError("the tent family takes the single parameter s", field="parameters")
        bad = [s for s in grids[0] if not 0 < s <= 2]
        if bad:
            raise InputError(f"tent slope {bad[0]} outside (0, 2]", field="parameters[0]")
    else:
        fam.breakpoints = _template(doc, "breakpoints", names, text)
        fam.values = _template(doc, "values", names, text)
        if any(isinstance(b, str) for b in fam.breakpoints):
            raise InputError("breakpoints must be fixed rationals", field="breakpoints")
        if len(fam.breakpoints) != 4 or len(fam.values) != 4:
            raise InputError("two-corner templates have four breakpoints and four values",
                             field="breakpoints")
    return fam, raw


# -- serialization ------------------------------------------------------------

def to_jsonable(obj):
    """JSON tree with rationals as strings; only ``*_approx`` fields are floats."""
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, bool) or obj is None or isinstance(obj, (int, str)):
        return obj
    if isinstance(obj, LogValue):
        return {"mantissa": str(obj.mantissa), "value_approx": round(obj.approx(), 12)}
    if isinstance(obj, IntervalQ):
        return [str(obj.lo), str(obj.hi)]
    if isinstance(obj, Cycle):
        return [to_jsonable(J) for J in obj.intervals]
    if isinstance(obj, PiecewiseAffine):
        return {"breakpoints": [str(b) for b in obj.breakpoints], "values": [str(v) for v in obj.values]}
    if isinstance(obj, enum.Enum):
        return obj.value
    if dataclasses.is_dataclass(obj):
        return {f.name: to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, float):
        raise TypeError("floats are only allowed in *_approx fields")
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def canonical(tree) -> str:
    return json.dumps(tree, sort_keys=True, separators=(",", ":"))


def make_report(command, argv, raw, results, usage, started, budget):
    report = {
        "command": command,
        "argv": list(argv),
        "input_sha256": hashlib.sha256(raw).hexdigest(),
        "version": __version__,
        "results": results,
        "budget": {"piece_budget": budget, **usage},
    }
    report["determinism_hash"] = hashlib.sha256(canonical(report).encode()).hexdigest()
    report["timing"] = {"seconds_approx": round(time.perf_counter() - started, 3),
                        "backend": BACKEND}
    return report


def tower_tree(t: RenormTower):
    levels = []
    for n, cyc in enumerate(t.cycles, start=1):
        levels.append({
            "n": n, "q": cyc.q, "intervals": to_jsonable(cyc),
            "corners_interior": t.corners_interior[n - 1],
            "corners_contained": t.corners_contained[n - 1],
            "renormalized_map": to_jsonable(t.renormalized_maps[n - 1]),
        })
    pairs = []
    for n, p in enumerate(t.pairs, start=1):
        s = t.splittings[n - 1]
        pairs.append({
            "outer_level": n, "ratio": p.ratio, "doubling": p.ratio == 2,
            "gaps": [to_jsonable(g.interval) for g in p.gaps],
            "containing": list(p.containing),
            "searched_q": list(t.searched_q[n - 1]),
            "complete": t.complete[n - 1],
            "splitting": None if s is None else {
                "points": to_jsonable(s.points), "rule": s.rule,
                "orbits": [to_jsonable(o.points) for o in s.orbits]},
            "splitting_error": t.splitting_errors[n - 1],
        })
    return {"depth": t.depth, "q_sequence": t.q_sequence, "levels": levels, "pairs": pairs,
            "corner_orbit_horizon": t.corner_orbit_horizon,
            "partial": t.partial, "partial_reason": t.partial_reason}


# -- analyses shared by certify and sweep -------------------------------------

def expansion_analysis(f, tower: RenormTower, budget=DEFAULT_PIECE_BUDGET, only=None):
    """Lemma checks for every non-doubling pair of the tower meeting the hypotheses.

    Returns ``(hits, skipped)``; each hit carries the certificate, its
    re-verification, the gap transitions and the multiplicity reports.
    """
    hits, skipped = [], []
    for n, pair in enumerate(tower.pairs, start=1):
        if only is not None and n != only:
            continue
        try:
            lemma_hypotheses(f, pair, piece_budget=budget)
        except HypothesisNotMet as exc:
            skipped.append({"outer_level": n, "reason": str(exc)})
            continue
        hit = {"outer_level": n, "ratio": pair.ratio, "anomalies": []}
        s = tower.splittings[n - 1]
        if s is None:
            hit["anomalies"].append(f"no splitting: {tower.splitting_errors[n - 1]}")
            hits.append(hit)
            continue
        cert = expansion_witness(f, pair, s, piece_budget=budget)
        hit["certificate"] = cert
        hit["reverified"] = reverify_expansion(f, cert)
        if not cert.margin_ok:
            hit["anomalies"].append("no splitting orbit clears the expansion threshold")
        if not hit["reverified"]:
            hit["anomalies"].append("certificate failed the independent re-check")
        transitions, mults = [], []
        for gi in range(len(pair.gaps)):
            try:
                tr = gap_transition(f, pair, gi, s, budget, check_hypotheses=False)
                ok = verify_transition(f, tr)
                transitions.append({"transition": tr, "verified": ok})
                if not ok:
                    hit["anomalies"].append(f"gap {gi}: transition failed re-evaluation")
            except ConstructionFailed as exc:
                transitions.append({"gap_index": gi, "failed": str(exc),
                                    "diagnostics": to_jsonable(exc.diagnostics)})
                hit["anomalies"].append(f"gap {gi}: {exc}")
            m = orbit_multiplicity_check(f, pair, gi, s, budget)
            mults.append(m)
            if not (m.multiplicity_ok and m.variation_ok):
                hit["anomalies"].append(f"gap {gi}: multiplicity bound fails")
        hit["transitions"] = transitions
        hit["multiplicity"] = mults
        hits.append(hit)
    return hits, skipped


# -- commands -----------------------------------------------------------------

def cmd_analyze(args):
    name, f, raw = load_map(args.map)
    pts, segs = fixed_points(f)
    results = {
        "name": name, "map": to_jsonable(f), "pieces": f.npieces,
        "slopes": to_jsonable(f.slopes()),
        "corners": [{"location": c.location, "slope_left": c.slope_left,
                     "slope_right": c.slope_right, "v": c.v, "turning": c.is_turning}
                    for c in corners(f)],
        "variation": variation(f),
        "fixed_points": pts, "fixed_segments": [s.interval for s in segs],
    }
    return raw, to_jsonable(results), EXIT_OK


def _tower(f, args):
    return build_tower(f, max_depth=args.max_depth, max_q=args.max_q, piece_budget=args.budget)


def cmd_tower(args):
    name, f, raw = load_map(args.map)
    try:
        t = _tower(f, args)
    except PieceBudgetExceeded as exc:
        return raw, {"name": name, "tower": tower_tree(exc.partial), "error": str(exc)}, EXIT_BUDGET
    return raw, {"name": name, "tower": tower_tree(t)}, EXIT_OK


def _levels(args, available):
    if args.level is None:
        return list(available)
    if args.level not in available:
        raise HypothesisNotMet(f"level {args.level} is not available (have {list(available)})")
    return [args.level]


def cmd_certify(args):
    name, f, raw = load_map(args.map)
    try:
        t = _tower(f, args)
    except PieceBudgetExceeded as exc:
        return raw, {"name": name, "tower": tower_tree(exc.partial), "error": str(exc)}, EXIT_BUDGET
    res = {"name": name, "what": args.what, "q_sequence": t.q_sequence}
    code = EXIT_OK
    try:
        if args.what == "recurrence":
            if t.depth < 1:
                raise HypothesisNotMet("the recurrence needs a tower of depth >= 1")
            reps = [verify_ledger_recurrence(f, t, n) for n in _levels(args, range(1, t.depth + 1))]
            res["checks"] = to_jsonable(reps)
            code = EXIT_OK if all(r.ok for r in reps) else EXIT_FAILED
        elif args.what == "identity":
            reps = [derivative_sign_identity(f, t, n) for n in _levels(args, range(1, len(t.cycles) + 1))]
            res["checks"] = to_jsonable(reps)
            code = EXIT_OK if all(r.ok for r in reps) else EXIT_FAILED
        elif args.what == "ledger":
            rep = ledger(f, t, piece_budget=args.budget)
            res["ledger"] = to_jsonable(rep)
            failed = (rep.violations or rep.increasing is False
                      or any(lv.recurrence_ok is False for lv in rep.levels)
                      or any(not ok for lv in rep.levels for _, ok in lv.identity_checks))
            errored = any(lv.errors for lv in rep.levels)
            code = EXIT_FAILED if failed else EXIT_HYPOTHESIS if errored else EXIT_OK
        else:
            hits, skipped = expansion_analysis(f, t, args.budget, args.level)
            res["skipped"] = skipped
            if not hits:
                raise HypothesisNotMet("no pair of the tower meets the expansion hypotheses: "
                                       + "; ".join(s["reason"] for s in skipped) if skipped
                                       else "the tower has no nested pair")
            if args.what == "multiplicity":
                res["checks"] = to_jsonable([{"outer_level": h["outer_level"], "reports": h.get("multiplicity", [])}
                                             for h in hits])
                ok = all(m.multiplicity_ok and m.variation_ok for h in hits for m in h.get("multiplicity", []))
                code = EXIT_OK if ok and all("multiplicity" in h for h in hits) else EXIT_FAILED
            else:
                res["hits"] = to_jsonable(hits)
                code = EXIT_FAILED if any(h["anomalies"] for h in hits) else EXIT_OK
    except HypothesisNotMet as exc:
        res["hypothesis_not_met"] = str(exc)
        code = EXIT_HYPOTHESIS
    except PLRenormError as exc:
        if isinstance(exc, BudgetError):
            raise
        # a precondition of the check (corner placement, cycle membership) fails
        res["hypothesis_not_met"] = f"{type(exc).__name__}: {exc}"
        code = EXIT_HYPOTHESIS
    return raw, res, code


CSV_COLUMNS = ["depth", "q_list", "hypothesis_met", "margin_ok", "margin_fraction"]
EXTRA_COLUMNS = ["level", "ratio", "witness_period", "reverified", "transitions_ok",
                 "multiplicity_ok", "variation_ok", "hits", "error"]


def sweep_row(task):
    """One sweep row; a top-level function so worker processes can run it."""
    params, bps, vals, what, opts = task
    row = {k: "" for k in CSV_COLUMNS + EXTRA_COLUMNS}
    budget = opts.get("budget", DEFAULT_PIECE_BUDGET)
    try:
        f = make_plmap(bps, vals)
        t = build_tower(f, max_depth=opts.get("max_depth", 8), max_q=opts.get("max_q", 64),
                        piece_budget=budget, splittings=(what == "expansion"))
        row["depth"] = t.depth
        row["q_list"] = ";".join(map(str, t.q_sequence))
        if what == "expansion":
            hits, _ = expansion_analysis(f, t, budget)
            row["hypothesis_met"] = bool(hits)
            row["hits"] = len(hits)
            if hits:
                h = hits[0]
                cert = h.get("certificate")
                row["level"] = h["outer_level"]
                row["ratio"] = h["ratio"]
                row["margin_ok"] = all(x.get("certificate") is not None and x["certificate"].margin_ok
                                       for x in hits)
                row["reverified"] = all(x.get("reverified", False) for x in hits)
                row["transitions_ok"] = all(tr.get("verified", False) for x in hits
                                            for tr in x.get("transitions", [None]) if tr is not None) \
                    and all("transitions" in x for x in hits)
                row["multiplicity_ok"] = all(m.multiplicity_ok for x in hits for m in x.get("multiplicity", []))
                row["variation_ok"] = all(m.variation_ok for x in hits for m in x.get("multiplicity", []))
                if cert is not None:
                    row["margin_fraction"] = str(cert.margin_fraction)
                    row["witness_period"] = cert.witness.period
    except BudgetError as exc:
        row["error"] = f"budget: {exc}"
    except PLRenormError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    return params, row


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def cmd_sweep(args):
    fam, raw = load_family(args.family)
    opts = dict(fam.options)
    for key in ("max_depth", "max_q", "budget"):
        v = getattr(args, key)
        if v is not None:
            opts[key] = v
    tasks = [(tuple(str(p) for p in params), bps, vals, args.what, opts)
             for params, bps, vals in fam.members()]
    jobs = args.jobs or os.cpu_count() or 1
    if jobs <= 1 or len(tasks) <= 1:
        rows = [sweep_row(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(sweep_row, tasks, chunksize=max(1, len(tasks) // (8 * jobs))))

    def key(item):
        params = item[0]
        return tuple((0, Fraction(p)) if RATIONAL.fullmatch(p) else (1, p) for p in params)

    rows.sort(key=key)
    buf = io.StringIO()
    w = csv.writer(buf, quoting=csv.QUOTE_NONNUMERIC, lineterminator="\n")
    w.writerow(fam.names + CSV_COLUMNS + EXTRA_COLUMNS)
    for params, row in rows:
        w.writerow(list(params) + [_fmt(row[c]) for c in CSV_COLUMNS + EXTRA_COLUMNS])
    text = buf.getvalue()
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    summary = {
        "kind": fam.kind, "what": args.what, "rows": len(rows),
        "csv_sha256": hashlib.sha256(text.encode()).hexdigest(),
        "errors": sum(1 for _, r in rows if r["error"]),
        "budget_errors": sum(1 for _, r in rows if r["error"].startswith("budget")),
    }
    code = EXIT_OK
    if args.what == "expansion":
        found = [r for _, r in rows if r["hypothesis_met"] is True]
        summary["hits"] = len(found)
        bad = [r for r in found if not (r["margin_ok"] and r["reverified"] and r["transitions_ok"]
                                        and r["multiplicity_ok"] and r["variation_ok"])]
        summary["anomalies"] = len(bad)
        if bad:
            code = EXIT_FAILED
    if code == EXIT_OK and summary["budget_errors"]:
        code = EXIT_BUDGET
    return raw, summary, code


# -- entry point --------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="plrenorm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, output=True):
        if output:
            sp.add_argument("-o", "--output", help="write the JSON report here instead of stdout")

    def tower_opts(sp, defaults=True):
        sp.add_argument("--max-depth", type=int, default=8 if defaults else None)
        sp.add_argument("--max-q", type=int, default=64 if defaults else None)
        sp.add_argument("--budget", type=int, default=DEFAULT_PIECE_BUDGET if defaults else None,
                        help="largest number of pieces any iterate may have")

    a = sub.add_parser("analyze", help="corners, variation and fixed points of a map")
    a.add_argument("map")
    common(a)

    t = sub.add_parser("tower", help="nested cycles, splittings and renormalizations")
    t.add_argument("map")
    tower_opts(t)
    common(t)

    c = sub.add_parser("certify", help="exact certificates on the tower of a map")
    c.add_argument("map")
    c.add_argument("--what", required=True,
                   choices=["expansion", "ledger", "recurrence", "identity", "multiplicity"])
    c.add_argument("--level", type=int, help="restrict to one level (outer level for pairs)")
    tower_opts(c)
    common(c)

    s = sub.add_parser("sweep", help="tabulate a parameter family as CSV")
    s.add_argument("family")
    s.add_argument("--what", choices=["depth", "expansion"], default="depth")
    s.add_argument("--jobs", type=int, default=None, help="worker processes (default: all CPUs)")
    s.add_argument("--csv", help="CSV destination (default: stdout)")
    tower_opts(s, defaults=False)
    common(s)
    return p


COMMANDS = {"analyze": cmd_analyze, "tower": cmd_tower, "certify": cmd_certify, "sweep": cmd_sweep}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    started = time.perf_counter()
    budget = getattr(args, "budget", None) or DEFAULT_PIECE_BUDGET
    try:
        with piece_meter() as usage:
            raw, results, code = COMMANDS[args.command](args)
    except InputError as exc:
        print(f"plrenorm: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BudgetError as exc:
        print(f"plrenorm: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    report = make_report(args.command, argv, raw, results, usage, started, budget)
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    out = getattr(args, "output", None)
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    elif not (args.command == "sweep" and not args.csv):
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
