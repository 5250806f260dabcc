"""Command-line entry point.

Usage:
    lebesgue-classes diagram --in instance.json --out report.json [--seed N]

Commands: classify, diagram, rectilinearize, split, dickson, countex, verify.
Every command reads one JSON instance and writes one JSON report with
sorted keys.  Exit codes: 0 success, 1 other library error, 2 input
error, 3 resource cap, 4 invariant failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import random
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import sympy as sp

from . import __version__, dickson, oracle
from .errors import (
    ArgumentError,
    InputError,
    InvariantError,
    LebesgueError,
    ParseError,
    ResourceError,
)
from .exact import INF, PInterval, rat, rat_from_json, rat_to_str
from .lclass import (
    DEFAULT_CAP,
    Atom,
    Piece,
    _split_name,
    assemble_diagram,
    classify_monomial_1d,
    classify_rect,
    complex_diagram,
    sample_base,
)
from .prepared import PreparedSum, PreparedTerm, RectCell, simple_sum
from .rectilinear import (
    MonCell,
    check_cover,
    check_injective,
    countex_cell,
    jacobian_error,
    rectilinearize,
)
from .series import (
    CoeffFamily,
    TruncPoly,
    collapse_series,
    critical_split,
    dickson_union,
    leading_asymptotics,
)

COMMANDS = ("classify", "diagram", "rectilinearize", "split", "dickson", "countex", "verify")
THREADS_ENV = "LCLASS_THREADS"

EXIT_OK, EXIT_OTHER, EXIT_INPUT, EXIT_RESOURCE, EXIT_INVARIANT = 0, 1, 2, 3, 4


# instance parsing -----------------------------------------------------------

@dataclass
class Instance:
    q: Fraction | None
    seed: int = 0
    options: dict = field(default_factory=dict)
    pieces: list = field(default_factory=list)
    complex: dict | None = None
    sections: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        doc = {"seed": self.seed, "options": dict(self.options)}
        if self.q is not None:
            doc["q"] = rat_to_str(self.q)
        if self.pieces:
            doc["pieces"] = [{"f": _sum_json(p.f), "mu": _sum_json(p.mu),
                              "gamma": [rat_to_str(g) for g in p.gamma]} for p in self.pieces]
        if self.complex is not None:
            c = self.complex
            doc["complex"] = {k: _sum_json(c[k]) if c[k] is not None else None
                              for k in ("f_re", "f_im", "mu_re", "mu_im")}
            doc["complex"]["gamma"] = [rat_to_str(g) for g in c["gamma"]]
        doc.update(self.sections)
        return doc


def _sum_json(s: PreparedSum) -> dict:
    doc = s.to_json()
    if doc["mode"] == "generic":
        doc.pop("points")
    return doc


def _one_sum(cell: RectCell) -> PreparedSum:
    """The constant weight 1 (an empty sum would mean the zero measure)."""
    zero = [0] * cell.n
    return simple_sum(cell, [PreparedTerm(sp.Integer(1), zero, zero)], labels=["one"])


def _parse_sum(doc, cell, path, mode, points):
    if doc is None:
        return None
    return PreparedSum.from_json(doc, cell, path, mode, points)


def _parse_piece(doc, path, mode, points) -> Piece:
    if not isinstance(doc, dict):
        raise ParseError(path, "expected a piece object")
    if "cell" in doc:
        cell = RectCell.from_json(doc["cell"], path + ".cell")
    elif isinstance(doc.get("f"), dict) and "cell" in doc["f"]:
        cell = RectCell.from_json(doc["f"]["cell"], path + ".f.cell")
    else:
        raise ParseError(path + ".cell", "missing cell")
    if "f" not in doc:
        raise ParseError(path + ".f", "missing f")
    f = _parse_sum(doc["f"], cell, path + ".f", mode, points)
    mu = _parse_sum(doc.get("mu"), cell, path + ".mu", mode, points) or _one_sum(cell)
    gamma = doc.get("gamma", ["0"] * (cell.n - cell.l))
    if not isinstance(gamma, list):
        raise ParseError(path + ".gamma", "expected a list")
    gamma = [rat_from_json(g, f"{path}.gamma[{i}]") for i, g in enumerate(gamma)]
    try:
        return Piece(f, mu, tuple(gamma))
    except ArgumentError as exc:
        raise ParseError(path + ".gamma", str(exc)) from exc


def _mono_list(doc, path):
    if not isinstance(doc, list):
        raise ParseError(path, "expected a list")
    out = []
    for i, rec in enumerate(doc):
        p = f"{path}[{i}]"
        if not isinstance(rec, dict) or "alpha" not in rec:
            raise ParseError(p, "expected {alpha, beta}")
        beta = rec.get("beta", 0)
        if isinstance(rec["alpha"], list):
            if not isinstance(beta, list) or len(beta) != len(rec["alpha"]):
                raise ParseError(p + ".beta", "expected a list matching alpha")
            alpha = [rat_from_json(a, f"{p}.alpha[{j}]") for j, a in enumerate(rec["alpha"])]
            l = rec.get("l", 0)
            if not isinstance(l, int):
                raise ParseError(p + ".l", "expected an integer")
            out.append({"alpha": [rat_to_str(a) for a in alpha], "beta": beta, "l": l})
        else:
            if not isinstance(beta, int) or beta < 0:
                raise ParseError(p + ".beta", "expected a natural number")
            out.append({"alpha": rat_to_str(rat_from_json(rec["alpha"], p + ".alpha")), "beta": beta})
    return out


def _parse_family(doc, path) -> CoeffFamily:
    if not isinstance(doc, dict):
        raise ParseError(path, "expected a family object")
    k, nvars = doc.get("k"), doc.get("nvars")
    if not isinstance(k, int) or not isinstance(nvars, int):
        raise ParseError(path, "family needs integer k and nvars")
    coeffs = {}
    for i, rec in enumerate(doc.get("coeffs", [])):
        p = f"{path}.coeffs[{i}]"
        if not isinstance(rec, dict) or "index" not in rec:
            raise ParseError(p, "expected {index, poly}")
        idx = rec["index"]
        if not isinstance(idx, list) or len(idx) != k or not all(isinstance(v, int) and v >= 0 for v in idx):
            raise ParseError(p + ".index", f"expected {k} naturals")
        coeffs[tuple(idx)] = TruncPoly.from_json(rec.get("poly", []), nvars, p + ".poly")
    try:
        return CoeffFamily(k, nvars, coeffs)
    except ArgumentError as exc:
        raise ParseError(path, str(exc)) from exc


def _family_json(fam: CoeffFamily) -> dict:
    return {"k": fam.k, "nvars": fam.nvars,
            "coeffs": [{"index": list(a), "poly": f.to_json()} for a, f in fam.coeffs.items()]}


def _index_list(doc, path, k=None):
    if not isinstance(doc, list):
        raise ParseError(path, "expected a list of index tuples")
    out = []
    for i, v in enumerate(doc):
        if (not isinstance(v, list) or not all(isinstance(e, int) and not isinstance(e, bool) and e >= 0
                                                for e in v) or (k is not None and len(v) != k)):
            raise ParseError(f"{path}[{i}]", "expected a tuple of naturals")
        out.append(tuple(v))
    if len({len(v) for v in out}) > 1:
        raise ParseError(path, "index tuples differ in length")
    return out


def _parse_candidates(doc, path):
    if not isinstance(doc, list):
        raise ParseError(path, "expected a list of candidates")
    out = []
    for i, rec in enumerate(doc):
        p = f"{path}[{i}]"
        if not isinstance(rec, dict) or not isinstance(rec.get("G"), dict):
            raise ParseError(p + ".G", "expected {log power: polynomial in (x, z, w)}")
        G = {}
        for key, poly in rec["G"].items():
            if not str(key).isdigit():
                raise ParseError(f"{p}.G", f"log power {key!r} is not a natural number")
            G[int(key)] = TruncPoly.from_json(poly, 3, f"{p}.G.{key}")
        t = rec.get("t")
        if t is not None and not isinstance(t, (int, float)):
            raise ParseError(p + ".t", "expected a number")
        out.append({"name": str(rec.get("name", f"c{i + 1}")), "G": G, "t": t})
    return out


def parse_instance(data) -> Instance:
    """Validate a JSON instance; errors carry a JSON path such as ``$.q``."""
    if isinstance(data, (bytes, bytearray)):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError("$", f"not UTF-8: {exc}") from exc
    try:
        doc = json.loads(data) if isinstance(data, str) else data
    except json.JSONDecodeError as exc:
        raise ParseError("$", f"invalid JSON: {exc.msg} at line {exc.lineno}") from exc
    if not isinstance(doc, dict):
        raise ParseError("$", "expected a JSON object")

    seed = doc.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ParseError("$.seed", "expected an integer")
    opts_doc = doc.get("options", {})
    if not isinstance(opts_doc, dict):
        raise ParseError("$.options", "expected an object")
    mode = opts_doc.get("mode", "generic")
    if mode not in ("generic", "sampled"):
        raise ParseError("$.options.mode", f"unknown mode {mode!r}")
    points = opts_doc.get("points", [])
    if not isinstance(points, list):
        raise ParseError("$.options.points", "expected a list of points")
    points = [[rat_from_json(v, f"$.options.points[{i}][{j}]") for j, v in enumerate(pt)]
              for i, pt in enumerate(points)]
    options = {"mode": mode}
    if points:
        options["points"] = [[rat_to_str(v) for v in pt] for pt in points]
    for key, kind in (("cap", int), ("samples", int), ("tol", float)):
        if key in opts_doc:
            v = opts_doc[key]
            if not isinstance(v, (int, float)) or isinstance(v, bool) or v <= 0:
                raise ParseError(f"$.options.{key}", "expected a positive number")
            options[key] = kind(v)

    needs_q = any(k in doc for k in ("pieces", "f", "complex"))
    q = None
    if "q" in doc:
        q = rat_from_json(doc["q"], "$.q")
        if q <= 0:
            raise ParseError("$.q", "q must be positive")
    elif needs_q:
        raise ParseError("$.q", "missing q")

    pieces = []
    if "pieces" in doc:
        if not isinstance(doc["pieces"], list) or not doc["pieces"]:
            raise ParseError("$.pieces", "expected a nonempty list")
        pieces = [_parse_piece(p, f"$.pieces[{i}]", mode, points) for i, p in enumerate(doc["pieces"])]
    elif "f" in doc:
        pieces = [_parse_piece(doc, "$", mode, points)]

    cx = None
    if "complex" in doc:
        c = doc["complex"]
        if not isinstance(c, dict) or "f_re" not in c:
            raise ParseError("$.complex.f_re", "missing f_re")
        cell_doc = c.get("cell") or c["f_re"].get("cell")
        if cell_doc is None:
            raise ParseError("$.complex.cell", "missing cell")
        cell = RectCell.from_json(cell_doc, "$.complex.cell")
        cx = {k: _parse_sum(c.get(k), cell, f"$.complex.{k}", mode, points)
              for k in ("f_re", "f_im", "mu_re", "mu_im")}
        if cx["mu_re"] is None:
            cx["mu_re"] = _one_sum(cell)
        cx["gamma"] = tuple(rat_from_json(g, f"$.complex.gamma[{i}]")
                            for i, g in enumerate(c.get("gamma", ["0"] * (cell.n - cell.l))))

    sections = {}
    if "monomials" in doc:
        sections["monomials"] = _mono_list(doc["monomials"], "$.monomials")
    if "family" in doc:
        sections["family"] = _family_json(_parse_family(doc["family"], "$.family"))
        k = sections["family"]["k"]
        if "M_CR" in doc:
            sections["M_CR"] = [list(v) for v in _index_list(doc["M_CR"], "$.M_CR", k)]
    if "M" in doc:
        M = _index_list(doc["M"], "$.M")
        if not M:
            raise ParseError("$.M", "M must be nonempty")
        sections["M"] = [list(v) for v in M]
    if "moncell" in doc:
        sections["moncell"] = MonCell.from_json(doc["moncell"], "$.moncell").to_json()
        sections["moncell"].pop("describe")
    for key in ("rect_mode",):
        if key in doc:
            if doc[key] not in ("bound", "flip"):
                raise ParseError(f"$.{key}", "expected 'bound' or 'flip'")
            sections[key] = doc[key]
    for key in ("x", "check_x"):
        if key in doc:
            v = doc[key]
            if not isinstance(v, list) or not all(isinstance(t, (int, float, str)) for t in v):
                raise ParseError(f"$.{key}", "expected a list of numbers")
            sections[key] = [float(rat_from_json(t, f"$.{key}[{i}]")) if isinstance(t, str) else float(t)
                             for i, t in enumerate(v)]
    if "candidates" in doc:
        _parse_candidates(doc["candidates"], "$.candidates")
        sections["candidates"] = doc["candidates"]
    if "diagram" in doc:
        if not isinstance(doc["diagram"], dict) or "intervals" not in doc["diagram"]:
            raise ParseError("$.diagram.intervals", "expected a diagram report")
        sections["diagram"] = doc["diagram"]
    return Instance(q, seed, options, pieces, cx, sections)


# commands -------------------------------------------------------------------

def cmd_classify(inst: Instance, seed: int) -> dict:
    out = {"monomials": [], "terms": []}
    for rec in inst.sections.get("monomials", []):
        if isinstance(rec["alpha"], list):
            v = classify_rect([rat(a) for a in rec["alpha"]], rec["beta"], rec["l"])
        else:
            v = classify_monomial_1d(rat(rec["alpha"]), rec["beta"])
        out["monomials"].append({**rec, **v.to_json()})
    for k, pc in enumerate(inst.pieces):
        for which in ("f", "mu"):
            psum = getattr(pc, which)
            for g in psum.groups:
                for i, t in enumerate(g.terms):
                    v = classify_rect(t.r, t.s, psum.l)
                    out["terms"].append({"piece": k + 1, "which": which, "group": g.label,
                                         "term": i + 1, **v.to_json()})
    if not out["monomials"] and not out["terms"]:
        raise ParseError("$.monomials", "nothing to classify")
    return out


def cmd_diagram(inst: Instance, seed: int) -> dict:
    cap = inst.options.get("cap", DEFAULT_CAP)
    if inst.complex is not None:
        c = inst.complex
        d = complex_diagram(c["f_re"], c["f_im"], c["mu_re"], c["mu_im"], c["gamma"], inst.q,
                            cap=cap, seed=seed)
    else:
        if not inst.pieces:
            raise ParseError("$.pieces", "diagram needs pieces or f")
        d = assemble_diagram(inst.pieces, inst.q, cap=cap, seed=seed)
    return d.to_json()


def cmd_rectilinearize(inst: Instance, seed: int) -> dict:
    if "moncell" in inst.sections:
        cell = MonCell.from_json(inst.sections["moncell"], "$.moncell")
    else:
        cell = countex_cell()
    mode = inst.sections.get("rect_mode", "bound")
    pieces = rectilinearize(cell, cap=inst.options.get("cap", 12), mode=mode)
    rng = np.random.default_rng(seed)
    checks = []
    for xv in inst.sections.get("check_x", []):
        x = [xv] * cell.m
        rep = check_cover(cell, pieces, x, inst.options.get("samples", 2000), rng)
        jac = max((jacobian_error(p, x, 20, rng=rng) for p in pieces if p.in_base(x)), default=0.0)
        checks.append({"x": xv, "points": rep.points, "coverage": rep.coverage,
                       "missed": rep.missed, "multiple": rep.multiple,
                       "collisions": check_injective(pieces, x, 200, rng),
                       "jacobian_rel_error": jac,
                       "pieces_over_x": sum(p.in_base(x) for p in pieces)})
    return {"source": cell.to_json(), "mode": mode, "count": len(pieces),
            "pieces": [p.to_json() for p in pieces], "checks": checks}


def cmd_split(inst: Instance, seed: int) -> dict:
    if "family" not in inst.sections:
        raise ParseError("$.family", "split needs a family")
    fam = _parse_family(inst.sections["family"], "$.family")
    if "M_CR" in inst.sections:
        M_CR = [tuple(v) for v in inst.sections["M_CR"]]
    else:
        pts = [tuple(rat(v) for v in pt) for pt in inst.options.get("points", [])]
        M_CR = dickson_union(fam, inst.options.get("mode", "generic"), pts)
    split = critical_split(fam, M_CR)
    return {**split.to_json(), "recombines": split.recombine() == fam.as_poly()}


def cmd_dickson(inst: Instance, seed: int) -> dict:
    if "M" not in inst.sections:
        raise ParseError("$.M", "dickson needs M")
    M = [tuple(v) for v in inst.sections["M"]]
    parts = dickson.partition_complement(M)
    return {"antichain": [list(a) for a in dickson.min_antichain(M)],
            "thresholds": list(dickson.thresholds_of(M)),
            "parts": [p.to_json() for p in parts]}


def _countex_sups(x: float, seed: int) -> dict:
    fiber = oracle.countex_fiber(x)
    est = {
        "log(y1/y2)": oracle.sup_estimate(lambda Y: np.log(Y[:, 0] / Y[:, 1]), x, fiber=fiber,
                                          dim=2, seed=seed),
        "log(y1)": oracle.sup_estimate(lambda Y: np.log(Y[:, 0]), x, fiber=fiber, dim=2, seed=seed),
        "log(y2)": oracle.sup_estimate(lambda Y: np.log(Y[:, 1]), x, fiber=fiber, dim=2, seed=seed),
    }
    return {"x": x, "expected_sup": math.log(1 / x),
            "sups": {k: {"sup": v.sup, "bounded": v.bounded} for k, v in est.items()},
            "contrast": est["log(y1/y2)"].bounded and not est["log(y1)"].bounded}


def cmd_countex(inst: Instance, seed: int) -> dict:
    xs = inst.sections.get("x", [0.1])
    for i, x in enumerate(xs):
        if not 0 < x < 1:
            raise ParseError(f"$.x[{i}]", "x must lie in (0, 1)")
    out = {"function": "log(y1/y2)", "cell": "0 < y1 < 1, x*y1 < y2 < y1",
           "fibers": [_countex_sups(x, seed) for x in xs], "candidates": []}
    for c in _parse_candidates(inst.sections.get("candidates", []), "$.candidates"):
        lead = leading_asymptotics(collapse_series(c["G"]))
        rec = {"name": c["name"], "leading": lead.to_json()}
        if c["t"] is not None:
            lim = oracle.limit_along_curve(c["G"], float(c["t"]))
            rec["curve_limit"] = {"t": c["t"], "limit": lim.limit, "values": lim.values}
        out["candidates"].append(rec)
    return out


def _threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ArgumentError(f"{THREADS_ENV} must be an integer, got {raw!r}")


def _lookup(report: dict, config: frozenset) -> PInterval:
    key = sorted(config)
    for iv in report["intervals"]:
        for c in iv["configs"]:
            if sorted(c["vanishing"]) == key:
                return PInterval.from_json(iv)
    raise ParseError("$.diagram.intervals", f"configuration {key} not in the diagram")


def _pick_p(iv: PInterval, q: Fraction, rng: random.Random) -> float:
    ends = [float(v) for v in (iv.lo_value(q), iv.hi_value(q)) if v is not INF]
    while True:
        p = rng.uniform(0.1, 6.0)
        if all(abs(p - e) >= 0.1 for e in ends):
            return p


def cmd_verify(inst: Instance, seed: int) -> dict:
    if not inst.pieces or "diagram" not in inst.sections:
        raise ParseError("$.diagram", "verify needs pieces and a prior diagram")
    report = inst.sections["diagram"]
    q = rat_from_json(report.get("q", rat_to_str(inst.q)), "$.diagram.q")
    npieces = len(inst.pieces)
    atoms = [Atom(n, *_split_name(n, npieces)) for n in report.get("atoms", [])]
    rng = random.Random(seed)
    base = inst.pieces[0].f.cell.base
    count = inst.options.get("samples", 100)
    sides = [(rat(a), rat(b)) for a, b in base]
    xs = [x for x in sample_base(base, rng, grid=8, extra=count)
          if all(a < v < b for v, (a, b) in zip(x, sides))][:count]
    trials = []
    for x in xs:
        config = frozenset(a.name for a in atoms if a.vanishes_at(inst.pieces, x))
        iv = _lookup(report, config)
        trials.append((x, iv, _pick_p(iv, q, rng)))

    def run(trial):
        x, iv, p = trial
        verdicts = []
        for pc in inst.pieces:
            l = pc.f.l
            jac = [0.0] * l + [float(g) for g in pc.gamma]
            verdicts.append(oracle.fiber_integral(pc.f, pc.mu, jac, p, float(q), x).verdict)
        if "inconclusive" in verdicts:
            got = "inconclusive"
        else:
            got = "converges" if all(v == "converges" for v in verdicts) else "diverges"
        predicted = iv.contains(Fraction(p), q)
        agree = got == ("converges" if predicted else "diverges")
        return {"x": [rat_to_str(v) for v in x], "p": p, "predicted": predicted,
                "oracle": got, "agree": agree}

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        rows = list(pool.map(run, trials))
    agree = sum(r["agree"] for r in rows)
    return {"samples": len(rows), "agreements": agree,
            "rate": agree / len(rows) if rows else 1.0, "trials": rows}


HANDLERS = {
    "classify": cmd_classify,
    "diagram": cmd_diagram,
    "rectilinearize": cmd_rectilinearize,
    "split": cmd_split,
    "dickson": cmd_dickson,
    "countex": cmd_countex,
    "verify": cmd_verify,
}


def run(command: str, inst: Instance, seed: int | None = None) -> dict:
    if command not in HANDLERS:
        raise ArgumentError(f"unknown command {command!r}")
    seed = inst.seed if seed is None else seed
    return {"command": command, "version": __version__, "seed": seed,
            "report": HANDLERS[command](inst, seed)}


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=2, default=_default) + "\n"


def _default(obj):
    if isinstance(obj, Fraction):
        return rat_to_str(obj)
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, InputError):
        return EXIT_INPUT
    if isinstance(exc, ResourceError):
        return EXIT_RESOURCE
    if isinstance(exc, InvariantError):
        return EXIT_INVARIANT
    return EXIT_OTHER


def _error_doc(exc: BaseException) -> dict:
    doc = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ParseError):
        doc["path"] = exc.path
    if isinstance(exc, ResourceError):
        doc["count"] = exc.count
    return doc


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lebesgue-classes", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--in", dest="inp", default="-", help="instance JSON (default stdin)")
    ap.add_argument("--out", default="-", help="report JSON (default stdout)")
    ap.add_argument("--seed", type=int, default=None, help="override the instance seed")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.inp == "-":
            data = sys.stdin.buffer.read()
        else:
            try:
                with open(args.inp, "rb") as fh:
                    data = fh.read()
            except OSError as exc:
                raise ParseError("$", f"cannot read {args.inp}: {exc.strerror}") from exc
        inst = parse_instance(data)
        report = run(args.command, inst, args.seed)
    except LebesgueError as exc:
        sys.stderr.write(dumps(_error_doc(exc)))
        return exit_code_for(exc)
    text = dumps(report)
    if args.out == "-":
        sys.stdout.write(text)
    else:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
