"""End-to-end acceptance checks; each test records one PASS/FAIL line."""

import json
import math
import random
import time
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp

from conftest import one_sum, record_criterion, two_term_piece
from lebesgue_classes import cli, dickson, oracle
from lebesgue_classes.exact import INF, QLin, endpoints
from lebesgue_classes.lclass import (
    Piece,
    assemble_diagram,
    classify_at,
    classify_monomial_1d,
    int_p_locus,
    sample_base,
    weak_triangle_exact,
    weak_triangle_float,
)
from lebesgue_classes.prepared import PreparedTerm, RectCell, simple_sum
from lebesgue_classes.rectilinear import (
    check_cover,
    check_injective,
    countex_cell,
    random_cell,
    rectilinearize,
)
from lebesgue_classes.series import (
    CoeffFamily,
    TruncPoly,
    collapse_series,
    critical_split,
    dickson_union,
    domination_holds,
    generic_point,
    leading_asymptotics,
)
from lebesgue_classes.symbolic import X

from reference import antichain_brute, finite_difference_det, lattice_complement

pytestmark = pytest.mark.acceptance


def agrees(verdict, inside):
    return verdict.verdict == ("converges" if inside else "diverges")


# 1 -------------------------------------------------------------------------

def test_monomial_classifier_against_oracle(reference):
    frozen = {(Fraction(row["alpha"]), row["beta"]): row["integrable"] for row in reference["monomial_1d"]}
    cell = RectCell.unit_cube(1)
    one = one_sum(cell)
    start = time.perf_counter()
    cases = hits = 0
    for alpha in ["-2", "-3/4", "-1/2", "0", "1/2", "1", "-1"]:
        for beta in (0, 1, 2):
            a = Fraction(alpha)
            v = classify_monomial_1d(a, beta)
            if a == -1:
                assert not v.integrable and frozen[(a, beta)] is False
                continue
            f = simple_sum(cell, [PreparedTerm(sp.Integer(1), [a], [beta])])
            got = oracle.fiber_integral(f, one, None, 1.0, 1.0, [0])
            cases += 1
            hits += agrees(got, v.integrable) and v.integrable == frozen[(a, beta)]
    elapsed = time.perf_counter() - start
    ok = record_criterion(1, cases == 18 and hits == 18 and elapsed < 60,
                          f"{hits}/{cases} monomials agree in {elapsed:.1f}s")
    assert ok


# 2 -------------------------------------------------------------------------

COEFFS = [1, X(1), X(1) - Fraction(1, 2), 2 - X(1)]
HALVES = [Fraction(k, 2) for k in range(-2, 3)]


def random_instance(rng):
    width = rng.randint(1, 3)
    l = rng.choice([0, 1]) if width < 3 else 0
    cell = RectCell.from_json({"m": 1, "n": width + l, "l": l, "box": [["1/2", "1"]] * l})
    terms = []
    for _ in range(rng.randint(1, 3)):
        r = [rng.choice(HALVES) for _ in range(cell.n)]
        s = [rng.randint(0, 2) for _ in range(cell.n)]
        terms.append(PreparedTerm(sp.sympify(rng.choice(COEFFS)), r, s))
    f = simple_sum(cell, terms)
    r_mu = [rng.choice(HALVES) for _ in range(cell.n)]
    mu = simple_sum(cell, [PreparedTerm(sp.Integer(1), r_mu, [0] * cell.n)])
    gamma = tuple(rng.choice([Fraction(0), Fraction(1, 2), Fraction(1)]) for _ in range(width))
    q = rng.choice([Fraction(1, 2), Fraction(1), Fraction(2)])
    x = Fraction(1, 2) if rng.random() < 0.2 else Fraction(rng.randint(1, 999), 1000)
    return Piece(f, mu, gamma), q, x


def pick_ps(iv, q, rng, count=2):
    ends = [float(e.eval(q)) for e in endpoints(iv)]
    ps = []
    while len(ps) < count:
        p = rng.uniform(0.1, 6.0)
        if all(abs(p - e) >= 0.1 for e in ends):
            ps.append(p)
    return ps


def test_random_prepared_instances():
    rng = random.Random(2024)
    trials = hits = 0
    exact_endpoints = True
    for _ in range(200):
        piece, q, x = random_instance(rng)
        d = assemble_diagram([piece], q, feasibility=False)
        for iv in d.intervals:
            exact_endpoints &= all(isinstance(e, QLin) and e.eval(q) == e.a + e.b * q
                                   for e in endpoints(iv))
        iv = classify_at(d, [piece], [x])
        ps = pick_ps(iv, q, rng)
        jac = [0] * piece.f.cell.l + list(piece.gamma)
        verdicts = oracle.fiber_integrals(piece.f, piece.mu, jac, ps, float(q), [x])
        for p, v in zip(ps, verdicts):
            trials += 1
            hits += agrees(v, iv.contains(Fraction(p), q))
    rate = hits / trials
    ok = record_criterion(2, rate >= 0.99 and exact_endpoints,
                          f"{hits}/{trials} oracle agreements ({rate:.3f}), "
                          f"endpoints exact: {exact_endpoints}")
    assert ok


# 3 -------------------------------------------------------------------------

def test_dickson_partitions_exhaustively():
    rng = random.Random(3)
    box = 8
    failures = []
    start = time.perf_counter()
    for _ in range(100):
        M = {tuple(rng.randint(0, 6) for _ in range(3)) for _ in range(rng.randint(1, 6))}
        mins = dickson.min_antichain(M)
        if not dickson.is_antichain(mins) or sorted(mins) != antichain_brute(M):
            failures.append(("antichain", M))
        for a in np.ndindex(*(box + 1,) * 3):
            if dickson.upward_closure_contains(mins, a) != dickson.upward_closure_contains(M, a):
                failures.append(("closure", M, a))
                break
        parts = dickson.partition_complement(M)
        counts = Counter(a for part in parts for a in part.members_in_box(box))
        want = {tuple(a) for a in lattice_complement(M, box)}
        if set(counts) != want or any(c != 1 for c in counts.values()):
            failures.append(("cover", M))
        for part in parts:
            base = part.minimal_member
            if base not in part or not all(dickson.leq(base, a) for a in part.members_in_box(box)):
                failures.append(("minimal", M, base))
    elapsed = time.perf_counter() - start
    ok = record_criterion(3, not failures and elapsed < 10,
                          f"{100 - len({str(f[1]) for f in failures})}/100 sets clean in {elapsed:.1f}s")
    assert ok, failures[:3]


# 4 -------------------------------------------------------------------------

def random_poly(rng, nvars=2, max_deg=4):
    coeffs = {}
    for _ in range(rng.randint(0, 4)):
        e = [0] * nvars
        for _ in range(rng.randint(0, max_deg)):
            e[rng.randrange(nvars)] += 1
        coeffs[tuple(e)] = Fraction(rng.randint(-3, 3), rng.randint(1, 4))
    return TruncPoly(nvars, coeffs)


def test_coefficient_split_and_domination():
    rng = random.Random(4)
    recombined = dominated = 0
    for _ in range(100):
        k = rng.randint(1, 2)
        fam = CoeffFamily(k, 2, {tuple(rng.randint(0, 3) for _ in range(k)): random_poly(rng)
                                 for _ in range(rng.randint(1, 5))})
        split = critical_split(fam, dickson_union(fam))
        recombined += split.recombine() == fam.as_poly()
        dominated += all(domination_holds(split, generic_point(2, rng)) for _ in range(1000))
    ok = record_criterion(4, recombined == 100 and dominated == 100,
                          f"{recombined}/100 recombine exactly, {dominated}/100 dominate at 1000 points")
    assert ok


# 5 -------------------------------------------------------------------------

def rect_report(cell, x, rng):
    pieces = rectilinearize(cell)
    cover = check_cover(cell, pieces, x, 4000, rng)
    collisions = check_injective(pieces, x, 200, rng)
    jac = 0.0
    for p in pieces:
        if not p.in_base(x):
            continue
        for u in p.cell.sample(x, 100, rng):
            fd = abs(finite_difference_det(lambda w: p.forward(x, w[None, :])[0], u))
            jac = max(jac, abs(p.jacobian.eval(x, u[None, :])[0] - fd) / fd)
    flips = max((c for p in pieces for c in p.flip_counts().values()), default=0)
    return cover.coverage, collisions, jac, flips


def test_rectilinearization():
    rng = np.random.default_rng(5)
    cases = [(countex_cell(), [x]) for x in (0.1, 0.5, 0.9)]
    for _ in range(20):
        m = int(rng.integers(0, 2))
        cases.append((random_cell(rng, int(rng.integers(1, 4)), m), [0.37] * m))
    worst = [1.0, 0, 0.0, 0]
    for cell, x in cases:
        cov, col, jac, flips = rect_report(cell, x, rng)
        worst = [min(worst[0], cov), worst[1] + col, max(worst[2], jac), max(worst[3], flips)]
    ok = worst[0] >= 0.999 and worst[1] == 0 and worst[2] <= 1e-6 and worst[3] <= 1
    record_criterion(5, ok, f"coverage >= {worst[0]:.4f}, {worst[1]} collisions, "
                            f"jacobian error {worst[2]:.1e}, max flips {worst[3]}")
    assert ok


# 6 -------------------------------------------------------------------------

def xzw(*terms):
    return TruncPoly(3, {e: c for c, e in terms})


def test_worked_examples():
    log_x = {1: xzw((1, (0, 0, 0)))}
    powers = {0: xzw((1, (0, 1, 0)), (1, (0, 0, 1)))}
    lead_ok = (leading_asymptotics(collapse_series(log_x)).as_tuple() == (0, 0, 1, 1, 1)
               and leading_asymptotics(collapse_series(powers)).as_tuple()
               == (0, 1, 0, 1, Fraction(1, 2)))
    curve_gap = 0.0
    to_1e8 = [10.0 ** -k for k in range(3, 9)]
    for G, t in ((log_x, 0.3), (powers, 0.25), (powers, 0.4)):
        a = float(leading_asymptotics(collapse_series(G)).a)
        curve_gap = max(curve_gap, abs(oracle.limit_along_curve(G, t, to_1e8).limit - a))
    inst = cli.parse_instance(json.dumps({"x": [0.1]}).encode())
    fiber = cli.run("countex", inst, 0)["report"]["fibers"][0]["sups"]
    ratio, log_y1 = fiber["log(y1/y2)"], fiber["log(y1)"]
    countex_ok = (abs(ratio["sup"] - math.log(10)) <= 1e-3 and ratio["bounded"]
                  and not log_y1["bounded"])
    ok = lead_ok and curve_gap <= 1e-3 and countex_ok
    record_criterion(6, ok, f"leading terms exact: {lead_ok}, curve gap {curve_gap:.1e}, "
                            f"sup log(y1/y2) = {ratio['sup']:.5f}, log y1 unbounded: "
                            f"{not log_y1['bounded']}")
    assert ok


# 7 -------------------------------------------------------------------------

def test_triangle_inequalities():
    rng = random.Random(7)
    measure = oracle.gauss_measure(1)
    bad = 0
    for _ in range(500):
        fs = [lambda Y, a=rng.uniform(-0.3, 2), c=rng.uniform(-2, 2): c * Y[:, 0] ** a
              for _ in range(rng.randint(1, 3))]
        gs = [lambda Y, a=rng.uniform(-0.3, 2), c=rng.uniform(-2, 2): c * Y[:, 0] ** a
              for _ in range(rng.randint(1, 3))]
        chk = oracle.check_triangle(fs, gs, rng.uniform(0.05, 3), rng.uniform(0.05, 3), measure)
        bad += not chk.holds
    weak_bad = 0
    for i in range(500):
        if i % 2:
            b = rng.randint(1, 6)
            z = [rng.randint(0, 50) for _ in range(rng.randint(1, 6))]
            weak_bad += not weak_triangle_exact(z, rng.randint(1, b), b)
        else:
            x = [rng.uniform(0, 1e6) for _ in range(rng.randint(1, 8))]
            weak_bad += not weak_triangle_float(x, rng.uniform(1e-3, 1.0))[0]
    ok = bad == 0 and weak_bad == 0
    record_criterion(7, ok, f"{bad} sum-inequality and {weak_bad} weak-inequality violations in 500 + 500")
    assert ok


# 8 -------------------------------------------------------------------------

def test_two_term_locus_sweep():
    piece = two_term_piece()
    d = assemble_diagram([piece], 1)
    sweep = [Fraction(k, 16) for k in range(1, 97)] + [Fraction(1000), INF]
    distinct = {int_p_locus(d, p).configs for p in sweep}
    rng = random.Random(8)
    xs = sample_base(piece.f.cell.base, rng, grid=8, extra=41)
    matches = 0
    for x in xs:
        bounded = oracle.sup_estimate(piece.f, x).bounded
        matches += classify_at(d, [piece], x).contains(INF, 1) == bounded
    ok = len(distinct) == 3 and matches == len(xs) == 50
    record_criterion(8, ok, f"{len(distinct)} distinct loci over the sweep, "
                            f"{matches}/{len(xs)} sup checks match the p = inf locus")
    assert ok
