import random
from fractions import Fraction

import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from conftest import one_sum, two_term_piece
from lebesgue_classes.errors import ArgumentError, DomainError
from lebesgue_classes.exact import FULL, INF, QLin, endpoints
from lebesgue_classes.lclass import (
    Piece,
    assemble_diagram,
    classify_at,
    classify_monomial_1d,
    classify_rect,
    complex_diagram,
    complex_reduce,
    int_p_locus,
    lc_interval,
    lebesgue_set_at,
    weak_triangle_exact,
    weak_triangle_float,
)
from lebesgue_classes.prepared import PreparedSum, PreparedTerm, RectCell, profile, simple_sum
from lebesgue_classes.symbolic import X

CELL = RectCell.from_json({"m": 1, "n": 1})
G1, G2 = "f.g1", "f.g2"


def term(coeff, r, s=0, n=1):
    return PreparedTerm(sp.sympify(coeff), [Fraction(r)] * n, [s] * n)


def prof(*pairs):
    return profile([((Fraction(r),), (s,)) for r, s in pairs], 1)


def test_monomial_examples():
    v = classify_monomial_1d(0, 0)
    assert v.integrable and v.bounded
    v = classify_monomial_1d(-1, 0)
    assert not v.integrable and not v.bounded
    v = classify_monomial_1d(Fraction(-1, 2), 3)
    assert v.integrable and not v.bounded


def test_monomial_grid_matches_reference(reference):
    for row in reference["monomial_1d"]:
        v = classify_monomial_1d(Fraction(row["alpha"]), row["beta"])
        assert (v.integrable, v.bounded) == (row["integrable"], row["bounded"]), row


def test_rect_examples():
    assert classify_rect([-5, Fraction(-1, 2)], [7, 0], 1).integrable
    assert not classify_rect([-1, 0], [0, 0], 0).integrable
    v = classify_rect([-9, -9], [3, 3], 2)
    assert v.integrable and v.bounded
    with pytest.raises(ArgumentError):
        classify_rect([0], [0, 1], 0)


def test_lc_interval_examples(reference):
    iv = lc_interval(prof((-1, 0)), prof((0, 0)), [0], 1, False, False)
    assert iv.key(1) == (0, 1, False)
    for row in reference["power_p"]:
        assert iv.contains(Fraction(row["p"]), 1) == row["converges"]
    assert lc_interval(prof((-1, 0)), prof(), [0], 1, True, False) == FULL
    iv = lc_interval(prof((0, 1)), prof((0, 0)), [0], 1, False, False)
    assert iv.key(1) == (0, INF, False)


def test_two_term_diagram(reference):
    d = assemble_diagram([two_term_piece()], 1)
    assert [iv.key(1) for iv in d.intervals] == [
        (0, Fraction(1, 2), False), (0, 1, False), (0, INF, True)]
    assert lebesgue_set_at(d, []).key(1) == (0, Fraction(1, 2), False)
    assert lebesgue_set_at(d, [G2]).key(1) == (0, 1, False)
    assert lebesgue_set_at(d, [G1, G2]) == FULL
    config_of = {"generic": [], "g1_zero": [G1], "g2_zero": [G2]}
    for row in reference["two_term"]:
        iv = lebesgue_set_at(d, config_of[row["config"]])
        assert iv.contains(Fraction(row["p"]), 1) == row["converges"], row
    piece = two_term_piece()
    assert classify_at(d, [piece], [Fraction(1, 2)]).key(1) == (0, 1, False)
    assert classify_at(d, [piece], [Fraction(1, 3)]).key(1) == (0, Fraction(1, 2), False)
    with pytest.raises(ArgumentError):
        lebesgue_set_at(d, ["f.nope"])


def test_zero_function_diagram():
    zero = PreparedSum(CELL, ())
    d = assemble_diagram([Piece(zero, one_sum(CELL), (0,))], 1)
    assert [iv.key(1) for iv in d.intervals] == [FULL.key(1)]


def test_int_p_locus_examples():
    d = assemble_diagram([two_term_piece()], 1)
    assert int_p_locus(d, Fraction(3, 4)).configs == {frozenset([G2]), frozenset([G1, G2])}
    assert len(int_p_locus(d, Fraction(1, 4)).configs) == 4
    assert int_p_locus(d, INF).configs == {frozenset([G1, G2])}
    assert int_p_locus(d, Fraction(3, 4)).holds([G2])
    assert not int_p_locus(d, Fraction(3, 4)).holds([])


def test_mu_vanishing_config_is_full():
    f = simple_sum(CELL, [term(1, -1)])
    mu = simple_sum(CELL, [term(X(1), 0)])
    d = assemble_diagram([Piece(f, mu, (0,))], 1)
    assert lebesgue_set_at(d, ["mu.g1"]).key(1) == FULL.key(1)
    assert lebesgue_set_at(d, []).key(1) == (0, 1, False)


def test_complex_reduction():
    h = simple_sum(CELL, [term(1, -1)])
    red = complex_reduce(PreparedSum(CELL, ()), h, one_sum(CELL), None)
    (g,) = red.f_sq.groups
    assert [t.r for t in g.terms] == [(-2,)]
    (m,) = red.mu_sq.groups
    assert [t.r for t in m.terms] == [(0,)]
    d = complex_diagram(h, None, one_sum(CELL), None, (0,), 1)
    assert [iv.key(1) for iv in d.intervals] == [(0, 1, False)]


def random_piece(rng, width):
    cell = RectCell.unit_cube(width, m=1)
    x = X(1)
    coeffs = [1, x, x - Fraction(1, 2), 1 - x]
    terms = []
    for _ in range(rng.randint(1, 3)):
        r = [Fraction(rng.randint(-4, 4), 2) for _ in range(width)]
        s = [rng.randint(0, 2) for _ in range(width)]
        terms.append(PreparedTerm(sp.sympify(rng.choice(coeffs)), r, s))
    f = simple_sum(cell, terms)
    gamma = tuple(Fraction(rng.randint(0, 2)) for _ in range(width))
    return Piece(f, one_sum(cell), gamma)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6), st.sampled_from([Fraction(1, 2), Fraction(1), Fraction(2)]))
def test_endpoints_decompose(seed, q):
    d = assemble_diagram([random_piece(random.Random(seed), 2)], q)
    for iv in d.intervals:
        for e in endpoints(iv):
            assert isinstance(e, QLin)
            assert e.eval(q) >= 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_adding_groups_never_enlarges(seed):
    rng = random.Random(seed)
    pairs = [((Fraction(rng.randint(-4, 4), 2),), (rng.randint(0, 2),)) for _ in range(4)]
    k = rng.randint(1, 3)
    small, big = profile(pairs[:k], 1), profile(pairs, 1)
    mu = prof((0, 0))
    q = Fraction(1)
    a = lc_interval(small, mu, [0], q, False, False)
    b = lc_interval(big, mu, [0], q, False, False)
    for p in [Fraction(i, 8) for i in range(1, 40)]:
        assert not b.contains(p, q) or a.contains(p, q)
    assert not b.includes_infinity or a.includes_infinity


@given(st.lists(st.integers(0, 50), min_size=1, max_size=6), st.integers(1, 6), st.integers(1, 6))
def test_weak_triangle_exact(z, a, b):
    a, b = min(a, b), max(a, b)
    assert weak_triangle_exact(z, a, b)


@given(st.lists(st.floats(0, 1e6), min_size=1, max_size=8), st.floats(1e-3, 1.0))
def test_weak_triangle_float(x, p):
    holds, _ = weak_triangle_float(x, p)
    assert holds


def test_weak_triangle_domain():
    with pytest.raises(DomainError):
        weak_triangle_exact([1, 2], 3, 2)
    with pytest.raises(DomainError):
        weak_triangle_float([1.0], 1.5)
