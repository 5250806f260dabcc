import math
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from lebesgue_classes.errors import ArgumentError, ParseError
from lebesgue_classes.prepared import (
    CRViolation,
    Group,
    PreparedSum,
    PreparedTerm,
    RectCell,
    critical_delta,
    fiber_vanishing_witness,
    profile,
    simple_sum,
)
from lebesgue_classes.symbolic import X, vanishes_at

x1 = X(1)
CELL = RectCell.from_json({"m": 1, "n": 1})


def term(coeff, r, s=0):
    return PreparedTerm(sp.sympify(coeff), [Fraction(r)], [s])


def test_critical_delta_examples():
    psum = simple_sum(CELL, [term(1, -1), term(x1, 2, 1)])
    assert critical_delta(psum) == ["g1", "g2"]
    assert critical_delta(psum, [0]) == ["g1"]
    assert critical_delta(PreparedSum(CELL, ())) == []


def test_profile_examples():
    p = profile([((Fraction(-1),), (0,)), ((Fraction(2),), (1,))], 1)
    assert (p.rbar, p.sbar) == ((-1,), (0,))
    empty = profile([], 1)
    assert (empty.rbar, empty.sbar) == ((None,), (0,))
    assert empty.empty
    p = profile([((Fraction(0),), (3,)), ((Fraction(0),), (1,))], 1)
    assert (p.rbar, p.sbar) == ((0,), (3,))


def test_witness_of_single_term():
    g = fiber_vanishing_witness(simple_sum(CELL, [term(x1 * (1 - x1), -1)]))
    assert sp.expand(g - x1 ** 2 * (1 - x1) ** 2) == 0
    assert vanishes_at(g, [0]) and vanishes_at(g, [1])
    assert not vanishes_at(g, [Fraction(1, 2)])


def test_witness_of_zero_and_two_terms():
    assert fiber_vanishing_witness(PreparedSum(CELL, ())) == 0
    g = fiber_vanishing_witness(simple_sum(CELL, [term(x1, -1), term(x1 - 1, -2)]))
    assert sp.expand(g - (x1 ** 2 + (x1 - 1) ** 2)) == 0
    grid = np.linspace(0, 1, 100001)
    values = sp.lambdify(x1, g)(grid)
    assert values.min() == pytest.approx(0.5, abs=1e-9)


def test_evaluate_examples():
    assert simple_sum(CELL, [term(1, 1)]).evaluate([0], [Fraction(1, 2)]) == 0.5
    assert simple_sum(CELL, [term(1, -1)]).evaluate([0], [Fraction(1, 4)]) == 4.0
    y = Fraction(3679, 10000)          # close to 1/e
    assert simple_sum(CELL, [term(1, 0, 1)]).evaluate([0], [y]) == pytest.approx(math.log(3679 / 10000),
                                                                                   rel=1e-12)


def test_noncritical_group_must_be_dominated():
    doc = {"groups": [
        {"label": "a", "terms": [{"coeff": "x1", "r": ["0"], "s": [0]}]},
        {"label": "b", "critical": False, "terms": [{"coeff": "1", "r": ["1"], "s": [0]}]},
    ]}
    with pytest.raises(ParseError):
        PreparedSum.from_json(doc, CELL)
    bad = PreparedSum.from_json({"groups": doc["groups"][:1]}, CELL).groups
    extra = Group("b", False, (term(1, 1),))
    with pytest.raises(CRViolation):
        PreparedSum(CELL, bad + (extra,))
    doc["groups"][0]["terms"][0]["coeff"] = "1"
    assert PreparedSum.from_json(doc, CELL).labels() == ["a", "b"]


def test_parse_errors_carry_paths():
    with pytest.raises(ParseError) as exc:
        PreparedSum.from_json({"groups": [{"terms": [{"coeff": "1", "r": ["1/0"]}]}]}, CELL, "$.f")
    assert exc.value.path.startswith("$.f.groups[0]")
    with pytest.raises(ParseError):
        RectCell.from_json({"m": 1})


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.fractions(-2, 2, max_denominator=2), st.integers(0, 2),
                          st.integers(-3, 3).filter(bool)), min_size=1, max_size=4),
       st.floats(0.01, 0.99))
def test_eval_array_matches_closed_form(terms, y):
    psum = simple_sum(CELL, [term(c, r, s) for r, s, c in terms])
    got = psum.eval_array([0.3], np.array([[y]]))[0]
    want = sum(c * y ** float(r) * math.log(y) ** s for r, s, c in terms)
    assert got == pytest.approx(want, rel=1e-9, abs=1e-12)


@given(st.fractions(-3, 3, max_denominator=4), st.integers(0, 3))
def test_term_json_round_trip(r, s):
    t = term(x1 + 1, r, s)
    back = PreparedTerm.from_json(t.to_json(), 1, 1)
    assert back.r == t.r and back.s == t.s and sp.expand(back.coeff - t.coeff) == 0


def test_gamma_arity_checked():
    from lebesgue_classes.lclass import Piece
    psum = simple_sum(CELL, [term(1, 0)])
    with pytest.raises(ArgumentError):
        Piece(psum, psum, (0, 0))
