from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from lebesgue_classes.errors import DomainError, ParseError
from lebesgue_classes.exact import (
    EMPTY,
    FULL,
    INF,
    PInterval,
    QLin,
    endpoints,
    interval_intersect,
    qlin_eval,
    rat,
    rat_from_json,
    solve_halfline,
)

small = st.fractions(min_value=-4, max_value=4, max_denominator=6)
positive_q = st.fractions(min_value=Fraction(1, 6), max_value=4, max_denominator=6)


def test_qlin_eval_examples():
    assert qlin_eval(QLin(0, 0), 1) == 0
    assert qlin_eval(QLin(1, 2), Fraction(1, 2)) == 2
    assert qlin_eval(QLin(-1, 1), 3) == 2


def test_q_must_be_positive():
    with pytest.raises(DomainError):
        qlin_eval(QLin(1, 1), 0)


def test_rat_parsing():
    assert rat("1/3") == Fraction(1, 3)
    assert rat(0.5) == Fraction(1, 2)
    with pytest.raises(ValueError):
        rat("one third")
    with pytest.raises(ParseError) as exc:
        rat_from_json("x", "$.q")
    assert exc.value.path == "$.q"


def test_solve_halfline_examples():
    assert solve_halfline(0, QLin(), 1).key(1) == (0, INF, False)
    assert solve_halfline(-1, QLin(), 1).key(1) == (0, 1, False)
    iv = solve_halfline(-2, QLin(0, 1), Fraction(1, 2))
    assert iv.key(Fraction(1, 2)) == (0, Fraction(3, 4), False)
    assert iv.hi == QLin(Fraction(1, 2), Fraction(1, 2))


def test_intersect_examples():
    half_up = PInterval(QLin(Fraction(1, 2)), INF, True)
    assert interval_intersect(PInterval(QLin(), QLin(1)), half_up, 1).key(1) == (Fraction(1, 2), 1, False)
    i = PInterval(QLin(), QLin(Fraction(1, 3)))
    assert interval_intersect(i, FULL, 1).key(1) == i.key(1)
    j = PInterval(QLin(Fraction(1, 2)), INF)
    assert interval_intersect(PInterval(QLin(), QLin(Fraction(1, 2))), j, 1).is_empty(1)


def test_contains_and_infinity():
    assert FULL.contains(INF, 1)
    assert not EMPTY.contains(INF, 1)
    assert not PInterval(QLin(), QLin(1)).contains(1, 1)
    with pytest.raises(DomainError):
        FULL.contains(0, 1)


@given(small, small, small, positive_q)
def test_halfline_matches_inequality(r, a, b, q):
    iv = solve_halfline(r, QLin(a, b), q)
    for p in (Fraction(1, 7), Fraction(1, 2), Fraction(1), Fraction(3, 2), Fraction(5)):
        assert iv.contains(p, q) == (r * p + a + b * q > -1)


@given(small, small, small, small, positive_q)
def test_intersection_is_setwise(r1, c1, r2, c2, q):
    i = solve_halfline(r1, QLin(c1), q)
    j = solve_halfline(r2, QLin(0, c2), q)
    k = interval_intersect(i, j, q)
    assert k.key(q) == interval_intersect(j, i, q).key(q)
    for p in (Fraction(1, 9), Fraction(2, 3), Fraction(1), Fraction(7, 4), Fraction(6)):
        assert k.contains(p, q) == (i.contains(p, q) and j.contains(p, q))


@given(small, small, small, positive_q)
def test_endpoints_are_a_plus_bq(r, a, b, q):
    iv = solve_halfline(r, QLin(a, b), q)
    for e in endpoints(iv):
        assert isinstance(e.a, Fraction) and isinstance(e.b, Fraction)


@given(small, small, st.booleans(), positive_q)
def test_json_round_trip(a, b, flag, q):
    iv = PInterval(QLin(0), QLin(a, b), flag)
    back = PInterval.from_json(iv.to_json())
    assert back == iv
    assert iv.normalize(q).normalize(q) == iv.normalize(q)
