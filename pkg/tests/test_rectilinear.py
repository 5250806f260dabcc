from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from lebesgue_classes.errors import ArgumentError, ParseError, UnsupportedInputError
from lebesgue_classes.prepared import PreparedTerm
from lebesgue_classes.rectilinear import (
    Blowup,
    MonCell,
    PMono,
    PowerSub,
    Swap,
    apply_step,
    check_cover,
    check_injective,
    compose_term,
    countex_cell,
    eval_terms,
    jacobian_error,
    jacobian_of,
    pullback_term,
    pushforward_term,
    random_cell,
    rectilinearize,
    step_from_json,
)

from reference import finite_difference_det

ONE2 = PMono.one(0, 2)
TRIANGLE = MonCell(0, 2, (), (None, None), (ONE2, PMono.var(0, 0, 2)))


def identity(m, n):
    return [PMono.var(j, m, n) for j in range(n)]


def test_power_sub_doubles_exponent():
    cell, phi = apply_step(MonCell.cube(1), [PMono.var(0, 0, 1).pow(Fraction(1, 2))], PowerSub(0, 2))
    assert phi[0].yexp == (1,)
    assert cell.describe() == ["0 < y1 < 1"]


def test_blowup_of_triangle():
    cell, phi = apply_step(TRIANGLE, identity(0, 2), Blowup(1))
    assert cell.describe() == ["0 < y1 < 1", "0 < y2 < 1"]
    U = np.random.default_rng(1).random((100, 2))
    Y = np.stack([p.eval([], U) for p in phi], axis=1)
    assert np.allclose(Y[:, 0], U[:, 0]) and np.allclose(Y[:, 1], U[:, 0] * U[:, 1])
    assert np.all(TRIANGLE.contains([], Y))


def test_swap_relabels_upper_triangle():
    upper = MonCell(0, 2, (), (None, PMono.var(0, 0, 2)), (ONE2, ONE2))
    cell, phi = apply_step(upper, identity(0, 2), Swap(0, 1))
    assert cell.describe() == ["0 < y1 < 1", "0 < y2 < y1"]
    assert [p.describe() for p in phi] == ["y2", "y1"]


def test_jacobian_examples(reference):
    jac = jacobian_of([Blowup(1)], TRIANGLE)
    assert jac.to_json()["gamma"] == ["1", "0"] and jac.to_json()["H"] == "1"
    jac = jacobian_of([PowerSub(0, 2), Blowup(1)], TRIANGLE)
    assert jac.to_json()["gamma"] == ["3", "0"] and jac.to_json()["H"] == "2"
    for row in reference["jacobian"]:
        u = np.array([row["u"]])
        assert jac.eval([], u)[0] == pytest.approx(row["det"], rel=1e-6)
    assert jacobian_of([], TRIANGLE).to_json()["H"] == "1"


def test_jacobian_against_own_finite_differences():
    (piece,) = rectilinearize(TRIANGLE)
    rng = np.random.default_rng(2)
    for u in rng.uniform(0.05, 0.95, (100, 2)):
        fd = finite_difference_det(lambda w: piece.forward([], w[None, :])[0], u)
        assert abs(piece.jacobian.eval([], u[None, :])[0] - abs(fd)) <= 1e-6 * abs(fd)


def test_rectilinearize_examples():
    (piece,) = rectilinearize(TRIANGLE)
    assert [s.to_json()["type"] for s in piece.steps] == ["blowup"]
    assert piece.cell.l == 0 and piece.cell.describe() == ["0 < y1 < 1", "0 < y2 < 1"]
    (cube,) = rectilinearize(MonCell.cube(3))
    assert cube.steps == ()


def sample_countex_fiber(x, count, rng):
    """Rejection sampling straight from the inequalities x y1 < y2 < y1."""
    Y = rng.random((count * 4, 2))
    keep = (x * Y[:, 0] < Y[:, 1]) & (Y[:, 1] < Y[:, 0])
    return Y[keep][:count]


@pytest.mark.parametrize("x", [0.1, 0.5])
def test_countex_cell_is_covered_once(x):
    pieces = rectilinearize(countex_cell())
    over = [p for p in pieces if p.in_base([x])]
    assert len(over) >= 2
    rng = np.random.default_rng(3)
    Y = sample_countex_fiber(x, 4000, rng)
    hits = np.zeros(len(Y), dtype=int)
    for p in over:
        Z, mask = p.inverse([x], Y)
        hits += mask
        back = p.forward([x], Z[mask])
        assert np.allclose(back, Y[mask], rtol=1e-9, atol=1e-12)
    assert np.mean(hits == 1) >= 0.999
    assert np.all(hits <= 1)


def test_step_json_round_trip():
    for step in (Blowup(1), PowerSub(0, 3), Swap(0, 1)):
        back = step_from_json(step.to_json())
        assert type(back) is type(step)
    with pytest.raises(ParseError):
        step_from_json({"type": "twist", "j": 1})


def test_bounds_must_be_triangular():
    with pytest.raises(ArgumentError):
        MonCell(0, 2, (), (PMono.var(1, 0, 2), None), (ONE2, ONE2))


def test_pushforward_log_through_product():
    comps = [PMono(1, (1,), (1,))]
    t = PreparedTerm(sp.Integer(1), [0], [1])
    out = compose_term(t, comps)
    assert len(out) == 2
    rng = np.random.default_rng(4)
    for x in rng.uniform(0.05, 0.95, 10):
        Y = rng.uniform(0.05, 0.95, (10, 1))
        assert np.allclose(eval_terms(out, [x], Y), np.log(x * Y[:, 0]), rtol=1e-12)


def test_pushforward_log_squared():
    out = compose_term(PreparedTerm(sp.Integer(1), [0], [2]), [PMono(1, (1,), (1,))])
    assert len(out) == 3
    assert sorted(t.s[0] for t in out) == [0, 1, 2]
    Y = np.random.default_rng(5).uniform(0.05, 0.95, (100, 1))
    assert np.allclose(eval_terms(out, [0.3], Y), np.log(0.3 * Y[:, 0]) ** 2, rtol=1e-12)


def test_pure_power_stays_single():
    out = compose_term(PreparedTerm(sp.Integer(1), [Fraction(3, 2)], [0]), [PMono(1, (0,), (2,))])
    assert len(out) == 1 and out[0].r == (3,)
    out = compose_term(PreparedTerm(sp.Integer(1), [2], [0]), [PMono(1, (1,), (2,))])
    assert len(out) == 1 and out[0].r == (4,)


def test_fractional_x_power_is_rejected():
    with pytest.raises(UnsupportedInputError):
        compose_term(PreparedTerm(sp.Integer(1), [Fraction(1, 2)], [0]), [PMono(1, (1,), (1,))])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 3))
def test_pullback_inverts_pushforward(seed, n):
    rng = np.random.default_rng(seed)
    cell = random_cell(rng, n, 0)
    pieces = rectilinearize(cell)
    r = [Fraction(int(v), 2) for v in rng.integers(-2, 3, n)]
    s = [int(v) for v in rng.integers(0, 3, n)]
    t = PreparedTerm(sp.Integer(1), r, s)
    for piece in pieces:
        if piece.flip_counts():
            continue
        pushed = pushforward_term(t, piece)
        back = [u for p in pushed for u in pullback_term(p, piece)]
        Y = cell.sample([], 100, rng)
        Z, mask = piece.inverse([], Y)
        if mask.any():
            want = eval_terms([t], [], Y[mask])
            got = eval_terms(back, [], Y[mask])
            assert np.allclose(got, want, rtol=1e-9, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(1, 3), st.integers(0, 1))
def test_random_cells_decompose(seed, n, m):
    rng = np.random.default_rng(seed)
    cell = random_cell(rng, n, m)
    pieces = rectilinearize(cell)
    x = [0.37] * m
    report = check_cover(cell, pieces, x, 500, rng)
    assert report.coverage >= 0.999
    assert check_injective(pieces, x, 100, rng) == 0
    for p in pieces:
        assert max(p.flip_counts().values(), default=0) <= 1
        if p.in_base(x):
            assert jacobian_error(p, x, 20, rng=rng) <= 1e-6
