"""Coefficient functions: polynomials in x, log x and logs of primes.

A coefficient is a sympy expression polynomial over Q in the symbols
``x1..xm`` (parameters), ``Lx1..Lxm`` (standing for log x_i) and ``Lp<p>``
(standing for log p, p prime).  Logs of positive rationals are rewritten
through prime factorization, so exact zero tests reduce to polynomial
identities in independent symbols.
"""

from __future__ import annotations

import math
import re
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import sympy as sp
from sympy.parsing.sympy_parser import (
    convert_xor,
    parse_expr,
    standard_transformations,
)

from .errors import DomainError, ParseError, UnsupportedInputError
from .exact import rat

_ALLOWED = re.compile(r"^[\w\s+\-*/()^]*$")
_NAME = re.compile(r"[A-Za-z_]\w*")


@lru_cache(maxsize=None)
def X(i: int) -> sp.Symbol:
    return sp.Symbol(f"x{i}")


@lru_cache(maxsize=None)
def LX(i: int) -> sp.Symbol:
    return sp.Symbol(f"Lx{i}")


@lru_cache(maxsize=None)
def LP(p: int) -> sp.Symbol:
    return sp.Symbol(f"Lp{p}")


def _kind(sym: sp.Symbol):
    name = sym.name
    for prefix, kind in (("Lx", "logx"), ("Lp", "logp"), ("x", "x")):
        if name.startswith(prefix) and name[len(prefix):].isdigit():
            return kind, int(name[len(prefix):])
    return None, None


def to_sympy_rational(v) -> sp.Rational:
    v = rat(v)
    return sp.Rational(v.numerator, v.denominator)


def log_of_rational(v) -> sp.Expr:
    """log v for a positive rational, as an integer combination of Lp symbols."""
    v = rat(v)
    if v <= 0:
        raise DomainError(f"log of non-positive {v}")
    out = sp.Integer(0)
    for p, e in sp.factorint(v.numerator).items():
        out += e * LP(p)
    for p, e in sp.factorint(v.denominator).items():
        out -= e * LP(p)
    return out


def _rewrite_log(arg, m: int, text: str) -> sp.Expr:
    out = sp.Integer(0)
    for base, exp in arg.as_powers_dict().items():
        if not exp.is_Rational:
            raise UnsupportedInputError(f"log of {arg} in {text!r}")
        if base.is_Rational and base > 0:
            out += exp * log_of_rational(Fraction(int(base.p), int(base.q)))
            continue
        kind, idx = _kind(base) if isinstance(base, sp.Symbol) else (None, None)
        if kind == "x" and 1 <= idx <= m:
            out += exp * LX(idx)
            continue
        raise UnsupportedInputError(f"log of {arg} is outside the coefficient class in {text!r}")
    return out


def parse_coeff(text, m: int, path: str = "$") -> sp.Expr:
    """Parse a coefficient string such as ``"x1*(1-x1)"`` or ``"log(x1) + 2"``.

    Only the names ``x1..xm`` and ``log`` are accepted, so no arbitrary code
    reaches the sympy parser.
    """
    if isinstance(text, (int, Fraction)) and not isinstance(text, bool):
        return to_sympy_rational(text)
    if not isinstance(text, str):
        raise ParseError(path, "expected a coefficient string")
    if not _ALLOWED.match(text) or "__" in text:
        raise ParseError(path, f"illegal characters in {text!r}")
    local = {"log": sp.log}
    for name in _NAME.findall(text):
        if name == "log":
            continue
        kind, idx = _kind(sp.Symbol(name))
        if kind != "x" or not 1 <= idx <= m:
            raise ParseError(path, f"unknown name {name!r}")
        local[name] = X(idx)
    try:
        expr = parse_expr(
            text,
            local_dict=local,
            global_dict={"Integer": sp.Integer, "Rational": sp.Rational, "Symbol": sp.Symbol},
            transformations=standard_transformations + (convert_xor,),
        )
    except Exception as exc:  # sympy raises a zoo of types here
        raise ParseError(path, f"cannot parse {text!r}: {exc}") from exc
    try:
        expr = expr.replace(lambda e: isinstance(e, sp.log),
                            lambda e: _rewrite_log(e.args[0], m, text))
        check_polynomial(expr)
    except UnsupportedInputError as exc:
        raise ParseError(path, str(exc)) from exc
    return sp.expand(expr)


def check_polynomial(expr) -> sp.Poly:
    syms = sorted(expr.free_symbols, key=lambda s: s.name)
    for s in syms:
        if _kind(s)[0] is None:
            raise UnsupportedInputError(f"unexpected symbol {s}")
    if not syms:
        if not expr.is_Rational:
            raise UnsupportedInputError(f"non-rational constant {expr}")
        return sp.Poly(expr, sp.Symbol("_c"), domain="QQ")
    try:
        return sp.Poly(expr, *syms, domain="QQ")
    except (sp.PolynomialError, sp.CoercionFailed) as exc:
        raise UnsupportedInputError(f"{expr} is not a polynomial over Q") from exc


def coeff_to_str(expr) -> str:
    """Inverse of ``parse_coeff`` up to expansion."""
    rep = {}
    for s in expr.free_symbols:
        kind, idx = _kind(s)
        if kind == "logx":
            rep[s] = sp.Symbol(f"log(x{idx})")
        elif kind == "logp":
            rep[s] = sp.Symbol(f"log({idx})")
    return sp.sstr(sp.expand(expr.xreplace(rep)), order="lex").replace("**", "^")


def is_zero(expr) -> bool:
    """Exact identically-zero test with log symbols treated as independent."""
    return sp.expand(expr) == 0


def substitute_x(expr, x: Sequence) -> sp.Expr:
    """Replace x_i and log x_i by exact values; logs become Lp combinations."""
    rep = {}
    for s in expr.free_symbols:
        kind, idx = _kind(s)
        if kind == "x":
            rep[s] = to_sympy_rational(x[idx - 1])
        elif kind == "logx":
            v = rat(x[idx - 1])
            if v <= 0:
                raise DomainError(f"log x{idx} at non-positive x{idx} = {v}")
            rep[s] = log_of_rational(v)
    return sp.expand(expr.xreplace(rep))


def vanishes_at(expr, x: Sequence) -> bool:
    """Exact zero test at a rational point.

    Logs of distinct primes are treated as algebraically independent, which
    is what the prime-log symbols encode.
    """
    value = substitute_x(expr, x)
    return value == 0


@lru_cache(maxsize=4096)
def _compile(expr, m: int):
    syms = [X(i) for i in range(1, m + 1)] + [LX(i) for i in range(1, m + 1)]
    consts = {}
    for s in expr.free_symbols:
        kind, idx = _kind(s)
        if kind == "logp":
            consts[s] = sp.Float(math.log(idx), 30)
    return sp.lambdify(syms, expr.xreplace(consts), modules="math")


def eval_float(expr, x: Sequence[float]) -> float:
    """Floating value at a parameter point; used by the numerical oracle."""
    m = len(x)
    xs = [float(v) for v in x]
    logs = [math.log(v) if v > 0 else float("nan") for v in xs]
    needs_log = any(_kind(s)[0] == "logx" for s in expr.free_symbols)
    if needs_log and any(v <= 0 for v in xs):
        raise DomainError("log x at non-positive x")
    return float(_compile(expr, m)(*xs, *logs))


def sum_of_squares(exprs) -> sp.Expr:
    return sp.expand(sum((e ** 2 for e in exprs), sp.Integer(0)))


def radical_contains(generators, target) -> bool:
    """Whether ``target`` vanishes wherever every generator vanishes.

    Tested over the complex numbers with every symbol free, via the
    Rabinowitsch trick: 1 lies in (generators, 1 - t*target).  This is a
    sufficient condition for the real, log-constrained statement.
    """
    target = sp.expand(target)
    if target == 0:
        return True
    gens = [sp.expand(g) for g in generators if sp.expand(g) != 0]
    if not gens:
        return False
    if any(g.is_number for g in gens):
        return True
    t = sp.Dummy("t")
    syms = set().union(*(g.free_symbols for g in gens)) | target.free_symbols
    syms = sorted(syms, key=lambda s: s.name) + [t]
    basis = sp.groebner(gens + [1 - t * target], *syms, order="grevlex", domain="QQ")
    return basis.exprs == [1]
