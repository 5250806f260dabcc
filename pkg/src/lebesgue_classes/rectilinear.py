"""Monomially bounded cells, the six pullback steps and the rectilinearization driver.

Bounds and map components are ``PMono`` values

    coef * x^xexp * y^yexp * unit(x, y)

with an exact positive radical ``coef``, rational exponents and a unit given
as a sympy expression together with a certified range [ulo, uhi].  Pulling
back along a step substitutes into both the monomial part and the unit, so
every object stays exact.  Coordinate indices are 0-based internally and
1-based in JSON and in ``describe`` output.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
import sympy as sp

from . import symbolic
from .errors import (
    ArgumentError,
    InvariantError,
    ParseError,
    ResourceError,
    StepRejectedError,
    UnsupportedInputError,
)
from .exact import rat, rat_from_json, rat_to_str
from .prepared import PreparedTerm, UnitSeries

PAD = 1e-12


# exact positive radicals ---------------------------------------------------

@dataclass(frozen=True)
class Radical:
    """A positive number prod p^e over primes p with rational exponents e."""

    exps: tuple = ()

    @classmethod
    def of(cls, v) -> "Radical":
        v = rat(v)
        if v <= 0:
            raise ArgumentError(f"radical coefficients must be positive, got {v}")
        out: dict = {}
        for p, e in sp.factorint(v.numerator).items():
            out[int(p)] = out.get(int(p), Fraction(0)) + e
        for p, e in sp.factorint(v.denominator).items():
            out[int(p)] = out.get(int(p), Fraction(0)) - e
        return cls(tuple(sorted((p, e) for p, e in out.items() if e)))

    def __mul__(self, other: "Radical") -> "Radical":
        out = dict(self.exps)
        for p, e in other.exps:
            out[p] = out.get(p, Fraction(0)) + e
        return Radical(tuple(sorted((p, e) for p, e in out.items() if e)))

    def pow(self, g) -> "Radical":
        g = rat(g)
        return Radical(tuple((p, e * g) for p, e in self.exps if e * g))

    def inv(self) -> "Radical":
        return self.pow(-1)

    def value(self) -> float:
        return math.prod(p ** float(e) for p, e in self.exps)

    def rational(self) -> Fraction | None:
        if all(e.denominator == 1 for _, e in self.exps):
            return math.prod((Fraction(p) ** int(e) for p, e in self.exps), start=Fraction(1))
        return None

    def bounds(self) -> tuple[Fraction, Fraction]:
        r = self.rational()
        if r is not None:
            return r, r
        v = self.value()
        return _down(v), _up(v)

    def sympy(self) -> sp.Expr:
        return sp.Mul(*[sp.Integer(p) ** sp.Rational(e.numerator, e.denominator) for p, e in self.exps])

    def log_expr(self) -> sp.Expr:
        return sum((symbolic.to_sympy_rational(e) * symbolic.LP(p) for p, e in self.exps),
                   sp.Integer(0))

    def __str__(self) -> str:
        r = self.rational()
        if r is not None:
            return rat_to_str(r)
        return "*".join(f"{p}^({rat_to_str(e)})" for p, e in self.exps)


def _down(v: float) -> Fraction:
    return Fraction(v * (1 - PAD) if v > 0 else v * (1 + PAD) - 1e-300)


def _up(v: float) -> Fraction:
    return Fraction(v * (1 + PAD) if v > 0 else v * (1 - PAD) + 1e-300)


def _pow_enclosure(lo: Fraction, hi: Fraction | None, g: Fraction):
    """Enclosure of t^g for t in [lo, hi] (hi None means +inf), lo >= 0."""
    if g == 0:
        return Fraction(1), Fraction(1)
    ends = []
    for v in (lo, hi):
        if v is None:
            ends.append(None if g > 0 else Fraction(0))
        elif v == 0:
            ends.append(Fraction(0) if g > 0 else None)
        elif g.denominator == 1:
            ends.append(v ** int(g))
        else:
            ends.append(_exact_root(v, g))
    if g < 0:
        ends = ends[::-1]
    a, b = ends
    a = a if isinstance(a, Fraction) else _down(a)
    b = b if (b is None or isinstance(b, Fraction)) else _up(b)
    return a, b


def _exact_root(v: Fraction, g: Fraction):
    """v^g exactly when the root is rational, else a float."""
    q = g.denominator
    rn, ok_n = sp.integer_nthroot(v.numerator, q)
    rd, ok_d = sp.integer_nthroot(v.denominator, q)
    if ok_n and ok_d:
        return Fraction(int(rn), int(rd)) ** g.numerator
    return float(v) ** float(g)


def _mul_enclosure(a, b):
    lo = a[0] * b[0]
    hi = None if a[1] is None or b[1] is None else a[1] * b[1]
    return lo, hi


# monomials with units ------------------------------------------------------

@lru_cache(maxsize=None)
def Y(j: int) -> sp.Symbol:
    """Symbol of the (0-based) fiber coordinate j."""
    return sp.Symbol(f"y{j + 1}", positive=True)


def _xsym(i: int) -> sp.Symbol:
    return symbolic.X(i + 1)


@lru_cache(maxsize=8192)
def _lambdify_unit(expr, m: int, n: int):
    args = [_xsym(i) for i in range(m)] + [Y(j) for j in range(n)]
    return sp.lambdify(args, expr, modules="numpy")


@dataclass(frozen=True)
class PMono:
    """coef * x^xexp * y^yexp * unit with a certified unit range."""

    coef: Radical
    xexp: tuple
    yexp: tuple
    unit: sp.Expr = sp.Integer(1)
    ulo: Fraction = Fraction(1)
    uhi: Fraction = Fraction(1)

    def __post_init__(self):
        if not isinstance(self.coef, Radical):
            object.__setattr__(self, "coef", Radical.of(self.coef))
        object.__setattr__(self, "xexp", tuple(rat(v) for v in self.xexp))
        object.__setattr__(self, "yexp", tuple(rat(v) for v in self.yexp))
        object.__setattr__(self, "unit", sp.sympify(self.unit))
        object.__setattr__(self, "ulo", rat(self.ulo))
        object.__setattr__(self, "uhi", rat(self.uhi))
        if not 0 < self.ulo <= self.uhi:
            raise ArgumentError(f"unit range [{self.ulo}, {self.uhi}] is not positive")

    @property
    def m(self) -> int:
        return len(self.xexp)

    @property
    def n(self) -> int:
        return len(self.yexp)

    @classmethod
    def const(cls, c, m: int, n: int) -> "PMono":
        return cls(Radical.of(c), (0,) * m, (0,) * n)

    @classmethod
    def one(cls, m: int, n: int) -> "PMono":
        return cls(Radical(), (0,) * m, (0,) * n)

    @classmethod
    def var(cls, j: int, m: int, n: int) -> "PMono":
        e = [0] * n
        e[j] = 1
        return cls(Radical(), (0,) * m, tuple(e))

    @classmethod
    def unit_only(cls, expr, lo, hi, m: int, n: int) -> "PMono":
        return cls(Radical(), (0,) * m, (0,) * n, expr, lo, hi)

    def is_one(self) -> bool:
        return (not self.coef.exps and not any(self.xexp) and not any(self.yexp)
                and self.unit == 1)

    def has_unit(self) -> bool:
        return self.unit != 1

    def __mul__(self, other: "PMono") -> "PMono":
        return PMono(self.coef * other.coef,
                     tuple(a + b for a, b in zip(self.xexp, other.xexp)),
                     tuple(a + b for a, b in zip(self.yexp, other.yexp)),
                     self.unit * other.unit, self.ulo * other.ulo, self.uhi * other.uhi)

    def pow(self, g) -> "PMono":
        g = rat(g)
        lo, hi = _pow_enclosure(self.ulo, self.uhi, g)
        unit = self.unit ** symbolic.to_sympy_rational(g) if self.unit != 1 else sp.Integer(1)
        return PMono(self.coef.pow(g), tuple(a * g for a in self.xexp),
                     tuple(a * g for a in self.yexp), unit, lo, hi)

    def __truediv__(self, other: "PMono") -> "PMono":
        return self * other.pow(-1)

    def monomial(self) -> "PMono":
        return PMono(self.coef, self.xexp, self.yexp)

    def with_yexp(self, j: int, value) -> "PMono":
        e = list(self.yexp)
        e[j] = rat(value)
        return replace(self, yexp=tuple(e))

    def depends_on(self, j: int) -> bool:
        return self.yexp[j] != 0 or Y(j) in self.unit.free_symbols

    def depends_on_any(self, js) -> bool:
        return any(self.depends_on(j) for j in js)

    def expr(self) -> sp.Expr:
        out = self.coef.sympy() * self.unit
        for i, a in enumerate(self.xexp):
            if a:
                out *= _xsym(i) ** symbolic.to_sympy_rational(a)
        for j, a in enumerate(self.yexp):
            if a:
                out *= Y(j) ** symbolic.to_sympy_rational(a)
        return out

    def compose(self, subs: dict) -> "PMono":
        """Substitute y_k := subs[k] (PMono values in the new coordinates)."""
        out = PMono(self.coef, self.xexp, tuple(
            Fraction(0) if k in subs else e for k, e in enumerate(self.yexp)))
        out = replace(out, unit=sp.Integer(1), ulo=Fraction(1), uhi=Fraction(1))
        for k, s in subs.items():
            g = self.yexp[k]
            if g:
                out = out * s.pow(g)
        unit = self.unit
        if unit != 1:
            rep = {Y(k): s.expr() for k, s in subs.items() if Y(k) in unit.free_symbols}
            if rep:
                unit = unit.xreplace(rep)
        return replace(out, unit=out.unit * unit, ulo=out.ulo * self.ulo, uhi=out.uhi * self.uhi)

    def substitute_unit(self, rep: dict) -> "PMono":
        if self.unit == 1:
            return self
        return replace(self, unit=self.unit.xreplace(rep))

    def absorb(self, j: int, lower: Fraction) -> "PMono":
        """Move y_j^g into the unit, given y_j in [lower, 1]."""
        g = self.yexp[j]
        if not g:
            return self
        lo, hi = _pow_enclosure(lower, Fraction(1), g)
        e = list(self.yexp)
        e[j] = Fraction(0)
        return PMono(self.coef, self.xexp, tuple(e),
                     self.unit * Y(j) ** symbolic.to_sympy_rational(g),
                     self.ulo * lo, self.uhi * hi)

    def eval(self, x: Sequence[float], Yv: np.ndarray) -> np.ndarray:
        out = np.full(Yv.shape[0], self.coef.value())
        for xi, a in zip(x, self.xexp):
            if a:
                out = out * float(xi) ** float(a)
        for j, a in enumerate(self.yexp):
            if a:
                out = out * Yv[:, j] ** float(a)
        if self.unit != 1:
            fn = _lambdify_unit(self.unit, self.m, self.n)
            u = fn(*[float(v) for v in x], *[Yv[:, j] for j in range(self.n)])
            out = out * np.broadcast_to(np.asarray(u, dtype=float), out.shape)
        return out

    def enclosure(self, xbox: Sequence, yranges: Sequence, with_unit: bool = True):
        """Outer bounds over a base box and coordinate ranges; hi None means unbounded."""
        lo, hi = self.coef.bounds()
        enc = (lo, hi)
        for (a, b), g in zip(xbox, self.xexp):
            if g:
                enc = _mul_enclosure(enc, _pow_enclosure(rat(a), rat(b), g))
        for (a, b), g in zip(yranges, self.yexp):
            if g:
                enc = _mul_enclosure(enc, _pow_enclosure(rat(a), rat(b), g))
        if with_unit:
            enc = _mul_enclosure(enc, (self.ulo, self.uhi))
        return enc

    def describe(self) -> str:
        parts = [] if self.coef.rational() == 1 else [str(self.coef)]
        parts += [f"x{i + 1}^{rat_to_str(a)}" if a != 1 else f"x{i + 1}"
                  for i, a in enumerate(self.xexp) if a]
        parts += [f"y{j + 1}^{rat_to_str(a)}" if a != 1 else f"y{j + 1}"
                  for j, a in enumerate(self.yexp) if a]
        if self.unit != 1:
            parts.append(f"[{sp.sstr(self.unit)}]")
        return "*".join(parts) if parts else "1"

    def to_json(self) -> dict:
        doc = {"coef": str(self.coef), "xexp": [rat_to_str(v) for v in self.xexp],
               "yexp": [rat_to_str(v) for v in self.yexp]}
        if self.unit != 1:
            doc.update(unit=sp.sstr(self.unit), ulo=rat_to_str(self.ulo), uhi=rat_to_str(self.uhi))
        return doc

    @classmethod
    def from_json(cls, doc, m: int, n: int, path="$") -> "PMono":
        if doc in (1, "1"):
            return cls.one(m, n)
        if not isinstance(doc, dict):
            raise ParseError(path, "expected a monomial bound")
        try:
            coef = Radical.of(rat_from_json(doc.get("coef", 1), path + ".coef"))
        except ArgumentError as exc:
            raise ParseError(path + ".coef", str(exc)) from exc
        xexp = [rat_from_json(v, f"{path}.xexp[{i}]") for i, v in enumerate(doc.get("xexp", [0] * m))]
        yexp = [rat_from_json(v, f"{path}.yexp[{i}]") for i, v in enumerate(doc.get("yexp", [0] * n))]
        if len(xexp) != m or len(yexp) != n:
            raise ParseError(path, f"expected {m} x exponents and {n} y exponents")
        unit = sp.Integer(1)
        ulo = uhi = Fraction(1)
        if "unit" in doc:
            if "ulo" not in doc or "uhi" not in doc:
                raise UnsupportedInputError(f"{path}: unit without a certified range")
            unit = _parse_unit(doc["unit"], m, n, path + ".unit")
            ulo = rat_from_json(doc["ulo"], path + ".ulo")
            uhi = rat_from_json(doc["uhi"], path + ".uhi")
        try:
            return cls(coef, tuple(xexp), tuple(yexp), unit, ulo, uhi)
        except ArgumentError as exc:
            raise ParseError(path, str(exc)) from exc


def _parse_unit(text, m, n, path):
    if not isinstance(text, str) or not symbolic._ALLOWED.match(text) or "__" in text:
        raise ParseError(path, "expected a unit expression")
    local = {f"x{i + 1}": _xsym(i) for i in range(m)}
    local.update({f"y{j + 1}": Y(j) for j in range(n)})
    for name in symbolic._NAME.findall(text):
        if name not in local and name not in ("sqrt", "exp", "log"):
            raise ParseError(path, f"unknown name {name!r}")
    local.update(sqrt=sp.sqrt, exp=sp.exp, log=sp.log)
    try:
        return sp.parse_expr(text, local_dict=local, global_dict={
            "Integer": sp.Integer, "Rational": sp.Rational, "Symbol": sp.Symbol, "Float": sp.Float},
            transformations=symbolic.standard_transformations + (symbolic.convert_xor,))
    except Exception as exc:
        raise ParseError(path, f"cannot parse unit {text!r}: {exc}") from exc


# cells ---------------------------------------------------------------------

@dataclass(frozen=True)
class MonCell:
    """Cell {lo_j(x, y_<j) < y_j < hi_j(x, y_<j)} over a rational base box.

    ``lo[j]`` None means the lower bound 0.  Coordinates below ``l`` form
    the bounded-away-from-zero part; coordinates from ``l`` on that have
    bounds (0, 1) are free.
    """

    m: int
    n: int
    base: tuple
    lo: tuple
    hi: tuple
    l: int = 0

    def __post_init__(self):
        object.__setattr__(self, "base", tuple((rat(a), rat(b)) for a, b in self.base))
        object.__setattr__(self, "lo", tuple(self.lo))
        object.__setattr__(self, "hi", tuple(self.hi))
        if len(self.base) != self.m or len(self.lo) != self.n or len(self.hi) != self.n:
            raise ArgumentError("cell arity mismatch")
        for j in range(self.n):
            for b in (self.lo[j], self.hi[j]):
                if b is None:
                    continue
                if b.m != self.m or b.n != self.n:
                    raise ArgumentError(f"bound of y{j + 1} has the wrong arity")
                if b.depends_on_any(range(j, self.n)):
                    raise ArgumentError(f"bound of y{j + 1} depends on y{j + 1} or later")
            if self.hi[j] is None:
                raise ArgumentError(f"y{j + 1} needs an upper bound")

    @classmethod
    def cube(cls, n: int, m: int = 0, base=None) -> "MonCell":
        base = base if base is not None else tuple((0, 1) for _ in range(m))
        return cls(m, n, base, (None,) * n, tuple(PMono.one(m, n) for _ in range(n)))

    def is_free(self, j: int) -> bool:
        return self.lo[j] is None and self.hi[j].is_one()

    def ranges(self, base=None):
        """Certified enclosures of each coordinate over the base."""
        base = self.base if base is None else base
        out = []
        for j in range(self.n):
            lo = Fraction(0)
            if self.lo[j] is not None:
                lo = max(Fraction(0), self.lo[j].enclosure(base, out)[0])
            hi = self.hi[j].enclosure(base, out)[1]
            hi = Fraction(1) if hi is None or hi > 1 else hi
            out.append((lo, hi))
        return out

    def is_rectilinear(self) -> bool:
        rng = self.ranges()
        head = all(rng[j][0] > 0 for j in range(self.l))
        return head and all(self.is_free(j) for j in range(self.l, self.n))

    def contains(self, x, Yv: np.ndarray) -> np.ndarray:
        ok = np.all((Yv > 0) & (Yv < 1), axis=1)
        for j in range(self.n):
            if self.lo[j] is not None:
                ok &= Yv[:, j] > self.lo[j].eval(x, Yv)
            if not self.hi[j].is_one():
                ok &= Yv[:, j] < self.hi[j].eval(x, Yv)
        return ok

    def sample(self, x, count: int, rng: np.random.Generator) -> np.ndarray:
        """Points of the fiber at x, drawn coordinate by coordinate."""
        Yv = np.zeros((count, self.n))
        for j in range(self.n):
            lo = self.lo[j].eval(x, Yv) if self.lo[j] is not None else np.zeros(count)
            hi = self.hi[j].eval(x, Yv)
            Yv[:, j] = lo + (hi - lo) * rng.uniform(0.02, 0.98, count)
        return Yv

    def describe(self) -> list[str]:
        out = []
        for j in range(self.n):
            lo = "0" if self.lo[j] is None else self.lo[j].describe()
            out.append(f"{lo} < y{j + 1} < {self.hi[j].describe()}")
        return out

    def to_json(self) -> dict:
        return {"m": self.m, "n": self.n, "l": self.l,
                "base": [[rat_to_str(a), rat_to_str(b)] for a, b in self.base],
                "lo": [None if b is None else b.to_json() for b in self.lo],
                "hi": [b.to_json() for b in self.hi],
                "describe": self.describe()}

    @classmethod
    def from_json(cls, doc, path="$") -> "MonCell":
        if not isinstance(doc, dict):
            raise ParseError(path, "expected a cell")
        m, n = doc.get("m"), doc.get("n")
        if not isinstance(m, int) or not isinstance(n, int):
            raise ParseError(path, "cell needs integer m and n")
        base = doc.get("base", [[0, 1]] * m)
        base = tuple((rat_from_json(a, f"{path}.base[{i}][0]"), rat_from_json(b, f"{path}.base[{i}][1]"))
                     for i, (a, b) in enumerate(base))
        los = doc.get("lo", [None] * n)
        his = doc.get("hi", [1] * n)
        lo = tuple(None if v in (None, 0, "0") else PMono.from_json(v, m, n, f"{path}.lo[{j}]")
                   for j, v in enumerate(los))
        hi = tuple(PMono.from_json(v, m, n, f"{path}.hi[{j}]") for j, v in enumerate(his))
        try:
            return cls(m, n, base, lo, hi, doc.get("l", 0))
        except ArgumentError as exc:
            raise ParseError(path, str(exc)) from exc


# steps ---------------------------------------------------------------------

@dataclass(frozen=True)
class Adjustment:
    j: int
    lower: Fraction

    def to_json(self):
        return {"type": "adjustment", "j": self.j + 1, "lower": rat_to_str(self.lower)}


@dataclass(frozen=True)
class Restriction:
    """New bounds for y_j (``j`` None restricts the base box instead)."""

    j: int | None
    lo: PMono | None = None
    hi: PMono | None = None
    base: tuple | None = None

    def to_json(self):
        if self.j is None:
            return {"type": "restriction", "base": [[rat_to_str(a), rat_to_str(b)] for a, b in self.base]}
        return {"type": "restriction", "j": self.j + 1,
                "lo": None if self.lo is None else self.lo.describe(), "hi": self.hi.describe()}


@dataclass(frozen=True)
class PowerSub:
    j: int
    p: int

    def to_json(self):
        return {"type": "power", "j": self.j + 1, "p": self.p}


@dataclass(frozen=True)
class Blowup:
    """y_j -> y_j * b with b the current upper bound, recorded when applied."""

    j: int
    bound: PMono | None = None

    def to_json(self):
        return {"type": "blowup", "j": self.j + 1,
                "bound": None if self.bound is None else self.bound.describe()}


@dataclass(frozen=True)
class Flip:
    j: int

    def to_json(self):
        return {"type": "flip", "j": self.j + 1}


@dataclass(frozen=True)
class Swap:
    i: int
    j: int

    def to_json(self):
        return {"type": "swap", "i": self.i + 1, "j": self.j + 1}


def step_from_json(doc, path="$"):
    if not isinstance(doc, dict) or "type" not in doc:
        raise ParseError(path, "expected a tagged step")
    kind = doc["type"]
    try:
        if kind == "power":
            return PowerSub(int(doc["j"]) - 1, int(doc["p"]))
        if kind == "blowup":
            return Blowup(int(doc["j"]) - 1)
        if kind == "flip":
            return Flip(int(doc["j"]) - 1)
        if kind == "swap":
            return Swap(int(doc["i"]) - 1, int(doc["j"]) - 1)
        if kind == "adjustment":
            return Adjustment(int(doc["j"]) - 1, rat_from_json(doc["lower"], path + ".lower"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(path, f"bad {kind} step: {exc}") from exc
    raise ParseError(path + ".type", f"unsupported step type {kind!r}")


# applying steps ------------------------------------------------------------

@dataclass(frozen=True)
class Stage:
    """A cell together with everything pulled back along the steps so far."""

    cell: MonCell
    phi: tuple
    jac: PMono
    sign: int = 1
    steps: tuple = ()
    depth: int = 0

    @classmethod
    def start(cls, cell: MonCell, phi=()) -> "Stage":
        return cls(cell, tuple(phi), PMono.one(cell.m, cell.n))

    def flips(self) -> dict:
        out: dict = {}
        for s in self.steps:
            if isinstance(s, Flip):
                out[s.j] = out.get(s.j, 0) + 1
        return out


def _sub_all(stage: Stage, subs: dict, bounds_for, det: PMono | None, sign: int, step) -> Stage:
    cell = stage.cell
    lo, hi = [], []
    for k in range(cell.n):
        nlo, nhi = bounds_for(k)
        lo.append(nlo)
        hi.append(nhi)
    new_cell = MonCell(cell.m, cell.n, cell.base, tuple(lo), tuple(hi), cell.l)
    jac = stage.jac.compose(subs)
    if det is not None:
        jac = jac * det
    phi = tuple(c.compose(subs) for c in stage.phi)
    return Stage(new_cell, phi, jac, stage.sign * sign, stage.steps + (step,), stage.depth)


def _compose_or_none(b, subs):
    return None if b is None else b.compose(subs)


def advance(stage: Stage, step) -> Stage:
    """Pull everything in ``stage`` back along one step."""
    cell = stage.cell
    m, n = cell.m, cell.n
    if isinstance(step, PowerSub):
        j, p = step.j, step.p
        if not isinstance(p, int) or p < 1:
            raise StepRejectedError(step, "power must be a positive integer")
        subs = {j: PMono.var(j, m, n).pow(p)}
        inv = Fraction(1, p)

        def bounds(k):
            if k == j:
                return (None if cell.lo[k] is None else cell.lo[k].pow(inv), cell.hi[k].pow(inv))
            return (_compose_or_none(cell.lo[k], subs), cell.hi[k].compose(subs))

        det = PMono(Radical.of(p), (0,) * m, tuple(Fraction(p - 1) if k == j else 0 for k in range(n)))
        return _sub_all(stage, subs, bounds, det, 1, step)

    if isinstance(step, Blowup):
        j = step.j
        b = cell.hi[j]
        subs = {j: PMono.var(j, m, n) * b}

        def bounds(k):
            if k == j:
                return (None if cell.lo[k] is None else cell.lo[k] / b, PMono.one(m, n))
            return (_compose_or_none(cell.lo[k], subs), cell.hi[k].compose(subs))

        return _sub_all(stage, subs, bounds, b, 1, Blowup(j, b))

    if isinstance(step, Adjustment):
        j, lower = step.j, rat(step.lower)
        if lower <= 0:
            raise StepRejectedError(step, "the lower bound must be positive")
        if cell.lo[j] is None or cell.lo[j].enclosure(cell.base, cell.ranges())[0] < lower:
            raise StepRejectedError(step, f"y{j + 1} is not certified to stay above {lower}")

        def bounds(k):
            if k <= j:
                return cell.lo[k], cell.hi[k]
            return (None if cell.lo[k] is None else cell.lo[k].absorb(j, lower),
                    cell.hi[k].absorb(j, lower))

        new_cell = MonCell(m, n, cell.base, *zip(*[bounds(k) for k in range(n)]), cell.l)
        return Stage(new_cell, tuple(c.absorb(j, lower) for c in stage.phi),
                     stage.jac.absorb(j, lower), stage.sign, stage.steps + (step,), stage.depth)

    if isinstance(step, Flip):
        j = step.j
        if not cell.hi[j].is_one():
            raise StepRejectedError(step, f"upper bound of y{j + 1} must be 1")
        if cell.lo[j] is None:
            raise StepRejectedError(step, f"closure of y{j + 1} must lie in (0, 1]")
        alo, ahi = cell.lo[j].enclosure(cell.base, cell.ranges())
        if alo <= 0:
            raise StepRejectedError(step, f"closure of y{j + 1} must lie in (0, 1]")
        if ahi is None or ahi >= 1:
            raise StepRejectedError(step, f"lower bound of y{j + 1} must stay below 1")
        carried = [b for k in range(j + 1, n) for b in (cell.lo[k], cell.hi[k]) if b is not None]
        carried += list(stage.phi) + [stage.jac]
        if any(b.yexp[j] != 0 for b in carried):
            raise StepRejectedError(step, f"monomial powers of y{j + 1} must be adjusted into units")
        rep = {Y(j): 1 - Y(j)}
        upper = PMono.unit_only(1 - cell.lo[j].expr(), 1 - ahi, 1 - alo, m, n)

        def bounds(k):
            if k == j:
                return None, upper
            return (None if cell.lo[k] is None else cell.lo[k].substitute_unit(rep),
                    cell.hi[k].substitute_unit(rep))

        new_cell = MonCell(m, n, cell.base, *zip(*[bounds(k) for k in range(n)]), cell.l)
        return Stage(new_cell, tuple(c.substitute_unit(rep) for c in stage.phi),
                     stage.jac.substitute_unit(rep), -stage.sign, stage.steps + (step,), stage.depth)

    if isinstance(step, Swap):
        i, j = sorted((step.i, step.j))
        if i == j:
            raise StepRejectedError(step, "swap needs two distinct coordinates")
        subs = {i: PMono.var(j, m, n), j: PMono.var(i, m, n)}
        triangle = (cell.is_free(i) and cell.hi[j].is_one() and cell.lo[j] is not None
                    and cell.lo[j] == PMono.var(i, m, n)
                    and all(cell.is_free(k) for k in range(i + 1, j)))
        if not triangle:
            if cell.lo[j] is not None and cell.lo[j].depends_on_any(range(i, j)) or \
                    cell.hi[j].depends_on_any(range(i, j)):
                raise StepRejectedError(step, f"bounds of y{j + 1} depend on y{i + 1}..y{j}")
            for k in range(i + 1, j):
                if cell.lo[k] is not None and cell.lo[k].depends_on(i) or cell.hi[k].depends_on(i):
                    raise StepRejectedError(step, f"bounds of y{k + 1} depend on y{i + 1}")

        def bounds(k):
            if triangle and k == i:
                return None, PMono.one(m, n)
            if triangle and k == j:
                return None, PMono.var(i, m, n)
            src = {i: j, j: i}.get(k, k)
            return (_compose_or_none(cell.lo[src], subs), cell.hi[src].compose(subs))

        return _sub_all(stage, subs, bounds, None, -1, Swap(i, j))

    if isinstance(step, Restriction):
        if step.j is None:
            new_cell = replace(cell, base=tuple((rat(a), rat(b)) for a, b in step.base))
            return replace(stage, cell=new_cell, steps=stage.steps + (step,))
        j = step.j
        for b in (step.lo, step.hi):
            if b is not None and b.depends_on_any(range(j, n)):
                raise StepRejectedError(step, f"new bounds of y{j + 1} depend on y{j + 1} or later")
        lo = list(cell.lo)
        hi = list(cell.hi)
        lo[j], hi[j] = step.lo, step.hi
        new_cell = MonCell(m, n, cell.base, tuple(lo), tuple(hi), cell.l)
        return replace(stage, cell=new_cell, steps=stage.steps + (step,))

    raise StepRejectedError(step, "unknown step type")


def apply_step(cell: MonCell, phi: Sequence[PMono], step):
    """Public form of ``advance``: returns the new cell and pulled-back map."""
    st = advance(Stage.start(cell, phi), step)
    return st.cell, st.phi


@dataclass(frozen=True)
class JacobianRecord:
    """|det dF/dy| = H(x) y^gamma U(x, y) with U in [ulo, uhi]; sign kept apart."""

    mono: PMono
    sign: int

    @property
    def gamma(self) -> tuple:
        return self.mono.yexp

    @property
    def H(self) -> PMono:
        return PMono(self.mono.coef, self.mono.xexp, (0,) * self.mono.n)

    def eval(self, x, Yv) -> np.ndarray:
        return self.mono.eval(x, Yv)

    def to_json(self) -> dict:
        return {"H": self.H.describe(), "gamma": [rat_to_str(g) for g in self.gamma],
                "unit": sp.sstr(self.mono.unit), "unit_range": [rat_to_str(self.mono.ulo),
                                                                rat_to_str(self.mono.uhi)],
                "sign": self.sign}


def jacobian_of(steps: Sequence, cell: MonCell) -> JacobianRecord:
    st = Stage.start(cell)
    for s in steps:
        st = advance(st, s)
    return JacobianRecord(st.jac, st.sign)


# pieces --------------------------------------------------------------------

@dataclass(frozen=True)
class RectPiece:
    """A rectilinear target cell B with the composite map F: B -> A."""

    source: MonCell
    cell: MonCell
    steps: tuple
    jacobian: JacobianRecord
    phi: tuple = ()

    @property
    def l(self) -> int:
        return self.cell.l

    def flip_counts(self) -> dict:
        out: dict = {}
        for s in self.steps:
            if isinstance(s, Flip):
                out[s.j] = out.get(s.j, 0) + 1
        return out

    def in_base(self, x) -> bool:
        for (a, b), (oa, ob), v in zip(self.cell.base, self.source.base, x):
            v = float(v)
            if v < float(a) or v > float(b) or (v == float(b) and b != ob):
                return False
        return True

    def forward(self, x, Yv: np.ndarray) -> np.ndarray:
        Z = np.array(Yv, dtype=float, copy=True)
        for s in reversed(self.steps):
            if isinstance(s, PowerSub):
                Z[:, s.j] = Z[:, s.j] ** s.p
            elif isinstance(s, Blowup):
                Z[:, s.j] = Z[:, s.j] * s.bound.eval(x, Z)
            elif isinstance(s, Flip):
                Z[:, s.j] = 1 - Z[:, s.j]
            elif isinstance(s, Swap):
                Z[:, [s.i, s.j]] = Z[:, [s.j, s.i]]
        return Z

    def inverse(self, x, Yv: np.ndarray):
        """F^-1 on points of A, with a mask of points lying in the image."""
        Z = np.array(Yv, dtype=float, copy=True)
        ok = np.ones(Z.shape[0], dtype=bool)
        if not self.in_base(x):
            return Z, np.zeros(Z.shape[0], dtype=bool)
        with np.errstate(all="ignore"):
            for s in self.steps:
                if isinstance(s, PowerSub):
                    Z[:, s.j] = Z[:, s.j] ** (1.0 / s.p)
                elif isinstance(s, Blowup):
                    Z[:, s.j] = Z[:, s.j] / s.bound.eval(x, Z)
                elif isinstance(s, Flip):
                    Z[:, s.j] = 1 - Z[:, s.j]
                elif isinstance(s, Swap):
                    Z[:, [s.i, s.j]] = Z[:, [s.j, s.i]]
                elif isinstance(s, Restriction) and s.j is not None:
                    if s.lo is not None:
                        ok &= Z[:, s.j] > s.lo.eval(x, Z)
                    ok &= Z[:, s.j] < s.hi.eval(x, Z)
            ok &= self.cell.contains(x, Z)
            ok &= np.all(np.isfinite(Z), axis=1)
        return Z, ok

    def forward_components(self) -> list[PMono]:
        """F as monomials in the coordinates of B; unavailable after a flip."""
        m, n = self.cell.m, self.cell.n
        comps = [PMono.var(k, m, n) for k in range(n)]
        for s in reversed(self.steps):
            if isinstance(s, PowerSub):
                comps[s.j] = comps[s.j].pow(s.p)
            elif isinstance(s, Blowup):
                comps[s.j] = comps[s.j] * s.bound.compose(dict(enumerate(comps)))
            elif isinstance(s, Swap):
                comps[s.i], comps[s.j] = comps[s.j], comps[s.i]
            elif isinstance(s, Flip):
                raise UnsupportedInputError("a flipped coordinate has no monomial form without a centre")
        return comps

    def inverse_components(self) -> list[PMono]:
        """F^-1 as monomials in the coordinates of A; unavailable after a flip."""
        m, n = self.cell.m, self.cell.n
        comps = [PMono.var(k, m, n) for k in range(n)]
        for s in self.steps:
            if isinstance(s, PowerSub):
                comps[s.j] = comps[s.j].pow(Fraction(1, s.p))
            elif isinstance(s, Blowup):
                comps[s.j] = comps[s.j] / s.bound.compose(dict(enumerate(comps)))
            elif isinstance(s, Swap):
                comps[s.i], comps[s.j] = comps[s.j], comps[s.i]
            elif isinstance(s, Flip):
                raise UnsupportedInputError("a flipped coordinate has no monomial form without a centre")
        return comps

    def to_json(self) -> dict:
        return {"l": self.l, "cell": self.cell.to_json(),
                "steps": [s.to_json() for s in self.steps],
                "jacobian": self.jacobian.to_json(),
                "flips": {str(j + 1): c for j, c in sorted(self.flip_counts().items())}}


# the driver ----------------------------------------------------------------

THREE_HALVES = Fraction(3, 2)


def _check_input(cell: MonCell):
    rng = []
    for j in range(cell.n):
        for b in (cell.lo[j], cell.hi[j]):
            if b is None:
                continue
            lo, hi = b.enclosure(cell.base, rng)
            if hi is None:
                raise UnsupportedInputError(
                    f"bound of y{j + 1} is unbounded over the base; a compact base is required")
        hi = cell.hi[j].enclosure(cell.base, rng)[1]
        if hi > 1:
            raise UnsupportedInputError(f"upper bound of y{j + 1} is not certified to stay <= 1")
        lo = Fraction(0) if cell.lo[j] is None else cell.lo[j].enclosure(cell.base, rng)[0]
        rng.append((max(lo, Fraction(0)), hi))


def _exact_threshold(mono: PMono, C: Fraction, base) -> tuple | None:
    """Where mono * C = 1 splits the base, when mono is c * x_i^a and the
    root is rational and interior."""
    if any(mono.yexp):
        return None
    live = [(i, a) for i, a in enumerate(mono.xexp) if a]
    c = mono.coef.rational()
    if len(live) != 1 or c is None:
        return None
    i, a = live[0]
    target = 1 / (c * C)
    if a.denominator != 1:
        return None
    k = int(a)
    root = sp.root(sp.Rational(target.numerator, target.denominator), abs(k))
    if not root.is_Rational:
        return None
    t = Fraction(int(root.p), int(root.q))
    if k < 0:
        t = 1 / t
    lo, hi = base[i]
    if lo < t < hi:
        return i, t
    return None


def _split_base(stage: Stage, i: int, t: Fraction):
    out = []
    for a, b in ((stage.cell.base[i][0], t), (t, stage.cell.base[i][1])):
        base = list(stage.cell.base)
        base[i] = (a, b)
        out.append(advance(stage, Restriction(None, base=tuple(base))))
    return out


def _ceil_rational(v: Fraction, grid: int = 1000) -> Fraction:
    return Fraction(math.ceil(v * grid), grid)


def _to_bounded(st: Stage, d: int, mode: str) -> list[Stage]:
    """Coordinate d has a lower bound certified positive: move it into the
    bounded part, or flip it when asked to (or when its bounds involve free
    coordinates, so it cannot be moved)."""
    cell = st.cell
    l = cell.l
    a = cell.lo[d]
    movable = not a.depends_on_any(range(l, d))
    if mode == "flip" or not movable:
        try:
            return _case2(st, d)
        except UnsupportedInputError:
            if not movable:
                raise
    if l < d:
        st = advance(st, Swap(l, d))
    return [replace(st, cell=replace(st.cell, l=l + 1))]


def _case2(st: Stage, d: int) -> list[Stage]:
    cell = st.cell
    a = cell.lo[d]
    alo, ahi = a.enclosure(cell.base, cell.ranges())
    if alo <= 0 or ahi is None or ahi >= 1:
        raise UnsupportedInputError(
            f"lower bound of y{d + 1} is not certified inside (0, 1) on the base {cell.base}")
    st = advance(st, Adjustment(d, alo))
    st = advance(st, Flip(d))
    st = advance(st, Blowup(d))
    return [st]


def _coord(st: Stage, d: int, cap: int, mode: str) -> list[Stage]:
    """Make coordinate d rectilinear, possibly splitting the stage."""
    cell = st.cell
    m, n, l = cell.m, cell.n, cell.l
    if not cell.hi[d].is_one():
        st = advance(st, Blowup(d))
        cell = st.cell
    a = cell.lo[d]
    if a is None:
        return [st]
    for j in range(l, d):
        if a.yexp[j] < 0:
            raise UnsupportedInputError(f"lower bound of y{d + 1} has a negative power of y{j + 1}")
    supp_mono = [j for j in range(l, d) if a.yexp[j] != 0]
    if not supp_mono:
        L = a.monomial()
        C = THREE_HALVES * a.uhi
        lo, hi = L.enclosure(cell.base, cell.ranges())
        if lo > 0:
            return _to_bounded(st, d, mode)
        if hi is not None and hi * C > 1 and hi * a.uhi < 1:
            # any C above sup u works; 1/sup L keeps L C < 1 on the whole cell
            C = 1 / hi
        if hi is not None and hi * C <= 1:
            upper = L * PMono.const(C, m, n)
            low = advance(st, Restriction(d, a, upper))
            low = advance(low, Blowup(d))
            high = advance(st, Restriction(d, upper, PMono.one(m, n)))
            if l < d:
                high = advance(high, Swap(l, d))
            high = replace(high, cell=replace(high.cell, l=l + 1))
            return _to_bounded(low, d, mode) + [high]
        thr = _exact_threshold(L, C, cell.base)
        if thr is not None:
            out = []
            for part in _split_base(st, *thr):
                out.extend(_coord(part, d, cap, mode))
            return out
        if st.depth >= cap:
            raise ResourceError(f"base subdivision for y{d + 1} exceeded depth {cap}", st.depth)
        widths = [b - a_ for a_, b in cell.base]
        if not widths or max(widths) == 0:
            raise UnsupportedInputError(f"cannot separate the lower bound of y{d + 1} from 0")
        i = widths.index(max(widths))
        mid = (cell.base[i][0] + cell.base[i][1]) / 2
        out = []
        for part in _split_base(replace(st, depth=st.depth + 1), i, mid):
            out.extend(_coord(part, d, cap, mode))
        return out

    k = supp_mono[0]
    if k != l:
        st = advance(st, Swap(l, k))
    a = st.cell.lo[d]
    g = a.yexp[l]
    if g.denominator != 1:
        st = advance(st, PowerSub(l, g.denominator))
    if g.numerator != 1:
        st = advance(st, PowerSub(d, g.numerator))
    a = st.cell.lo[d]
    if a.yexp[l] != 1:
        raise InvariantError("power substitutions failed to normalise the exponent")
    rest = a.with_yexp(l, 0)
    rest_hi = rest.enclosure(st.cell.base, st.cell.ranges())[1]
    if rest_hi is None:
        raise UnsupportedInputError(f"lower bound of y{d + 1} is not bounded")
    C = max(Fraction(2), _ceil_rational(2 * rest_hi))
    one = PMono.one(m, n)
    inv_c = PMono.const(1 / C, m, n)
    out = []
    # y_{l+1} in (1/C, 1): the coordinate joins the bounded part
    s1 = advance(st, Restriction(l, inv_c, one))
    s1 = replace(s1, cell=replace(s1.cell, l=l + 1))
    out.extend(_coord(s1, d, cap, mode))
    # y_{l+1} < 1/C and y_d < C y_{l+1}
    s2 = advance(st, Restriction(l, None, inv_c))
    s2 = advance(s2, Blowup(l))
    s2 = advance(s2, Restriction(d, s2.cell.lo[d], PMono.var(l, m, n)))
    s2 = advance(s2, Blowup(d))
    out.extend(_coord(s2, d, cap, mode))
    # y_{l+1} < 1/C and y_d > C y_{l+1}
    s3 = advance(st, Restriction(l, None, inv_c))
    s3 = advance(s3, Blowup(l))
    s3 = advance(s3, Restriction(d, PMono.var(l, m, n), one))
    s3 = advance(s3, Swap(l, d))
    s3 = advance(s3, Blowup(d))
    out.append(s3)
    return out


def rectilinearize(cell: MonCell, phi: Sequence[PMono] = (), cap: int = 12,
                   mode: str = "bound") -> list[RectPiece]:
    """Cover the cell, up to null sets, by images of rectilinear cells.

    Coordinates are handled in increasing order; each one is brought to
    the form (0, 1) or, via a lower-bound case split, moved into the
    bounded part.  With ``mode="flip"`` a coordinate whose lower bound is
    bounded away from 0 is flipped and blown up to (0, 1) instead, falling
    back to the bounded part when the flip cannot be certified.
    """
    if mode not in ("bound", "flip"):
        raise ArgumentError(f"unknown mode {mode!r}")
    if cell.l != 0 and not all(cell.lo[j] is not None for j in range(cell.l)):
        raise ArgumentError("input cells start with l = 0")
    _check_input(cell)
    stages = [Stage.start(cell, phi)]
    for d in range(cell.n):
        nxt = []
        for st in stages:
            nxt.extend(_coord(st, d, cap, mode))
        stages = nxt
    pieces = []
    for st in stages:
        if any(c > 1 for c in st.flips().values()):
            raise InvariantError("a coordinate was flipped twice")
        pieces.append(RectPiece(cell, st.cell, st.steps, JacobianRecord(st.jac, st.sign), st.phi))
    return pieces


# term push and pull --------------------------------------------------------

@dataclass(frozen=True)
class ExprUnit:
    """A positive function given by an expression with a certified range."""

    expr: sp.Expr
    lo: Fraction
    hi: Fraction

    def is_one(self) -> bool:
        return self.expr == 1

    def depends_on(self, j: int) -> bool:
        return Y(j) in self.expr.free_symbols

    def eval_array(self, x, Yv) -> np.ndarray:
        m, n = len(x), Yv.shape[1]
        fn = _lambdify_unit(self.expr, m, n)
        v = fn(*[float(t) for t in x], *[Yv[:, j] for j in range(n)])
        return np.broadcast_to(np.asarray(v, dtype=float), (Yv.shape[0],)).copy()

    def expansion(self, m):
        raise UnsupportedInputError("expression units have no polynomial expansion")

    @property
    def components(self):
        return ("expr",)

    def to_json(self) -> dict:
        return {"expr": sp.sstr(self.expr), "lo": rat_to_str(self.lo), "hi": rat_to_str(self.hi)}


def _unit_expr(u) -> tuple:
    """(expression, lo, hi) of a prepared unit in the Y(j) symbols."""
    if isinstance(u, ExprUnit):
        return u.expr, u.lo, u.hi
    if u.is_one():
        return sp.Integer(1), Fraction(1), Fraction(1)
    comps = []
    for c in u.components:
        e = symbolic.to_sympy_rational(c.coef)
        for i, a in enumerate(c.xexp):
            e *= _xsym(i) ** symbolic.to_sympy_rational(a)
        for j, a in enumerate(c.yexp):
            e *= Y(j) ** symbolic.to_sympy_rational(a)
        comps.append(e)
    expr = sp.Integer(0)
    for ex, c in u.poly.coeffs.items():
        expr += symbolic.to_sympy_rational(c) * sp.Mul(*[v ** k for v, k in zip(comps, ex)])
    return expr, u.lo, u.hi


def _identity_logs(t: PreparedTerm) -> list[PreparedTerm]:
    if t.beta is None:
        return [t]
    return [PreparedTerm(t.coeff * c, t.r, k, None, t.unit) for k, c in t.log_expansion().items()]


def _power_range(lo: float, hi: float, c: int) -> tuple[float, float]:
    vals = [lo ** c, hi ** c] + ([0.0] if lo < 0 < hi else [])
    return min(vals), max(vals)


def compose_term(term: PreparedTerm, comps: Sequence[PMono]) -> list[PreparedTerm]:
    """Rewrite term(y) with y_j = comps[j](z) as prepared terms in z.

    With comps[j] = H_j(x) z^{b_j} V_j, the factor (log y_j)^S expands
    multinomially into (log H_j)^a (b_j . log z)^b (log V_j)^c.  The log H
    parts join the coefficient; each (log V)^c factor h is written as
    (h + K) - K with an integer K making h + K a unit.
    """
    n = len(comps)
    if term.n != n:
        raise ArgumentError("term arity differs from the map")
    m = comps[0].m if comps else 0
    out = []
    for t in _identity_logs(term):
        mono = PMono.one(m, n)
        for c, R in zip(comps, t.r):
            if R:
                mono = mono * c.pow(R)
        if any(a.denominator != 1 or a < 0 for a in mono.xexp):
            raise UnsupportedInputError("pushed coefficient has a non-natural power of x")
        coeff = t.coeff * sp.Mul(*[_xsym(i) ** int(a) for i, a in enumerate(mono.xexp)])
        hval = mono.coef.rational()
        rad_expr, rad_lo, rad_hi = sp.Integer(1), Fraction(1), Fraction(1)
        if hval is None:
            # an irrational constant is a legitimate constant unit
            rad_expr = mono.coef.sympy()
            rad_lo, rad_hi = mono.coef.bounds()
        else:
            coeff = coeff * symbolic.to_sympy_rational(hval)
        uexpr, ulo, uhi = _unit_expr(t.unit)
        if uexpr != 1:
            uexpr = uexpr.xreplace({Y(j): comps[j].expr() for j in range(n)})
        base_unit = (uexpr * mono.unit * rad_expr, ulo * mono.ulo * rad_lo, uhi * mono.uhi * rad_hi)
        logH = [c.coef.log_expr() + sum((symbolic.to_sympy_rational(a) * symbolic.LX(i + 1)
                                         for i, a in enumerate(c.xexp) if a), sp.Integer(0))
                for c in comps]
        choices = []
        for j, S in enumerate(t.s):
            opts = []
            for a_ in range(S + 1):
                for b_ in range(S - a_ + 1):
                    c_ = S - a_ - b_
                    if c_ and comps[j].unit == 1:
                        continue
                    mult = math.factorial(S) // (
                        math.factorial(a_) * math.factorial(b_) * math.factorial(c_))
                    opts.append((a_, b_, c_, mult))
            choices.append(opts)
        for combo in itertools.product(*choices):
            cf = coeff
            s_vec = [0] * n
            beta = []
            branches = [(base_unit, sp.Integer(1))]
            for j, (a_, b_, c_, mult) in enumerate(combo):
                cf = cf * mult * logH[j] ** a_
                s_vec[j] = b_
                beta.append(tuple(comps[j].yexp) if b_ else
                            tuple(Fraction(int(i == j)) for i in range(n)))
                if not c_:
                    continue
                comp = comps[j]
                hmin, hmax = _power_range(math.log(float(comp.ulo)), math.log(float(comp.uhi)), c_)
                K = max(0, math.ceil(1 - hmin))
                h = sp.log(comp.unit) ** c_
                nxt = []
                for (ue, lo_, hi_), sc in branches:
                    nxt.append(((ue * (h + K), lo_ * _down(max(hmin + K, 1e-300)),
                                 hi_ * _up(hmax + K)), sc))
                    if K:
                        nxt.append(((ue, lo_, hi_), -K * sc))
                branches = nxt
            cf = sp.expand(cf)
            if cf == 0:
                continue
            for (ue, lo_, hi_), sc in branches:
                unit = UnitSeries.constant(1) if ue == 1 else ExprUnit(ue, lo_, hi_)
                out.append(PreparedTerm(cf * sc, mono.yexp, tuple(s_vec), tuple(beta), unit))
    return out


def pushforward_term(term: PreparedTerm, piece) -> list[PreparedTerm]:
    """Terms on A equal to term(F^-1) for a piece or explicit inverse components."""
    comps = piece.inverse_components() if isinstance(piece, RectPiece) else list(piece)
    return compose_term(term, comps)


def pullback_term(term: PreparedTerm, piece) -> list[PreparedTerm]:
    """Terms on B equal to term(F) for a piece or explicit forward components."""
    comps = piece.forward_components() if isinstance(piece, RectPiece) else list(piece)
    return compose_term(term, comps)


def eval_terms(terms: Sequence[PreparedTerm], x, Yv: np.ndarray) -> np.ndarray:
    out = np.zeros(Yv.shape[0])
    for t in terms:
        out += t.eval_array(x, Yv)
    return out


def countex_cell(base=((0, 1),)) -> MonCell:
    """{0 < y1 < 1, x y1 < y2 < y1} over a compact base box."""
    m, n = 1, 2
    lo2 = PMono(Radical(), (1,), (1, 0))
    hi2 = PMono.var(0, m, n)
    return MonCell(m, n, base, (None, lo2), (PMono.one(m, n), hi2))


# checks --------------------------------------------------------------------

def random_cell(rng: np.random.Generator, n: int, m: int = 0) -> MonCell:
    """A random cell with b_j = y_<j^beta and a_j = c b_j y_<j^delta or 0."""
    choice = [Fraction(0), Fraction(0), Fraction(1), Fraction(2), Fraction(1, 2)]
    lo, hi = [], []
    for j in range(n):
        beta = [choice[rng.integers(len(choice))] if k < j else Fraction(0) for k in range(n)]
        xexp = (0,) * m
        b = PMono(Radical(), xexp, tuple(beta))
        hi.append(b)
        if rng.random() < 0.25:
            lo.append(None)
            continue
        delta = [Fraction(int(rng.integers(0, 2))) if k < j else Fraction(0) for k in range(n)]
        c = Fraction(int(rng.integers(1, 4)), 4)
        ax = tuple(Fraction(int(rng.integers(0, 2))) for _ in range(m))
        lo.append(PMono(Radical.of(c), ax, tuple(a + d for a, d in zip(beta, delta))))
    return MonCell(m, n, tuple((0, 1) for _ in range(m)), tuple(lo), tuple(hi))


@dataclass(frozen=True)
class CoverReport:
    points: int
    once: int
    missed: int
    multiple: int

    @property
    def coverage(self) -> float:
        return self.once / self.points if self.points else 1.0


def check_cover(cell: MonCell, pieces: Sequence[RectPiece], x, count: int = 2000,
                rng: np.random.Generator | None = None) -> CoverReport:
    """Sample A_x and count how many piece images contain each point."""
    rng = rng or np.random.default_rng(0)
    A = cell.sample(x, count, rng)
    A = A[cell.contains(x, A)]
    hits = np.zeros(A.shape[0], dtype=int)
    for p in pieces:
        hits += p.inverse(x, A)[1].astype(int)
    return CoverReport(int(A.shape[0]), int(np.sum(hits == 1)), int(np.sum(hits == 0)),
                       int(np.sum(hits > 1)))


def check_injective(pieces: Sequence[RectPiece], x, count: int = 500,
                    rng: np.random.Generator | None = None, tol: float = 1e-12) -> int:
    """Number of sampled pairs from distinct target points sharing an image."""
    rng = rng or np.random.default_rng(0)
    images, owners, sources = [], [], []
    for k, p in enumerate(pieces):
        if not p.in_base(x):
            continue
        B = p.cell.sample(x, count, rng)
        images.append(p.forward(x, B))
        sources.append(B)
        owners.append(np.full(B.shape[0], k))
    if not images:
        return 0
    I = np.concatenate(images)
    S = np.concatenate(sources)
    O = np.concatenate(owners)
    order = np.lexsort(I.T[::-1])
    I, S, O = I[order], S[order], O[order]
    same_image = np.all(np.abs(np.diff(I, axis=0)) <= tol, axis=1)
    distinct = (O[1:] != O[:-1]) | np.any(np.abs(np.diff(S, axis=0)) > tol, axis=1)
    return int(np.sum(same_image & distinct))


def jacobian_error(piece: RectPiece, x, count: int = 50, h: float = 1e-6,
                   rng: np.random.Generator | None = None) -> float:
    """Max relative gap between the tracked |det DF| and central differences."""
    rng = rng or np.random.default_rng(0)
    B = piece.cell.sample(x, count, rng)
    n = B.shape[1]
    if n == 0:
        return 0.0
    D = np.zeros((B.shape[0], n, n))
    for k in range(n):
        step = np.zeros(n)
        hk = h * np.minimum(B[:, k], 1 - B[:, k])
        step = np.zeros_like(B)
        step[:, k] = hk
        D[:, :, k] = (piece.forward(x, B + step) - piece.forward(x, B - step)) / (2 * hk[:, None])
    fd = np.abs(np.linalg.det(D))
    tracked = np.abs(piece.jacobian.eval(x, B))
    scale = np.maximum(np.abs(tracked), 1e-300)
    return float(np.max(np.abs(fd - tracked) / scale))
