"""Prepared sums on rectilinear cells.

A term is coeff(x) * y^r * prod_i (sum_j beta_ij log y_j)^s_i * unit, where
the unit is a polynomial in bounded monomials c * x^a * y^b with certified
positive bounds.  Terms are grouped by their exponents on the free
coordinates y_{>l}; a group is critical when its coefficient part depends
only on (x, y_{<=l}).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
import sympy as sp

from . import symbolic
from .errors import ArgumentError, DomainError, ParseError, UnsupportedInputError
from .exact import rat, rat_from_json, rat_to_str
from .series import TruncPoly


def _rvec(v, n=None, path="$"):
    if not isinstance(v, (list, tuple)):
        raise ParseError(path, "expected a list")
    out = tuple(rat_from_json(e, f"{path}[{i}]") for i, e in enumerate(v))
    if n is not None and len(out) != n:
        raise ParseError(path, f"expected {n} entries, got {len(out)}")
    return out


def _nvec(v, n=None, path="$"):
    if not isinstance(v, (list, tuple)) or not all(
            isinstance(e, int) and not isinstance(e, bool) and e >= 0 for e in v):
        raise ParseError(path, "expected a list of naturals")
    if n is not None and len(v) != n:
        raise ParseError(path, f"expected {n} entries, got {len(v)}")
    return tuple(v)


@dataclass(frozen=True)
class RectCell:
    """An l-rectilinear cell over a rational base box.

    Coordinates y_1..y_l range over ``box`` (rational, inside (0, 1]) and
    y_{l+1}..y_n over (0, 1).
    """

    m: int
    n: int
    l: int
    base: tuple
    box: tuple = ()

    def __post_init__(self):
        if not 0 <= self.l <= self.n:
            raise ArgumentError(f"need 0 <= l <= n, got l={self.l}, n={self.n}")
        base = tuple((rat(a), rat(b)) for a, b in self.base)
        box = tuple((rat(a), rat(b)) for a, b in self.box)
        if len(base) != self.m:
            raise ArgumentError(f"base box has {len(base)} sides, expected m={self.m}")
        if len(box) != self.l:
            raise ArgumentError(f"y box has {len(box)} sides, expected l={self.l}")
        for a, b in base:
            if a > b:
                raise ArgumentError(f"empty base side [{a}, {b}]")
        for a, b in box:
            if not 0 < a < b <= 1:
                raise ArgumentError(f"y box side [{a}, {b}] not inside (0, 1]")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "box", box)

    @classmethod
    def unit_cube(cls, n: int, m: int = 0, base=None) -> "RectCell":
        base = base if base is not None else tuple((0, 1) for _ in range(m))
        return cls(m, n, 0, base, ())

    def in_base(self, x) -> bool:
        return len(x) == self.m and all(a <= rat(v) <= b for v, (a, b) in zip(x, self.base))

    def check_point(self, y):
        if len(y) != self.n:
            raise DomainError(f"point has {len(y)} coordinates, expected {self.n}")
        for i, v in enumerate(y):
            if not 0 < v < 1:
                raise DomainError(f"y{i + 1} = {v} is not in (0, 1)")
            if i < self.l:
                a, b = self.box[i]
                if not float(a) <= v <= float(b):
                    raise DomainError(f"y{i + 1} = {v} is outside [{a}, {b}]")

    def to_json(self) -> dict:
        return {
            "m": self.m, "n": self.n, "l": self.l,
            "base": [[rat_to_str(a), rat_to_str(b)] for a, b in self.base],
            "box": [[rat_to_str(a), rat_to_str(b)] for a, b in self.box],
        }

    @classmethod
    def from_json(cls, doc, path="$") -> "RectCell":
        if not isinstance(doc, dict):
            raise ParseError(path, "expected a cell object")
        for key in ("m", "n"):
            if not isinstance(doc.get(key), int):
                raise ParseError(f"{path}.{key}", "expected an integer")
        l = doc.get("l", 0)
        base = doc.get("base", [[0, 1]] * doc["m"])
        box = doc.get("box", [])
        try:
            return cls(doc["m"], doc["n"], l,
                       tuple(tuple(_rvec(s, 2, f"{path}.base[{i}]")) for i, s in enumerate(base)),
                       tuple(tuple(_rvec(s, 2, f"{path}.box[{i}]")) for i, s in enumerate(box)))
        except ArgumentError as exc:
            raise ParseError(path, str(exc)) from exc


@dataclass(frozen=True)
class MonoComponent:
    """The bounded monomial coef * x^xexp * y^yexp."""

    coef: Fraction
    xexp: tuple
    yexp: tuple

    def to_json(self) -> dict:
        return {"coef": rat_to_str(self.coef),
                "xexp": [rat_to_str(v) for v in self.xexp],
                "yexp": [rat_to_str(v) for v in self.yexp]}


@dataclass(frozen=True)
class UnitSeries:
    """A polynomial in monomial components, positive with certified bounds."""

    components: tuple
    poly: TruncPoly
    lo: Fraction
    hi: Fraction

    def __post_init__(self):
        if self.poly.nvars != len(self.components):
            raise ArgumentError("unit polynomial arity differs from the component count")
        if not 0 < self.lo <= self.hi:
            raise ArgumentError(f"unit bounds need 0 < lo <= hi, got [{self.lo}, {self.hi}]")

    @classmethod
    def constant(cls, c=1) -> "UnitSeries":
        c = rat(c)
        return cls((), TruncPoly.const(0, c), c, c)

    def is_one(self) -> bool:
        return self.poly.coeffs == {(0,) * self.poly.nvars: Fraction(1)} or (
            not self.components and self.poly.eval(()) == 1)

    def is_constant(self) -> bool:
        return all(sum(e) == 0 for e in self.poly.coeffs)

    def depends_on(self, j: int) -> bool:
        """Whether y_j (0-based) enters some component used by the polynomial."""
        used = {i for e in self.poly.coeffs for i, k in enumerate(e) if k}
        return any(self.components[i].yexp[j] != 0 for i in used)

    def component_values(self, x, Y: np.ndarray) -> np.ndarray:
        cols = []
        for c in self.components:
            v = float(c.coef) * np.prod([float(xi) ** float(a) for xi, a in zip(x, c.xexp)])
            cols.append(v * np.prod(Y ** np.array([float(b) for b in c.yexp]), axis=1))
        return np.array(cols).T if cols else np.zeros((Y.shape[0], 0))

    def eval_array(self, x, Y: np.ndarray) -> np.ndarray:
        comps = self.component_values(x, Y)
        out = np.zeros(Y.shape[0])
        for e, c in self.poly.coeffs.items():
            term = np.full(Y.shape[0], float(c))
            for i, k in enumerate(e):
                if k:
                    term = term * comps[:, i] ** k
            out += term
        return out

    def expansion(self, m: int) -> dict:
        """Expand into {y exponent: sympy coefficient in x}.

        Only natural x exponents keep the coefficient polynomial; anything
        else is outside the supported class.
        """
        if self.poly.trunc is not None:
            raise UnsupportedInputError("truncated unit series cannot be expanded exactly")
        out: dict = {}
        n = len(self.components[0].yexp) if self.components else None
        for e, c in self.poly.coeffs.items():
            coef = symbolic.to_sympy_rational(c)
            xexp = [Fraction(0)] * m
            yexp = None
            for comp, k in zip(self.components, e):
                if not k:
                    continue
                coef *= symbolic.to_sympy_rational(comp.coef) ** k
                xexp = [a + k * b for a, b in zip(xexp, comp.xexp)]
                ye = tuple(k * b for b in comp.yexp)
                yexp = ye if yexp is None else tuple(a + b for a, b in zip(yexp, ye))
            for a in xexp:
                if a.denominator != 1 or a < 0:
                    raise UnsupportedInputError(f"unit has non-natural x exponent {a}")
            mono = sp.Mul(*[symbolic.X(i + 1) ** int(a) for i, a in enumerate(xexp)])
            key = yexp if yexp is not None else None
            out[key] = out.get(key, sp.Integer(0)) + coef * mono
        if n is not None:
            out = {(k if k is not None else (Fraction(0),) * n): v for k, v in out.items()}
        return out

    def to_json(self) -> dict:
        return {"components": [c.to_json() for c in self.components],
                "poly": self.poly.to_json(),
                "trunc": self.poly.trunc,
                "lo": rat_to_str(self.lo), "hi": rat_to_str(self.hi)}

    @classmethod
    def from_json(cls, doc, m: int, n: int, path="$") -> "UnitSeries":
        if doc is None or doc == 1 or doc == "1":
            return cls.constant(1)
        if not isinstance(doc, dict):
            raise ParseError(path, "expected a unit object")
        comps = []
        for i, c in enumerate(doc.get("components", [])):
            p = f"{path}.components[{i}]"
            comps.append(MonoComponent(rat_from_json(c.get("coef", 1), p + ".coef"),
                                       _rvec(c.get("xexp", [0] * m), m, p + ".xexp"),
                                       _rvec(c.get("yexp", [0] * n), n, p + ".yexp")))
        trunc = doc.get("trunc")
        poly = TruncPoly.from_json(doc.get("poly", []), len(comps), path + ".poly", trunc)
        try:
            return cls(tuple(comps), poly, rat_from_json(doc.get("lo"), path + ".lo"),
                       rat_from_json(doc.get("hi"), path + ".hi"))
        except ArgumentError as exc:
            raise ParseError(path, str(exc)) from exc


UNIT_ONE = UnitSeries.constant(1)


@dataclass(frozen=True)
class PreparedTerm:
    """coeff(x) * y^r * prod_i (log prod_j y_j^beta_ij)^s_i * unit.

    ``beta`` None means the identity matrix, so the log factors are log y_i.
    """

    coeff: sp.Expr
    r: tuple
    s: tuple
    beta: tuple | None = None
    unit: UnitSeries = UNIT_ONE

    def __post_init__(self):
        object.__setattr__(self, "coeff", sp.expand(sp.sympify(self.coeff)))
        object.__setattr__(self, "r", tuple(rat(v) for v in self.r))
        object.__setattr__(self, "s", tuple(int(v) for v in self.s))
        if len(self.r) != len(self.s):
            raise ArgumentError("r and s differ in length")
        if any(v < 0 for v in self.s):
            raise ArgumentError("log powers must be natural")
        if self.beta is not None:
            beta = tuple(tuple(rat(v) for v in row) for row in self.beta)
            n = len(self.r)
            if len(beta) != n or any(len(row) != n for row in beta):
                raise ArgumentError("beta must be n x n")
            if beta == _identity(n):
                beta = None
            object.__setattr__(self, "beta", beta)

    @property
    def n(self) -> int:
        return len(self.r)

    def beta_row(self, i: int) -> tuple:
        if self.beta is None:
            return tuple(Fraction(int(i == j)) for j in range(self.n))
        return self.beta[i]

    def log_matrix(self) -> np.ndarray:
        return np.array([[float(v) for v in self.beta_row(i)] for i in range(self.n)])

    def eval_array(self, x, Y: np.ndarray, coeff_value: float | None = None) -> np.ndarray:
        c = symbolic.eval_float(self.coeff, x) if coeff_value is None else coeff_value
        out = np.full(Y.shape[0], c)
        if c == 0.0:
            return out
        r = np.array([float(v) for v in self.r])
        if np.any(r):
            out = out * np.prod(Y ** r, axis=1)
        if any(self.s):
            L = np.log(Y) @ self.log_matrix().T
            for i, k in enumerate(self.s):
                if k:
                    out = out * L[:, i] ** k
        if not self.unit.is_one():
            out = out * self.unit.eval_array(x, Y)
        return out

    def log_expansion(self) -> dict:
        """prod_i (sum_j beta_ij L_j)^s_i as {power tuple k: rational}."""
        n = self.n
        Ls = sp.symbols(f"L0:{n}")
        prod = sp.Integer(1)
        for i, k in enumerate(self.s):
            if k:
                lin = sum(symbolic.to_sympy_rational(b) * Ls[j]
                          for j, b in enumerate(self.beta_row(i)))
                prod *= lin ** k
        poly = sp.Poly(sp.expand(prod), *Ls, domain="QQ") if n else None
        if poly is None:
            return {(): sp.Integer(1)}
        return {tuple(mon): c for mon, c in poly.terms()}

    def expansion(self, m: int) -> dict:
        """{(y exponent, log power): coefficient} over the basis y^e (log y)^k."""
        n = self.n
        unit = self.unit.expansion(m) if self.unit.components else {
            (Fraction(0),) * n: symbolic.to_sympy_rational(self.unit.poly.eval(()))}
        logs = self.log_expansion()
        out: dict = {}
        for ye, uc in unit.items():
            e = tuple(a + b for a, b in zip(self.r, ye))
            for k, lc in logs.items():
                key = (e, k)
                out[key] = out.get(key, sp.Integer(0)) + self.coeff * uc * lc
        return out

    def to_json(self) -> dict:
        doc = {"coeff": symbolic.coeff_to_str(self.coeff),
               "r": [rat_to_str(v) for v in self.r], "s": list(self.s)}
        if self.beta is not None:
            doc["beta"] = [[rat_to_str(v) for v in row] for row in self.beta]
        if not self.unit.is_one():
            doc["unit"] = self.unit.to_json()
        return doc

    @classmethod
    def from_json(cls, doc, m: int, n: int, path="$") -> "PreparedTerm":
        if not isinstance(doc, dict):
            raise ParseError(path, "expected a term object")
        coeff = symbolic.parse_coeff(doc.get("coeff", "1"), m, path + ".coeff")
        r = _rvec(doc.get("r", [0] * n), n, path + ".r")
        s = _nvec(doc.get("s", [0] * n), n, path + ".s")
        beta = doc.get("beta")
        if beta is not None:
            if not isinstance(beta, list) or len(beta) != n:
                raise ParseError(path + ".beta", f"expected {n} rows")
            beta = tuple(_rvec(row, n, f"{path}.beta[{i}]") for i, row in enumerate(beta))
        unit = UnitSeries.from_json(doc.get("unit"), m, n, path + ".unit")
        try:
            return cls(coeff, r, s, beta, unit)
        except ArgumentError as exc:
            raise ParseError(path, str(exc)) from exc


def _identity(n):
    return tuple(tuple(Fraction(int(i == j)) for j in range(n)) for i in range(n))


@dataclass(frozen=True)
class Group:
    """Terms sharing the exponents (r_{>l}, s_{>l}) on the free coordinates."""

    label: str
    critical: bool
    terms: tuple

    def key(self, l: int) -> tuple:
        t = self.terms[0]
        return (t.r[l:], t.s[l:])

    def expansion(self, m: int) -> dict:
        out: dict = {}
        for t in self.terms:
            for key, c in t.expansion(m).items():
                out[key] = out.get(key, sp.Integer(0)) + c
        return {key: sp.expand(c) for key, c in out.items() if sp.expand(c) != 0}

    def to_json(self) -> dict:
        return {"label": self.label, "critical": self.critical,
                "terms": [t.to_json() for t in self.terms]}


@dataclass(frozen=True)
class CriticalProfile:
    """Per free coordinate: least exponent (None for +inf) and top log power there."""

    rbar: tuple
    sbar: tuple

    @property
    def empty(self) -> bool:
        return all(v is None for v in self.rbar)

    def to_json(self) -> dict:
        return {"rbar": ["inf" if v is None else rat_to_str(v) for v in self.rbar],
                "sbar": list(self.sbar)}


def profile(exponents: Sequence[tuple], width: int) -> CriticalProfile:
    """Profile of a set of (r_{>l}, s_{>l}) pairs over ``width`` free coordinates."""
    rbar, sbar = [], []
    for i in range(width):
        if not exponents:
            rbar.append(None)
            sbar.append(0)
            continue
        lo = min(rat(r[i]) for r, _ in exponents)
        rbar.append(lo)
        sbar.append(max(s[i] for r, s in exponents if rat(r[i]) == lo))
    return CriticalProfile(tuple(rbar), tuple(sbar))


class CRViolation(ArgumentError):
    """A noncritical group is not dominated by a critical one."""


@dataclass(frozen=True)
class PreparedSum:
    """A sum of groups of prepared terms on a rectilinear cell.

    ``mode`` selects how the domination condition between noncritical and
    critical groups is certified: "generic" checks it for every parameter
    through a radical-membership test, "sampled" checks it at ``points``.
    """

    cell: RectCell
    groups: tuple
    mode: str = "generic"
    points: tuple = ()
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        object.__setattr__(self, "points", tuple(tuple(rat(v) for v in p) for p in self.points))
        self._validate()

    @property
    def l(self) -> int:
        return self.cell.l

    @property
    def m(self) -> int:
        return self.cell.m

    @property
    def n(self) -> int:
        return self.cell.n

    def labels(self) -> list[str]:
        return [g.label for g in self.groups]

    def group(self, label: str) -> Group:
        for g in self.groups:
            if g.label == label:
                return g
        raise ArgumentError(f"no group {label!r}")

    def critical_groups(self) -> list[Group]:
        return [g for g in self.groups if g.critical]

    def _validate(self):
        l, n = self.l, self.n
        seen_labels, seen_keys = set(), {}
        for g in self.groups:
            if g.label in seen_labels:
                raise ArgumentError(f"duplicate group label {g.label!r}")
            seen_labels.add(g.label)
            if not g.terms:
                raise ArgumentError(f"group {g.label!r} has no terms")
            key = g.key(l)
            for t in g.terms:
                if t.n != n:
                    raise ArgumentError(f"term arity {t.n} != n={n} in {g.label!r}")
                if (t.r[l:], t.s[l:]) != key:
                    raise ArgumentError(f"group {g.label!r} mixes free-coordinate exponents")
                for s_sym in t.coeff.free_symbols:
                    kind, idx = symbolic._kind(s_sym)
                    if kind is None or (kind != "logp" and idx > self.m):
                        raise ArgumentError(f"coefficient symbol {s_sym} outside x1..x{self.m}")
                for i in range(n):
                    if not t.s[i]:
                        continue
                    row = t.beta_row(i)
                    if i >= l and row != tuple(Fraction(int(i == j)) for j in range(n)):
                        raise ArgumentError(
                            f"log factor {i + 1} of group {g.label!r} must be log y{i + 1}")
                    if i < l and any(row[j] for j in range(l, n)):
                        raise ArgumentError(
                            f"log factor {i + 1} of group {g.label!r} involves free coordinates")
                if g.critical and any(t.unit.depends_on(j) for j in range(l, n)):
                    raise ArgumentError(f"critical group {g.label!r} has a unit depending on y_(>l)")
            if key in seen_keys:
                raise ArgumentError(
                    f"groups {seen_keys[key]!r} and {g.label!r} share exponents {key}")
            seen_keys[key] = g.label
        if self.mode not in ("generic", "sampled"):
            raise ArgumentError(f"unknown mode {self.mode!r}")
        if self.mode == "sampled" and not self.points:
            raise ArgumentError("sampled mode needs points")
        self._check_domination()

    def expansion(self, label: str) -> dict:
        if label not in self._cache:
            self._cache[label] = self.group(label).expansion(self.m)
        return self._cache[label]

    def _dominators(self, g: Group) -> list[Group]:
        r2, s2 = g.key(self.l)
        return [c for c in self.critical_groups()
                if c.key(self.l)[1] == s2 and all(a <= b for a, b in zip(c.key(self.l)[0], r2))]

    def _check_domination(self):
        for g in self.groups:
            if g.critical:
                continue
            coeffs = list(self.expansion(g.label).values())
            if not coeffs:
                continue
            doms = self._dominators(g)
            if self.mode == "generic":
                gens = [c for d in doms for c in self.expansion(d.label).values()]
                for c in coeffs:
                    if not symbolic.radical_contains(gens, c):
                        raise CRViolation(
                            f"noncritical group {g.label!r} may survive where every dominating "
                            f"critical group vanishes")
            else:
                for x in self.points:
                    if self.group_vanishes_at(g.label, x):
                        continue
                    if all(self.group_vanishes_at(d.label, x) for d in doms):
                        raise CRViolation(
                            f"noncritical group {g.label!r} is not dominated at x={list(map(str, x))}")

    def group_vanishes_generic(self, label: str) -> bool:
        return not self.expansion(label)

    def group_vanishes_at(self, label: str, x) -> bool:
        return all(symbolic.vanishes_at(c, x) for c in self.expansion(label).values())

    def group_witness(self, label: str) -> sp.Expr:
        return symbolic.sum_of_squares(self.expansion(label).values())

    def free_key(self, label: str) -> tuple:
        return self.group(label).key(self.l)

    def evaluate(self, x, y) -> float:
        self.cell.check_point(y)
        return float(self.eval_array(x, np.array([y], dtype=float))[0])

    def eval_array(self, x, Y: np.ndarray) -> np.ndarray:
        out = np.zeros(Y.shape[0])
        for g in self.groups:
            for t in g.terms:
                out += t.eval_array(x, Y)
        return out

    def is_zero(self) -> bool:
        return all(not self.expansion(g.label) for g in self.groups)

    def to_json(self) -> dict:
        return {"cell": self.cell.to_json(), "mode": self.mode,
                "points": [[rat_to_str(v) for v in p] for p in self.points],
                "groups": [g.to_json() for g in self.groups]}

    @classmethod
    def from_json(cls, doc, cell: RectCell | None = None, path="$", mode=None, points=()) -> "PreparedSum":
        if not isinstance(doc, dict):
            raise ParseError(path, "expected a sum object")
        if cell is None:
            if "cell" not in doc:
                raise ParseError(path + ".cell", "missing cell")
            cell = RectCell.from_json(doc["cell"], path + ".cell")
        groups_doc = doc.get("groups", [])
        if not isinstance(groups_doc, list):
            raise ParseError(path + ".groups", "expected a list")
        groups = []
        for i, gd in enumerate(groups_doc):
            p = f"{path}.groups[{i}]"
            if not isinstance(gd, dict):
                raise ParseError(p, "expected a group object")
            terms_doc = gd["terms"] if "terms" in gd else [gd]
            terms = tuple(PreparedTerm.from_json(td, cell.m, cell.n, f"{p}.terms[{j}]")
                          for j, td in enumerate(terms_doc))
            critical = gd.get("critical", True)
            if not isinstance(critical, bool):
                raise ParseError(p + ".critical", "expected a boolean")
            groups.append(Group(str(gd.get("label", f"g{i + 1}")), critical, terms))
        mode = doc.get("mode", mode or "generic")
        pts = doc.get("points", points)
        try:
            pts = tuple(_rvec(pt, cell.m, f"{path}.points[{i}]") for i, pt in enumerate(pts))
            return cls(cell, tuple(groups), mode, pts)
        except ParseError:
            raise
        except ArgumentError as exc:
            raise ParseError(path, str(exc)) from exc


def simple_sum(cell: RectCell, terms: Sequence[PreparedTerm], labels=None) -> PreparedSum:
    """Group terms by free-coordinate exponents, all critical."""
    by_key: dict = {}
    for t in terms:
        by_key.setdefault((t.r[cell.l:], t.s[cell.l:]), []).append(t)
    groups = []
    for i, (key, ts) in enumerate(by_key.items()):
        label = labels[i] if labels else f"g{i + 1}"
        groups.append(Group(label, True, tuple(ts)))
    return PreparedSum(cell, tuple(groups))


def critical_delta(psum: PreparedSum, x=None) -> list[str]:
    """Labels of critical groups not identically zero, generically or at x."""
    out = []
    for g in psum.critical_groups():
        if x is None:
            if not psum.group_vanishes_generic(g.label):
                out.append(g.label)
        elif not psum.group_vanishes_at(g.label, x):
            out.append(g.label)
    return out


def profile_of(psum: PreparedSum, labels) -> CriticalProfile:
    keys = [psum.free_key(lab) for lab in labels]
    return profile(keys, psum.n - psum.l)


def fiber_vanishing_witness(psum: PreparedSum) -> sp.Expr:
    """g(x) whose zeros are exactly the x with f(x, .) identically zero.

    It is the sum of squares of the coefficients of every critical group in
    the basis y_{<=l}^e (log y_{<=l})^k.
    """
    return symbolic.sum_of_squares(
        c for g in psum.critical_groups() for c in psum.expansion(g.label).values())
