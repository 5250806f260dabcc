"""Sparse truncated power series over Q, coefficient families and their split.

A ``CoeffFamily`` is f(x, y, z) = sum_alpha f_alpha(x, y) z^alpha with
polynomial f_alpha.  ``critical_split`` rewrites it as a finite sum over a
critical index set plus tails indexed by the minimal members of the parts
of the complement, each tail dominated by the critical coefficients below
it.  ``collapse_series`` and ``leading_asymptotics`` handle sums of the form
sum_i G_i(x, x^t, x^(1-t)) (log x)^i.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from . import dickson
from .errors import ArgumentError, DomainError, ParseError
from .exact import rat, rat_from_json, rat_to_str


@dataclass(frozen=True)
class TruncPoly:
    """Sparse map from exponent tuples to nonzero rationals.

    ``trunc`` is the truncation degree: terms of total degree above it have
    been discarded.  ``None`` means the data is an exact polynomial.
    """

    nvars: int
    coeffs: Mapping[tuple, Fraction] = field(default_factory=dict)
    trunc: int | None = None

    def __post_init__(self):
        clean = {}
        for e, c in dict(self.coeffs).items():
            e = tuple(int(v) for v in e)
            if len(e) != self.nvars:
                raise ArgumentError(f"exponent {e} has arity {len(e)}, expected {self.nvars}")
            if any(v < 0 for v in e):
                raise ArgumentError(f"negative exponent {e}")
            c = rat(c)
            if self.trunc is not None and sum(e) > self.trunc:
                continue
            if c != 0:
                clean[e] = clean.get(e, Fraction(0)) + c
        clean = {e: c for e, c in clean.items() if c != 0}
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))

    @classmethod
    def zero(cls, nvars: int, trunc=None) -> "TruncPoly":
        return cls(nvars, {}, trunc)

    @classmethod
    def const(cls, nvars: int, c, trunc=None) -> "TruncPoly":
        return cls(nvars, {(0,) * nvars: c}, trunc)

    @classmethod
    def var(cls, nvars: int, i: int, trunc=None) -> "TruncPoly":
        e = [0] * nvars
        e[i] = 1
        return cls(nvars, {tuple(e): 1}, trunc)

    def is_zero(self) -> bool:
        return not self.coeffs

    def degree(self) -> int:
        return max((sum(e) for e in self.coeffs), default=-1)

    def _trunc_with(self, other) -> int | None:
        ts = [t for t in (self.trunc, getattr(other, "trunc", None)) if t is not None]
        return min(ts) if ts else None

    def __add__(self, other: "TruncPoly") -> "TruncPoly":
        if self.nvars != other.nvars:
            raise ArgumentError("arity mismatch")
        out = dict(self.coeffs)
        for e, c in other.coeffs.items():
            out[e] = out.get(e, Fraction(0)) + c
        return TruncPoly(self.nvars, out, self._trunc_with(other))

    def __neg__(self) -> "TruncPoly":
        return TruncPoly(self.nvars, {e: -c for e, c in self.coeffs.items()}, self.trunc)

    def __sub__(self, other: "TruncPoly") -> "TruncPoly":
        return self + (-other)

    def __mul__(self, other) -> "TruncPoly":
        if not isinstance(other, TruncPoly):
            c = rat(other)
            return TruncPoly(self.nvars, {e: v * c for e, v in self.coeffs.items()}, self.trunc)
        if self.nvars != other.nvars:
            raise ArgumentError("arity mismatch")
        out: dict = {}
        for e1, c1 in self.coeffs.items():
            for e2, c2 in other.coeffs.items():
                e = tuple(a + b for a, b in zip(e1, e2))
                out[e] = out.get(e, Fraction(0)) + c1 * c2
        return TruncPoly(self.nvars, out, self._trunc_with(other))

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, TruncPoly):
            return NotImplemented
        return self.nvars == other.nvars and self.coeffs == other.coeffs

    def __hash__(self):
        return hash((self.nvars, tuple(self.coeffs.items())))

    def eval(self, point: Sequence) -> Fraction:
        """Exact value at a rational point."""
        if len(point) != self.nvars:
            raise ArgumentError(f"point has arity {len(point)}, expected {self.nvars}")
        pt = [rat(v) for v in point]
        total = Fraction(0)
        for e, c in self.coeffs.items():
            term = c
            for v, k in zip(pt, e):
                if k:
                    term *= v ** k
            total += term
        return total

    def eval_float(self, point: Sequence[float]) -> float:
        total = 0.0
        for e, c in self.coeffs.items():
            term = float(c)
            for v, k in zip(point, e):
                if k:
                    term *= v ** k
            total += term
        return total

    def partial_eval(self, values: Mapping[int, Fraction]) -> "TruncPoly":
        """Substitute rationals for some variables; arity is unchanged, the
        substituted exponents become zero."""
        out: dict = {}
        for e, c in self.coeffs.items():
            ne = list(e)
            for i, v in values.items():
                if e[i]:
                    c = c * rat(v) ** e[i]
                ne[i] = 0
            out[tuple(ne)] = out.get(tuple(ne), Fraction(0)) + c
        return TruncPoly(self.nvars, out, self.trunc)

    def embed(self, nvars: int, positions: Sequence[int]) -> "TruncPoly":
        """Re-index variables: old variable i becomes new variable positions[i]."""
        out = {}
        for e, c in self.coeffs.items():
            ne = [0] * nvars
            for i, k in enumerate(e):
                ne[positions[i]] += k
            out[tuple(ne)] = c
        return TruncPoly(nvars, out, self.trunc)

    def shift(self, offset: Sequence[int]) -> "TruncPoly":
        """Multiply by the monomial with exponent ``offset``."""
        out = {tuple(a + b for a, b in zip(e, offset)): c for e, c in self.coeffs.items()}
        return TruncPoly(self.nvars, out, None if self.trunc is None else self.trunc + sum(offset))

    def to_json(self) -> list:
        return [{"exponents": list(e), "coefficient": rat_to_str(c)}
                for e, c in self.coeffs.items()]

    @classmethod
    def from_json(cls, doc, nvars: int, path: str = "$", trunc=None) -> "TruncPoly":
        if not isinstance(doc, list):
            raise ParseError(path, "expected a list of {exponents, coefficient}")
        out = {}
        for n, rec in enumerate(doc):
            p = f"{path}[{n}]"
            if not isinstance(rec, dict) or "exponents" not in rec:
                raise ParseError(p, "expected {exponents, coefficient}")
            e = rec["exponents"]
            if (not isinstance(e, list) or len(e) != nvars
                    or not all(isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in e)):
                raise ParseError(p + ".exponents", f"expected {nvars} naturals")
            c = rat_from_json(rec.get("coefficient", 1), p + ".coefficient")
            out[tuple(e)] = out.get(tuple(e), Fraction(0)) + c
        return cls(nvars, out, trunc)

    def __repr__(self) -> str:
        if not self.coeffs:
            return "0"
        parts = []
        for e, c in self.coeffs.items():
            mono = "*".join(f"v{i + 1}^{k}" if k > 1 else f"v{i + 1}"
                            for i, k in enumerate(e) if k)
            parts.append(rat_to_str(c) + ("*" + mono if mono else ""))
        return " + ".join(parts)


@dataclass(frozen=True)
class CoeffFamily:
    """f_alpha(x, y) for alpha in N^k; ``nvars`` is the (x, y)-block arity."""

    k: int
    nvars: int
    coeffs: Mapping[tuple, TruncPoly]

    def __post_init__(self):
        clean = {}
        for a, f in dict(self.coeffs).items():
            a = tuple(int(v) for v in a)
            if len(a) != self.k or any(v < 0 for v in a):
                raise ArgumentError(f"bad index {a} for k={self.k}")
            if f.nvars != self.nvars:
                raise ArgumentError(f"coefficient at {a} has arity {f.nvars}")
            if not f.is_zero():
                clean[a] = f
        object.__setattr__(self, "coeffs", dict(sorted(clean.items())))

    def support(self) -> list[tuple]:
        return list(self.coeffs)

    def as_poly(self) -> TruncPoly:
        """The whole family as one polynomial in (x, y, z)."""
        total = TruncPoly.zero(self.nvars + self.k)
        for a, f in self.coeffs.items():
            lifted = f.embed(self.nvars + self.k, range(self.nvars))
            total = total + lifted.shift((0,) * self.nvars + a)
        return total


def pointwise_min_support(fam: CoeffFamily, pt: Sequence) -> list[tuple]:
    """Minimal alpha with f_alpha(pt) != 0, by exact evaluation."""
    if len(pt) != fam.nvars:
        raise ArgumentError(f"point arity {len(pt)} != {fam.nvars}")
    return dickson.min_antichain(a for a, f in fam.coeffs.items() if f.eval(pt) != 0)


def dickson_union(fam: CoeffFamily, mode: str = "generic", points=None) -> list[tuple]:
    """Union over points of the pointwise minimal supports.

    Generic mode returns the minimal indices whose coefficient is not the
    zero polynomial.  Sampled mode returns the union of the pointwise sets
    over ``points``; the union is not minimized, since distinct points can
    contribute comparable indices and the split needs all of them.
    """
    if mode == "generic":
        return dickson.min_antichain(fam.coeffs)
    if mode == "sampled":
        if not points:
            raise ArgumentError("sampled mode needs a nonempty point list")
        out: set = set()
        for pt in points:
            out.update(pointwise_min_support(fam, pt))
        return sorted(out)
    raise ArgumentError(f"unknown mode {mode!r}")


@dataclass(frozen=True)
class SplitResult:
    """Critical coefficients and noncritical tails of a family.

    ``tails[beta]`` is a polynomial in (x, y, z) with the z block last.
    """

    k: int
    nvars: int
    critical: Mapping[tuple, TruncPoly]
    tails: Mapping[tuple, TruncPoly]
    parts: Mapping[tuple, dickson.UpsetPart]

    @property
    def M_CR(self) -> list[tuple]:
        return sorted(self.critical)

    @property
    def M_NC(self) -> list[tuple]:
        return sorted(self.tails)

    def recombine(self) -> TruncPoly:
        n = self.nvars + self.k
        total = TruncPoly.zero(n)
        for a, f in self.critical.items():
            total = total + f.embed(n, range(self.nvars)).shift((0,) * self.nvars + a)
        for b, t in self.tails.items():
            total = total + t.shift((0,) * self.nvars + b)
        return total

    def to_json(self) -> dict:
        return {
            "M_CR": [{"index": list(a), "coefficient": self.critical[a].to_json()}
                     for a in self.M_CR],
            "M_NC": [{"index": list(b), "tail": self.tails[b].to_json(),
                      "part": self.parts[b].to_json()} for b in self.M_NC],
        }


def critical_split(fam: CoeffFamily, M_CR: Iterable[Sequence[int]]) -> SplitResult:
    """Split f into critical terms z^alpha f_alpha and dominated tails.

    Every index with a nonzero coefficient must lie in the upward closure of
    ``M_CR``.  Comparable members are allowed: the union produced by the
    sampled mode need not be an antichain.
    """
    M = sorted({tuple(int(v) for v in a) for a in M_CR})
    if any(len(a) != fam.k for a in M):
        raise ArgumentError(f"critical indices must have arity {fam.k}")
    for a in fam.coeffs:
        if not dickson.upward_closure_contains(M, a):
            raise ArgumentError(f"index {a} has a nonzero coefficient but lies outside [M_CR]")
    parts = dickson.partition_complement(M)
    critical = {a: fam.coeffs.get(a, TruncPoly.zero(fam.nvars)) for a in M}
    n = fam.nvars + fam.k
    tails: dict = {}
    part_of: dict = {}
    for part in parts:
        beta = part.base
        tail = TruncPoly.zero(n)
        for a, f in fam.coeffs.items():
            if a in part:
                offset = tuple(x - y for x, y in zip(a, beta))
                tail = tail + f.embed(n, range(fam.nvars)).shift((0,) * fam.nvars + offset)
        if not tail.is_zero():
            tails[beta] = tail
            part_of[beta] = part
    return SplitResult(fam.k, fam.nvars, critical, tails, part_of)


def tail_nonzero_at(split: SplitResult, beta, pt) -> bool:
    """Whether the tail at beta is a nonzero polynomial in z after fixing (x, y) = pt."""
    values = {i: v for i, v in enumerate(pt)}
    return not split.tails[beta].partial_eval(values).is_zero()


def domination_holds(split: SplitResult, pt) -> bool:
    """The domination clause at one (x, y) point."""
    live = {a for a, f in split.critical.items() if f.eval(pt) != 0}
    for beta in split.tails:
        if tail_nonzero_at(split, beta, pt):
            if not any(dickson.leq(a, beta) for a in live):
                return False
    return True


def generic_point(nvars: int, rng: random.Random, lo=-3, hi=3, denom_bits=40) -> tuple:
    """A rational point with large random denominators.

    Such points avoid the zero set of any fixed nonzero low-degree polynomial
    with overwhelming probability.
    """
    d = rng.getrandbits(denom_bits) | 1
    return tuple(Fraction(rng.randint(lo * d, hi * d), d) for _ in range(nvars))


@dataclass(frozen=True)
class CollapsedTable:
    """Collapsed coefficients keyed by (log power i, k, l)."""

    entries: Mapping[tuple, Fraction]

    def nonzero(self):
        return {key: v for key, v in self.entries.items() if v != 0}

    def to_json(self) -> list:
        return [{"i": i, "k": k, "l": l, "value": rat_to_str(v)}
                for (i, k, l), v in sorted(self.entries.items())]


def collapse_series(G: Mapping[int, TruncPoly]) -> CollapsedTable:
    """Group the monomials x^a z^b w^c of each G_i by (a + c, b - c).

    Under z = x^t, w = x^(1-t) such a monomial equals x^((a+c) + t(b-c)).
    """
    out: dict = {}
    for i, poly in G.items():
        if poly.nvars != 3:
            raise ArgumentError("collapse_series expects polynomials in (x, z, w)")
        for (g1, g2, g3), c in poly.coeffs.items():
            key = (int(i), g1 + g3, g2 - g3)
            out[key] = out.get(key, Fraction(0)) + c
    return CollapsedTable({key: v for key, v in sorted(out.items()) if v != 0})


@dataclass(frozen=True)
class LeadingTerm:
    p: int
    q: int
    r: int
    a: Fraction
    eps: Fraction

    def as_tuple(self):
        return (self.p, self.q, self.r, self.a, self.eps)

    def to_json(self) -> dict:
        return {"p": self.p, "q": self.q, "r": self.r,
                "a": rat_to_str(self.a), "eps": rat_to_str(self.eps)}


def leading_asymptotics(table: CollapsedTable) -> LeadingTerm:
    """Dominant term x^(p + q t) (log x)^r of the collapsed sum for small t > 0.

    (p, q) is the lexicographically least exponent pair carrying a nonzero
    entry; r is the largest log power present there and a its coefficient.
    For t in (0, 1/(p + q + 1)) every other pair (k, l) has k + l t > p + q t.
    """
    live = [(k, l) for (i, k, l), v in table.nonzero().items() if k + l >= 0]
    if not live:
        raise DomainError("no nonzero collapsed coefficient")
    p, q = min(live)
    r = max(i for (i, k, l), v in table.nonzero().items() if (k, l) == (p, q))
    a = table.entries[(r, p, q)]
    eps = Fraction(1, p + q + 1)
    return LeadingTerm(p, q, r, a, eps)
