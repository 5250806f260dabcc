"""Exact rationals, numbers of the form a + b*q, and open subintervals of (0, inf].

Rationals are ``fractions.Fraction`` values.  A ``QLin`` stores the pair
(a, b) and stands for a + b*q where q > 0 is a rational fixed per problem.
A ``PInterval`` is an open interval (lo, hi) intersected with (0, inf),
together with a flag recording whether the point inf belongs to the set.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Union

from .errors import DomainError, ParseError

Rat = Fraction


def rat(value) -> Fraction:
    """Coerce ints, Fractions and "num/den" strings to a Fraction.

    Floats are accepted only when they are exactly representable as
    short decimals; pass strings for anything else.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if hasattr(value, "p") and hasattr(value, "q") and getattr(value, "is_Rational", False):
        return Fraction(int(value.p), int(value.q))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"not a rational: {value!r}") from exc
    raise TypeError(f"cannot convert {type(value).__name__} to a rational")


def rat_to_str(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def rat_from_json(value, path: str = "$") -> Fraction:
    try:
        return rat(value)
    except (TypeError, ValueError) as exc:
        raise ParseError(path, str(exc)) from exc


@dataclass(frozen=True, order=True)
class QLin:
    """The number a + b*q for the problem's fixed parameter q."""

    a: Fraction = Fraction(0)
    b: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "a", rat(self.a))
        object.__setattr__(self, "b", rat(self.b))

    def __add__(self, other: "QLin") -> "QLin":
        return QLin(self.a + other.a, self.b + other.b)

    def __neg__(self) -> "QLin":
        return QLin(-self.a, -self.b)

    def __sub__(self, other: "QLin") -> "QLin":
        return QLin(self.a - other.a, self.b - other.b)

    def scale(self, c) -> "QLin":
        c = rat(c)
        return QLin(self.a * c, self.b * c)

    def eval(self, q) -> Fraction:
        return qlin_eval(self, q)

    def to_json(self) -> dict:
        return {"a": rat_to_str(self.a), "b": rat_to_str(self.b)}

    @classmethod
    def from_json(cls, doc, path: str = "$") -> "QLin":
        if not isinstance(doc, dict) or set(doc) - {"a", "b"}:
            raise ParseError(path, 'expected {"a": ..., "b": ...}')
        return cls(rat_from_json(doc.get("a", 0), path + ".a"),
                   rat_from_json(doc.get("b", 0), path + ".b"))

    def __str__(self) -> str:
        if self.b == 0:
            return rat_to_str(self.a)
        if self.a == 0:
            return f"{rat_to_str(self.b)}*q"
        return f"{rat_to_str(self.a)} + {rat_to_str(self.b)}*q"


class _PlusInfinity:
    """The extended value +inf; a singleton."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "INF"

    def __reduce__(self):
        return (_PlusInfinity, ())


INF = _PlusInfinity()

ExtValue = Union[QLin, _PlusInfinity]


def _check_q(q) -> Fraction:
    q = rat(q)
    if q <= 0:
        raise DomainError(f"q must be positive, got {q}")
    return q


def qlin_eval(v: QLin, q) -> Fraction:
    """Return a + b*q exactly; q must be positive."""
    q = _check_q(q)
    return v.a + v.b * q


def ext_eval(v: ExtValue, q):
    """Evaluate an extended value; +inf stays ``INF``."""
    if v is INF:
        return INF
    return qlin_eval(v, q)


def _lt(u, v) -> bool:
    if u is INF:
        return False
    if v is INF:
        return True
    return u < v


_ZERO = QLin(0, 0)


@dataclass(frozen=True)
class PInterval:
    """The set (lo, hi) ∩ (0, inf), plus {inf} when ``includes_infinity``.

    The empty finite part is stored canonically as lo = hi = 0.  Use
    ``normalize`` (or the operations in this module) to obtain canonical
    values; the constructor does not know q and cannot compare endpoints.
    """

    lo: ExtValue = _ZERO
    hi: ExtValue = INF
    includes_infinity: bool = False

    def lo_value(self, q):
        return ext_eval(self.lo, q)

    def hi_value(self, q):
        return ext_eval(self.hi, q)

    def finite_empty(self, q) -> bool:
        lo, hi = self.lo_value(q), self.hi_value(q)
        return not _lt(lo, hi)

    def is_empty(self, q) -> bool:
        return self.finite_empty(q) and not self.includes_infinity

    def normalize(self, q) -> "PInterval":
        """Clip lo at 0 and collapse an empty finite part to (0, 0)."""
        q = _check_q(q)
        lo = self.lo
        if lo is INF:
            return PInterval(_ZERO, _ZERO, self.includes_infinity)
        if qlin_eval(lo, q) < 0:
            lo = _ZERO
        candidate = PInterval(lo, self.hi, self.includes_infinity)
        if candidate.finite_empty(q):
            return PInterval(_ZERO, _ZERO, self.includes_infinity)
        return candidate

    def contains(self, p, q) -> bool:
        """Membership of p, where p is a positive rational, a float or INF."""
        if p is INF:
            return self.includes_infinity
        if p <= 0:
            raise DomainError("p must be positive")
        lo, hi = self.lo_value(q), self.hi_value(q)
        above = True if lo is INF else p > lo
        below = True if hi is INF else p < hi
        return bool(above and below and not (lo is INF))

    def key(self, q):
        """A hashable identity under q, used to group equal intervals."""
        n = self.normalize(q)
        return (n.lo_value(q), n.hi_value(q), n.includes_infinity)

    def to_json(self) -> dict:
        return {
            "lo": self.lo.to_json() if isinstance(self.lo, QLin) else "inf",
            "hi": self.hi.to_json() if isinstance(self.hi, QLin) else "inf",
            "infinity": bool(self.includes_infinity),
        }

    @classmethod
    def from_json(cls, doc, path: str = "$") -> "PInterval":
        if not isinstance(doc, dict):
            raise ParseError(path, "expected an interval object")

        def ext(v, p):
            if v == "inf":
                return INF
            return QLin.from_json(v, p)

        flag = doc.get("infinity", False)
        if not isinstance(flag, bool):
            raise ParseError(path + ".infinity", "expected a boolean")
        return cls(ext(doc.get("lo", {"a": "0", "b": "0"}), path + ".lo"),
                   ext(doc.get("hi", "inf"), path + ".hi"), flag)

    def describe(self, q=None) -> str:
        lo = "inf" if self.lo is INF else str(self.lo)
        hi = "inf" if self.hi is INF else str(self.hi)
        if q is not None and self.finite_empty(q):
            core = "∅"
        else:
            core = f"({lo}, {hi})"
        return core + (" ∪ {inf}" if self.includes_infinity else "")


FULL = PInterval(_ZERO, INF, True)
EMPTY = PInterval(_ZERO, _ZERO, False)


def solve_halfline(r, c: QLin, q) -> PInterval:
    """The set {p in (0, inf) : r*p + c(q) > -1} as a PInterval without inf.

    A finite endpoint produced by dividing by r keeps its (a, b)
    decomposition: for r < 0 the bound is p < (c + 1)/(-r).
    """
    r = rat(r)
    q = _check_q(q)
    shifted = QLin(c.a + 1, c.b)          # r*p + shifted > 0
    value = qlin_eval(shifted, q)
    if r == 0:
        return PInterval(_ZERO, INF, False) if value > 0 else EMPTY
    if r > 0:
        lo = shifted.scale(Fraction(-1) / r)
        if qlin_eval(lo, q) <= 0:
            lo = _ZERO
        return PInterval(lo, INF, False)
    if value <= 0:
        return EMPTY
    return PInterval(_ZERO, shifted.scale(Fraction(1) / (-r)), False)


def interval_intersect(i: PInterval, j: PInterval, q) -> PInterval:
    """Set intersection; the inf flag is the conjunction of the flags."""
    q = _check_q(q)
    lo = i.lo if not _lt(i.lo_value(q), j.lo_value(q)) else j.lo
    if i.lo is not INF and j.lo is not INF and i.lo_value(q) == j.lo_value(q):
        lo = min(i.lo, j.lo)          # deterministic pick among equal values
    hi = i.hi if _lt(i.hi_value(q), j.hi_value(q)) else j.hi
    if i.hi is not INF and j.hi is not INF and i.hi_value(q) == j.hi_value(q):
        hi = min(i.hi, j.hi)
    return PInterval(lo, hi, i.includes_infinity and j.includes_infinity).normalize(q)


def endpoints(interval: PInterval):
    """The finite endpoints of an interval as QLin values."""
    return [v for v in (interval.lo, interval.hi) if isinstance(v, QLin)]
