"""Integrability classes of prepared sums and their diagrams.

A diagram lists the finitely many intervals of exponents p for which
f(x, .) lies in L^p of the weighted fiber measure, each with the locus of
parameters x where that interval occurs.  Loci are boolean formulas over
atoms "this critical group vanishes identically at x".
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import sympy as sp

from . import symbolic
from .errors import ArgumentError, DomainError, ResourceError, UnsupportedInputError
from .exact import (
    FULL,
    INF,
    PInterval,
    QLin,
    interval_intersect,
    rat,
    rat_to_str,
    solve_halfline,
)
from .prepared import (
    CriticalProfile,
    Group,
    PreparedSum,
    PreparedTerm,
    UnitSeries,
    profile_of,
)

DEFAULT_CAP = 2 ** 16


@dataclass(frozen=True)
class Verdict1D:
    integrable: bool
    bounded: bool

    def to_json(self) -> dict:
        return {"integrable": self.integrable, "bounded": self.bounded}


def classify_monomial_1d(alpha, beta: int) -> Verdict1D:
    """t^alpha |log t|^beta on (0, 1): integrable iff alpha > -1,
    bounded iff alpha > 0 or alpha = beta = 0."""
    alpha = rat(alpha)
    if beta < 0:
        raise ArgumentError("log power must be natural")
    return Verdict1D(alpha > -1, alpha > 0 or (alpha == 0 and beta == 0))


def classify_rect(alpha: Sequence, beta: Sequence[int], l: int) -> Verdict1D:
    """Product monomial on a box times (0, 1)^(n - l); only the free
    coordinates l+1..n matter."""
    if len(alpha) != len(beta):
        raise ArgumentError("alpha and beta differ in length")
    if not 0 <= l <= len(alpha):
        raise ArgumentError(f"l={l} out of range")
    verdicts = [classify_monomial_1d(a, b) for a, b in zip(alpha[l:], beta[l:])]
    return Verdict1D(all(v.integrable for v in verdicts), all(v.bounded for v in verdicts))


def lc_interval(pf: CriticalProfile, pmu: CriticalProfile, gamma: Sequence, q,
                mu_empty: bool, f_empty: bool) -> PInterval:
    """The Lebesgue class of one piece from the two critical profiles.

    The finite part intersects the half-lines r_f p + r_mu q + gamma > -1
    over the free coordinates; inf belongs to it when f is bounded there.
    """
    q = rat(q)
    if f_empty or mu_empty:
        return FULL
    if len(pf.rbar) != len(pmu.rbar) or len(gamma) != len(pf.rbar):
        raise ArgumentError("profiles and Jacobian exponents must share the free coordinates")
    out = PInterval(QLin(0, 0), INF, True)
    for rf, rmu, g in zip(pf.rbar, pmu.rbar, gamma):
        half = solve_halfline(rf, QLin(rat(g), rmu), q)
        out = interval_intersect(out, PInterval(half.lo, half.hi, True), q)
    bounded = all(rf > 0 or (rf == 0 and sf == 0) for rf, sf in zip(pf.rbar, pf.sbar))
    return PInterval(out.lo, out.hi, bounded).normalize(q)


@dataclass(frozen=True)
class Piece:
    """f, mu and the Jacobian exponent on the free coordinates of one cell."""

    f: PreparedSum
    mu: PreparedSum
    gamma: tuple

    def __post_init__(self):
        if self.f.cell.l != self.mu.cell.l or self.f.n != self.mu.n:
            raise ArgumentError("f and mu must live on the same cell")
        gamma = tuple(rat(g) for g in self.gamma)
        width = self.f.n - self.f.l
        if len(gamma) == self.f.n:
            gamma = gamma[self.f.l:]
        if len(gamma) != width:
            raise ArgumentError(f"gamma needs {width} free entries")
        object.__setattr__(self, "gamma", gamma)


@dataclass(frozen=True)
class Atom:
    """The statement "group ``label`` of ``which`` on piece ``piece`` vanishes at x"."""

    name: str
    piece: int
    which: str
    label: str

    def vanishes_at(self, pieces: Sequence[Piece], x) -> bool:
        psum = getattr(pieces[self.piece], self.which)
        return psum.group_vanishes_at(self.label, x)


@dataclass(frozen=True)
class Locus:
    """A set of vanishing configurations over named atoms."""

    atoms: tuple
    configs: frozenset

    def formula(self) -> dict:
        """A formula tree; minimized to a sum of products when small."""
        names = list(self.atoms)
        if not self.configs:
            return {"op": "false"}
        if len(self.configs) == 2 ** len(names):
            return {"op": "true"}
        if len(names) <= 8:
            syms = sp.symbols([f"a{i}" for i in range(len(names))])
            minterms = [[int(n in c) for n in names] for c in self.configs]
            expr = sp.logic.boolalg.SOPform(syms, minterms)
            return _tree(expr, dict(zip(syms, names)))
        return {"op": "or", "args": [_conj(names, c) for c in sorted(self.configs, key=sorted)]}

    def holds(self, vanishing: Iterable[str]) -> bool:
        return frozenset(vanishing) in self.configs

    def to_json(self) -> dict:
        return {"formula": self.formula(),
                "configs": sorted(sorted(c) for c in self.configs)}


def _conj(names, config) -> dict:
    args = [{"op": "atom", "name": n} if n in config else
            {"op": "not", "arg": {"op": "atom", "name": n}} for n in names]
    return {"op": "and", "args": args}


def _tree(expr, names) -> dict:
    if expr is sp.true:
        return {"op": "true"}
    if expr is sp.false:
        return {"op": "false"}
    if isinstance(expr, sp.Symbol):
        return {"op": "atom", "name": names[expr]}
    if isinstance(expr, sp.Not):
        return {"op": "not", "arg": _tree(expr.args[0], names)}
    op = "and" if isinstance(expr, sp.And) else "or"
    args = sorted((_tree(a, names) for a in expr.args), key=lambda t: str(t))
    return {"op": op, "args": args}


def eval_formula(tree: dict, vanishing: set) -> bool:
    op = tree["op"]
    if op == "true":
        return True
    if op == "false":
        return False
    if op == "atom":
        return tree["name"] in vanishing
    if op == "not":
        return not eval_formula(tree["arg"], vanishing)
    vals = [eval_formula(a, vanishing) for a in tree["args"]]
    return all(vals) if op == "and" else any(vals)


@dataclass
class Diagram:
    """Intervals of the Lebesgue class, each with the configurations producing it."""

    q: Fraction
    atoms: tuple
    intervals: list
    loci: list
    config_interval: dict
    feasible: dict = field(default_factory=dict)
    fixed_zero: tuple = ()

    def index_of(self, config) -> int:
        key = frozenset(config)
        if key not in self.config_interval:
            raise ArgumentError(f"unknown configuration {sorted(key)}")
        return self.config_interval[key]

    def to_json(self) -> dict:
        return {
            "q": rat_to_str(self.q),
            "atoms": list(self.atoms),
            "always_zero": list(self.fixed_zero),
            "intervals": [
                {**iv.to_json(), "describe": iv.describe(self.q),
                 "locus": loc.formula(),
                 "configs": [
                     {"vanishing": sorted(c), "feasible": self.feasible.get(c)}
                     for c in sorted(loc.configs, key=lambda c: (len(c), sorted(c)))]}
                for iv, loc in zip(self.intervals, self.loci)
            ],
        }


def _atoms_for(pieces: Sequence[Piece]):
    """Critical groups whose vanishing depends on x, plus the fixed ones."""
    atoms, live, fixed = [], [], []
    multi = len(pieces) > 1
    for k, pc in enumerate(pieces):
        for which in ("f", "mu"):
            psum = getattr(pc, which)
            for g in psum.critical_groups():
                name = (f"p{k + 1}." if multi else "") + f"{which}.{g.label}"
                if psum.group_vanishes_generic(g.label):
                    fixed.append(name)
                    continue
                w = psum.group_witness(g.label)
                params = [s for s in w.free_symbols if symbolic._kind(s)[0] in ("x", "logx")]
                if not params:
                    live.append((k, which, g.label))      # never vanishes
                    continue
                atoms.append(Atom(name, k, which, g.label))
    return atoms, live, fixed


def _config_interval(pieces, atoms, config, q) -> PInterval:
    vanish = {(a.piece, a.which, a.label) for a in atoms if a.name in config}
    out = FULL
    for k, pc in enumerate(pieces):
        profiles, empties = {}, {}
        for which in ("f", "mu"):
            psum = getattr(pc, which)
            labels = [g.label for g in psum.critical_groups()
                      if not psum.group_vanishes_generic(g.label)
                      and (k, which, g.label) not in vanish]
            profiles[which] = profile_of(psum, labels)
            empties[which] = not labels
        iv = lc_interval(profiles["f"], profiles["mu"], pc.gamma, q, empties["mu"], empties["f"])
        out = interval_intersect(out, iv, q)
    return out


def sample_base(base: Sequence, rng: random.Random, grid: int = 8, extra: int = 64,
                max_grid_points: int = 4096) -> list[tuple]:
    """Grid points with spacing 1/grid of each base side, plus random rationals."""
    sides = [(rat(a), rat(b)) for a, b in base]
    pts = []
    if grid > 0 and (grid + 1) ** len(sides) <= max_grid_points:
        axes = [[a + (b - a) * Fraction(k, grid) for k in range(grid + 1)] for a, b in sides]
        pts.extend(itertools.product(*axes))
    for _ in range(extra):
        pts.append(tuple(a + (b - a) * Fraction(rng.randint(0, 10 ** 6), 10 ** 6) for a, b in sides))
    return pts


def assemble_diagram(pieces: Sequence[Piece], q, cap: int = DEFAULT_CAP, seed: int = 0,
                     feasibility: bool = True) -> Diagram:
    """Enumerate vanishing configurations and group them by Lebesgue class."""
    q = rat(q)
    if q <= 0:
        raise DomainError("q must be positive")
    pieces = list(pieces)
    if not pieces:
        raise ArgumentError("need at least one piece")
    base = pieces[0].f.cell.base
    for pc in pieces:
        if pc.f.cell.base != base or pc.mu.cell.base != base:
            raise ArgumentError("pieces must share the base box")
    atoms, _, fixed = _atoms_for(pieces)
    count = 2 ** len(atoms)
    if count > cap:
        raise ResourceError(f"{count} vanishing configurations exceed the cap {cap}", count)
    names = tuple(a.name for a in atoms)
    by_key: dict = {}
    config_interval = {}
    for bits in itertools.product((False, True), repeat=len(atoms)):
        config = frozenset(n for n, b in zip(names, bits) if b)
        iv = _config_interval(pieces, atoms, config, q)
        by_key.setdefault(iv.key(q), (iv, []))[1].append(config)
    ordered = sorted(by_key.values(), key=lambda e: _order(e[0], q))
    intervals, loci = [], []
    for idx, (iv, configs) in enumerate(ordered):
        intervals.append(iv)
        loci.append(Locus(names, frozenset(configs)))
        for c in configs:
            config_interval[c] = idx
    feasible = {}
    if feasibility:
        feasible = {c: False for c in config_interval}
        rng = random.Random(seed)
        for x in sample_base(base, rng):
            try:
                c = frozenset(a.name for a in atoms if a.vanishes_at(pieces, x))
            except DomainError:
                continue
            feasible[c] = True
    return Diagram(q, names, intervals, loci, config_interval, feasible, tuple(fixed))


def _order(iv: PInterval, q):
    lo, hi = iv.lo_value(q), iv.hi_value(q)
    big = Fraction(10 ** 30)
    return (hi if hi is not INF else big, lo, iv.includes_infinity)


def int_p_locus(d: Diagram, p) -> Locus:
    """All configurations whose interval contains p (p > 0 or INF)."""
    if p is not INF:
        p = rat(p)
        if p <= 0:
            raise DomainError("p must be positive")
    configs = set()
    for iv, loc in zip(d.intervals, d.loci):
        if iv.contains(p, d.q):
            configs |= loc.configs
    return Locus(d.atoms, frozenset(configs))


def lebesgue_set_at(d: Diagram, config: Iterable[str]) -> PInterval:
    return d.intervals[d.index_of(config)]


def classify_at(d: Diagram, pieces: Sequence[Piece], x) -> PInterval:
    """The interval realized at a concrete parameter point."""
    atoms = [Atom(n, *_split_name(n, len(pieces))) for n in d.atoms]
    return lebesgue_set_at(d, [a.name for a in atoms if a.vanishes_at(pieces, x)])


def _split_name(name: str, npieces: int):
    parts = name.split(".", 2) if npieces > 1 else ["p1"] + name.split(".", 1)
    return int(parts[0][1:]) - 1, parts[1], parts[2]


# complex reduction --------------------------------------------------------

def _identity_log_terms(t: PreparedTerm) -> list[PreparedTerm]:
    """Rewrite a term so every log factor is a plain log y_i."""
    if t.beta is None:
        return [t]
    out = []
    for k, c in t.log_expansion().items():
        out.append(PreparedTerm(t.coeff * c, t.r, k, None, t.unit))
    return out


def _unit_product(u: UnitSeries, v: UnitSeries) -> UnitSeries:
    if u.is_one():
        return v
    if v.is_one():
        return u
    nu, nv = len(u.components), len(v.components)
    n = nu + nv
    pu = u.poly.embed(n, range(nu))
    pv = v.poly.embed(n, range(nu, n))
    return UnitSeries(u.components + v.components, pu * pv, u.lo * v.lo, u.hi * v.hi)


def _term_product(a: PreparedTerm, b: PreparedTerm) -> PreparedTerm:
    return PreparedTerm(
        sp.expand(a.coeff * b.coeff),
        tuple(x + y for x, y in zip(a.r, b.r)),
        tuple(x + y for x, y in zip(a.s, b.s)),
        None,
        _unit_product(a.unit, b.unit),
    )


def square_sum(psum: PreparedSum, label_prefix: str = "") -> list:
    """Groups of psum^2, keyed by free-coordinate exponents."""
    l = psum.l
    flat = []
    for g in psum.groups:
        for t in g.terms:
            for u in _identity_log_terms(t):
                flat.append((g.critical, u))
    out: dict = {}
    for (ca, a), (cb, b) in itertools.product(flat, repeat=2):
        t = _term_product(a, b)
        key = (t.r[l:], t.s[l:])
        crit, terms = out.get(key, (ca and cb, []))
        if crit != (ca and cb):
            raise UnsupportedInputError(
                "squaring merges critical and noncritical products with equal exponents")
        terms.append(t)
        out[key] = (crit, terms)
    return out


def _sum_of_squares(a: PreparedSum, b: PreparedSum | None) -> PreparedSum:
    merged: dict = {}
    for psum in (a, b):
        if psum is None:
            continue
        for key, (crit, terms) in square_sum(psum).items():
            c0, ts = merged.get(key, (crit, []))
            if c0 != crit:
                raise UnsupportedInputError(
                    "real and imaginary squares disagree on criticality")
            merged[key] = (crit, ts + terms)
    groups = []
    for i, (key, (crit, terms)) in enumerate(sorted(merged.items(), key=lambda e: str(e[0]))):
        groups.append(Group(f"sq{i + 1}", crit, tuple(terms)))
    return PreparedSum(a.cell, tuple(groups), a.mode, a.points)


@dataclass(frozen=True)
class ComplexReduction:
    """|f|^2 and |mu|^2 as prepared sums.

    p lies in the class of (f, |mu|^q) exactly when p/2 lies in the class of
    (|f|^2, (|mu|^2)^(q/2)).
    """

    f_sq: PreparedSum
    mu_sq: PreparedSum
    note: str = "LC(f, |mu|^q) = 2 * LC(|f|^2, (|mu|^2)^(q/2))"


def complex_reduce(f_re: PreparedSum, f_im: PreparedSum | None,
                   mu_re: PreparedSum, mu_im: PreparedSum | None) -> ComplexReduction:
    for other in (f_im, mu_re, mu_im):
        if other is not None and other.cell != f_re.cell:
            raise ArgumentError("real and imaginary parts must share the cell")
    return ComplexReduction(_sum_of_squares(f_re, f_im), _sum_of_squares(mu_re, mu_im))


def double_interval(iv: PInterval) -> PInterval:
    """Map an interval computed at exponent q/2 to the complex problem at q.

    An endpoint a + b (q/2) of the squared problem becomes 2a + b q.
    """

    def scale(v):
        return v if v is INF else QLin(2 * v.a, v.b)

    return PInterval(scale(iv.lo), scale(iv.hi), iv.includes_infinity)


def complex_diagram(f_re, f_im, mu_re, mu_im, gamma, q, **kw) -> Diagram:
    red = complex_reduce(f_re, f_im, mu_re, mu_im)
    half = rat(q) / 2
    d = assemble_diagram([Piece(red.f_sq, red.mu_sq, gamma)], half, **kw)
    d.intervals = [double_interval(iv) for iv in d.intervals]
    d.q = rat(q)
    return d


# weak triangle inequality -------------------------------------------------

def weak_triangle_exact(z: Sequence, a: int, b: int) -> bool:
    """(sum x_i)^p <= sum x_i^p for p = a/b <= 1 and x_i = z_i^b, exactly.

    Raising both sides to the power b turns it into
    (sum z_i^b)^a <= (sum z_i^a)^b.
    """
    if not 0 < a <= b:
        raise DomainError("need 0 < a/b <= 1")
    z = [rat(v) for v in z]
    if any(v < 0 for v in z):
        raise DomainError("entries must be non-negative")
    return sum(v ** b for v in z) ** a <= sum(v ** a for v in z) ** b


def weak_triangle_float(x: Sequence[float], p: float, rel: float = 1e-12) -> tuple[bool, float]:
    """The same inequality in floating point; returns (holds, slack)."""
    if not 0 < p <= 1:
        raise DomainError("need 0 < p <= 1")
    lhs = math.fsum(x) ** p
    rhs = math.fsum(v ** p for v in x)
    return lhs <= rhs + rel * abs(rhs), rhs - lhs
