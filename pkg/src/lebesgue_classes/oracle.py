"""Numerical cross-checks, kept independent of the exact classification.

Fiber integrals use y = exp(-t) on the free coordinates, which turns
endpoint singularities y^a |log y|^b into exponential tails in t, and
tensorised Gauss-Legendre panels of width log 2.  Truncating at
t <= T_k = k log 2 is the same as integrating over [2^-k, 1]; the growth of
the increments between successive levels decides convergence.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.stats import qmc

from .errors import DomainError, NumericError
from .prepared import PreparedSum
from .series import collapse_series, leading_asymptotics

LOG2 = math.log(2.0)
LEVELS = tuple(range(4, 41))
BUDGET = 2 ** 22
DEAD_BAND = 0.05
MAX_ORDER = 64      # interior zeros of f give cusps that never reach tol


@dataclass
class ConvergenceVerdict:
    verdict: str                      # "converges" | "diverges" | "inconclusive"
    estimate: float | None
    growth_exponent: float
    log_power: float = 0.0
    partial: list = field(default_factory=list)
    evaluations: int = 0
    order: int = 0

    def to_json(self) -> dict:
        return {"verdict": self.verdict, "estimate": self.estimate,
                "growth_exponent": self.growth_exponent, "log_power": self.log_power,
                "evaluations": self.evaluations, "order": self.order}


def _as_weight(obj, n: int, x) -> Callable[[np.ndarray], np.ndarray]:
    """Turn f, mu or a Jacobian description into a function of the fiber points."""
    if obj is None:
        return lambda Y: np.ones(Y.shape[0])
    if isinstance(obj, PreparedSum):
        return lambda Y: obj.eval_array(x, Y)
    if callable(obj):
        return obj
    gamma = np.array([float(g) for g in obj])
    if gamma.shape != (n,):
        raise DomainError(f"Jacobian exponent needs {n} entries")
    return lambda Y: np.prod(Y ** gamma, axis=1)


@functools.lru_cache(maxsize=None)
def _gauss(order: int):
    return leggauss(order)


def _panel_nodes(order: int, panels: int, width: float):
    z, w = _gauss(order)
    t = ((np.arange(panels)[:, None] + (z[None, :] + 1) / 2) * width).ravel()
    wt = np.tile(w * width / 2, panels)
    return t, wt


def _grid_integrals(funcs, powers, box, nfree, order, panels, width):
    """Per-level truncated integrals for every exponent tuple in ``powers``.

    Returns an array of shape (len(powers), panels) holding I(T_k) for
    T_k = k * width, k = 1..panels.
    """
    t, wt = _panel_nodes(order, panels, width)
    yfree = np.exp(-t)
    wfree = wt * yfree                      # dy = e^-t dt
    zb, wb = _gauss(order)
    box_nodes = [((b - a) * (zb + 1) / 2 + a, wb * (b - a) / 2) for a, b in box]
    axes = [bn for bn, _ in box_nodes] + [yfree] * nfree
    waxes = [bw for _, bw in box_nodes] + [wfree] * nfree
    mesh = np.meshgrid(*axes, indexing="ij")
    Y = np.stack([g.ravel() for g in mesh], axis=1) if axes else np.zeros((1, 0))
    W = functools.reduce(np.multiply.outer, waxes).ravel() if waxes else np.ones(1)
    vals = [np.abs(fn(Y)) for fn in funcs]
    shape = [len(a) for a in axes]
    out = np.empty((len(powers), panels))
    for n_, pw in enumerate(powers):
        integrand = np.ones(Y.shape[0])
        for v, e in zip(vals, pw):
            if e != 1:
                with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                    integrand = integrand * np.where(v > 0, v ** e, 0.0)
            else:
                integrand = integrand * v
        arr = (integrand * W).reshape(shape)
        nb = len(box)
        arr = arr.reshape(shape[:nb] + [panels, order] * nfree).sum(
            axis=tuple(range(nb)) + tuple(nb + 2 * j + 1 for j in range(nfree)))
        for ax in range(nfree):
            arr = np.cumsum(arr, axis=ax)
        idx = np.arange(panels)
        out[n_] = arr[(idx,) * nfree] if nfree else np.full(panels, float(arr))
    if not np.all(np.isfinite(out)):
        raise NumericError("non-finite value in a fiber integral")
    return out, Y.shape[0]


def _verdict(levels_T: np.ndarray, I: np.ndarray, evaluations: int, order: int) -> ConvergenceVerdict:
    delta = np.diff(I)
    T = levels_T[1:]
    scale = max(abs(I[-1]), 1e-300)
    late = slice(len(delta) // 2, None)
    dl, Tl = delta[late], T[late]
    if np.all(np.abs(dl) <= 1e-13 * scale):
        return ConvergenceVerdict("converges", float(I[-1]), -math.inf, 0.0,
                                  I.tolist(), evaluations, order)
    pos = dl > 1e-300
    if pos.sum() < 4:
        return ConvergenceVerdict("converges", float(I[-1]), -math.inf, 0.0,
                                  I.tolist(), evaluations, order)
    A = np.stack([Tl[pos], np.log(Tl[pos]), np.ones(pos.sum())], axis=1)
    (sigma, kappa, _), *_ = np.linalg.lstsq(A, np.log(dl[pos]), rcond=None)
    sigma, kappa = float(sigma), float(kappa)
    if sigma < -DEAD_BAND:
        rho = delta[-1] / delta[-2] if delta[-2] > 0 else 0.0
        tail = delta[-1] * rho / (1 - rho) if 0 < rho < 1 else 0.0
        return ConvergenceVerdict("converges", float(I[-1] + tail), sigma, kappa,
                                  I.tolist(), evaluations, order)
    if sigma > DEAD_BAND:
        return ConvergenceVerdict("diverges", None, sigma, kappa, I.tolist(), evaluations, order)
    mid = len(delta) // 2
    ratio = delta[-1] / delta[mid] if delta[mid] > 0 else math.inf
    if ratio >= 0.95:
        return ConvergenceVerdict("diverges", None, sigma, kappa, I.tolist(), evaluations, order)
    return ConvergenceVerdict("inconclusive", float(I[-1]), sigma, kappa,
                              I.tolist(), evaluations, order)


def fiber_integrals(f, mu, jac, ps: Sequence[float], q: float, x,
                    cell=None, budget: int = BUDGET, tol: float = 1e-8) -> list[ConvergenceVerdict]:
    """Verdicts for several p sharing one quadrature grid.

    The integrand is |f|^p |mu|^q |jac| over the fiber of the cell at x.
    """
    if q <= 0 or any(p <= 0 for p in ps):
        raise DomainError("p and q must be positive")
    cell = cell if cell is not None else f.cell
    n, l = cell.n, cell.l
    nfree = n - l
    box = [(float(a), float(b)) for a, b in cell.box]
    width = LOG2 if nfree <= 2 else 2 * LOG2
    step = 1 if nfree <= 2 else 2
    panels = LEVELS[-1] // step
    funcs = [_as_weight(f, n, x), _as_weight(mu, n, x), _as_weight(jac, n, x)]
    powers = [(float(p), float(q), 1.0) for p in ps]
    order, prev, evals = 4, None, 0
    best = None
    while True:
        npts = (order * panels) ** nfree * order ** len(box)
        if (npts > budget or order > MAX_ORDER) and best is not None:
            break
        cur, used = _grid_integrals(funcs, powers, box, nfree, order, panels, width)
        evals += used
        best = (cur, order)
        if prev is not None:
            err = np.max(np.abs(cur - prev) / np.maximum(np.abs(cur), 1e-300))
            if err <= tol:
                break
        prev = cur
        order *= 2
    cur, order = best
    ks = np.array([k for k in LEVELS if k % step == 0])
    Ts = ks * LOG2
    out = []
    for row in cur:
        I = row[ks // step - 1]
        out.append(_verdict(Ts, I, evals, order))
    return out


def fiber_integral(f, mu, jac, p: float, q: float, x, **kw) -> ConvergenceVerdict:
    return fiber_integrals(f, mu, jac, [p], q, x, **kw)[0]


def _sample_points(dim: int, eps: float, count: int, seed: int) -> np.ndarray:
    pts = []
    if dim:
        sob = qmc.Sobol(d=dim, scramble=True, seed=seed).random(count)
        pts.append(sob)
        pts.append(np.array(np.meshgrid(*[[0.0, 1.0]] * dim, indexing="ij")).reshape(dim, -1).T)
        grid = np.concatenate([np.geomspace(1e-12, 0.5, 40), 1 - np.geomspace(1e-12, 0.5, 40)])
        for j in range(dim):
            axis = np.full((grid.size, dim), 0.5)
            axis[:, j] = grid
            pts.append(axis)
            for corner in (0.0, 1.0):
                edge = np.full((grid.size, dim), corner)
                edge[:, j] = grid
                pts.append(edge)
    else:
        pts.append(np.zeros((1, 0)))
    U = np.concatenate(pts)
    return eps + (1 - 2 * eps) * np.clip(U, 0.0, 1.0)


@dataclass
class SupEstimate:
    sup: float
    bounded: bool
    history: list

    def to_json(self) -> dict:
        return {"sup": self.sup, "bounded": self.bounded, "history": self.history}


def sup_estimate(f, x, eps: float = 1e-3, fiber: Callable | None = None, dim: int | None = None,
                 samples: int = 2048, halvings: int = 8, seed: int = 0) -> SupEstimate:
    """Sup of |f| over the fiber truncated to [eps, 1 - eps] in sample coordinates.

    ``fiber`` maps unit-cube sample points to fiber points (default: the
    identity on a rectilinear cell, with box coordinates rescaled).  The sup
    is recomputed after each halving of eps; increments that shrink
    geometrically mean bounded, anything slower means unbounded.
    """
    if not 0 < eps < 0.5:
        raise DomainError("eps must lie in (0, 1/2)")
    if isinstance(f, PreparedSum):
        cell = f.cell
        dim = cell.n if dim is None else dim
        fn = lambda Y: f.eval_array(x, Y)
        if fiber is None:
            box = [(float(a), float(b)) for a, b in cell.box]

            def fiber(U):
                Y = U.copy()
                for i, (a, b) in enumerate(box):
                    Y[:, i] = a + (b - a) * U[:, i]
                return Y
    else:
        fn = f
        if dim is None:
            raise DomainError("dim is required for a plain callable")
    fiber = fiber if fiber is not None else (lambda U: U)
    history = []
    e = eps
    for _ in range(halvings + 1):
        U = _sample_points(dim, e, samples, seed)
        vals = np.abs(fn(fiber(U)))
        if not np.all(np.isfinite(vals)):
            raise NumericError("non-finite value while estimating a sup")
        history.append(float(vals.max()))
        e /= 2
    inc = np.maximum(np.diff(history), 0.0)
    scale = max(1.0, abs(history[-1]))
    k = len(inc)
    early = inc[: k // 2 - 1].sum() if k >= 4 else inc[0]
    late = inc[-(k // 2 - 1):].sum() if k >= 4 else inc[-1]
    bounded = bool(late <= 0.25 * early + 1e-9 * scale)
    return SupEstimate(history[-1], bounded, history)


def gauss_measure(dim: int, order: int = 24, panels: int = 8):
    """A discrete positive measure on (0, 1)^dim from panelled Gauss nodes
    graded toward 0."""
    edges = np.concatenate([[0.0], np.geomspace(1e-6, 1.0, panels)])
    z, w = leggauss(order)
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append((b - a) * (z + 1) / 2 + a)
        weights.append(w * (b - a) / 2)
    t, wt = np.concatenate(nodes), np.concatenate(weights)
    mesh = np.meshgrid(*[t] * dim, indexing="ij")
    Y = np.stack([g.ravel() for g in mesh], axis=1)
    W = np.ones(1)
    for _ in range(dim):
        W = np.multiply.outer(W, wt).ravel()
    return Y, W


@dataclass
class TriangleCheck:
    holds: bool
    lhs: float
    rhs: float
    slack: float


def check_triangle(f_family: Sequence[Callable], g_family: Sequence[Callable], p: float, q: float,
                   measure=None, dim: int = 1, rel: float = 1e-12) -> TriangleCheck:
    """Both sides of the sum inequality for a common discrete measure.

    The right side is sum_{ij} int |f_i|^p |g_j|^q when max(p, q) < 1 and
    (sum_{ij} (int |f_i|^p |g_j|^q)^(1/M))^M otherwise.
    """
    if p <= 0 or q <= 0:
        raise DomainError("p and q must be positive")
    Y, W = measure if measure is not None else gauss_measure(dim)
    F = [np.asarray(fn(Y), dtype=float) for fn in f_family]
    G = [np.asarray(gn(Y), dtype=float) for gn in g_family]
    lhs = float(np.sum(np.abs(sum(F)) ** p * np.abs(sum(G)) ** q * W))
    pieces = [float(np.sum(np.abs(a) ** p * np.abs(b) ** q * W)) for a in F for b in G]
    M = max(p, q)
    rhs = math.fsum(pieces) if M < 1 else math.fsum(v ** (1 / M) for v in pieces) ** M
    if not (math.isfinite(lhs) and math.isfinite(rhs)):
        raise NumericError("non-finite quadrature in triangle check")
    return TriangleCheck(lhs <= rhs + rel * abs(rhs), lhs, rhs, rhs - lhs)


DEFAULT_GRID = tuple(10.0 ** -k for k in range(3, 10))


@dataclass
class CurveLimit:
    limit: float
    values: list
    p: int
    q: int
    r: int


def limit_along_curve(G: dict, t: float, grid: Sequence[float] = DEFAULT_GRID) -> CurveLimit:
    """Limit of g(x, x^t, x^(1-t)) / (x^(p+qt) (log x)^r) as x -> 0.

    g = sum_i G_i(x, z, w) (log x)^i; (p, q, r) come from the collapsed
    table.  The ratio is taken along ``grid`` and the last three values are
    extrapolated with Aitken's delta-squared step.
    """
    lead = leading_asymptotics(collapse_series(G))
    if not 0 < t < float(lead.eps):
        raise DomainError(f"t = {t} is outside (0, {lead.eps})")
    vals = []
    for x in grid:
        lx = math.log(x)
        num = math.fsum(poly.eval_float((x, x ** t, x ** (1 - t))) * lx ** i
                        for i, poly in G.items())
        den = x ** (lead.p + lead.q * t) * lx ** lead.r
        v = num / den
        if not math.isfinite(v):
            raise NumericError(f"non-finite ratio at x = {x}")
        vals.append(v)
    if len(vals) >= 3:
        s0, s1, s2 = vals[-3:]
        d1, d2 = s1 - s0, s2 - s1
        denom = d2 - d1
        limit = s2 - d2 * d2 / denom if abs(denom) > 1e-15 * max(1.0, abs(s2)) else s2
    else:
        limit = vals[-1]
    return CurveLimit(float(limit), vals, lead.p, lead.q, lead.r)


def countex_fiber(x: float):
    """Parametrise {x y1 < y2 < y1} by (y1, s) with y2 = x y1 + s (1 - x) y1."""

    def fiber(U):
        y1 = U[:, 0]
        y2 = x * y1 + U[:, 1] * (1 - x) * y1
        return np.stack([y1, y2], axis=1)

    return fiber
