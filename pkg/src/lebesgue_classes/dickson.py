"""Finite sets of multi-indices under the componentwise order.

Multi-indices are plain tuples of non-negative ints.  Coordinates exposed in
public data (``UpsetPart.free_coords``) are 1-based, internal loops are
0-based.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

MultiIndex = tuple


def leq(a: Sequence[int], b: Sequence[int]) -> bool:
    """Componentwise a <= b."""
    return all(x <= y for x, y in zip(a, b))


def _arity(S) -> int:
    ks = {len(a) for a in S}
    if len(ks) > 1:
        raise ValueError(f"mixed arities {sorted(ks)}")
    return ks.pop() if ks else 0


def min_antichain(S: Iterable[Sequence[int]]) -> list[tuple]:
    """Minimal members of S, sorted lexicographically."""
    pts = sorted({tuple(int(v) for v in a) for a in S})
    _arity(pts)
    # Sorting lexicographically means a dominating point never precedes
    # the points it dominates, so one forward pass suffices.
    out: list[tuple] = []
    for a in pts:
        if not any(leq(m, a) for m in out):
            out.append(a)
    return out


def upward_closure_contains(M: Iterable[Sequence[int]], alpha: Sequence[int]) -> bool:
    return any(leq(b, alpha) for b in M)


def is_antichain(S: Iterable[Sequence[int]]) -> bool:
    pts = [tuple(a) for a in S]
    for a, b in itertools.combinations(pts, 2):
        if leq(a, b) or leq(b, a):
            return False
    return True


@dataclass(frozen=True)
class UpsetPart:
    """Multi-indices with alpha_i > eps_i on ``free_coords`` and alpha_j = base_j elsewhere.

    ``base`` is the unique minimal member, so on a free coordinate it
    already equals the threshold plus one.
    """

    base: tuple
    free_coords: frozenset
    thresholds: dict

    def __contains__(self, alpha) -> bool:
        alpha = tuple(alpha)
        if len(alpha) != len(self.base):
            return False
        for i, v in enumerate(alpha, start=1):
            if i in self.free_coords:
                if v <= self.thresholds[i]:
                    return False
            elif v != self.base[i - 1]:
                return False
        return True

    @property
    def minimal_member(self) -> tuple:
        return self.base

    def sort_key(self):
        return (sorted(self.free_coords), self.base)

    def to_json(self) -> dict:
        return {
            "base": list(self.base),
            "free": sorted(self.free_coords),
            "thresholds": {str(i): self.thresholds[i] for i in sorted(self.thresholds)},
        }

    def members_in_box(self, bound: int):
        """Enumerate members with every coordinate <= bound."""
        ranges = []
        for i, b in enumerate(self.base, start=1):
            if i in self.free_coords:
                ranges.append(range(self.thresholds[i] + 1, bound + 1))
            else:
                ranges.append(range(b, b + 1) if b <= bound else range(0))
        return itertools.product(*ranges)


def thresholds_of(M: Iterable[Sequence[int]]) -> tuple:
    """Componentwise maximum over M."""
    pts = [tuple(a) for a in M]
    if not pts:
        return ()
    return tuple(max(col) for col in zip(*pts))


def partition_complement(M: Iterable[Sequence[int]]) -> list[UpsetPart]:
    """Partition [M] minus M into parts with a unique minimal member each.

    Outside the box {alpha <= eps} (eps the componentwise max over M), a
    point is determined by the set N of coordinates where it exceeds eps
    and by its values off N.  Such a part lies wholly inside [M] or wholly
    outside, so it is kept when its minimal member lies in [M].  Inside the
    box every point of [M] minus M is a singleton part.  Enumerating each
    (N, off-N values) pair once yields the parts without duplicates.
    """
    pts = sorted({tuple(int(v) for v in a) for a in M})
    if not pts:
        return []
    k = _arity(pts)
    mins = min_antichain(pts)
    eps = thresholds_of(pts)
    member = set(pts)
    parts: list[UpsetPart] = []

    for beta in itertools.product(*(range(e + 1) for e in eps)):
        if beta not in member and upward_closure_contains(mins, beta):
            parts.append(UpsetPart(beta, frozenset(), {}))

    coords = range(k)
    for size in range(1, k + 1):
        for N in itertools.combinations(coords, size):
            rest = [j for j in coords if j not in N]
            for vals in itertools.product(*(range(eps[j] + 1) for j in rest)):
                base = [0] * k
                for i in N:
                    base[i] = eps[i] + 1
                for j, v in zip(rest, vals):
                    base[j] = v
                base = tuple(base)
                if upward_closure_contains(mins, base):
                    parts.append(UpsetPart(
                        base,
                        frozenset(i + 1 for i in N),
                        {i + 1: eps[i] for i in N},
                    ))
    parts.sort(key=UpsetPart.sort_key)
    return parts


def part_of(parts: Sequence[UpsetPart], alpha) -> UpsetPart | None:
    """The part containing alpha, or None."""
    for p in parts:
        if alpha in p:
            return p
    return None
