"""Lebesgue classes of x/y + (x - 1/2)/y^2 on (0, 1), as x varies.

Prints the diagram, then spot-checks each realized interval numerically.
"""

from fractions import Fraction

import sympy as sp

from lebesgue_classes import oracle
from lebesgue_classes.lclass import Piece, assemble_diagram, classify_at
from lebesgue_classes.prepared import PreparedTerm, RectCell, simple_sum
from lebesgue_classes.symbolic import X

cell = RectCell.unit_cube(1, m=1)
x1 = X(1)
f = simple_sum(cell, [PreparedTerm(x1, [-1], [0]),
                      PreparedTerm(x1 - Fraction(1, 2), [-2], [0])])
mu = simple_sum(cell, [PreparedTerm(sp.Integer(1), [0], [0])])
piece = Piece(f, mu, (0,))
d = assemble_diagram([piece], 1)


def show(tree):
    op = tree["op"]
    if op == "atom":
        return f"{tree['name'].split('.')[-1]} = 0"
    if op == "not":
        return show(tree["arg"]).replace("=", "!=")
    if op in ("and", "or"):
        return f" {op} ".join(show(a) for a in tree["args"])
    return op


for iv, loc in zip(d.intervals, d.loci):
    print(f"{iv.describe(d.q):>20}  where  {show(loc.formula())}")

print()
for x in (Fraction(1, 4), Fraction(1, 2), Fraction(0)):
    iv = classify_at(d, [piece], [x])
    for p in (0.4, 0.75, 1.5):
        v = oracle.fiber_integral(f, mu, None, p, 1.0, [x])
        print(f"x = {str(x):>4}  p = {p:<5} predicted {'in ' if iv.contains(Fraction(p), 1) else 'out'}"
              f"  quadrature says {v.verdict}")
