"""On {0 < y1 < 1, x y1 < y2 < y1}, log(y1/y2) stays bounded while log y1 does not.

The bound is log(1/x), so no single prepared form works uniformly as x -> 0;
splitting the cell into rectilinear pieces recovers one.
"""

import math

import numpy as np

from lebesgue_classes import oracle
from lebesgue_classes.rectilinear import check_cover, countex_cell, rectilinearize

for x in (0.5, 0.1, 0.01):
    fiber = oracle.countex_fiber(x)
    ratio = oracle.sup_estimate(lambda Y: np.log(Y[:, 0] / Y[:, 1]), x, fiber=fiber, dim=2)
    alone = oracle.sup_estimate(lambda Y: np.log(Y[:, 0]), x, fiber=fiber, dim=2)
    print(f"x = {x:<5} sup log(y1/y2) ~ {ratio.sup:.5f} (log 1/x = {math.log(1 / x):.5f}),"
          f" log y1 bounded: {alone.bounded}")

cell = countex_cell()
pieces = rectilinearize(cell)
print(f"\n{len(pieces)} rectilinear pieces")
for p in pieces:
    print(" ", p.cell.describe(), [s.to_json()["type"] for s in p.steps])
report = check_cover(cell, pieces, [0.1], 4000, np.random.default_rng(0))
print(f"coverage at x = 0.1: {report.coverage:.4f}, overlaps: {report.multiple}")
