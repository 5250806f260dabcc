"""Leading behaviour of a few series along the curves z = x^t, w = x^(1-t)."""

from lebesgue_classes import oracle
from lebesgue_classes.series import TruncPoly, collapse_series, leading_asymptotics


def xzw(*terms):
    return TruncPoly(3, {e: c for c, e in terms})


cases = {
    "log x": {1: xzw((1, (0, 0, 0)))},
    "z + w": {0: xzw((1, (0, 1, 0)), (1, (0, 0, 1)))},
    "z + z log x": {0: xzw((1, (0, 1, 0))), 1: xzw((1, (0, 1, 0)))},
}
for name, G in cases.items():
    lead = leading_asymptotics(collapse_series(G))
    t = float(lead.eps) / 2
    lim = oracle.limit_along_curve(G, t)
    # the log x factor makes the last case converge like 1/log x
    shown = ", ".join(str(v) for v in lead.as_tuple())
    print(f"{name:<12} (p, q, r, a, eps) = ({shown})  "
          f"numeric limit at t = {t}: {lim.limit:.6f}")
