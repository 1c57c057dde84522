"""Independent one-dimensional transport oracle used by the tests.

Monotone rearrangement of atoms on a line: the squared distance is the
integral of the squared difference of the two quantile functions, which are
step functions here, so the integral is a finite sum over merged breakpoints.
"""
import numpy as np


def quantile_w2(xa, ma, xb, mb) -> float:
    xa, ma, xb, mb = (np.asarray(v, dtype=float) for v in (xa, ma, xb, mb))
    ia, ib = np.argsort(xa, kind="stable"), np.argsort(xb, kind="stable")
    xa, ma, xb, mb = xa[ia], ma[ia], xb[ib], mb[ib]
    ca, cb = np.cumsum(ma), np.cumsum(mb)
    total = ca[-1]
    cb = cb * (total / cb[-1])
    breaks = np.unique(np.concatenate([[0.0], ca, cb]))
    breaks = breaks[breaks <= total]
    out = 0.0
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        s = 0.5 * (lo + hi)
        qa = xa[min(np.searchsorted(ca, s), xa.size - 1)]
        qb = xb[min(np.searchsorted(cb, s), xb.size - 1)]
        out += (hi - lo) * (qa - qb) ** 2
    return float(out)
