"""Difference-ratio calculus for energy-dependent operators.

The n-th order difference ratio of f over points (x0; x, x', ...) is the
divided difference f[x0, x, x', ...]; it is symmetric under permutation of
the points and tends to f^(n)(x0)/n! when the spread goes to zero.  The
quasi-degenerate counterterm bookkeeping composes these objects whole --
never by first evaluating a singular resolvent -- so coincident points are
handled through an analytic-derivative channel (confluent table entries),
not by dividing by zero.

Functions may be scalar- or matrix-valued; the calculus acts elementwise.
Any scalar type with field arithmetic works (floats, complex, mpmath).
"""

import math
from dataclasses import dataclass

from .errors import BsBlochError

MAX_ORDER = 4


class CoincidentWithoutDerivativeError(BsBlochError):
    """Repeated sample point but the function has no derivative channel."""


@dataclass(frozen=True)
class SamplePoints:
    """Anchor x0 plus an ordered list of offset points."""

    anchor: float
    offsets: tuple

    def __post_init__(self):
        object.__setattr__(self, "offsets", tuple(self.offsets))

    def points(self, order):
        if order > len(self.offsets):
            raise ValueError(
                f"order {order} needs {order} offsets, got {len(self.offsets)}"
            )
        return (self.anchor,) + self.offsets[:order]


def divided_difference(f, points, derivative=None):
    """Divided difference f[p0, p1, ..., pn] with confluent repeated points.

    ``derivative(x, k)`` must return the k-th derivative of f at x; it is
    consulted only when points coincide (exact equality), where the table
    entry becomes f^(k)(x)/k!.
    """
    pts = sorted(points)
    n = len(pts) - 1
    col = [f(x) for x in pts]
    for j in range(1, n + 1):
        nxt = []
        for i in range(n + 1 - j):
            lo, hi = pts[i], pts[i + j]
            if lo == hi:
                if derivative is None:
                    raise CoincidentWithoutDerivativeError(
                        f"repeated sample point {lo} needs a derivative channel"
                    )
                nxt.append(derivative(lo, j) / math.factorial(j))
            else:
                nxt.append((col[i + 1] - col[i]) / (hi - lo))
        col = nxt
    return col[0]


def diff_ratio(f, pts, order, derivative=None):
    """n-th order difference ratio of f anchored at pts.anchor, n in 1..4."""
    if not 1 <= order <= MAX_ORDER:
        raise ValueError(f"difference-ratio order must be in 1..{MAX_ORDER}, got {order}")
    return divided_difference(f, pts.points(order), derivative=derivative)


def _magnitude(value):
    if hasattr(value, "ndim") and value.ndim > 0:
        import numpy as np

        return float(np.max(np.abs(value)))
    return abs(value)


def taylor_limit_check(f, x0, order, h, derivative):
    """Deviation of the order-n difference ratio at spread h from f^(n)(x0)/n!.

    Uses the equally spaced points x0, x0+h, ..., x0+n*h.  For smooth f the
    deviation vanishes linearly in h; for polynomials of degree < n it is
    exactly zero.
    """
    points = [x0 + i * h for i in range(order + 1)]
    dd = divided_difference(f, points, derivative=derivative)
    target = derivative(x0, order) / math.factorial(order)
    return _magnitude(dd - target)
