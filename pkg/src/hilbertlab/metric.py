"""Hilbert distance, Finsler norm, geodesics and Busemann functions.

Chart-level functions (suffix ``_chart``) are vectorized over leading axes.
The unsuffixed functions accept ProjectivePoint / BoundaryPoint arguments or
plain chart coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domains import ConvexDomain
from .errors import NonConvergent, PointOutsideDomain
from .projective import ProjectivePoint


@dataclass(frozen=True)
class BoundaryPoint:
    point: ProjectivePoint
    provenance: str = "explicit"


@dataclass(frozen=True)
class Horoball:
    """Sub-level set {y : B_{o, center}(y) < level}."""

    domain: ConvexDomain
    center: np.ndarray
    basepoint: np.ndarray
    level: float

    def busemann(self, Y):
        return busemann_chart(self.domain, self.basepoint, self.center, Y)

    def contains(self, Y) -> np.ndarray:
        return self.busemann(Y) < self.level

    def sample_horosphere(self, count, rng=None, level=None):
        """Points with Busemann value ``level`` on lines through the center."""
        level = self.level if level is None else level
        return horosphere_points(self.domain, self.basepoint, self.center, level, count, rng)


def _chart(domain: ConvexDomain, p):
    if isinstance(p, BoundaryPoint):
        p = p.point
    return domain.to_chart(p)


def _require_inside(domain, Y):
    if not np.all(domain.contains_chart(Y)):
        raise PointOutsideDomain("point is not in the open domain")


def distance_chart(domain: ConvexDomain, X, Y):
    """d(x, y) = (1/2) log [a:x:y:b], from exit times at both ends."""
    X = np.asarray(X, float)
    Y = np.asarray(Y, float)
    V = Y - X
    zero = np.all(V == 0, axis=-1)
    Vs = np.where(zero[..., None], 1.0, V)
    ta = domain.exit_time(X, -Vs)  # a = x - ta v
    tb = domain.exit_time(Y, Vs)   # b = y + tb v
    d = 0.5 * (np.log1p(1.0 / ta) + np.log1p(1.0 / tb))
    return np.where(zero, 0.0, d)


def finsler_chart(domain: ConvexDomain, X, V):
    X = np.asarray(X, float)
    V = np.asarray(V, float)
    zero = np.all(V == 0, axis=-1)
    Vs = np.where(zero[..., None], 1.0, V)
    f = 0.5 * (1.0 / domain.exit_time(X, Vs) + 1.0 / domain.exit_time(X, -Vs))
    return np.where(zero, 0.0, f)


def geodesic_param(a_time, s):
    """Affine parameter t in [0, 1) of the point at distance s from x on [x, xi).

    ``a_time`` is the backward exit time of the line in units of |xi - x|.
    Solves e^{2s} = (t + a) / (a (1 - t)).
    """
    e = np.exp(-2.0 * np.asarray(s, float))
    return a_time * (-np.expm1(-2.0 * np.asarray(s, float))) / (a_time + e)


def geodesic_point_chart(domain: ConvexDomain, X, Xi, s):
    X = np.asarray(X, float)
    Xi = np.asarray(Xi, float)
    a = domain.exit_time(X, X - Xi)
    t = geodesic_param(a, s)
    return X + np.asarray(t)[..., None] * (Xi - X)


def busemann_chart(domain: ConvexDomain, O, Xi, Y):
    """Closed-form limit of d(y, c(t)) - d(o, c(t)) for C^1 boundaries.

    With a_y the far endpoint of the line through xi and y, and n the
    supporting normal at xi, the limit is
    (1/2) log( [|a_y xi| / |a_y y|] [|a_o o| / |a_o xi|] [n.(xi - y) / n.(xi - o)] ).
    """
    O = np.asarray(O, float)
    Xi = np.asarray(Xi, float)
    Y = np.asarray(Y, float)
    normal = domain.boundary_normal(Xi.reshape(-1, Xi.shape[-1]))[0] if Xi.ndim == 1 \
        else domain.boundary_normal(Xi)
    ty = domain.exit_time(Y, Y - Xi)
    to = domain.exit_time(O, O - Xi)
    ny = np.sum((Xi - Y) * normal, axis=-1)
    no = np.sum((Xi - O) * normal, axis=-1)
    same = np.all(Y == O, axis=-1)
    val = 0.5 * (np.log1p(1.0 / ty) - np.log1p(1.0 / to) + np.log(ny) - np.log(no))
    return np.where(same, 0.0, val)


def busemann_finite_chart(domain: ConvexDomain, O, Xi, Y, t):
    c = geodesic_point_chart(domain, O, Xi, t)
    return distance_chart(domain, Y, c) - t


def busemann_estimate(domain: ConvexDomain, O, Xi, Y, times=(4.0, 5.0, 6.0)):
    """Busemann value plus an error estimate.

    The finite-t differences are evaluated where the ray point is still
    resolvable in double precision and Aitken-extrapolated; their distance
    to the closed-form limit is the reported error.
    """
    limit = busemann_chart(domain, O, Xi, Y)
    f = [busemann_finite_chart(domain, O, Xi, Y, t) for t in times]
    den = f[0] + f[2] - 2 * f[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        aitken = np.where(np.abs(den) > 1e-9, (f[0] * f[2] - f[1] ** 2) / den, f[2])
    return limit, np.abs(aitken - limit)


def horosphere_points(domain, O, Xi, level, count, rng=None, iters=80):
    """Points on {B_{o,xi} = level}: one per line from a boundary point to xi.

    The far endpoints are exits of the basepoint in evenly spread directions
    (random rotation when ``rng`` is given); Busemann is monotone along
    each such line so a bisection on the line parameter is used.
    """
    O = np.asarray(O, float)
    Xi = np.asarray(Xi, float)
    n = domain.dim
    if n == 2:
        phase = rng.uniform(0, 2 * np.pi) if rng is not None else 0.0
        ang = phase + 2 * np.pi * (np.arange(count) + 0.5) / count
        U = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        from .quadrature import fibonacci_sphere
        U = fibonacci_sphere(count, n, rng)
    Z = O + domain.exit_time(np.broadcast_to(O, U.shape), U)[:, None] * U
    # drop far endpoints that collapse onto xi
    keep = np.linalg.norm(Z - Xi, axis=1) > 1e-3 * np.max(np.linalg.norm(Z - Xi, axis=1))
    Z = Z[keep]
    lo = np.full(len(Z), 1e-9)      # near z: Busemann large
    hi = np.full(len(Z), 1 - 1e-15)  # near xi: Busemann very negative
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        P = Z + mid[:, None] * (Xi - Z)
        above = busemann_chart(domain, O, Xi, P) > level
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    t = 0.5 * (lo + hi)
    return Z + t[:, None] * (Xi - Z)


# --- ProjectivePoint-level API --------------------------------------------

def hilbert_distance(domain: ConvexDomain, x, y) -> float:
    X, Y = _chart(domain, x), _chart(domain, y)
    _require_inside(domain, X)
    _require_inside(domain, Y)
    return float(distance_chart(domain, X, Y))


def finsler_norm(domain: ConvexDomain, x, v) -> float:
    X = _chart(domain, x)
    _require_inside(domain, X)
    return float(finsler_chart(domain, X, np.asarray(v, float)))


def geodesic_point(domain: ConvexDomain, x, xi, s: float) -> ProjectivePoint:
    X, Xi = _chart(domain, x), _chart(domain, xi)
    _require_inside(domain, X)
    if s < 0:
        raise ValueError("s must be nonnegative")
    return domain.chart.point(geodesic_point_chart(domain, X, Xi, s))


def busemann(domain: ConvexDomain, o, xi, y, with_error: bool = False):
    O, Xi, Y = _chart(domain, o), _chart(domain, xi), _chart(domain, y)
    _require_inside(domain, O)
    _require_inside(domain, Y)
    value, err = busemann_estimate(domain, O, Xi, Y)
    value, err = float(value), float(err)
    if not np.isfinite(value):
        raise NonConvergent("Busemann limit is not finite")
    return (value, err) if with_error else value
