"""Hyperboloid model of H^n, with the Klein ball as the I/O chart.

Minkowski form <x, y> = -x0 y0 + x1 y1 + ... + xn yn.  Ideal points are
future null vectors normalized to (1, theta) with |theta| = 1, which is also
their Klein-chart position.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def mink(x, y):
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    return -x[..., 0] * y[..., 0] + np.sum(x[..., 1:] * y[..., 1:], axis=-1)


def from_klein(k):
    k = np.asarray(k, float)
    s = 1.0 / np.sqrt(1.0 - np.sum(k * k, axis=-1))
    return np.concatenate([s[..., None], s[..., None] * k], axis=-1)


def to_klein(x):
    x = np.asarray(x, float)
    return x[..., 1:] / x[..., :1]


def ideal(theta):
    theta = np.asarray(theta, float)
    theta = theta / np.linalg.norm(theta, axis=-1, keepdims=True)
    return np.concatenate([np.ones(theta.shape[:-1] + (1,)), theta], axis=-1)


def normalize(x):
    """Project a timelike vector back onto the upper sheet."""
    x = np.asarray(x, float)
    return x / np.sqrt(-mink(x, x))[..., None]


def distance(x, y):
    # <x - y, x - y> = 4 sinh^2(d / 2); stable for nearby points, unlike arccosh
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    q = mink(x - y, x - y)
    return 2.0 * np.arcsinh(0.5 * np.sqrt(np.maximum(q, 0.0)))


def tangent_norm(u):
    return np.sqrt(np.maximum(mink(u, u), 0.0))


def project_tangent(y, u):
    return u + mink(u, y)[..., None] * y


def exp_map(y, u):
    r = tangent_norm(u)
    safe = np.where(r > 0, r, 1.0)
    out = np.cosh(r)[..., None] * y + (np.sinh(r) / safe)[..., None] * u
    return normalize(out)


def log_map(y, x):
    d = distance(y, x)
    w = x + mink(x, y)[..., None] * y
    nw = tangent_norm(w)
    safe = np.where(nw > 0, nw, 1.0)
    return (d / safe)[..., None] * w


def direction_to_ideal(y, xi):
    """Unit tangent v(y, xi) at y pointing to the ideal point xi."""
    return xi / (-mink(y, xi))[..., None] - y


def busemann(o, xi, y):
    """B_{o,xi}(y) = log(<y, xi> / <o, xi>); the gradient in y is -v(y, xi)."""
    return np.log(mink(y, xi) / mink(o, xi))


def geodesic_toward(o, xi, s):
    """Point at distance s from o on the ray to the ideal point xi."""
    v = direction_to_ideal(o, xi)
    return exp_map(o, np.asarray(s, float)[..., None] * v)


def boost(y):
    """Lorentz boost taking the origin e0 to y (symmetric matrix)."""
    y = np.asarray(y, float)
    n = y.size - 1
    y0, ys = y[0], y[1:]
    B = np.empty((n + 1, n + 1))
    B[0, 0] = y0
    B[0, 1:] = ys
    B[1:, 0] = ys
    B[1:, 1:] = np.eye(n) + np.outer(ys, ys) / (1.0 + y0)
    return B


def rotation_about_origin(n, angle=None, rng=None):
    """Element of SO(n) fixing e0 (random when ``rng`` is given)."""
    R = np.eye(n + 1)
    if rng is not None:
        q, r = np.linalg.qr(rng.standard_normal((n, n)))
        q = q * np.sign(np.diag(r))
        if np.linalg.det(q) < 0:
            q[:, 0] *= -1
        R[1:, 1:] = q
    elif angle is not None:
        c, s = np.cos(angle), np.sin(angle)
        R[1:3, 1:3] = [[c, -s], [s, c]]
    return R


def random_isometry(n, rng, scale=1.0):
    """Random orientation-preserving isometry (boost times rotation)."""
    k = rng.standard_normal(n)
    k *= np.tanh(scale * abs(rng.standard_normal())) / np.linalg.norm(k)
    return boost(from_klein(k)) @ rotation_about_origin(n, rng=rng)


def apply_to_ideal(g, xi):
    w = np.asarray(xi, float) @ np.asarray(g).T
    return w / w[..., :1]


def klein_density(k):
    """Hyperbolic volume density against Lebesgue measure in the Klein chart."""
    k = np.asarray(k, float)
    n = k.shape[-1]
    return (1.0 - np.sum(k * k, axis=-1)) ** (-(n + 1) / 2)


@dataclass(frozen=True, eq=False)
class HyperbolicPoint:
    coords: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.coords, float).reshape(-1)
        if x[0] <= 0:
            raise ValueError("hyperboloid point must have positive time coordinate")
        q = mink(x, x)
        if abs(q + 1.0) > 1e-12 * max(1.0, x[0] ** 2):
            x = normalize(x)
        object.__setattr__(self, "coords", x)

    @property
    def dim(self) -> int:
        return self.coords.size - 1

    @classmethod
    def from_klein(cls, k) -> "HyperbolicPoint":
        return cls(from_klein(k))

    @classmethod
    def origin(cls, n: int) -> "HyperbolicPoint":
        return cls(np.eye(n + 1)[0])

    def klein(self) -> np.ndarray:
        return to_klein(self.coords)

    def distance(self, other: "HyperbolicPoint") -> float:
        return float(distance(self.coords, other.coords))


@dataclass(frozen=True)
class HalfspaceAtInfinity:
    """Closed halfspace H = {X : <X, m> >= 0} for a unit spacelike m.

    In the Klein chart this is the linear inequality -m0 + m_s . k >= 0; its
    trace at infinity is the cap of unit vectors satisfying the same
    inequality.  ``closed=False`` gives the open complement convention.
    """

    m: np.ndarray
    closed: bool = True

    def __post_init__(self):
        m = np.asarray(self.m, float)
        q = mink(m, m)
        if q <= 0:
            raise ValueError("halfspace normal must be spacelike")
        object.__setattr__(self, "m", m / np.sqrt(q))

    @classmethod
    def from_klein(cls, normal, offset, closed=True) -> "HalfspaceAtInfinity":
        """{k : normal . k >= offset}; requires |offset| < |normal|."""
        normal = np.asarray(normal, float)
        return cls(np.concatenate([[offset], normal]), closed)

    def complement(self) -> "HalfspaceAtInfinity":
        return HalfspaceAtInfinity(-self.m, not self.closed)

    def klein_value(self, k):
        k = np.asarray(k, float)
        return -self.m[0] + k @ self.m[1:]

    def cap_contains(self, theta):
        """Membership of boundary directions in the trace at infinity."""
        val = self.klein_value(theta)
        return val >= 0 if self.closed else val > 0

    def contains(self, x):
        val = mink(x, self.m)
        return val >= 0 if self.closed else val > 0

    def signed_distance(self, x):
        """Distance to H, negative inside (distance to the bounding hyperplane)."""
        return -np.arcsinh(mink(x, self.m))

    def distance(self, x):
        return np.maximum(self.signed_distance(x), 0.0)

    def direction(self, x):
        """Unit tangent v(x, H) at x along the perpendicular to the hyperplane, toward H."""
        w = project_tangent(x, self.m)
        return w / tangent_norm(w)[..., None]

    def foot(self):
        """Point of the bounding hyperplane closest to the origin."""
        o = np.eye(self.m.size)[0]
        return normalize(o - mink(o, self.m) * self.m)

    def shifted(self, dist) -> "HalfspaceAtInfinity":
        """Halfspace bounded by the hyperplane at perpendicular distance ``dist``
        along the common perpendicular through the foot (dist > 0 enlarges H).
        The two hyperplanes are ultraparallel, so the D-neighbourhood of H is
        inside the enlarged halfspace whenever dist >= D."""
        f = self.foot()
        return HalfspaceAtInfinity(np.cosh(dist) * self.m - np.sinh(dist) * f, self.closed)
