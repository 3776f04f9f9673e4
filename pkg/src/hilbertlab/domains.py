"""Properly convex domains given by a membership margin and a chord oracle.

Every domain works in a fixed affine chart in which it is bounded.  All
numerical methods take chart coordinates as ``(..., n)`` arrays and are
vectorized over leading axes; the ProjectivePoint API is a thin layer on top.

The central primitive is :meth:`ConvexDomain.exit_time`: for an interior
point ``y`` and a chart direction ``v`` it returns ``t > 0`` with
``y + t v`` on the boundary.  Distances are assembled from exit times taken
from *both* endpoints of a segment, which keeps full relative precision when
one endpoint is close to the boundary.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull

from .config import TOL
from .errors import DegenerateChord, NonConvergent, PointOutsideDomain
from .projective import AffineChart, ProjectiveMap, ProjectivePoint


@dataclass(frozen=True)
class Chord:
    a: ProjectivePoint
    b: ProjectivePoint
    a_chart: np.ndarray
    b_chart: np.ndarray


def _bracket_and_bisect(margin, Y, V, steps=TOL.chord_bisection_steps,
                        newton=TOL.chord_newton_steps):
    """Solve margin(Y + t V) = 0 for t > 0, row-wise."""
    Y = np.atleast_2d(Y)
    V = np.atleast_2d(V)
    m = Y.shape[0]
    lo = np.zeros(m)
    hi = np.ones(m)
    inside = margin(Y + V) > 0
    # outward doubling for rows still inside at t = 1
    lo[inside] = 1.0
    todo = inside.copy()
    for _ in range(200):
        if not todo.any():
            break
        hi[todo] *= 2.0
        still = margin(Y[todo] + hi[todo, None] * V[todo]) > 0
        idx = np.flatnonzero(todo)
        lo[idx[still]] = hi[idx[still]]
        todo[idx[~still]] = False
    else:
        raise DegenerateChord("line does not leave the domain inside the chart")
    # inward halving for rows already outside at t = 1
    todo = ~inside
    lo[todo] = 0.5
    for _ in range(1100):
        if not todo.any():
            break
        idx = np.flatnonzero(todo)
        ok = margin(Y[idx] + lo[idx, None] * V[idx]) > 0
        hi[idx[~ok]] = lo[idx[~ok]]
        lo[idx[~ok]] *= 0.5
        todo[idx[ok]] = False
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        ok = margin(Y + mid[:, None] * V) > 0
        lo = np.where(ok, mid, lo)
        hi = np.where(ok, hi, mid)
    t = 0.5 * (lo + hi)
    for _ in range(newton):
        h = 1e-7 * t
        f = margin(Y + t[:, None] * V)
        df = (margin(Y + (t + h)[:, None] * V) - margin(Y + (t - h)[:, None] * V)) / (2 * h)
        with np.errstate(divide="ignore", invalid="ignore"):
            cand = t - f / df
        good = np.isfinite(cand) & (cand >= lo) & (cand <= hi)
        t = np.where(good, cand, t)
    return t


class ConvexDomain:
    """Base class.  Subclasses implement ``margin`` and may override ``exit_time``."""

    kind = "abstract"
    approximation = False

    def __init__(self, chart: AffineChart, basepoint):
        self.chart = chart
        self.basepoint = np.asarray(basepoint, dtype=float)
        if not self.contains_chart(self.basepoint):
            raise PointOutsideDomain("interior basepoint is not interior")

    @property
    def dim(self) -> int:
        return self.chart.dim

    # --- chart-level primitives -------------------------------------------
    def margin(self, Y):
        raise NotImplementedError

    def exit_time(self, Y, V):
        Y = np.asarray(Y, float)
        V = np.asarray(V, float)
        shape = np.broadcast_shapes(Y.shape, V.shape)[:-1]
        Yb = np.broadcast_to(Y, shape + (self.dim,)).reshape(-1, self.dim)
        Vb = np.broadcast_to(V, shape + (self.dim,)).reshape(-1, self.dim)
        return _bracket_and_bisect(self.margin, Yb, Vb).reshape(shape)

    def contains_chart(self, Y):
        return self.margin(np.asarray(Y, float)) > 0

    def distance_homogeneous(self, X, Y):
        """Hilbert distance between homogeneous vectors; inf when either is outside."""
        from .metric import distance_chart
        A = self.chart.to_chart(X)
        B = self.chart.to_chart(Y)
        A, B = np.broadcast_arrays(A, B)
        inside = self.contains_chart(A) & self.contains_chart(B)
        d = np.full(inside.shape, np.inf)
        if np.any(inside):
            d[inside] = distance_chart(self, A[inside], B[inside])
        return d if d.ndim else float(d)

    def boundary_normal(self, Xi):
        """Outward unit normal at boundary chart points (central differences)."""
        Xi = np.atleast_2d(np.asarray(Xi, float))
        h = 1e-6
        grad = np.empty_like(Xi)
        for k in range(self.dim):
            e = np.zeros(self.dim)
            e[k] = h
            grad[:, k] = (self.margin(Xi - e) - self.margin(Xi + e)) / (2 * h)
        return grad / np.linalg.norm(grad, axis=1, keepdims=True)

    def boundary_point(self, direction, origin=None):
        """Exit point of the ray from ``origin`` (default basepoint) in ``direction``."""
        y = self.basepoint if origin is None else np.asarray(origin, float)
        d = np.asarray(direction, float)
        t = self.exit_time(y, d)
        return y + t[..., None] * d if np.ndim(t) else y + t * d

    # --- ProjectivePoint API -----------------------------------------------
    def to_chart(self, p):
        return self.chart.coords(p)

    def contains(self, p) -> bool:
        return bool(self.contains_chart(self.to_chart(p)))

    def chord(self, x, v) -> Chord:
        y = self.to_chart(x)
        v = np.asarray(v, float)
        if not self.contains_chart(y):
            raise PointOutsideDomain("chord base point is not interior")
        if np.linalg.norm(v) == 0:
            raise ValueError("direction must be nonzero")
        tp = float(self.exit_time(y, v))
        tm = float(self.exit_time(y, -v))
        a = y - tm * v
        b = y + tp * v
        if np.linalg.norm(a) > 1e6 or np.linalg.norm(b) > 1e6:
            raise DegenerateChord("chord leaves the bounded region of the chart")
        return Chord(self.chart.point(a), self.chart.point(b), a, b)

    def sample_interior(self, count, rng, shrink=0.999):
        """Points spread over the domain: random rays from the basepoint."""
        u = rng.standard_normal((count, self.dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        t = self.exit_time(np.broadcast_to(self.basepoint, u.shape), u)
        r = shrink * rng.uniform(0, 1, count) ** (1.0 / self.dim)
        return self.basepoint + (r * t)[:, None] * u

    def sample_boundary(self, count, rng):
        u = rng.standard_normal((count, self.dim))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        t = self.exit_time(np.broadcast_to(self.basepoint, u.shape), u)
        return self.basepoint + t[:, None] * u

    def transformed(self, g: ProjectiveMap) -> "ConvexDomain":
        raise NotImplementedError

    def descriptor(self) -> dict:
        raise NotImplementedError


class Ellipsoid(ConvexDomain):
    """{X : X^T Q X < 0} for a symmetric form of signature (1, n)."""

    kind = "ellipsoid"

    def __init__(self, Q, chart: AffineChart | None = None, basepoint=None):
        Q = np.array(Q, dtype=float)
        Q = 0.5 * (Q + Q.T)
        w, U = np.linalg.eigh(Q)
        neg = int(np.sum(w < 0))
        if neg == Q.shape[0] - 1 and np.sum(w > 0) == 1:
            Q, w = -Q, -w[::-1]
            U = U[:, ::-1]
        elif not (neg == 1 and np.sum(w > 0) == Q.shape[0] - 1):
            raise ValueError("quadratic form must have signature (1, n)")
        self.Q = Q
        if chart is None:
            n = Q.shape[0] - 1
            if np.all(np.linalg.eigvalsh(Q[1:, 1:]) > 0):
                chart = AffineChart.standard(n)
            else:
                chart = AffineChart(Q @ U[:, 0])
        B = chart.basis
        base = chart.functional / (chart.functional @ chart.functional)
        self._Qyy = B @ Q @ B.T
        if not np.all(np.linalg.eigvalsh(self._Qyy) > 0):
            raise ValueError("ellipsoid is not bounded in the chart")
        self._qy = 2 * B @ Q @ base
        self._q0 = base @ Q @ base
        self.center = -0.5 * np.linalg.solve(self._Qyy, self._qy)
        self._scale = -self.q(self.center)
        super().__init__(chart, self.center if basepoint is None else basepoint)

    @classmethod
    def unit_ball(cls, n: int) -> "Ellipsoid":
        return cls(np.diag([-1.0] + [1.0] * n))

    def q(self, Y):
        Y = np.asarray(Y, float)
        return np.einsum("...i,ij,...j->...", Y, self._Qyy, Y) + Y @ self._qy + self._q0

    def margin(self, Y):
        return -self.q(Y) / self._scale

    def exit_time(self, Y, V):
        Y = np.asarray(Y, float)
        V = np.asarray(V, float)
        A = np.einsum("...i,ij,...j->...", V, self._Qyy, V)
        Bh = np.einsum("...i,ij,...j->...", Y, self._Qyy, V) + 0.5 * (V @ self._qy)
        C = self.q(Y)
        D = np.sqrt(np.maximum(Bh * Bh - A * C, 0.0))
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(Bh <= 0, (-Bh + D) / A, -C / (Bh + D))
        return t

    def distance_homogeneous(self, X, Y):
        """Closed form 2 asinh(|x - y|_Q / 2) on the normalized sheet."""
        X = np.asarray(X, float)
        Y = np.asarray(Y, float)
        qx = -np.einsum("...i,ij,...j->...", X, self.Q, X)
        qy = -np.einsum("...i,ij,...j->...", Y, self.Q, Y)
        with np.errstate(invalid="ignore"):
            Xn = X / np.sqrt(qx)[..., None]
            Yn = Y / np.sqrt(qy)[..., None]
        flip = np.einsum("...i,ij,...j->...", Xn, self.Q, Yn) > 0
        Yn = np.where(flip[..., None], -Yn, Yn)
        D = Xn - Yn
        w = np.maximum(np.einsum("...i,ij,...j->...", D, self.Q, D), 0.0)
        d = 2.0 * np.arcsinh(0.5 * np.sqrt(w))
        d = np.where((qx > 0) & (qy > 0), d, np.inf)
        return d if d.ndim else float(d)

    def boundary_normal(self, Xi):
        Xi = np.atleast_2d(np.asarray(Xi, float))
        g = 2 * Xi @ self._Qyy + self._qy
        return g / np.linalg.norm(g, axis=1, keepdims=True)

    def transformed(self, g: ProjectiveMap) -> "Ellipsoid":
        gi = np.linalg.inv(g.matrix)
        bp = self.chart.map_point(g, self.basepoint)
        return Ellipsoid(gi.T @ self.Q @ gi, chart=self.chart, basepoint=bp)

    def descriptor(self) -> dict:
        return {"kind": "ellipsoid", "Q": self.Q.tolist()}


class PNormBall(ConvexDomain):
    """Image under a projective frame of the chart p-norm unit ball."""

    kind = "pball"

    def __init__(self, p: float, frame=None, n: int | None = None, chart: AffineChart | None = None):
        if p <= 1:
            raise ValueError("p must exceed 1")
        self.p = float(p)
        if frame is None:
            if n is None:
                raise ValueError("need a frame or a dimension")
            frame = np.eye(n + 1)
        self.frame = np.array(frame, dtype=float)
        self._frame_inv = np.linalg.inv(self.frame)
        dim = self.frame.shape[0] - 1
        chart = AffineChart.standard(dim) if chart is None else chart
        self.chart = chart
        base = chart.to_chart(self.frame[:, 0])
        super().__init__(chart, base)

    def margin(self, Y):
        Y = np.asarray(Y, float)
        Z = self.chart.from_chart(Y) @ self._frame_inv.T
        z0 = Z[..., 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            z = Z[..., 1:] / z0[..., None]
            r = np.sum(np.abs(z) ** self.p, axis=-1) ** (1.0 / self.p)
        return np.where(z0 > 0, 1.0 - r, -1.0)

    def transformed(self, g: ProjectiveMap) -> "PNormBall":
        return PNormBall(self.p, g.matrix @ self.frame, chart=self.chart)

    def descriptor(self) -> dict:
        return {"kind": "pball", "p": self.p, "frame": self.frame.tolist()}


class OrbitHull(ConvexDomain):
    """Chart convex hull of a finite point set (usually a group orbit).

    Approximates an invariant domain from inside, so strict convexity and
    exact group invariance do not hold; ``approximation`` is set.
    """

    kind = "orbit_hull"
    approximation = True

    def __init__(self, points, chart: AffineChart | None = None, basepoint=None, meta=None):
        pts = np.asarray(points, float)
        n = pts.shape[1]
        self.chart = AffineChart.standard(n) if chart is None else chart
        self.hull = ConvexHull(pts)
        eq = self.hull.equations
        self._normals = eq[:, :-1]
        self._offsets = eq[:, -1]
        self.vertices = pts[self.hull.vertices]
        self.meta = dict(meta or {})
        if basepoint is None:
            basepoint = self.vertices.mean(axis=0)
        self._polygon = self._polygon_tables(self.vertices) if n == 2 else None
        super().__init__(self.chart, basepoint)

    @staticmethod
    def _polygon_tables(V):
        """Edges of a convex polygon (counterclockwise vertices V), rotated so
        that their outward normal angles increase from the smallest one."""
        E = np.roll(V, -1, axis=0) - V
        N = np.stack([E[:, 1], -E[:, 0]], axis=1)
        N /= np.linalg.norm(N, axis=1, keepdims=True)
        ang = np.arctan2(N[:, 1], N[:, 0])
        start = int(np.argmin(ang))
        V, N, ang = np.roll(V, -start, 0), np.roll(N, -start, 0), np.roll(ang, -start)
        return V, N, -np.einsum("ij,ij->i", N, V), ang

    @classmethod
    def from_group(cls, group, seeds, depth: int, chart: AffineChart | None = None, basepoint=None,
                   shrink: float = 1e-6):
        """Hull of the images of ``seeds`` (chart points, or homogeneous when they
        have n + 1 entries) under all words of length <= depth.

        With an explicit basepoint the points are pulled toward it by the
        relative amount ``shrink``: seeds on the boundary of the invariant
        domain would otherwise land a rounding error outside it, letting whole
        orbit sequences converge to points just inside the hull.
        """
        chart = AffineChart.standard(group.dim) if chart is None else chart
        seeds = np.atleast_2d(np.asarray(seeds, float))
        homog = seeds if seeds.shape[1] == group.dim + 1 else chart.from_chart(seeds)
        lifted = np.concatenate([group.word_orbit(X, depth) for X in homog])
        pts = chart.to_chart(lifted)
        if basepoint is not None and shrink:
            bp = np.asarray(basepoint, float)
            pts = bp + (1.0 - shrink) * (pts - bp)
        if basepoint is None and len(seeds) == 1 and seeds.shape[1] == group.dim:
            basepoint = seeds[0] if cls._inside(pts, seeds[0]) else None
        meta = {"group": group.label, "seeds": seeds.tolist(), "depth": depth}
        hull = cls(pts, chart=chart, basepoint=basepoint, meta=meta)
        hull.group = group
        return hull

    @staticmethod
    def _inside(pts, y):
        h = ConvexHull(pts)
        return bool(np.max(h.equations[:, :-1] @ y + h.equations[:, -1]) < -1e-9)

    def margin(self, Y):
        Y = np.asarray(Y, float)
        flat = Y.reshape(-1, Y.shape[-1])
        out = np.empty(len(flat))
        step = max(1, 2_000_000 // len(self._offsets))
        for lo in range(0, len(flat), step):
            out[lo:lo + step] = -np.max(flat[lo:lo + step] @ self._normals.T + self._offsets, axis=-1)
        return out.reshape(Y.shape[:-1])

    def contains_chart(self, Y):
        Y = np.asarray(Y, float)
        if self._polygon is None or len(self._normals) <= 32:
            return self.margin(Y) > 0
        # the edge seen from the vertex centroid in the direction of y decides
        Pv, Pn, Po, _ = self._polygon
        c = Pv.mean(axis=0)
        a = np.arctan2(Pv[:, 1] - c[1], Pv[:, 0] - c[0])
        first = int(np.argmin(a))
        Yf = Y.reshape(-1, 2)
        b = np.arctan2(Yf[:, 1] - c[1], Yf[:, 0] - c[0])
        i = (np.searchsorted(np.roll(a, -first), b, side="right") - 1 + first) % len(Pv)
        inside = np.einsum("ij,ij->i", Pn[i], Yf) + Po[i] < 0
        return inside.reshape(Y.shape[:-1])

    def exit_time(self, Y, V):
        Y = np.asarray(Y, float)
        V = np.asarray(V, float)
        if self._polygon is not None and len(self._normals) > 32:
            return self._polygon_exit_time(Y, V)
        return self._facet_exit_time(Y, V)

    def _facet_exit_time(self, Y, V):
        slack = -(Y @ self._normals.T + self._offsets)  # distance to each facet
        rate = V @ self._normals.T
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(rate > 0, slack / rate, np.inf)
        return np.min(t, axis=-1)

    def _polygon_exit_time(self, Y, V):
        """Exit times through a convex polygon in O(log k) per ray.

        With u perpendicular to v, u.w - u.y changes sign exactly twice
        around the polygon, once on each monotone arc between the vertices
        extreme in the directions +u and -u; both sign changes are found by
        bisection over vertex indices and the crossing edge with positive
        rate is the exit.
        """
        shape = np.broadcast_shapes(Y.shape, V.shape)[:-1]
        Yb = np.broadcast_to(Y, shape + (2,)).reshape(-1, 2)
        Vb = np.broadcast_to(V, shape + (2,)).reshape(-1, 2)
        Pv, Pn, Po, ang = self._polygon
        k = len(Pv)
        U = np.stack([-Vb[:, 1], Vb[:, 0]], axis=1)

        def support(D):
            return np.searchsorted(ang, np.arctan2(D[:, 1], D[:, 0])) % k

        imax, imin = support(U), support(-U)
        uy = np.einsum("ij,ij->i", U, Yb)

        def crossing(first, last, positive_first):
            length = (last - first) % k
            lo, hi = np.zeros_like(first), length
            while np.any(hi - lo > 1):
                mid = (lo + hi) // 2
                s = np.einsum("ij,ij->i", Pv[(first + mid) % k], U) - uy
                good = (s >= 0) if positive_first else (s < 0)
                active = hi - lo > 1
                lo = np.where(active & good, mid, lo)
                hi = np.where(active & ~good, mid, hi)
            return (first + lo) % k

        edges = np.stack([crossing(imax, imin, True), crossing(imin, imax, False)], axis=1)
        slack = -(np.einsum("rej,rj->re", Pn[edges], Yb) + Po[edges])
        rate = np.einsum("rej,rj->re", Pn[edges], Vb)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(rate > 0, slack / rate, np.inf).min(axis=1)
        bad = ~np.isfinite(t) | (t <= 0)
        if np.any(bad):
            t[bad] = self._facet_exit_time(Yb[bad], Vb[bad])
        return t.reshape(shape)

    def boundary_normal(self, Xi):
        Xi = np.atleast_2d(np.asarray(Xi, float))
        s = Xi @ self._normals.T + self._offsets
        order = np.argsort(-s, axis=1)
        best = np.take_along_axis(s, order[:, :1], 1)[:, 0]
        second = np.take_along_axis(s, order[:, 1:2], 1)[:, 0]
        if np.any(best - second < 1e-9):
            raise NonConvergent("boundary point sits on a lower-dimensional face")
        return self._normals[order[:, 0]]

    def transformed(self, g: ProjectiveMap) -> "OrbitHull":
        return OrbitHull(self.chart.map_point(g, self.vertices), chart=self.chart,
                         basepoint=self.chart.map_point(g, self.basepoint), meta=self.meta)

    def descriptor(self) -> dict:
        d = {"kind": "orbit_hull"}
        d.update({k: self.meta[k] for k in ("group", "seeds", "depth") if k in self.meta})
        d["basepoint"] = self.basepoint.tolist()
        return d


def contains(domain: ConvexDomain, p) -> bool:
    return domain.contains(p)


def chord(domain: ConvexDomain, x, v) -> Chord:
    return domain.chord(x, v)


def domain_from_descriptor(desc: dict, groups: dict | None = None) -> ConvexDomain:
    kind = desc.get("kind")
    if kind == "ellipsoid":
        return Ellipsoid(desc["Q"])
    if kind == "pball":
        return PNormBall(desc["p"], desc.get("frame"), n=desc.get("n"))
    if kind == "orbit_hull":
        if not groups or desc["group"] not in groups:
            raise KeyError(f"unknown group {desc.get('group')!r}")
        return OrbitHull.from_group(groups[desc["group"]], desc["seeds"], int(desc["depth"]),
                                    basepoint=desc.get("basepoint"))
    raise ValueError(f"unknown domain kind {kind!r}")
