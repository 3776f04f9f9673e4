"""Atomic boundary measures: visual measures, Patterson-Sullivan approximants,
boundary correspondences and halfspace masses."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from . import hyperbolic as hyp
from .domains import ConvexDomain, Ellipsoid
from .errors import OrbitTooSmall, UnmappedAtom
from .quadrature import sphere_area


@dataclass(frozen=True, eq=False)
class BoundaryMeasure:
    """Weighted Dirac masses on a boundary.

    ``space`` is "hyperbolic" (atoms are unit vectors theta, i.e. ideal points
    (1, theta) of the hyperboloid) or "domain" (atoms are chart points on the
    boundary of a convex domain).  ``labels`` optionally records, per atom,
    the index of the orbit element that produced it.
    """

    points: np.ndarray
    weights: np.ndarray
    tag: str = "mixture"
    space: str = "hyperbolic"
    labels: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.points, float))
        w = np.asarray(self.weights, float).reshape(-1)
        if len(P) != len(w):
            raise ValueError("points and weights differ in length")
        if np.any(w <= 0):
            raise ValueError("atom weights must be positive")
        if self.space == "hyperbolic":
            P = P / np.linalg.norm(P, axis=1, keepdims=True)
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "_total", float(np.sum(w)))

    @property
    def total_mass(self) -> float:
        return self._total

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return len(self.weights)

    def ideal(self):
        """Null vectors (1, theta) of the atoms (hyperbolic measures only)."""
        if self.space != "hyperbolic":
            raise ValueError("ideal points need a hyperbolic measure")
        return hyp.ideal(self.points)

    def max_atom(self, decimals: int = 12) -> float:
        """Largest weight after merging atoms at the same point."""
        key = np.round(self.points[:, 0], decimals)
        order = np.argsort(key, kind="stable")
        same = np.diff(key[order]) == 0
        if not np.any(same):
            return float(self.weights.max())
        # only runs sharing the first coordinate can hold duplicates
        tied = np.zeros(len(order), bool)
        tied[1:] |= same
        tied[:-1] |= same
        idx = order[tied]
        sub = BoundaryMeasure(self.points[idx], self.weights[idx], self.tag, self.space)
        merged = float(sub.deduplicated(decimals).weights.max())
        return max(merged, float(self.weights.max()))

    def deduplicated(self, decimals: int = 12) -> "BoundaryMeasure":
        """Atoms at the same point (after rounding) merged, weights summed."""
        key = np.round(self.points, decimals)
        _, first, inv = np.unique(key, axis=0, return_index=True, return_inverse=True)
        if len(first) == len(self.points):
            return self
        order = np.argsort(first)
        rank = np.empty_like(order)
        rank[order] = np.arange(len(order))
        w = np.bincount(rank[inv.reshape(-1)], weights=self.weights)
        return BoundaryMeasure(self.points[first[order]], w, self.tag, self.space, None, dict(self.meta))

    def scaled(self, c: float) -> "BoundaryMeasure":
        return BoundaryMeasure(self.points, c * self.weights, self.tag, self.space, self.labels, dict(self.meta))

    def pushed(self, g) -> "BoundaryMeasure":
        """Image under an isometry g of the hyperboloid (a Lorentz matrix)."""
        xi = hyp.apply_to_ideal(g, self.ideal())
        return BoundaryMeasure(xi[:, 1:], self.weights, self.tag, self.space, self.labels, dict(self.meta))

    def to_json(self) -> dict:
        return {"tag": self.tag, "space": self.space, "points": self.points.tolist(),
                "weights": self.weights.tolist(), "total_mass": self.total_mass}


def mixture(a: BoundaryMeasure, b: BoundaryMeasure, t: float) -> BoundaryMeasure:
    """t a + (1 - t) b, dropping a component whose coefficient vanishes."""
    if t == 1:
        return a
    if t == 0:
        return b
    parts = [(m, c) for m, c in ((a, t), (b, 1 - t)) if c > 0]
    P = np.vstack([m.points for m, _ in parts])
    w = np.concatenate([c * m.weights for m, c in parts])
    tag = parts[0][0].tag if len(parts) == 1 else "mixture"
    return BoundaryMeasure(P, w, tag, "hyperbolic", meta={"t": t})


def sphere_directions(count: int, n: int, rng):
    """Low-discrepancy unit vectors in R^n (n = 2, 3) with a random rotation."""
    if n == 2:
        phase = rng.uniform(0, 2 * np.pi)
        a = phase + 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(a), np.sin(a)], axis=1)
    if n == 3:
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        phi = np.pi * (3 - np.sqrt(5)) * i
        r = np.sqrt(1 - z * z)
        U = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
        return U @ Rotation.random(random_state=rng).as_matrix().T
    raise ValueError("visual measures are implemented for n = 2, 3")


def visual_measure(y, N: int = 4096, seed: int = 0, sampling: str = "spread") -> BoundaryMeasure:
    """Endpoints of geodesic rays from y in N unit directions, each carrying
    mass area(S^(n-1)) / N.

    ``sampling="spread"`` uses evenly spread directions with a random
    rotation; ``"iid"`` draws them independently and uniformly.
    """
    if N < 16:
        raise ValueError("need at least 16 atoms")
    y = np.asarray(getattr(y, "coords", y), float)
    n = y.size - 1
    rng = np.random.default_rng(seed)
    if sampling == "spread":
        U = sphere_directions(N, n, rng)
    elif sampling == "iid":
        U = rng.standard_normal((N, n))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
    else:
        raise ValueError(f"unknown sampling {sampling!r}")
    B = hyp.boost(y)
    V = np.hstack([np.zeros((N, 1)), U]) @ B.T        # unit tangents at y
    xi = y[None, :] + V
    xi = xi / xi[:, :1]
    area = sphere_area(n)
    return BoundaryMeasure(xi[:, 1:], np.full(N, area / N), "visual",
                           meta={"center": y.tolist(), "N": N, "sampling": sampling})


def halfspace_mass(measure: BoundaryMeasure, H: hyp.HalfspaceAtInfinity) -> float:
    return float(np.sum(measure.weights[H.cap_contains(measure.points)]))


# --- Patterson-Sullivan approximants ---------------------------------------------

def taper(d, R_max, width):
    """1 up to R_max - width, smoothly (C^1) down to 0 at R_max."""
    d = np.asarray(d, float)
    if width <= 0:
        return (d <= R_max).astype(float)
    u = np.clip((R_max - d) / width, 0.0, 1.0)
    return u * u * (3 - 2 * u)


class PattersonSullivan:
    """Family x -> mu_x of atomic approximants at exponent s.

    The orbit is enumerated once around the basepoint with radius
    R_max + pad.  For a point x, the atoms are the boundary endpoints of the
    rays from x through the orbit points gamma o with d(x, gamma o) <= R_max,
    weighted by e^{-s d(x, gamma o)} times a smooth cutoff over the last
    ``width`` units before R_max.  Because the truncation is centered at x,
    gamma_* mu_x = mu_{gamma x} holds atom by atom.  The normalization Z makes
    |mu_o| = 1.  An orbit point coinciding with x carries no direction and is
    left out.
    """

    def __init__(self, domain: ConvexDomain, group, s: float, R_max: float = 12.0, o=None, *,
                 pad: float = 1.0, width: float = 1.0, shards: int = 1):
        from .orbits import orbit_ball
        self.domain, self.group, self.s = domain, group, float(s)
        self.R_max, self.pad, self.width = float(R_max), float(pad), float(width)
        if o is None:
            o = domain.chart.from_chart(domain.basepoint)
        o = np.asarray(o, float)
        if o.size == domain.dim:
            o = domain.chart.from_chart(o)
        self.o = o
        self._last = None
        self.orbit = orbit_ball(domain, group, o, R_max + pad, shards=shards)
        within = self.orbit.meta["within"]
        self.points = self.orbit.points
        self.valid = within
        self.chart_points = domain.chart.to_chart(self.points)
        d0 = self.orbit.distance
        w0 = np.exp(-self.s * d0) * taper(d0, self.R_max, self.width)
        w0[d0 < 1e-12] = 0.0
        self.Z = float(np.sum(w0))
        if np.count_nonzero(w0) < 100:
            raise OrbitTooSmall("fewer than 100 orbit points carry weight")

    @property
    def o_chart(self):
        return self.domain.chart.to_chart(self.o)

    def distances(self, x):
        x = np.asarray(x, float)
        key = x.tobytes()
        if self._last is not None and self._last[0] == key:
            return self._last[1]
        X = self.domain.chart.from_chart(x)
        d = self.domain.distance_homogeneous(X[None], self.points)
        self._last = (key, d)
        return d

    def measure(self, x) -> BoundaryMeasure:
        x = np.asarray(x, float)
        reach = float(self.domain.distance_homogeneous(self.o, self.domain.chart.from_chart(x)))
        if reach > self.pad + 1e-12:
            raise ValueError(f"point is {reach:.3g} from the basepoint, beyond the cached pad {self.pad}")
        d = self.distances(x)
        w = np.exp(-self.s * d) * taper(d, self.R_max, self.width) / self.Z
        keep = np.nonzero((w > 0) & (d >= 1e-12) & self.valid)[0]
        P = self.chart_points[keep]
        V = P - x
        t = self.domain.exit_time(np.broadcast_to(x, V.shape), V)
        atoms = x + t[:, None] * V
        return BoundaryMeasure(atoms, w[keep], "patterson_sullivan", "domain", keep,
                               {"s": self.s, "R_max": self.R_max, "width": self.width,
                                "x": x.tolist(), "Z": self.Z})


def ps_approximant(domain, group, x, o=None, s=1.05, R_max=12.0, seed: int = 0, **kw) -> BoundaryMeasure:
    """One-shot approximant; ``seed`` is recorded (the construction is deterministic)."""
    fam = PattersonSullivan(domain, group, s, R_max, o, **kw)
    m = fam.measure(domain.to_chart(x))
    m.meta["seed"] = seed
    return m


# --- boundary correspondences ----------------------------------------------------

def ellipsoid_frame(E: Ellipsoid):
    """Matrix A with A X on the hyperboloid cone for X in the ellipsoid cone
    (Q proportional to A^T J A, J = diag(-1, 1, ..., 1))."""
    w, U = np.linalg.eigh(E.Q)
    order = np.argsort(w)
    w, U = w[order], U[:, order]
    A = np.sqrt(np.abs(w))[:, None] * U.T
    X = E.chart.from_chart(E.basepoint)
    if (A @ X)[0] < 0:
        A = -A
    return A


class IdentityCorrespondence:
    """Ellipsoid domains: the projective map onto the hyperboloid model."""

    def __init__(self, domain: Ellipsoid):
        if not isinstance(domain, Ellipsoid):
            raise ValueError("the identity correspondence needs an ellipsoid domain")
        self.domain = domain
        self.A = ellipsoid_frame(domain)

    def interior(self, x):
        X = self.A @ self.domain.chart.from_chart(np.asarray(x, float))
        return hyp.normalize(X if X[0] > 0 else -X)

    def interior_inverse(self, y):
        X = np.linalg.solve(self.A, np.asarray(y, float))
        return self.domain.chart.to_chart(X)

    def push(self, measure: BoundaryMeasure, x=None) -> BoundaryMeasure:
        if measure.space == "hyperbolic":
            return measure
        X = self.domain.chart.from_chart(measure.points) @ self.A.T
        X = X / X[:, :1]
        return BoundaryMeasure(X[:, 1:], measure.weights, measure.tag, "hyperbolic", measure.labels,
                               dict(measure.meta))


class OrbitRelabel:
    """Atom of mu_x produced by gamma  ->  endpoint of the hyperbolic ray from
    f(x) through rho0(gamma) o0.

    rho0 is the hyperbolic group with the same generators (letters) as the
    group of the domain; its orbit is replayed along the words of the cached
    orbit.  The interior map f is the weighted center of mass of the points
    rho0(gamma) o0 with weights c(d(x, gamma o)), c a smooth bump of radius
    ``radius``; it is equivariant because the weights are.
    """

    def __init__(self, family: PattersonSullivan, rho0, o0=None, radius: float = 2.5):
        self.family = family
        letters0 = rho0.letters()
        letters = family.group.letters()
        if [n for n, _ in letters0] != [n for n, _ in letters]:
            raise ValueError("the two groups must share their generator letters")
        M0 = np.array([m for _, m in letters0])
        n = family.domain.dim
        o0 = np.eye(n + 1)[0] if o0 is None else np.asarray(o0, float)
        P = family.orbit.replay(M0, o0)
        P = np.where(P[:, :1] < 0, -P, P)
        self.hpoints = hyp.normalize(P)
        self.radius = radius

    def interior(self, x, tol=1e-13, max_iter=200):
        d = self.family.distances(x)
        u = np.clip(1 - (d / self.radius) ** 2, 0, None) ** 3
        idx = np.nonzero(u > 0)[0]
        if len(idx) == 0:
            raise UnmappedAtom("no orbit point within the interpolation radius")
        P, w = self.hpoints[idx], u[idx] / u[idx].sum()
        y = hyp.normalize(np.sum(w[:, None] * P, axis=0))
        for _ in range(max_iter):
            g = np.sum(w[:, None] * hyp.log_map(y, P), axis=0)
            y = hyp.exp_map(y, g)
            if hyp.tangent_norm(g) < tol:
                break
        return y

    def push(self, measure: BoundaryMeasure, x) -> BoundaryMeasure:
        if measure.labels is None:
            raise UnmappedAtom("atoms carry no orbit labels")
        labels = np.asarray(measure.labels)
        if np.any(labels >= len(self.hpoints)):
            raise UnmappedAtom("atom label outside the relabeling table")
        fx = self.interior(x)
        V = hyp.log_map(fx, self.hpoints[labels])
        V = V / hyp.tangent_norm(V)[:, None]
        xi = fx[None] + V
        xi = xi / xi[:, :1]
        return BoundaryMeasure(xi[:, 1:], measure.weights, measure.tag, "hyperbolic", labels,
                               dict(measure.meta))


def pushforward(correspondence, measure: BoundaryMeasure, x=None) -> BoundaryMeasure:
    return correspondence.push(measure, x)
