"""Displacement, isometry classification and cusp tools."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm, logm
from scipy.optimize import minimize
from scipy.stats import qmc

from .config import TOL
from .domains import ConvexDomain, Ellipsoid
from .errors import Inconclusive, LevelNotFound, MapDoesNotPreserveDomain
from .metric import Horoball, busemann_chart
from .projective import ProjectiveMap, ProjectivePoint


def _matrix(g):
    return g.matrix if isinstance(g, ProjectiveMap) else np.asarray(g, float)


def check_preserves(domain: ConvexDomain, g, samples: int = 64, seed: int = 0):
    """Sampled check that g maps interior points to interior points."""
    if domain.approximation:
        return
    Y = domain.sample_interior(samples, np.random.default_rng(seed))
    img = domain.chart.map_point(ProjectiveMap(_matrix(g)), Y)
    if not np.all(domain.margin(img) > -TOL.boundary_margin):
        raise MapDoesNotPreserveDomain("map sends interior points outside the domain")


def displacement_chart(domain: ConvexDomain, g, Y):
    """d(y, g y) for chart points Y (vectorized, no preservation check)."""
    M = _matrix(g)
    X = domain.chart.from_chart(np.asarray(Y, float))
    return domain.distance_homogeneous(X, X @ M.T)


def displacement(domain: ConvexDomain, g, x) -> float:
    check_preserves(domain, g)
    y = domain.to_chart(x)
    return float(displacement_chart(domain, g, y))


@dataclass(frozen=True)
class IsometryClass:
    kind: str                 # "hyperbolic", "parabolic", "elliptic-or-identity"
    evidence: float           # displacement infimum estimate
    heuristic: bool = True
    details: dict = field(default_factory=dict)


def _fixed_boundary_points(domain, M):
    """Chart positions of real eigenvectors of M lying on the boundary."""
    vals, vecs = np.linalg.eig(M)
    out = []
    for lam, v in zip(vals, vecs.T):
        if abs(lam.imag) > 1e-9 * abs(lam):
            continue
        v = np.real(v)
        f = domain.chart.evaluate(v)
        if abs(f) < 1e-12:
            continue
        y = domain.chart.to_chart(v)
        if abs(domain.margin(y)) < 1e-6:
            out.append((float(np.real(lam)), y))
    return out


def _minimize_displacement(domain, M, rng, grid=400):
    Y = domain.sample_interior(grid, rng, shrink=0.98)
    Y = np.vstack([domain.basepoint[None], Y])
    d = displacement_chart(domain, M, Y)
    best = Y[np.argmin(d)]

    def f(y):
        if domain.margin(y) <= 1e-9:
            return 1e6
        return float(displacement_chart(domain, M, y[None])[0])

    res = minimize(f, best, method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
    return res.x, float(res.fun), float(np.min(d))


def classify(domain: ConvexDomain, g, seed: int = 0) -> IsometryClass:
    """Metric classification by the displacement infimum (heuristic, flagged).

    - elliptic-or-identity: an interior point is (numerically) fixed;
    - parabolic: displacement tends to 0 (below the parabolic threshold) along
      a sequence approaching a fixed boundary point, without being attained;
    - hyperbolic: a positive infimum attained on the segment between two
      fixed boundary points.
    """
    M = _matrix(g)
    check_preserves(domain, M)
    rng = np.random.default_rng(seed)
    y, dmin, dgrid = _minimize_displacement(domain, M, rng)
    if dmin < 1e-9:
        return IsometryClass("elliptic-or-identity", dmin, details={"fixed_point": y.tolist()})
    fixed = _fixed_boundary_points(domain, M)
    o = domain.basepoint
    for lam, xi in fixed:
        ks = np.arange(1, 31)
        seq = xi + (o - xi) * 2.0 ** -ks[:, None]
        d = displacement_chart(domain, M, seq)
        if np.all(np.diff(d) < 0) and d[-1] < TOL.parabolic_displacement and d[-1] > 0:
            if len(fixed) == 1 or all(np.allclose(xi, x2, atol=1e-6) for _, x2 in fixed):
                return IsometryClass("parabolic", float(d[-1]),
                                     details={"fixed_point": xi.tolist(), "sequence": d.tolist()})
    distinct = []
    for lam, xi in fixed:
        if all(np.linalg.norm(xi - x2) > 1e-6 for _, x2 in distinct):
            distinct.append((lam, xi))
    if len(distinct) >= 2:
        distinct.sort(key=lambda p: -abs(p[0]))
        a, b = distinct[0][1], distinct[-1][1]
        s = np.linspace(0.1, 0.9, 9)[:, None]
        axis = a + s * (b - a)
        d_axis = displacement_chart(domain, M, axis)
        ell = float(np.median(d_axis))
        if ell > TOL.parabolic_displacement and np.ptp(d_axis) < 1e-6 * max(1.0, ell) \
                and dmin >= ell * (1 - 1e-6):
            return IsometryClass("hyperbolic", ell, details={"axis": [a.tolist(), b.tolist()]})
    raise Inconclusive(f"displacement infimum estimate {dmin:.3g} does not match any class")


def flow_generators(generators):
    """Real logarithms of commuting unipotent generators."""
    return [np.real(logm(_matrix(p))) for p in generators]


def horosphere_patch(domain, center, basepoint, level, generators, count, seed=0):
    """Points of one fundamental patch of a horosphere for a parabolic group.

    A point x0 of the horosphere is moved by exp(sum t_i log p_i) for t in
    the unit cube (a scrambled Sobol set); for unipotent generators of an
    ellipsoid cusp these flows preserve every horosphere centered at the
    fixed point, and the images of x0 under the integer points of the cube
    are its orbit under the cusp group.
    """
    logs = flow_generators(generators)
    # x0: the horosphere point on the line through the basepoint and the center
    far = domain.boundary_point(basepoint - center)
    lo, hi = 1e-12, 1 - 1e-15
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        P = far + mid * (center - far)
        if busemann_chart(domain, basepoint, center, P[None])[0] > level:
            lo = mid
        else:
            hi = mid
    x0 = far + 0.5 * (lo + hi) * (center - far)
    X0 = domain.chart.from_chart(x0)
    k = len(logs)
    m = int(np.ceil(np.log2(max(count, 2))))
    T = qmc.Sobol(k, scramble=True, seed=seed).random_base2(m)
    T = np.vstack([np.zeros(k), T])
    N = np.einsum("si,ijk->sjk", T, np.array(logs))
    X = np.einsum("sjk,k->sj", np.array([expm(A) for A in N]), X0)
    return domain.chart.to_chart(X)


def _max_short_loop(domain, generators, Y):
    return max(float(np.max(displacement_chart(domain, p, Y))) for p in generators)


def short_loop_horoball(domain: ConvexDomain, generators, center, eps0: float, o=None, *,
                        samples: int = 1024, max_steps: int = 60, seed: int = 0) -> Horoball:
    """Horoball centered at ``center`` on which every generator moves points by < eps0.

    The level is found by bisection: a level passes when all sampled points of
    the horosphere have displacement < eps0 for every generator.  The level
    returned is one bisection step deeper than the last passing one, and is
    itself checked.
    """
    if eps0 <= 0:
        raise ValueError("eps0 must be positive")
    gens = [_matrix(p) for p in generators]
    center = np.asarray(center, float)
    o = domain.basepoint if o is None else np.asarray(o, float)

    def passes(level):
        Y = horosphere_patch(domain, center, o, level, gens, samples, seed)
        Y = Y[domain.contains_chart(Y)]
        if len(Y) < samples:
            return False, np.inf
        worst = _max_short_loop(domain, gens, Y)
        return worst < eps0, worst

    steps = 0
    hi, lo = 0.0, None
    ok, _ = passes(hi)
    steps += 1
    if ok:
        lo, hi = hi, None
        while steps < max_steps:
            cand = lo + 1.0
            ok, _ = passes(cand)
            steps += 1
            if not ok:
                hi = cand
                break
            lo = cand
        if hi is None:
            hi = lo + 1.0
    else:
        step = 1.0
        while steps < max_steps:
            cand = hi - step
            ok, _ = passes(cand)
            steps += 1
            if ok:
                lo = cand
                break
            hi = cand
            step *= 2
        if lo is None:
            raise LevelNotFound("no horosphere level with small displacements (not parabolic?)")
    while steps < max_steps and hi - lo > 1e-3:
        mid = 0.5 * (lo + hi)
        ok, _ = passes(mid)
        steps += 1
        if ok:
            lo = mid
        else:
            hi = mid
    level = lo - (hi - lo)
    ok, worst = passes(level)
    if not ok:
        raise LevelNotFound("certified level failed its final check")
    ball = Horoball(domain, center, o, level)
    object.__setattr__(ball, "certificate", {"eps0": eps0, "max_displacement": worst,
                                             "samples": samples, "steps": steps})
    return ball


def horoball_ellipsoid(center_theta, level: float, n: int | None = None) -> Ellipsoid:
    """Horoball {B_{0, xi} < level} of the unit ball as an ellipsoid.

    With l = (1, theta) and c = e^level, the horoball is
    {<X, l>^2 < c^2 (-<X, X>)} = {X^T (J l l^T J + c^2 J) X < 0}; in the
    Klein chart it is an ellipse tangent to the sphere at theta.
    """
    theta = np.asarray(center_theta, float)
    theta = theta / np.linalg.norm(theta)
    n = theta.size if n is None else n
    J = np.diag([-1.0] + [1.0] * n)
    ell = np.concatenate([[1.0], theta])
    Jl = J @ ell
    c = np.exp(level)
    return Ellipsoid(np.outer(Jl, Jl) + c * c * J)


@dataclass
class OsculationReport:
    inner_in_domain: bool
    domain_in_outer: bool
    tangent: bool
    margins: dict

    @property
    def passed(self) -> bool:
        return self.inner_in_domain and self.domain_in_outer and self.tangent


def osculating_ellipsoids(E_in: ConvexDomain, domain: ConvexDomain, E_out: ConvexDomain, theta,
                          samples: int = 4096, seed: int = 0, tol: float = 1e-8) -> OsculationReport:
    """Sampled checks of E_in within the domain within E_out, tangent at theta."""
    rng = np.random.default_rng(seed)
    theta = domain.to_chart(theta) if isinstance(theta, ProjectivePoint) else np.asarray(theta, float)
    Yin = np.vstack([E_in.sample_interior(samples, rng, shrink=1.0), E_in.sample_boundary(samples, rng)])
    Yd = np.vstack([domain.sample_interior(samples, rng, shrink=1.0), domain.sample_boundary(samples, rng)])
    inner_ok = bool(np.all(domain.margin(Yin) > -tol))
    outer_ok = bool(np.all(E_out.margin(Yd) > -tol))
    margins = {"inner": float(E_in.margin(theta)), "outer": float(E_out.margin(theta)),
               "domain": float(domain.margin(theta))}
    tangent = abs(margins["inner"]) < tol and abs(margins["outer"]) < tol
    return OsculationReport(inner_ok, outer_ok, tangent, margins)
