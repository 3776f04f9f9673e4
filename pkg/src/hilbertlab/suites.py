"""Property suites run by ``hilbertlab verify``.

Each check returns an :class:`Invariant` record: how many trials were run,
how many violated the tolerance and the worst margin (tolerance minus
error, so negative means violated).  A check that cannot run on the scene
is reported as skipped; a check that raises a library error counts as one
violation and carries the message.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import hyperbolic as hyp
from .barycenter import bar, eccentricity, halfspace_control_D
from .domains import Ellipsoid
from .errors import HilbertLabError
from .measures import (BoundaryMeasure, PattersonSullivan, ellipsoid_frame,
                       halfspace_mass, visual_measure)
from .metric import busemann_chart, distance_chart, finsler_chart

# the equivariance and homogeneity checks compare two solves, so they are
# run well below the default stopping tolerance
TIGHT = 1e-12

SUITES = ("metric", "busemann", "measures", "barycenter", "cusp", "eccentricity")


@dataclass
class Invariant:
    name: str
    trials: int = 0
    violations: int = 0
    worst_margin: float = float("inf")
    skipped: str | None = None
    detail: dict = field(default_factory=dict)

    def record(self, errors, tol):
        errors = np.atleast_1d(np.asarray(errors, float))
        margin = tol - errors
        margin = np.where(np.isnan(margin), -np.inf, margin)
        self.trials += int(errors.size)
        self.violations += int(np.sum(margin < 0))
        if errors.size:
            self.worst_margin = min(self.worst_margin, float(np.min(margin)))
        return self

    def to_json(self) -> dict:
        out = {"name": self.name, "trials": self.trials, "violations": self.violations,
               "worst_margin": None if not np.isfinite(self.worst_margin) else self.worst_margin}
        if self.skipped:
            out["skipped"] = self.skipped
        if self.detail:
            out["detail"] = self.detail
        return out


def _guard(name, fn):
    inv = Invariant(name)
    try:
        fn(inv)
    except HilbertLabError as exc:
        inv.trials += 1
        inv.violations += 1
        inv.worst_margin = -np.inf
        inv.detail["error"] = f"{type(exc).__name__}: {exc}"
    return inv


def _skip(name, why):
    return Invariant(name, skipped=why)


def _points(domain, count, rng, shrink=0.95):
    return domain.sample_interior(count, rng, shrink=shrink)


# --- metric -----------------------------------------------------------------------

def metric_suite(built, rng, trials=500):
    D, G = built.domain, built.group
    out = []

    def symmetry(inv):
        X, Y = _points(D, trials, rng), _points(D, trials, rng)
        a, b = distance_chart(D, X, Y), distance_chart(D, Y, X)
        inv.record(np.abs(a - b) / np.maximum(1, a), 1e-9)

    def identity(inv):
        X = _points(D, trials, rng)
        inv.record(np.abs(distance_chart(D, X, X)), 0.0)

    def triangle(inv):
        X, Y, Z = (_points(D, trials, rng) for _ in range(3))
        gap = distance_chart(D, X, Z) - distance_chart(D, X, Y) - distance_chart(D, Y, Z)
        inv.record(gap, 1e-9)

    def finsler(inv):
        X = _points(D, trials, rng, shrink=0.8)
        V = rng.standard_normal(X.shape)
        h = 1e-4
        d1 = distance_chart(D, X, X + h * V) / h
        d2 = distance_chart(D, X, X + 0.5 * h * V) / (0.5 * h)
        est = 2 * d2 - d1
        F = finsler_chart(D, X, V)
        inv.record(np.abs(est - F) / F, 1e-6)

    out += [_guard("distance symmetry", symmetry), _guard("distance of a point to itself", identity),
            _guard("triangle inequality", triangle), _guard("finsler norm is the distance derivative", finsler)]

    if isinstance(D, Ellipsoid):
        def oracle(inv):
            A = ellipsoid_frame(D)
            X, Y = _points(D, trials, rng), _points(D, trials, rng)
            hx = hyp.normalize(D.chart.from_chart(X) @ A.T)
            hy = hyp.normalize(D.chart.from_chart(Y) @ A.T)
            ref = hyp.distance(hx, hy)
            inv.record(np.abs(distance_chart(D, X, Y) - ref) / np.maximum(ref, 1e-300), 1e-9)
        out.append(_guard("ellipsoid closed form", oracle))

    if G is None:
        out.append(_skip("group isometries", "scene has no group"))
    elif D.approximation:
        out.append(_skip("group isometries", "domain approximates the invariant one"))
    else:
        def isometries(inv):
            G.validate(D)
            X, Y = _points(D, trials // 5, rng), _points(D, trials // 5, rng)
            d = distance_chart(D, X, Y)
            for _, M in G.letters():
                gX = D.chart.to_chart(D.chart.from_chart(X) @ M.T)
                gY = D.chart.to_chart(D.chart.from_chart(Y) @ M.T)
                inv.record(np.abs(distance_chart(D, gX, gY) - d) / np.maximum(1, d), 1e-8)
        out.append(_guard("group isometries", isometries))
    return out


# --- Busemann -------------------------------------------------------------------------

def busemann_suite(built, rng, trials=500):
    D = built.domain
    o = built.basepoint
    out = []
    if D.approximation:
        return [_skip("busemann", "closed form needs a C^1 boundary")]
    xi = D.sample_boundary(1, rng)[0]

    def at_basepoint(inv):
        inv.record(abs(float(busemann_chart(D, o, xi, o))), 0.0)

    def lipschitz(inv):
        Y, Z = _points(D, trials, rng), _points(D, trials, rng)
        gap = np.abs(busemann_chart(D, o, xi, Y) - busemann_chart(D, o, xi, Z)) - distance_chart(D, Y, Z)
        inv.record(gap, 1e-8)

    def cocycle(inv):
        Y, Z = _points(D, trials, rng), _points(D, trials, rng)
        lhs = busemann_chart(D, o, xi, Y)
        rhs = busemann_chart(D, o, xi, Z) + busemann_chart(D, Z, xi, Y)
        inv.record(np.abs(lhs - rhs), 1e-8)

    out += [_guard("busemann vanishes at the basepoint", at_basepoint),
            _guard("busemann is 1-Lipschitz", lipschitz), _guard("busemann cocycle", cocycle)]
    if isinstance(D, Ellipsoid):
        def closed(inv):
            A = ellipsoid_frame(D)
            Y = _points(D, trials, rng)
            h = lambda P: hyp.normalize(D.chart.from_chart(P) @ A.T)
            X = A @ D.chart.from_chart(xi)
            ref = hyp.busemann(h(o), X / X[0], h(Y))
            inv.record(np.abs(busemann_chart(D, o, xi, Y) - ref), 1e-6)
        out.append(_guard("busemann matches the hyperbolic closed form", closed))
    return out


# --- measures ---------------------------------------------------------------------------

def measures_suite(built, rng, s=1.05, R_max=8.0):
    D, G = built.domain, built.group
    n = D.dim
    out = []

    def visual_half(inv):
        nu = visual_measure(np.eye(n + 1)[0], 4096, int(rng.integers(2 ** 31)))
        for _ in range(50):
            u = rng.standard_normal(n)
            H = hyp.HalfspaceAtInfinity.from_klein(u, 0.0)
            frac = halfspace_mass(nu, H) / nu.total_mass
            inv.record(abs(frac - 0.5), 3.0 / np.sqrt(4096))

    def additivity(inv):
        for _ in range(50):
            y = hyp.from_klein(0.5 * rng.uniform(-1, 1, n) / np.sqrt(n))
            nu = visual_measure(y, 1024, int(rng.integers(2 ** 31)))
            u = rng.standard_normal(n)
            H = hyp.HalfspaceAtInfinity.from_klein(u / np.linalg.norm(u), rng.uniform(-0.5, 0.5))
            total = halfspace_mass(nu, H) + halfspace_mass(nu, H.complement())
            inv.record(abs(total - nu.total_mass) / nu.total_mass, 1e-12)

    out += [_guard("visual measure halves through the center", visual_half),
            _guard("halfspace mass additivity", additivity)]

    if G is None or G.coxeter is None:
        out.append(_skip("patterson-sullivan", "needs a lattice group"))
        return out
    fam_box = {}

    def family():
        if "f" not in fam_box:
            fam_box["f"] = PattersonSullivan(D, G, s, R_max, D.chart.from_chart(built.basepoint))
        return fam_box["f"]

    def normalization(inv):
        mu = family().measure(built.basepoint)
        inv.record(abs(mu.total_mass - 1.0), 1e-12)
        inv.detail["max_atom"] = mu.max_atom()
        inv.record(mu.max_atom() - 0.5 * mu.total_mass, 0.0)

    def equivariance(inv):
        fam = family()
        for _ in range(5):
            x = built.basepoint + 0.05 * rng.standard_normal(n)
            name, M = G.letters()[int(rng.integers(len(G.letters())))]
            gx = D.chart.to_chart(M @ D.chart.from_chart(x))
            if fam.distances(gx)[0] > fam.pad:
                continue
            a, b = fam.measure(x), fam.measure(gx)
            pushed = D.chart.to_chart(D.chart.from_chart(a.points) @ M.T)
            ka = np.lexsort(np.round(pushed, 9).T)
            kb = np.lexsort(np.round(b.points, 9).T)
            if len(ka) != len(kb):
                inv.record(np.inf, 0)
                continue
            inv.record(np.max(np.abs(pushed[ka] - b.points[kb])), 1e-7)
            inv.record(np.max(np.abs(a.weights[ka] - b.weights[kb])), 1e-9)

    def band(inv):
        fam = family()
        inside, near = 0, 0
        for _ in range(40):
            x = built.basepoint + 0.08 * rng.standard_normal(n)
            y = built.basepoint + 0.08 * rng.standard_normal(n)
            if max(fam.distances(x)[0], fam.distances(y)[0]) > fam.pad:
                continue
            d = float(distance_chart(D, x, y))
            mx, my = fam.measure(x), fam.measure(y)
            u = rng.standard_normal(n)
            c = float(u @ built.basepoint)
            ax = mx.weights[mx.points @ u >= c].sum()
            ay = my.weights[my.points @ u >= c].sum()
            if ax <= 0 or ay <= 0:
                continue
            excess = abs(np.log(ax / ay)) - s * d
            inside += int(excess <= 1e-12)
            near += int(excess <= s * d + 1e-12)
            inv.trials += 1
            inv.worst_margin = min(inv.worst_margin, -float(excess))
        inv.violations = inv.trials - near
        inv.detail = {"within_band": int(inside), "within_twice_band": int(near)}

    out += [_guard("patterson-sullivan normalization", normalization),
            _skip("patterson-sullivan equivariance", "domain approximates the invariant one")
            if D.approximation else _guard("patterson-sullivan equivariance", equivariance),
            _guard("transformation rule band", band)]
    return out


# --- barycenter -----------------------------------------------------------------------

def _random_measure(rng, n, atoms=12):
    U = rng.standard_normal((atoms, n))
    return BoundaryMeasure(U, rng.uniform(0.5, 1.5, atoms))


def barycenter_suite(built, rng, trials=40):
    n = built.domain.dim
    out = []

    def roots(inv):
        if n != 2:
            inv.skipped = "disc example"
            return
        a = 2 * np.pi * np.arange(3) / 3
        r = bar(BoundaryMeasure(np.stack([np.cos(a), np.sin(a)], 1), np.ones(3)))
        inv.record(np.linalg.norm(r.klein), 1e-8)

    def equivariance(inv):
        for _ in range(trials):
            lam = _random_measure(rng, n)
            g = hyp.random_isometry(n, rng)
            a = g @ bar(lam, tolerance=TIGHT).point
            b = bar(lam.pushed(g), tolerance=TIGHT).point
            inv.record(hyp.distance(a, b), 1e-7)

    def homogeneity(inv):
        for _ in range(trials):
            lam = _random_measure(rng, n)
            a = bar(lam, tolerance=TIGHT).point
            inv.record(hyp.distance(a, bar(lam.scaled(3.7), tolerance=TIGHT).point), 1e-9)

    def start_free(inv):
        for _ in range(trials):
            lam = _random_measure(rng, n)
            s = hyp.from_klein(0.9 * rng.uniform(-1, 1, n) / np.sqrt(n))
            inv.record(hyp.distance(bar(lam).point, bar(lam, start=s).point), 1e-6)

    def convexity(inv):
        from .barycenter import busemann_functional
        for _ in range(trials):
            lam = _random_measure(rng, n)
            p = hyp.from_klein(0.8 * rng.uniform(-1, 1, n) / np.sqrt(n))
            q = hyp.from_klein(0.8 * rng.uniform(-1, 1, n) / np.sqrt(n))
            m = hyp.exp_map(p, 0.5 * hyp.log_map(p, q))
            gap = busemann_functional(m, lam) - 0.5 * (busemann_functional(p, lam) + busemann_functional(q, lam))
            inv.record(gap, 1e-9)

    def visual(inv):
        for _ in range(trials // 4):
            y = hyp.from_klein(0.9 * rng.uniform(-1, 1, n) / np.sqrt(n))
            r = bar(visual_measure(y, 4096, int(rng.integers(2 ** 31))), start=y)
            inv.record(hyp.distance(r.point, y), 0.05)

    def control(inv):
        D = halfspace_control_D(n)
        inv.detail["D"] = D
        for _ in range(trials * 5):
            lam, H = concentrated_measure(rng, n)
            r = bar(lam)
            inv.record(max(H.signed_distance(r.point), 0.0), D)

    out += [_guard("three roots of unity", roots), _guard("barycenter equivariance", equivariance),
            _guard("barycenter is 0-homogeneous", homogeneity),
            _guard("barycenter does not depend on the start", start_free),
            _guard("busemann functional convexity", convexity),
            _guard("visual barycenter", visual), _guard("halfspace control", control)]
    return out


def concentrated_measure(rng, n, atoms=16):
    """Random measure with more than 2/3 of its mass in a random halfspace at infinity."""
    u = rng.standard_normal(n)
    H = hyp.HalfspaceAtInfinity.from_klein(u / np.linalg.norm(u), rng.uniform(-0.9, 0.9))
    inside, outside = [], []
    while len(inside) < atoms or len(outside) < atoms:
        u = rng.standard_normal(n)
        u /= np.linalg.norm(u)
        (inside if H.cap_contains(u[None])[0] else outside).append(u)
    k_in = int(rng.integers(3, atoms + 1))
    k_out = int(rng.integers(1, atoms + 1))
    w_in = rng.uniform(0.2, 1.0, k_in)
    w_out = rng.uniform(0.2, 1.0, k_out)
    w_out *= rng.uniform(0.05, 0.49) * w_in.sum() / w_out.sum()   # outside mass < 1/2 inside
    P = np.vstack([np.array(inside[:k_in]), np.array(outside[:k_out])])
    w = np.concatenate([w_in, w_out])
    lam = BoundaryMeasure(P, w)
    if lam.max_atom() >= 0.5 * lam.total_mass:
        return concentrated_measure(rng, n, atoms)
    return lam, H


# --- cusps --------------------------------------------------------------------------

def cusp_data(built):
    """(generators, center) of a parabolic subgroup when the scene has one."""
    from .groups import cusp_subgroup
    G = built.group
    if G is None:
        return None
    if G.meta.get("kind") == "parabolic":
        return [M for _, M in G.letters()], np.asarray(G.meta["cusp"], float)
    if G.coxeter is not None and np.any(G.coxeter.orders == 0):
        sub, xi = cusp_subgroup(G)
        return [M for _, M in sub.letters()], xi
    return None


def cusp_suite(built, rng):
    from .dynamics import classify, short_loop_horoball
    data = cusp_data(built)
    if data is None:
        return [_skip("cusp", "scene has no parabolic subgroup")]
    gens, center = data
    D = built.domain
    out = []

    def classification(inv):
        for M in gens:
            c = classify(D, M)
            inv.record(0.0 if c.kind == "parabolic" else 1.0, 0.0)

    def horoballs(inv):
        for eps in (0.2, 0.1, 0.05):
            ball = short_loop_horoball(D, gens, center, eps, built.basepoint)
            inv.record(ball.certificate["max_displacement"], eps)
            inv.detail[f"level@{eps}"] = ball.level

    out += [_guard("cusp generators are parabolic", classification),
            _guard("short-loop horoballs", horoballs)]
    return out


# --- eccentricity -----------------------------------------------------------------------

def eccentricity_suite(built, rng, points=20):
    D = built.domain
    out = []
    P = built.basepoint + (_points(D, points, rng, shrink=0.5) - D.basepoint) * 0.5

    def run(inv):
        rep = eccentricity(D, P)
        inv.record(1.0 - rep.N_value, 1e-9)
        inv.detail["N_max"] = rep.N_max
        return rep

    def sandwich(inv):
        rep = eccentricity(D, P)
        inv.record((~rep.sandwich_ok).astype(float), 0.0)

    out += [_guard("eccentricity at least one", run), _guard("eccentricity sandwich", sandwich)]
    if isinstance(D, Ellipsoid):
        def exact(inv):
            rep = eccentricity(D, P)
            inv.record(np.abs(rep.N_value - 1), 1e-6)
            inv.record(np.abs(rep.K - 1), 1e-6)
        out.append(_guard("ellipsoids have eccentricity one", exact))
    return out


RUNNERS = {"metric": metric_suite, "busemann": busemann_suite, "measures": measures_suite,
           "barycenter": barycenter_suite, "cusp": cusp_suite, "eccentricity": eccentricity_suite}


def run_suites(built, names, seed: int):
    report = []
    for k, name in enumerate(names):
        rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
        for inv in RUNNERS[name](built, rng):
            report.append({"suite": name, **inv.to_json()})
    return report
