"""Experiments run by ``hilbertlab experiment``.

Each experiment takes a built scene and a parameter dictionary and returns
an :class:`ExperimentOutput`: CSV rows (one measured quantity per row) and
a JSON record with the same numbers in structured form.  Every random
choice derives from the scene seed, so reruns are byte-identical.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import hyperbolic as hyp
from .barycenter import (eccentricity, halfspace_control_D, hilbert_density, homotopy_track,
                         jacobian_check, natural_map)
from .domains import Ellipsoid
from .errors import HilbertLabError, SceneError
from .groups import builtin_groups
from .measures import IdentityCorrespondence, OrbitRelabel, PattersonSullivan
from .metric import distance_chart, geodesic_point_chart
from .scene import group_basepoint, reference_hull
from .volume import ball_volume, entropy_ball_growth, entropy_poincare

EXPERIMENTS = ("entropy", "volume", "natural-map", "homotopy", "jacobian-bound", "rigidity-ratio")


@dataclass
class ExperimentOutput:
    name: str
    columns: list
    rows: list
    record: dict
    violations: int = 0
    meta: dict = field(default_factory=dict)


def param_hash(scene, name, params) -> str:
    blob = json.dumps({"scene": scene.to_json(), "experiment": name, "params": params},
                      sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _defaults(built, name, overrides):
    p = dict(built.scene.params.get(name, {}))
    p.update({k: v for k, v in overrides.items() if v is not None})
    return p


def points_near(built, count, radius, rng):
    """``count`` chart points at Hilbert distance <= radius from the basepoint."""
    D, o = built.domain, built.basepoint
    n = D.dim
    U = rng.standard_normal((count, n))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    Xi = o + D.exit_time(np.broadcast_to(o, U.shape), U)[:, None] * U
    s = radius * rng.uniform(0.2, 1.0, count) ** (1.0 / n)
    return geodesic_point_chart(D, np.broadcast_to(o, U.shape), Xi, s)


def entropy_estimate(built, params):
    """Poincare estimate of the scene's group (with a reference hull cap for hulls)."""
    ref = reference_hull(built)
    X = built.domain.chart.from_chart(built.basepoint)
    return entropy_poincare(built.domain, built.group, X, float(params.get("R_max", 10.0)),
                            int(params.get("seed", 0)), reference_domain=ref,
                            shards=int(params.get("shards", 1)))


def ps_exponent(built, params):
    """s = h + gap, with h from the scene (``h``), the ellipsoid value n - 1, or
    a Poincare estimate."""
    gap = float(params.get("gap", 0.05))
    if "h" in params:
        return float(params["h"]) + gap, float(params["h"])
    if isinstance(built.domain, Ellipsoid):
        h = built.domain.dim - 1.0
    else:
        h = entropy_estimate(built, params).value
    return h + gap, h


def correspondence(built, family, params):
    if isinstance(built.domain, Ellipsoid):
        return IdentityCorrespondence(built.domain)
    name = params.get("rho0", built.scene.params.get("rho0"))
    if name not in builtin_groups():
        raise SceneError("non-ellipsoid natural maps need params.rho0 naming a hyperbolic group")
    rho0 = builtin_groups()[name]()
    X0 = rho0.coxeter.frame @ rho0.coxeter.chamber_point() if rho0.coxeter is not None \
        else np.eye(built.domain.dim + 1)[0]
    X0 = hyp.normalize(X0 if X0[0] > 0 else -X0)
    return OrbitRelabel(family, rho0, X0)


def _family(built, params, pad=1.0):
    if built.group is None:
        raise SceneError("this experiment needs a group")
    s, h = ps_exponent(built, params)
    fam = PattersonSullivan(built.domain, built.group, s, float(params.get("R_max", 10.0)),
                            built.domain.chart.from_chart(built.basepoint), pad=pad,
                            shards=int(params.get("shards", 1)))
    return fam, s, h


def _f(x):
    return float(f"{float(x):.12g}")


# --- experiments -----------------------------------------------------------------------

def run_entropy(built, params, rng):
    rows, rec = [], {}
    n = built.domain.dim
    methods = params.get("methods")
    if methods is None:
        methods = ["ball_growth"] if not built.domain.approximation else []
        if built.group is not None and built.group.coxeter is not None:
            methods.append("poincare")
    for m in methods:
        if m == "ball_growth":
            est = entropy_ball_growth(built.domain, built.domain.chart.point(built.basepoint),
                                      float(params.get("R1", 5.0)), float(params.get("R2", 9.0)),
                                      int(params["seed"]), shards=int(params.get("shards", 1)),
                                      max_samples=int(params.get("budget") or 1 << 16))
        elif m == "poincare":
            est = entropy_estimate(built, params)
        else:
            raise SceneError(f"unknown entropy method {m!r}")
        rows.append([m, _f(est.value), _f(est.standard_error), _f(est.window[0]), _f(est.window[1]),
                     _f(n - 1)])
        rec[m] = {"estimate": est.value, "stderr": est.standard_error, "window": list(est.window),
                  "profile": [list(map(float, p)) for p in est.profile], "meta": est.meta}
    return ExperimentOutput("entropy", ["method", "estimate", "stderr", "window_lo", "window_hi",
                                        "hyperbolic_value"], rows, rec)


def run_volume(built, params, rng):
    rows, rec = [], []
    radii = params.get("radii", [1.0, 2.0, 4.0, 6.0])
    x = built.domain.chart.point(built.basepoint)
    for R in radii:
        v = ball_volume(built.domain, x, float(R), int(params["seed"]), shards=int(params.get("shards", 1)),
                        max_samples=int(params.get("budget") or 1 << 16))
        rows.append([_f(R), _f(v.value), _f(v.stderr), v.samples])
        rec.append({"R": R, "volume": v.value, "stderr": v.stderr, "samples": v.samples})
    return ExperimentOutput("volume", ["R", "volume", "stderr", "samples"], rows, {"balls": rec})


def run_natural_map(built, params, rng):
    fam, s, h = _family(built, params)
    corr = correspondence(built, fam, params)
    P = points_near(built, int(params.get("points", 4)), float(params.get("radius", 0.5)), rng)
    rows, rec = [], []
    for x in P:
        val = natural_map(fam, corr, x)
        fx = corr.interior(x)
        gap = float(hyp.distance(val.point, fx))
        k = hyp.to_klein(val.point)
        rows.append([*map(_f, x), *map(_f, k), _f(gap), val.result.iterations, val.meta["atoms"]])
        rec.append({"x": x.tolist(), "phi": k.tolist(), "distance_to_f": gap,
                    "iterations": val.result.iterations, "atoms": val.meta["atoms"]})
    n = built.domain.dim
    cols = [f"x{i}" for i in range(n)] + [f"phi{i}" for i in range(n)] + ["distance_to_f", "iterations",
                                                                           "atoms"]
    return ExperimentOutput("natural-map", cols, rows, {"s": s, "h": h, "R_max": fam.R_max, "points": rec})


def cusp_setup(built, params):
    """Cusp center (chart), a certified horoball and deep sample points."""
    from .dynamics import short_loop_horoball
    from .suites import cusp_data
    data = cusp_data(built)
    if data is None:
        raise SceneError("the scene has no cusp")
    gens, center = data
    eps0 = float(params.get("eps0", 0.1))
    ball = short_loop_horoball(built.domain, gens, center, eps0, built.basepoint)
    return gens, center, ball


def deep_points(built, ball, count, depth, rng):
    """The ``count`` points closest to the basepoint on the horosphere
    ``depth`` units inside the certified horoball."""
    from .metric import horosphere_points
    o = built.basepoint
    P = horosphere_points(built.domain, o, ball.center, ball.level - depth, 8 * count, rng)
    d = distance_chart(built.domain, np.broadcast_to(o, P.shape), P)
    return P[np.sort(np.argsort(d, kind="stable")[:count])]


def predicted_halfspace(fx, xi, margin):
    """Halfspace at infinity whose bounding hyperplane is perpendicular to the
    ray from f(x) to the cusp, ``margin`` units behind f(x); returned with its
    enlargement by the halfspace-control constant."""
    v = hyp.direction_to_ideal(fx, xi)
    p = hyp.exp_map(fx, -margin * v)
    H = hyp.HalfspaceAtInfinity(hyp.direction_to_ideal(p, xi))
    D = halfspace_control_D(fx.size - 1)
    return H, H.shifted(D), D


def run_homotopy(built, params, rng):
    if not isinstance(built.domain, Ellipsoid):
        raise SceneError("homotopy diagnostics are implemented for ellipsoid scenes")
    from .measures import halfspace_mass, visual_measure
    gens, center, ball = cusp_setup(built, params)
    P = deep_points(built, ball, int(params.get("points", 10)), float(params.get("depth", 3.0)), rng)
    o = built.basepoint
    reach = float(np.max(distance_chart(built.domain, np.broadcast_to(o, P.shape), P)))
    fam, s, h = _family(built, params, pad=reach + 0.1)
    corr = correspondence(built, fam, params)
    xi = corr.A @ built.domain.chart.from_chart(center)
    xi = xi / xi[0]
    base = corr.interior(o)
    ts = np.linspace(0.0, 1.0, int(params.get("steps", 11)))
    margin = float(params.get("margin", 2.0))
    atoms = int(params.get("visual_atoms", 4096))
    rows, rec, violations = [], [], 0
    for i, x in enumerate(P):
        fx = corr.interior(x)
        H, H0, D = predicted_halfspace(fx, xi, margin)
        mu = corr.push(fam.measure(x), x)
        nu = visual_measure(fx, atoms, int(params["seed"]) + i)
        frac_mu = halfspace_mass(mu, H) / mu.total_mass
        frac_nu = halfspace_mass(nu, H) / nu.total_mass
        track = homotopy_track(fam, corr, x, ts, atoms, int(params["seed"]) + i, cusp=(xi, base))
        inside = [bool(H0.contains(r["point"])) for r in track]
        applicable = bool(frac_mu > 2 / 3 and frac_nu > 2 / 3)
        violations += int(applicable and not all(inside))
        for r, ok in zip(track, inside):
            rows.append([i, _f(r["t"]), *map(_f, r["klein"]), _f(r["busemann"]),
                         _f(-float(H0.signed_distance(r["point"]))), int(ok)])
        rec.append({"x": x.tolist(), "mass_fraction_ps": frac_mu, "mass_fraction_visual": frac_nu,
                    "applicable": applicable, "inside": inside, "D": D,
                    "track": [{"t": r["t"], "klein": r["klein"].tolist(), "busemann": r["busemann"]}
                              for r in track]})
    n = built.domain.dim
    cols = ["point", "t"] + [f"k{i}" for i in range(n)] + ["busemann", "depth_in_H0", "inside_H0"]
    return ExperimentOutput("homotopy", cols, rows,
                            {"s": s, "h": h, "horoball_level": ball.level, "tracks": rec}, violations)


def run_jacobian(built, params, rng):
    fam, s, h = _family(built, params)
    corr = correspondence(built, fam, params)
    P = points_near(built, int(params.get("points", 20)), float(params.get("radius", 0.5)), rng)
    if isinstance(built.domain, Ellipsoid):
        N = 1.0
    else:
        N = eccentricity(built.domain, P).N_max
    h_omega = float(params.get("h_bound", s))
    n = built.domain.dim

    def phi(y):
        return hyp.to_klein(natural_map(fam, corr, y).point)

    rows, rec, violations = [], [], 0
    for x in P:
        rep = jacobian_check(phi, x, hilbert_density(built.domain, x), h_omega, n - 1.0, N,
                             float(params.get("step", 1e-3)))
        violations += int(rep.violation)
        rows.append([*map(_f, x), _f(rep.jacobian), _f(rep.error), _f(rep.bound), _f(rep.ratio),
                     int(rep.violation)])
        rec.append(rep.to_json())
    cols = [f"x{i}" for i in range(n)] + ["jacobian", "error", "bound", "ratio", "violation"]
    return ExperimentOutput("jacobian-bound", cols, rows,
                            {"s": s, "h": h, "h_bound": h_omega, "N": N, "points": rec}, violations)


def chamber_area(group):
    """Hyperbolic area of a Coxeter triangle chamber (Gauss-Bonnet)."""
    m = group.coxeter.orders
    angles = [0.0 if m[i, j] == 0 else np.pi / m[i, j] for i, j in ((0, 1), (1, 2), (0, 2))]
    return float(np.pi - sum(angles))


def run_rigidity(built, params, rng):
    G, D = built.group, built.domain
    if G is None or G.coxeter is None or np.any(G.coxeter.orders == 0) or D.dim != 2:
        raise SceneError("rigidity-ratio needs a cocompact Coxeter group on a disc-like domain")
    from .orbits import orbit_ball
    o = built.basepoint
    O = D.chart.from_chart(o)
    ang = np.linspace(0, 2 * np.pi, int(params.get("rays", 512)), endpoint=False)
    U = np.stack([np.cos(ang), np.sin(ang)], 1)
    Xi = o + D.exit_time(np.broadcast_to(o, U.shape), U)[:, None] * U

    def ray(s):
        return geodesic_point_chart(D, np.broadcast_to(o, U.shape), Xi, s)

    def predicate(R):
        # inside B(o, R) only orbit points with d(o, g o) <= 2R can be closer than o
        orb = orbit_ball(D, G, O, 2 * R)
        sel = orb.meta["within"] & (orb.distance > 1e-9)
        others = D.chart.to_chart(orb.points[sel])

        def inside(Y):
            d0 = distance_chart(D, np.broadcast_to(o, Y.shape), Y)
            ok = np.ones(len(Y), bool)
            for p in others:
                ok &= d0 <= distance_chart(D, np.broadcast_to(p, Y.shape), Y)
            return ok
        return inside, len(others)

    # the Dirichlet domain is star-shaped about o; grow R until it is enclosed
    reach = float(params.get("dirichlet_reach", 0.5))
    for _ in range(6):
        dirichlet, _ = predicate(reach)
        if not np.any(dirichlet(ray(np.full(len(U), reach)))):
            break
        reach *= 2
    else:
        raise HilbertLabError("Dirichlet domain not enclosed; the group may not be cocompact")
    lo, hi = np.zeros(len(U)), np.full(len(U), reach)
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        inside = dirichlet(ray(mid))
        lo, hi = np.where(inside, mid, lo), np.where(inside, hi, mid)
    rho = 1.05 * float(hi.max())
    dirichlet, neighbours = predicate(rho)
    vol = ball_volume(D, D.chart.point(o), rho, int(params["seed"]), region=dirichlet,
                      max_samples=int(params.get("budget") or 1 << 17),
                      target=float(params.get("target", 0.005)))
    if "h" in params:
        h, h_err = float(params["h"]), float(params.get("h_err", 0.0))
    else:
        est = entropy_estimate(built, params)
        h, h_err = est.value, est.standard_error
    n = D.dim
    if isinstance(D, Ellipsoid):
        N = 1.0
    else:
        N = eccentricity(D, points_near(built, 20, rho, rng)).N_max
    vol0 = chamber_area(G)
    left = N * h ** n * vol.value
    right = (n - 1.0) ** n * vol0
    rel = np.hypot(n * h_err / h, vol.stderr / vol.value)
    ratio = left / right
    rows = [[_f(N), _f(h), _f(h_err), _f(vol.value), _f(vol.stderr), _f(vol0), _f(left), _f(right),
             _f(ratio), _f(ratio * rel)]]
    cols = ["N", "h", "h_err", "hilbert_volume", "volume_err", "hyperbolic_volume", "left", "right",
            "ratio", "ratio_err"]
    return ExperimentOutput("rigidity-ratio", cols, rows,
                            dict(zip(cols, [float(v) for v in rows[0]])) | {"dirichlet_radius": rho, "neighbours": neighbours})


RUNNERS = {"entropy": run_entropy, "volume": run_volume, "natural-map": run_natural_map,
           "homotopy": run_homotopy, "jacobian-bound": run_jacobian, "rigidity-ratio": run_rigidity}


def run_experiment(built, name, seed, overrides=None):
    params = _defaults(built, name, overrides or {})
    params["seed"] = seed
    rng = np.random.default_rng(np.random.SeedSequence([seed, EXPERIMENTS.index(name)]))
    out = RUNNERS[name](built, params, rng)
    tag = param_hash(built.scene, name, params)
    out.columns = out.columns + ["seed", "budget", "version", "param_hash"]
    out.rows = [list(r) + [seed, params.get("budget") or "", __version__, tag] for r in out.rows]
    out.meta = {"params": params, "param_hash": tag, "version": __version__}
    return out
