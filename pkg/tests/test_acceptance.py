"""Exit criteria.  Each test prints one ``CRITERION k: PASS|FAIL`` line with the
measured numbers and fails when the criterion is not met."""
import time

import numpy as np
import pytest

from hilbertlab import hyperbolic as hyp
from hilbertlab.barycenter import bar, halfspace_control_D
from hilbertlab.domains import Ellipsoid, OrbitHull, PNormBall
from hilbertlab.metric import busemann_chart, distance_chart, finsler_chart

from conftest import record_criterion, stretched_ellipsoid

pytestmark = pytest.mark.acceptance


def klein_distances(Q, X, Y):
    """Closed-form Beltrami-Klein distance between rows of chart points."""
    Xh = np.hstack([np.ones((len(X), 1)), X])
    Yh = np.hstack([np.ones((len(Y), 1)), Y])
    qxy = np.einsum("ki,ij,kj->k", Xh, Q, Yh)
    qxx = np.einsum("ki,ij,kj->k", Xh, Q, Xh)
    qyy = np.einsum("ki,ij,kj->k", Yh, Q, Yh)
    return np.arccosh(np.maximum(np.abs(qxy) / np.sqrt(qxx * qyy), 1.0))


# --- 1: ellipsoid oracle ------------------------------------------------------------

def test_criterion_1_ellipsoid_oracle():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst, pairs = 0.0, 0
    for k in range(100):
        E, _ = stretched_ellipsoid(rng, n=2 + k % 2)
        X = E.sample_interior(100, rng, shrink=0.99)
        Y = E.sample_interior(100, rng, shrink=0.99)
        d = distance_chart(E, X, Y)
        ref = klein_distances(E.Q, X, Y)
        worst = max(worst, float(np.max(np.abs(d - ref) / ref)))
        pairs += len(X)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and elapsed < 10
    assert record_criterion(1, ok, f"pairs={pairs} max_rel_err={worst:.2e} (tol 1e-9) "
                                   f"runtime={elapsed:.2f}s (limit 10s)")


# --- 2: Finsler norm vs distance derivative -----------------------------------------

def test_criterion_2_finsler_consistency():
    rng = np.random.default_rng(2)
    octagon = np.array([[np.cos(a), np.sin(a)] for a in np.linspace(0, 2 * np.pi, 9)[:-1]])
    domains = {"ellipsoid": stretched_ellipsoid(rng)[0], "pball": PNormBall(4.0, n=2),
               "hull": OrbitHull(octagon * np.array([1.0, 0.7]))}
    t0 = time.perf_counter()
    errs = {}
    for name, D in domains.items():
        X = D.sample_interior(334, rng, shrink=0.8)
        V = rng.standard_normal(X.shape)
        F = finsler_chart(D, X, V)
        # step scaled to the local size of the domain along v
        h = 1e-3 * np.minimum(D.exit_time(X, V), D.exit_time(X, -V))[:, None]

        def quotient(h):
            # even in h, so Richardson removes the h^2 term
            return (distance_chart(D, X, X + h * V) + distance_chart(D, X, X - h * V)) / (2 * h[:, 0])

        fd = (4 * quotient(h / 2) - quotient(h)) / 3
        errs[name] = float(np.max(np.abs(fd - F) / F))
    elapsed = time.perf_counter() - t0
    worst = max(errs.values())
    ok = worst <= 1e-6 and elapsed < 30
    detail = " ".join(f"{k}={v:.2e}" for k, v in errs.items())
    assert record_criterion(2, ok, f"pairs=1002 max_rel_err {detail} (tol 1e-6) runtime={elapsed:.2f}s")


# --- 3: Busemann functions ----------------------------------------------------------

def test_criterion_3_busemann():
    rng = np.random.default_rng(3)
    at_o, lip, closed = 0.0, 0, 0.0
    for D in (stretched_ellipsoid(rng)[0], PNormBall(4.0, n=2), Ellipsoid.unit_ball(3)):
        o = D.basepoint
        Xi = D.sample_boundary(5000 // 3 + 1, rng)
        O = np.broadcast_to(o, Xi.shape)
        at_o = max(at_o, float(np.max(np.abs(busemann_chart(D, O, Xi, O)))))
        A = D.sample_interior(len(Xi), rng, shrink=0.95)
        B = D.sample_interior(len(Xi), rng, shrink=0.95)
        gap = np.abs(busemann_chart(D, O, Xi, A) - busemann_chart(D, O, Xi, B)) - distance_chart(D, A, B)
        lip += int(np.sum(gap > 1e-8))
    # closed form on the unit balls, B_{o,xi}(y) = log(cosh d(o,y) - sinh d(o,y) <u, xi>) at o = 0
    for n in (2, 3):
        D = Ellipsoid.unit_ball(n)
        Y = D.sample_interior(5000, rng, shrink=0.95)
        Th = rng.standard_normal((5000, n))
        Th /= np.linalg.norm(Th, axis=1, keepdims=True)
        ref = hyp.busemann(hyp.from_klein(np.zeros(n)), hyp.ideal(Th), hyp.from_klein(Y))
        got = busemann_chart(D, np.zeros((5000, n)), Th, Y)
        closed = max(closed, float(np.max(np.abs(got - ref))))
    ok = at_o == 0.0 and lip == 0 and closed <= 1e-6
    assert record_criterion(3, ok, f"max|B(o)|={at_o:.1e} lipschitz_violations={lip}/10^4 "
                                   f"closed_form_err={closed:.2e} (tol 1e-6)")


# --- 8: halfspace control constant --------------------------------------------------

def _cap(m, count, rng, rim=False):
    """Unit vectors in the cap {theta : m_s . theta >= m0}, or on its rim."""
    ms = m[1:]
    norm = np.linalg.norm(ms)
    u = ms / norm
    c = np.full(count, m[0] / norm) if rim else rng.uniform(m[0] / norm, 1.0, count)
    E = rng.standard_normal((count, ms.size))
    E -= np.outer(E @ u, u)
    E /= np.linalg.norm(E, axis=1, keepdims=True)
    return c[:, None] * u + np.sqrt(np.maximum(1 - c * c, 0.0))[:, None] * E


def _min_cosine(n, r, rng, cap=16, rim=4):
    """<v(y,H), v(y,alpha)> minimized over sampled alpha in the cap of H, for a
    random y at distance r from a random halfspace H."""
    y = hyp.from_klein(0.9 * rng.uniform(-1, 1, n) / np.sqrt(n))
    w = hyp.project_tangent(y, np.r_[0.0, rng.standard_normal(n)])
    w = w / hyp.tangent_norm(w)
    m = np.sinh(r) * y + np.cosh(r) * w            # velocity of the geodesic y -> H at the foot
    H = hyp.HalfspaceAtInfinity(m)
    A = np.vstack([_cap(H.m, cap, rng), _cap(H.m, rim, rng, rim=True)])
    V = hyp.direction_to_ideal(y, hyp.ideal(A))
    return float(np.min(hyp.mink(V, H.direction(y)))), float(H.distance(y))


def test_criterion_8_halfspace_control():
    from hilbertlab.suites import concentrated_measure
    rng = np.random.default_rng(8)
    parts = []
    ok = True
    for n in (2, 3):
        D = halfspace_control_D(n)
        worst, dist_err = np.inf, 0.0
        for _ in range(5000):
            r = D * (1 + 1e-9) + rng.exponential(1.0)
            c, d = _min_cosine(n, r, rng)
            worst = min(worst, c)
            dist_err = max(dist_err, abs(d - r) / r)
        below, _ = _min_cosine(n, 0.98 * D, rng, rim=64)   # just inside D the rim fails
        viol = 0
        for _ in range(500):
            lam, H = concentrated_measure(rng, n)
            viol += int(H.signed_distance(bar(lam).point) > D)
        ok = ok and worst > 0.5 and viol == 0 and dist_err < 1e-6
        parts.append(f"n={n} D={D:.6f} min_cos={worst:.6f} (>0.5) min_cos@0.98D={below:.4f} "
                     f"dist_check={dist_err:.1e} "
                     f"barycenter_violations={viol}/500")
    assert record_criterion(8, ok, "; ".join(parts) + " angle_samples=10^4")


# --- 4-6: entropy -------------------------------------------------------------------

def test_criterion_4_entropy():
    from hilbertlab.scene import build, load_scene
    from hilbertlab.volume import entropy_ball_growth, entropy_poincare
    parts, ok = [], True
    for n, (R1, R2), target, tol in ((2, (5.0, 9.0), 1.0, 0.1), (3, (5.0, 8.0), 2.0, 0.15)):
        D = Ellipsoid.unit_ball(n)
        t0 = time.perf_counter()
        est = entropy_ball_growth(D, D.chart.point(D.basepoint), R1, R2, seed=4)
        dt = time.perf_counter() - t0
        ok = ok and abs(est.value - target) <= tol and dt < 600
        parts.append(f"ball_growth n={n} h={est.value:.4f}+-{est.standard_error:.4f} "
                     f"(target {target} +-{tol}, {dt:.1f}s)")
    built = build(load_scene("builtin:disc-237"))
    t0 = time.perf_counter()
    est = entropy_poincare(built.domain, built.group, built.domain.chart.from_chart(built.basepoint),
                           12.0, seed=4)
    dt = time.perf_counter() - t0
    ok = ok and abs(est.value - 1.0) <= 0.1 and dt < 600
    parts.append(f"poincare (2,3,7) n=2 h={est.value:.4f}+-{est.standard_error:.4f} "
                 f"window={est.window} (target 1 +-0.1, {dt:.1f}s)")
    assert record_criterion(4, ok, "; ".join(parts))


def test_criterion_5_parabolic_trend():
    from hilbertlab.groups import parabolic_disc
    from hilbertlab.volume import entropy_poincare
    D = Ellipsoid.unit_ball(2)
    G = parabolic_disc()
    ests = [(R, entropy_poincare(D, G, np.eye(3)[0], R, seed=5)) for R in (10.0, 12.0, 14.0)]
    h = [e.value for _, e in ests]
    err = [e.standard_error for _, e in ests]
    non_increasing = all(h[k + 1] <= h[k] + 2 * np.hypot(err[k], err[k + 1]) for k in range(2))
    ok = non_increasing and min(h) >= 0.45 and abs(h[-1] - 0.5) <= 0.05
    detail = " ".join(f"R_max={R:g}:h={e.value:.4f}+-{e.standard_error:.4f}" for R, e in ests)
    assert record_criterion(5, ok, f"{detail} non_increasing_within_2sigma={non_increasing} "
                                   f"min={min(h):.4f} (floor 0.45)")


def test_criterion_6_deformed_upper_bound():
    from hilbertlab.experiments import entropy_estimate
    from hilbertlab.scene import build, load_scene
    built = build(load_scene("builtin:deformed-444"))
    G, D = built.group, built.domain
    residual = max(G.relation_residuals().values())
    G.validate()
    depth = D.meta["depth"]
    est = entropy_estimate(built, {"R_max": 10.0, "seed": 6})
    ok = est.value <= 1.0 + est.standard_error and depth >= 8
    assert record_criterion(6, ok, f"h={est.value:.4f}+-{est.standard_error:.4f} (bound 1 + err) "
                                   f"window={est.window} hull_depth={depth} "
                                   f"relation_residual={residual:.1e}")


# --- 7: visual barycenter -----------------------------------------------------------

def test_criterion_7_visual_barycenter():
    from hilbertlab.measures import visual_measure
    rng = np.random.default_rng(7)
    Ns = (1024, 4096, 16384)
    parts, ok = [], True
    for n in (2, 3):
        Y = [hyp.from_klein(k) for k in 0.9 * rng.uniform(-1, 1, (100, n)) / np.sqrt(n)]
        spread, rms = [], []
        for N in Ns:
            e = [hyp.distance(bar(visual_measure(y, N, i)).point, y) for i, y in enumerate(Y)]
            spread.append(max(e))
            e = [hyp.distance(bar(visual_measure(y, N, i, "iid")).point, y) for i, y in enumerate(Y)]
            rms.append(float(np.sqrt(np.mean(np.square(e)))))
        slope = float(np.polyfit(np.log(Ns), np.log(rms), 1)[0])
        # evenly spread atoms must do at least as well as independent ones at every N
        ok = ok and spread[1] <= 0.05 and abs(slope + 0.5) <= 0.15 and all(
            a <= b for a, b in zip(spread, rms))
        parts.append(f"n={n} max_err@4096={spread[1]:.1e} (tol 0.05) spread_max_err="
                     + "/".join(f"{v:.1e}" for v in spread)
                     + " iid_rms=" + "/".join(f"{v:.2e}" for v in rms) + f" iid_slope={slope:.3f}")
    assert record_criterion(7, ok, "; ".join(parts) + " N=1024/4096/16384")


# --- 9, 10, 13: cusps ---------------------------------------------------------------

@pytest.fixture(scope="module")
def cusped():
    from hilbertlab.scene import build, load_scene
    return build(load_scene("builtin:cusped-disc"))


@pytest.fixture(scope="module")
def homotopy_run(cusped):
    from hilbertlab.experiments import run_experiment
    return run_experiment(cusped, "homotopy", 13, {"points": 10, "R_max": 8.0})


def test_criterion_9_cusp_measures(cusped, homotopy_run):
    from hilbertlab.measures import PattersonSullivan
    rng = np.random.default_rng(9)
    D, G, o = cusped.domain, cusped.group, cusped.basepoint
    s = 1.05
    fam = PattersonSullivan(D, G, s, 10.0, D.chart.from_chart(o), pad=1.0)
    inside = near = trials = 0
    worst = 0.0
    while trials < 300:
        x, y = o + 0.15 * rng.standard_normal((2, 2))
        if not D.contains_chart(np.array([x, y])).all():
            continue
        d = float(distance_chart(D, x, y))
        mx, my = fam.measure(x), fam.measure(y)
        u = rng.standard_normal(2)
        c = float(u @ o + 0.3 * rng.standard_normal())
        ax = mx.weights[mx.points @ u >= c].sum()
        ay = my.weights[my.points @ u >= c].sum()
        if ax <= 0 or ay <= 0:
            continue
        excess = abs(np.log(ax / ay)) - s * d
        inside += int(excess <= 1e-12)
        near += int(excess <= s * d + 1e-12)
        worst = max(worst, excess / (s * d))
        trials += 1
    tracks = homotopy_run.record["tracks"]
    ps = min(t["mass_fraction_ps"] for t in tracks)
    vis = min(t["mass_fraction_visual"] for t in tracks)
    ok = inside >= 0.99 * trials and near == trials and ps > 2 / 3 and vis > 2 / 3
    assert record_criterion(9, ok, f"band: {inside}/{trials} within e^(+-s d), {near}/{trials} within twice "
                                   f"(worst excess {worst:.3f} s d); halfspace mass at {len(tracks)} deep "
                                   f"cusp points: min PS={ps:.3f} min visual={vis:.3f} (> 2/3)")


def test_criterion_10_short_loop_horoballs():
    from hilbertlab.dynamics import displacement_chart, short_loop_horoball
    from hilbertlab.groups import builtin_groups, cusp_subgroup
    rng = np.random.default_rng(10)
    cases = {}
    for name, make in builtin_groups().items():
        G = make()
        if G.meta.get("kind") == "parabolic":
            cases[name] = ([M for _, M in G.letters()], np.asarray(G.meta["cusp"], float), G.dim)
        elif G.coxeter is not None and np.any(G.coxeter.orders == 0):
            sub, xi = cusp_subgroup(G)
            cases[name] = ([M for _, M in sub.letters()], xi, G.dim)
    parts, ok = [], True
    for name, (gens, center, n) in cases.items():
        D = Ellipsoid.unit_ball(n)
        levels, worst = [], 0.0
        for eps in (0.2, 0.1, 0.05):
            ball = short_loop_horoball(D, gens, center, eps, np.zeros(n))
            disp = [ball.certificate["max_displacement"]]
            for depth in (0.5, 2.0, 5.0):       # deeper horospheres inside the certified ball
                Y = ball.sample_horosphere(256, rng, level=ball.level - depth)
                disp += [float(np.max(displacement_chart(D, M, Y))) for M in gens]
            worst = max(worst, max(disp) / eps)
            ok = ok and max(disp) < eps
            levels.append(f"{ball.level:.2f}")
        parts.append(f"{name}: levels(0.2/0.1/0.05)={'/'.join(levels)} max_disp/eps={worst:.3f}")
    assert record_criterion(10, ok, "; ".join(parts))


def test_criterion_13_homotopy(cusped, homotopy_run):
    from hilbertlab.barycenter import homotopy_track, natural_map
    from hilbertlab.experiments import _family, correspondence
    tracks = homotopy_run.record["tracks"]
    applicable = sum(t["applicable"] for t in tracks)
    exits = sum(not all(t["inside"]) for t in tracks)
    fam, _, _ = _family(cusped, {"R_max": 8.0, "seed": 13}, pad=1.0)
    corr = correspondence(cusped, fam, {})
    rng = np.random.default_rng(13)
    start_gap, end_equal = 0.0, True
    for x in cusped.basepoint + 0.2 * rng.standard_normal((3, 2)):
        track = homotopy_track(fam, corr, x, [0.0, 1.0])
        start_gap = max(start_gap, float(hyp.distance(track[0]["point"], corr.interior(x))))
        end_equal = end_equal and np.array_equal(track[1]["point"], natural_map(fam, corr, x).point)
    ok = exits == 0 and applicable == len(tracks) and start_gap <= 1e-6 and end_equal
    assert record_criterion(13, ok, f"d(Psi_0, f)={start_gap:.1e} (tol 1e-6) Psi_1==Phi bitwise={end_equal}; "
                                    f"deep cusp tracks leaving the predicted halfspace: {exits}/{len(tracks)} "
                                    f"(applicable {applicable})")


# --- 11, 12: natural-map Jacobians and eccentricity ---------------------------------

@pytest.fixture(scope="module")
def deformed():
    from hilbertlab.scene import build, load_scene
    return build(load_scene("builtin:deformed-444"))


def test_criterion_11_jacobian(deformed):
    from hilbertlab.experiments import run_experiment
    from hilbertlab.scene import build, load_scene
    t0 = time.perf_counter()
    disc = build(load_scene("builtin:disc-237"))
    gaps, parts = [], []
    for R in (8.0, 10.0, 12.0):
        res = run_experiment(disc, "jacobian-bound", 11, {"points": 3, "R_max": R})
        J = np.array([p["jacobian"] for p in res.record["points"]])
        gaps.append(float(np.mean(np.abs(J - 1))))
        parts.append(f"R_max={R:g}: J=" + ",".join(f"{v:.3f}" for v in J))
    worst = float(np.max(np.abs(J - 1)))          # at R_max = 12
    # distance from each sample point to its nearest orbit point (near atoms swing fastest)
    from hilbertlab.experiments import _family
    fam = _family(disc, {"R_max": 8.0, "seed": 11})[0]
    near = [float(np.min(fam.distances(np.array(p["x"])))) for p in res.record["points"]]
    res = run_experiment(deformed, "jacobian-bound", 11, {"points": 20})
    ratios = [p["ratio"] for p in res.record["points"]]
    elapsed = time.perf_counter() - t0
    improving = all(b <= a for a, b in zip(gaps, gaps[1:]))
    ok = worst <= 0.15 and improving and res.violations == 0 and elapsed < 1200
    assert record_criterion(11, ok, f"(2,3,7) identity s=h+0.05: {'; '.join(parts)} "
                                    f"max|J-1|@12={worst:.3f} (tol 0.15) "
                                    f"nearest_orbit_point={','.join(f'{v:.3f}' for v in near)} "
                                    f"mean|J-1|={'/'.join(f'{g:.3f}' for g in gaps)} improving={improving}; "
                                    f"deformed-444: violations={res.violations}/20 "
                                    f"ratio J/bound in [{min(ratios):.3f}, {max(ratios):.3f}] "
                                    f"N={res.record['N']:.4f}; runtime={elapsed:.0f}s (limit 1200s)")


def test_criterion_12_eccentricity(deformed):
    from hilbertlab.barycenter import eccentricity
    from hilbertlab.experiments import points_near
    rng = np.random.default_rng(12)
    ell = 0.0
    for n in (2, 3):
        E, _ = stretched_ellipsoid(rng, n)
        rep = eccentricity(E, E.sample_interior(10, rng, shrink=0.9))
        ell = max(ell, float(np.max(np.abs(rep.N_value - 1))))
    rep = eccentricity(deformed.domain, points_near(deformed, 50, 1.0, rng))
    n = deformed.domain.dim
    at_least_one = int(np.sum(rep.N_value >= 1 - 1e-9))
    sandwich = int(np.sum(rep.sandwich_ok))
    ok = ell <= 1e-6 and at_least_one == 50 and sandwich == 50
    assert record_criterion(12, ok, f"ellipsoids max|N-1|={ell:.1e} (tol 1e-6); deformed-444 50 points: "
                                    f"N>=1 at {at_least_one}/50, K^-2n<=N<=K^2n at {sandwich}/50, "
                                    f"N in [{rep.N_value.min():.4f}, {rep.N_value.max():.4f}], "
                                    f"K<={rep.K.max():.4f} (n={n})")


# --- 14: determinism ----------------------------------------------------------------

DETERMINISM_RUNS = {
    "verify": ("builtin:disc-237", ["verify", "--suite", "all"]),
    "entropy": ("builtin:disc-237", ["experiment", "--name", "entropy", "--budget", "4096",
                                     "--param", "R_max=8"]),
    "volume": ("builtin:disc-237", ["experiment", "--name", "volume", "--budget", "4096",
                                    "--param", "radii=[1, 2]"]),
    "natural-map": ("builtin:disc-237", ["experiment", "--name", "natural-map", "--param", "points=2",
                                         "--param", "R_max=8"]),
    "homotopy": ("builtin:cusped-disc", ["experiment", "--name", "homotopy", "--param", "points=2",
                                         "--param", "R_max=8", "--param", "visual_atoms=1024"]),
    "jacobian-bound": ("builtin:deformed-444", ["experiment", "--name", "jacobian-bound",
                                                "--param", "points=2"]),
    "rigidity-ratio": ("builtin:disc-237", ["experiment", "--name", "rigidity-ratio", "--budget", "8192",
                                            "--param", "target=0.05", "--param", "rays=128"]),
}


def test_criterion_14_determinism(tmp_path):
    import subprocess
    import sys
    same, checked = [], 0
    for label, (scene, args) in DETERMINISM_RUNS.items():
        outputs = []
        for run in ("a", "b"):
            out = tmp_path / label / run
            cmd = [sys.executable, "-m", "hilbertlab", args[0], "--scene", scene, "--seed", "14",
                   "--out", str(out), *args[1:]]
            proc = subprocess.run(cmd, capture_output=True, timeout=600)
            assert proc.returncode == 0, proc.stderr.decode()
            files = sorted(p for p in out.iterdir() if not p.name.endswith(".meta.json"))
            outputs.append({p.name: p.read_bytes() for p in files} | {"stdout": proc.stdout})
        checked += len(outputs[0])
        if outputs[0] == outputs[1]:
            same.append(label)
    ok = len(same) == len(DETERMINISM_RUNS)
    assert record_criterion(14, ok, f"byte-identical across two processes: {len(same)}/{len(DETERMINISM_RUNS)} "
                                    f"({', '.join(same)}); {checked} report files and stdout streams compared, "
                                    f"timestamps kept in *.meta.json")
