"""Hilbert (Busemann-Hausdorff) volume, metric-ball volumes and entropy estimators."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .config import TOL
from .domains import ConvexDomain
from .errors import BudgetExceeded, OrbitTooSmall, PointOutsideDomain
from .metric import geodesic_param
from .quadrature import ball_volume as unit_ball_volume
from .quadrature import sphere_rule


@dataclass(frozen=True)
class VolumeEstimate:
    value: float
    stderr: float
    samples: int
    seed: int
    shards: int


@dataclass(frozen=True)
class EntropyEstimate:
    value: float
    window: tuple
    standard_error: float
    method: str
    profile: list = field(default_factory=list)   # (R, count or volume, stderr)
    meta: dict = field(default_factory=dict)

    def csv_rows(self, seed=None, shards=None):
        """Rows: method, R, count/volume, estimate, stderr, seed, shards."""
        rows = []
        for r, v, e in self.profile:
            rows.append([self.method, f"{r:.6g}", f"{v:.10g}", f"{self.value:.10g}",
                         f"{self.standard_error:.6g}", seed, shards])
        return rows


class _Rule:
    """Sphere rules cached per (n, nodes)."""

    cache: dict = {}

    @classmethod
    def get(cls, n, nodes):
        key = (n, nodes)
        if key not in cls.cache:
            cls.cache[key] = sphere_rule(n, nodes)
        return cls.cache[key]


def _finsler(domain, Y, V):
    """F(y, v) for Y (m, n) and V (m, k, n), both directions at once."""
    Yb = Y[:, None, :]
    return 0.5 * (1.0 / domain.exit_time(Yb, V) + 1.0 / domain.exit_time(Yb, -V))


def _fitted_frames(domain, Y):
    """L = G^(-1/2) with F(y, u)^2 ~ u^T G u fitted on a coarse direction set.

    Near the boundary the unit Finsler ball is very eccentric; quadrature in
    the variable w with u = L w sees an almost round ball instead.
    """
    n = domain.dim
    D, _ = sphere_rule(n, 64)
    F2 = _finsler(domain, Y, np.broadcast_to(D, (len(Y),) + D.shape)) ** 2
    iu = np.triu_indices(n)
    basis = np.einsum("ki,kj->kij", D, D)
    design = (basis + np.transpose(basis, (0, 2, 1)))[:, iu[0], iu[1]] / np.where(iu[0] == iu[1], 2, 1)
    coef, *_ = np.linalg.lstsq(design, F2.T, rcond=None)
    G = np.zeros((len(Y), n, n))
    G[:, iu[0], iu[1]] = coef.T
    G = G + np.transpose(G, (0, 2, 1)) - G * np.eye(n)
    w, Q = np.linalg.eigh(G)
    good = np.all(w > 0, axis=1)
    w = np.where(good[:, None], w, 1.0)
    Q = np.where(good[:, None, None], Q, np.eye(n))
    return np.einsum("mij,mj,mkj->mik", Q, w ** -0.5, Q)


def volume_density_chart(domain: ConvexDomain, Y, nodes: int = TOL.sphere_nodes, chunk: int = 128):
    """omega_n / Leb(unit Finsler ball) at chart points Y (vectorized).

    Leb(B_F) = (1/n) * integral over the unit sphere of F(y, u)^(-n), computed
    after the linear change of variables u = L w that makes the ball nearly
    round: Leb(B_F) = |det L| (1/n) * integral of F(y, L w)^(-n) dw.
    """
    Y = np.atleast_2d(np.asarray(Y, float))
    n = domain.dim
    U, W = _Rule.get(n, nodes)
    out = np.empty(len(Y))
    for lo in range(0, len(Y), chunk):
        Yc = Y[lo:lo + chunk]
        L = _fitted_frames(domain, Yc)
        V = np.einsum("mij,kj->mki", L, U)
        F = _finsler(domain, Yc, V)
        leb = np.abs(np.linalg.det(L)) * ((F ** (-n)) @ W) / n
        out[lo:lo + chunk] = unit_ball_volume(n) / leb
    return out


def volume_density(domain: ConvexDomain, x, nodes: int = TOL.sphere_nodes) -> float:
    y = domain.to_chart(x)
    if not domain.contains_chart(y):
        raise PointOutsideDomain("density requested outside the domain")
    return float(volume_density_chart(domain, y[None], nodes)[0])


def _directions(Z, n):
    """Area-preserving map from the unit cube [0,1)^(n-1) to S^(n-1)."""
    if n == 2:
        a = 2 * np.pi * Z[:, 0]
        return np.stack([np.cos(a), np.sin(a)], axis=1)
    if n == 3:
        z = 1 - 2 * Z[:, 0]
        phi = 2 * np.pi * Z[:, 1]
        r = np.sqrt(np.maximum(1 - z * z, 0.0))
        return np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    raise ValueError("ball volumes are implemented for n = 2, 3")


def _ball_batch(domain, x, R, Z, nodes, region=None):
    """Importance-sampled integrand over one batch of cube points.

    Polar coordinates about x along straight geodesics: a point at Hilbert
    distance rho in direction u has Euclidean radius t, dt/drho = 1/F(y, u),
    so Vol = int_S int_0^R density(y) t^(n-1) / F(y, u) drho du.  rho is drawn
    with density proportional to e^((n-1) rho), the growth of the hyperbolic
    area element.
    """
    n = domain.dim
    U = _directions(Z[:, : n - 1], n)
    v = Z[:, n - 1]
    k = n - 1
    growth = np.expm1(k * R)
    rho = np.log1p(v * growth) / k
    q = k * np.exp(k * rho) / growth                   # proposal density in rho
    X = np.broadcast_to(x, U.shape)
    tp = domain.exit_time(X, U)
    tm = domain.exit_time(X, -U)
    a = tm / tp
    frac = geodesic_param(a, rho)
    e2 = np.exp(-2 * rho)
    rest = e2 * (1 + a) / (a + e2)                     # 1 - frac, without cancellation
    t = frac * tp
    Y = X + t[:, None] * U
    F = 0.5 * (1.0 / (rest * tp) + 1.0 / (tm + t))
    dens = np.zeros(len(Y))
    keep = np.ones(len(Y), bool) if region is None else np.asarray(region(Y), bool)
    if np.any(keep):
        dens[keep] = volume_density_chart(domain, Y[keep], nodes)
    from .quadrature import sphere_area
    return sphere_area(n) * dens * t ** (n - 1) / F / q


def ball_volume(domain: ConvexDomain, x, R: float, seed: int = 0, *, shards: int = 1,
                batch: int = 256, replicates: int = 8, max_samples: int = 1 << 16,
                target: float = TOL.volume_rel_error, nodes: int = TOL.sphere_nodes,
                region=None) -> VolumeEstimate:
    """Hilbert volume of the metric ball B(x, R), with a standard error.

    ``region`` optionally restricts the integral to {y : region(y)} inside the
    ball (a vectorized predicate on chart points).

    Randomized quasi-Monte Carlo: each replicate is a scrambled Sobol set in
    (direction, radius); replicates are added until the relative standard
    error across them is below ``target``.  Replicate seeds derive from
    (seed, shard index), so results are reproducible for a given shard count.
    """
    y = domain.to_chart(x)
    if not domain.contains_chart(y):
        raise PointOutsideDomain("ball center is outside the domain")
    if R <= 0:
        raise ValueError("radius must be positive")
    n = domain.dim
    m = int(np.log2(batch))
    per_shard = max(1, replicates // shards)
    means = []
    used = 0
    rounds = 0
    while True:
        for sh in range(shards):
            for j in range(rounds * per_shard, (rounds + 1) * per_shard):
                ss = np.random.SeedSequence([seed, shards, sh, j])
                Z = qmc.Sobol(n, scramble=True, seed=np.random.default_rng(ss)).random_base2(m)
                means.append(float(np.mean(_ball_batch(domain, y, R, Z, nodes, region))))
                used += len(Z)
        rounds += 1
        vals = np.array(means)
        est = float(vals.mean())
        err = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else np.inf
        if err <= target * abs(est):
            return VolumeEstimate(est, err, used, seed, shards)
        if used >= max_samples:
            raise BudgetExceeded(f"relative error {err / abs(est):.3g} after {used} samples")


def entropy_ball_growth(domain: ConvexDomain, x, R1: float = 5.0, R2: float = 9.0, seed: int = 0,
                        **kw) -> EntropyEstimate:
    if not R2 > R1 >= 3:
        raise ValueError("need R2 > R1 >= 3")
    v1 = ball_volume(domain, x, R1, seed, **kw)
    v2 = ball_volume(domain, x, R2, seed, **kw)
    h = (np.log(v2.value) - np.log(v1.value)) / (R2 - R1)
    err = np.hypot(v1.stderr / v1.value, v2.stderr / v2.value) / (R2 - R1)
    return EntropyEstimate(float(h), (R1, R2), float(err), "ball_growth",
                           [(R1, v1.value, v1.stderr), (R2, v2.value, v2.stderr)],
                           {"seed": seed, "shards": kw.get("shards", 1)})


def count_profile(distances, R_max: float, step: float = 0.25):
    radii = np.arange(step, R_max + 1e-9, step)
    d = np.sort(np.asarray(distances, float))
    counts = np.searchsorted(d, radii, side="right")
    return radii, counts


def fit_growth(radii, counts, minimum: int = 100, R_cap: float | None = None):
    """Slope of log N(R) over the largest window where N(R) > minimum.

    The error combines the regression standard error with half the gap
    between the slopes fitted on the two halves of the window (curvature of
    log N that a single slope cannot absorb).
    """
    radii = np.asarray(radii, float)
    counts = np.asarray(counts, float)
    sel = counts > minimum
    if R_cap is not None:
        sel &= radii <= R_cap
    if np.sum(sel) < 4:
        raise OrbitTooSmall("fewer than four radii with enough orbit points")
    r, y = radii[sel], np.log(counts[sel])

    def slope(rr, yy):
        A = np.vstack([rr, np.ones_like(rr)]).T
        coef, *_ = np.linalg.lstsq(A, yy, rcond=None)
        res = yy - A @ coef
        dof = max(len(rr) - 2, 1)
        se = np.sqrt(res @ res / dof / np.sum((rr - rr.mean()) ** 2))
        return coef[0], se

    h, se = slope(r, y)
    half = len(r) // 2
    h1, _ = slope(r[:half + 1], y[:half + 1])
    h2, _ = slope(r[half:], y[half:])
    err = max(se, 0.5 * abs(h2 - h1), 1e-12)
    return float(h), float(err), (float(r[0]), float(r[-1]))


def entropy_poincare(domain: ConvexDomain, group, o=None, R_max: float = 12.0, seed: int = 0, *,
                     shards: int = 1, step: float = 0.25, reference_domain: ConvexDomain | None = None,
                     agreement: float = 0.02) -> EntropyEstimate:
    """Critical exponent from the growth of orbit counts N(R) = #{g : d(o, g o) <= R}.

    For an approximating domain a finer ``reference_domain`` can be given;
    the window is then capped where the two count profiles differ by more
    than ``agreement`` (relative).
    """
    from .orbits import orbit_ball
    group.validate(domain)
    orb = orbit_ball(domain, group, o, R_max, shards=shards)
    d = orb.distance[orb.meta["within"]]
    if len(d) < 100:
        raise OrbitTooSmall(f"only {len(d)} orbit points within {R_max}")
    radii, counts = count_profile(d, R_max, step)
    cap = None
    meta = {"seed": seed, "shards": shards, "orbit_points": int(len(d)), "R_max": R_max}
    if reference_domain is not None:
        ref = orbit_ball(reference_domain, group, o, R_max, shards=shards)
        _, ref_counts = count_profile(ref.distance[ref.meta["within"]], R_max, step)
        ok = np.abs(counts - ref_counts) <= agreement * np.maximum(ref_counts, 1)
        bad = np.nonzero(~ok)[0]
        cap = radii[bad[0] - 1] if len(bad) and bad[0] > 0 else (radii[-1] if not len(bad) else 0.0)
        meta["agreement_cap"] = float(cap)
        meta["reference_counts"] = ref_counts.tolist()
    h, err, window = fit_growth(radii, counts, R_cap=cap)
    profile = [(float(r), int(c), float(np.sqrt(c))) for r, c in zip(radii, counts)]
    return EntropyEstimate(h, window, err, "poincare_series", profile, meta)
