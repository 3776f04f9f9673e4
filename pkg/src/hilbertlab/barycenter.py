"""Barycenters of boundary measures, the natural map, its homotopy, Jacobians
and the eccentricity factor."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import hyperbolic as hyp
from .config import TOL
from .errors import MassTooConcentrated, NoConvergence, QuadratureUnconverged, StepTooLarge
from .measures import BoundaryMeasure, mixture, visual_measure
from .quadrature import ball_volume as unit_ball_volume
from .quadrature import sphere_rule
from .volume import _finsler, _fitted_frames, volume_density_chart


def busemann_hyperbolic(o, xi, y):
    """log(-<y, xi> / -<o, xi>) for hyperboloid points o, y and a null vector xi."""
    return hyp.busemann(np.asarray(o, float), np.asarray(xi, float), np.asarray(y, float))


def busemann_functional(y, measure: BoundaryMeasure, o=None):
    """B(y, lambda) = sum_i w_i B_{o, xi_i}(y)."""
    xi = measure.ideal()
    y = np.asarray(y, float)
    o = np.eye(y.size)[0] if o is None else np.asarray(o, float)
    return float(measure.weights @ hyp.busemann(o, xi, y))


def busemann_gradient(y, measure: BoundaryMeasure):
    """Riemannian gradient -sum_i w_i v(y, xi_i), a tangent vector at y."""
    xi = measure.ideal()
    V = hyp.direction_to_ideal(y, xi)
    g = -(measure.weights @ V)
    return hyp.project_tangent(y, g)


@dataclass(frozen=True)
class BarycenterResult:
    point: np.ndarray          # hyperboloid coordinates
    gradient_norm: float
    iterations: int
    functional_value: float

    @property
    def klein(self):
        return hyp.to_klein(self.point)


def bar(measure: BoundaryMeasure, o=None, tolerance: float = TOL.barycenter_gradient,
        start=None, max_iter: int = TOL.barycenter_max_iter) -> BarycenterResult:
    """Minimizer of B(., lambda) by Riemannian gradient descent with Armijo steps.

    The Hessian of each Busemann function is g - dB^2 <= g, so 1/|lambda| is
    a safe step; the search starts from twice that and backtracks.
    """
    if measure.space != "hyperbolic":
        raise ValueError("barycenters are taken of hyperbolic boundary measures")
    total = measure.total_mass
    if total <= 0:
        raise MassTooConcentrated("measure has no mass")
    if measure.max_atom() >= 0.5 * total:
        raise MassTooConcentrated("an atom carries at least half of the mass")
    n = measure.dim
    o = np.eye(n + 1)[0] if o is None else np.asarray(o, float)
    xi = measure.ideal()
    w = measure.weights
    J = np.diag([-1.0] + [1.0] * n)
    shift = float(w @ np.log(-(xi @ (J @ o))))

    def value(y):
        return float(w @ np.log(-(xi @ (J @ y)))) - shift

    def grad(y):
        # -sum w_i v(y, xi_i) with v(y, xi) = xi / -<y, xi> - y
        c = w / -(xi @ (J @ y))
        return hyp.project_tangent(y, total * y - c @ xi)

    y = np.eye(n + 1)[0] if start is None else hyp.normalize(np.asarray(start, float))
    f = value(y)
    step = 2.0 / total
    for it in range(max_iter + 1):
        g = grad(y)
        gn = float(hyp.tangent_norm(g))
        if gn <= tolerance * total:
            return BarycenterResult(y, gn, it, f)
        if (gn / total) ** 2 < 1e-12 * max(abs(f) / total, 1.0):
            # decreases are below round-off in f; 1/|lambda| is a safe fixed step
            y = hyp.exp_map(y, -g / total)
            f = value(y)
            continue
        alpha = step
        while True:
            y_new = hyp.exp_map(y, -alpha * g)
            f_new = value(y_new)
            if f_new <= f - 0.5 * alpha * gn * gn or alpha < 1e-20:
                break
            alpha *= 0.5
        step = min(2 * alpha, 4.0 / total)
        y, f = y_new, f_new
    raise NoConvergence(f"gradient norm {gn:.3g} after {max_iter} iterations")


# --- halfspace control -----------------------------------------------------------

def _cap_min_cosine(r: float, n: int, samples: int = 10_000, seed: int = 0):
    """min over the cap of <v(y, H), v(y, alpha)> for y at distance r from H.

    H = {x1 >= 0}, y = (cosh r, -sinh r, 0, ...), v(y, H) = (-sinh r, cosh r, 0, ...).
    """
    from .measures import sphere_directions
    rng = np.random.default_rng(seed)
    U = sphere_directions(samples, n, rng)
    U[:, 0] = np.abs(U[:, 0])
    rim = np.zeros((1, n))
    rim[0, 1] = 1.0
    U = np.vstack([U, rim])
    y = np.zeros(n + 1)
    y[0], y[1] = np.cosh(r), -np.sinh(r)
    vH = np.zeros(n + 1)
    vH[0], vH[1] = -np.sinh(r), np.cosh(r)
    xi = hyp.ideal(U)
    V = hyp.direction_to_ideal(y, xi)
    return float(np.min(hyp.mink(V, vH)))


def halfspace_control_D(n: int, iters: int = 60) -> float:
    """Smallest D with <v(y,H), v(y,alpha)> > 1/2 on the whole cap once d(y, H) > D.

    The cosine is smallest on the rim of the cap, where it equals tanh r (the
    angle of parallelism), so the answer is artanh(1/2) in every dimension;
    the bisection below finds it from the sampled cap without using that.
    """
    if n not in (2, 3):
        raise ValueError("n must be 2 or 3")
    lo, hi = 0.0, 5.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if _cap_min_cosine(mid, n) > 0.5:
            hi = mid
        else:
            lo = mid
    return hi


# --- natural map and homotopy ------------------------------------------------------

@dataclass
class NaturalMapValue:
    point: np.ndarray
    result: BarycenterResult
    meta: dict = field(default_factory=dict)


def natural_map(family, correspondence, x, tolerance: float = TOL.barycenter_gradient) -> NaturalMapValue:
    """Phi(x) = bar(f_* mu_x)."""
    mu = family.measure(np.asarray(x, float))
    pushed = correspondence.push(mu, x)
    res = bar(pushed, tolerance=tolerance, start=correspondence.interior(x))
    meta = dict(mu.meta)
    meta.update(atoms=len(mu), mass=mu.total_mass)
    return NaturalMapValue(res.point, res, meta)


def homotopy_track(family, correspondence, x, ts, visual_atoms: int = 4096, seed: int = 0,
                   cusp=None, tolerance: float = TOL.barycenter_gradient):
    """Psi_t(x) = bar(t f_* mu_x + (1 - t) nu_{f(x)}) on a grid of t.

    Returns a list of records (t, point, klein, busemann depth into ``cusp``
    when a (center, basepoint) pair of hyperboloid vectors is given).
    """
    x = np.asarray(x, float)
    fx = correspondence.interior(x)
    nu = visual_measure(fx, visual_atoms, seed)
    pushed = correspondence.push(family.measure(x), x)
    out = []
    for t in ts:
        m = mixture(pushed, nu, float(t))
        res = bar(m, tolerance=tolerance, start=fx)
        rec = {"t": float(t), "point": res.point, "klein": hyp.to_klein(res.point),
               "gradient_norm": res.gradient_norm}
        if cusp is not None:
            center, base = cusp
            rec["busemann"] = float(hyp.busemann(base, center, res.point))
        out.append(rec)
    return out


# --- Jacobians -------------------------------------------------------------------

@dataclass
class JacobianReport:
    x: np.ndarray
    jacobian: float
    error: float
    bound: float
    ratio: float
    violation: bool
    levels: tuple

    def to_json(self):
        return {"x": self.x.tolist(), "jacobian": self.jacobian, "error": self.error,
                "bound": self.bound, "ratio": self.ratio, "violation": self.violation,
                "levels": list(self.levels)}


def _differential(phi, x, h):
    n = x.size
    D = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        D[:, i] = (phi(x + e) - phi(x - e)) / (2 * h)
    return D


def jacobian_check(phi, x, hilbert_density, h_omega: float = 1.0, h0: float = 1.0,
                   N_bound: float = 1.0, step: float = 1e-3) -> JacobianReport:
    """|Jac Phi|(x) = |det DPhi| * (hyperbolic density at Phi(x)) / (Hilbert density at x).

    ``phi`` maps chart points of the domain to Klein coordinates.  The
    differential is a central difference with Richardson extrapolation from
    steps h and h/2; their disagreement is the reported error.
    """
    x = np.asarray(x, float)
    n = x.size
    y = phi(x)
    scale = hyp.klein_density(y) / hilbert_density
    D1 = _differential(phi, x, step)
    D2 = _differential(phi, x, step / 2)
    J1 = abs(np.linalg.det(D1)) * scale
    J2 = abs(np.linalg.det(D2)) * scale
    if abs(J1 - J2) > 0.2 * abs(J2):
        raise StepTooLarge(f"Richardson levels disagree: {J1:.4g} vs {J2:.4g}")
    J = abs(np.linalg.det((4 * D2 - D1) / 3)) * scale
    err = abs(J - J2) + abs(J2 - J1) / 3
    bound = (h_omega / h0) ** n * N_bound
    ratio = J / bound
    return JacobianReport(x, float(J), float(err), float(bound), float(ratio),
                          bool(J > bound + err), (float(J1), float(J2)))


# --- eccentricity ----------------------------------------------------------------

@dataclass
class EccentricityReport:
    points: np.ndarray
    N_value: np.ndarray
    K: np.ndarray
    sandwich_ok: np.ndarray

    @property
    def N_max(self):
        return float(np.max(self.N_value))

    def to_json(self):
        return {"points": self.points.tolist(), "N": self.N_value.tolist(), "K": self.K.tolist(),
                "sandwich_ok": self.sandwich_ok.tolist()}


def _eccentricity_at(domain, y, nodes):
    n = domain.dim
    U, W = sphere_rule(n, nodes)
    L = _fitted_frames(domain, y[None])[0]
    detL = abs(np.linalg.det(L))

    def moments(U, W):
        V = U @ L.T                                   # directions u = L w
        F = _finsler(domain, y[None], V[None])[0]
        r = 1.0 / F                                   # radial function along V
        leb = detL * np.sum(W * r ** n) / n
        # second moments: int_B v v^T = det L / (n+2) int_S r^(n+2) (Lw)(Lw)^T dw
        M = detL * np.einsum("k,ki,kj->ij", W * r ** (n + 2), V, V) / (n + 2)
        return leb, M

    leb, M = moments(U, W)
    leb2, M2 = moments(*sphere_rule(n, nodes // 2))
    if abs(leb - leb2) > 1e-5 * leb or np.linalg.norm(M - M2) > 1e-4 * np.linalg.norm(M):
        raise QuadratureUnconverged("unit-ball quadrature did not settle")
    G = (leb / (n + 2)) * np.linalg.inv(M)           # moment metric: reproduces ellipsoids
    w, Q = np.linalg.eigh(G)
    Gm12 = Q @ np.diag(w ** -0.5) @ Q.T

    def F_on_gsphere(W2):
        V = W2 @ Gm12.T
        return _finsler(domain, y[None], V[None])[0]

    # max F over the g-unit sphere: dense sample then local refinement
    Uf, _ = sphere_rule(n, nodes)
    Fs = F_on_gsphere(Uf)
    k = int(np.argmax(Fs))
    Fmax = float(Fs[k])
    if n == 2:
        a0 = np.arctan2(Uf[k, 1], Uf[k, 0])
        da = 2 * np.pi / len(Uf)
        res = minimize_scalar(lambda a: -F_on_gsphere(np.array([[np.cos(a), np.sin(a)]]))[0],
                              bounds=(a0 - da, a0 + da), method="bounded", options={"xatol": 1e-12})
        Fmax = max(Fmax, -float(res.fun))
    vol_g_BF = np.sqrt(np.linalg.det(G)) * leb
    N = Fmax ** n * vol_g_BF / unit_ball_volume(n)
    # max g-norm over the Finsler unit sphere: v = u / F(u)
    Fu = _finsler(domain, y[None], Uf[None])[0]
    gnorm = np.sqrt(np.einsum("ki,ij,kj->k", Uf, G, Uf)) / Fu
    K = max(Fmax, float(np.max(gnorm)))
    return float(N), float(K)


def eccentricity(domain, points, nodes: int = TOL.sphere_nodes) -> EccentricityReport:
    """Per point: N = max_{S_g} F^n Vol_g(B_F) / Vol_g(B_g) and the comparison
    constant K, for the moment metric g of the unit Finsler ball."""
    P = np.atleast_2d(np.asarray(points, float))
    n = domain.dim
    Ns, Ks = [], []
    for y in P:
        N, K = _eccentricity_at(domain, y, nodes)
        Ns.append(N)
        Ks.append(K)
    Ns, Ks = np.array(Ns), np.array(Ks)
    ok = (Ks ** (-2 * n) <= Ns * (1 + 1e-12)) & (Ns <= Ks ** (2 * n) * (1 + 1e-12))
    return EccentricityReport(P, Ns, Ks, ok)


def hilbert_density(domain, x):
    return float(volume_density_chart(domain, np.asarray(x, float)[None])[0])
