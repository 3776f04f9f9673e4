"""Finitely generated projective groups and their orbits.

Words are strings over lowercase letters (one per generator) with uppercase
for inverses; ``"ab"`` is the matrix product a @ b.  Coxeter groups are kept
with their Cartan matrix so orbits can be enumerated by canonical reduced
words, which visits every group element exactly once.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from string import ascii_lowercase

import numpy as np

from .config import TOL
from .errors import HilbertLabError
from .projective import ProjectiveMap


def normalize_matrix(M):
    """Scale to |det| = 1."""
    M = np.asarray(M, float)
    d = abs(np.linalg.det(M))
    return M / d ** (1.0 / M.shape[0])


def projective_residual(M):
    """Frobenius distance of M (scaled to |det| 1) from +-I."""
    N = normalize_matrix(M)
    eye = np.eye(N.shape[0])
    return float(min(np.linalg.norm(N - eye), np.linalg.norm(N + eye)))


@dataclass(frozen=True)
class CoxeterData:
    """Cartan matrix A (reflections S_i = I - e_i A[i, :] in root coordinates),
    the frame taking root coordinates to ambient coordinates, and the
    Coxeter exponents m_ij (0 for infinity)."""

    cartan: np.ndarray
    frame: np.ndarray
    orders: np.ndarray

    @property
    def rank(self) -> int:
        return self.cartan.shape[0]

    def root_reflections(self):
        A = self.cartan
        k = A.shape[0]
        out = []
        for i in range(k):
            S = np.eye(k)
            S[i, :] -= A[i, :]
            out.append(S)
        return np.array(out)

    def chamber_point(self):
        """Root coordinates of the interior point with A c = -1."""
        return -np.linalg.solve(self.cartan, np.ones(self.rank))


@dataclass(frozen=True, eq=False)
class ProjectiveGroup:
    generators: tuple
    relations: tuple = ()
    label: str = "group"
    coxeter: CoxeterData | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        gens = tuple(g if isinstance(g, ProjectiveMap) else ProjectiveMap(g) for g in self.generators)
        if not gens:
            raise ValueError("a group needs at least one generator")
        if len(gens) > len(ascii_lowercase):
            raise ValueError("too many generators")
        object.__setattr__(self, "generators", gens)
        object.__setattr__(self, "relations", tuple(self.relations))

    @property
    def dim(self) -> int:
        return self.generators[0].dim

    @property
    def rank(self) -> int:
        return len(self.generators)

    # --- letters and words ---------------------------------------------------
    def involutive(self):
        return [projective_residual(g.matrix @ g.matrix) < TOL.relation_residual for g in self.generators]

    def letters(self):
        """(name, matrix) pairs used for enumeration: generators, then the
        inverses of those that are not involutions."""
        out = [(ascii_lowercase[i], normalize_matrix(g.matrix)) for i, g in enumerate(self.generators)]
        for i, (g, inv) in enumerate(zip(self.generators, self.involutive())):
            if not inv:
                out.append((ascii_lowercase[i].upper(), normalize_matrix(np.linalg.inv(g.matrix))))
        return out

    def word_matrix(self, word: str):
        M = np.eye(self.dim + 1)
        for ch in word:
            i = ascii_lowercase.index(ch.lower())
            if i >= self.rank:
                raise ValueError(f"letter {ch!r} is not a generator")
            g = normalize_matrix(self.generators[i].matrix)
            M = M @ (g if ch.islower() else np.linalg.inv(g))
        return M

    def relation_residuals(self):
        return {w: projective_residual(self.word_matrix(w)) for w in self.relations}

    def validate(self, domain=None, rng=None, samples=64):
        """Check relations and, for exact domains, that generators preserve the domain."""
        bad = {w: r for w, r in self.relation_residuals().items() if r >= TOL.relation_residual}
        if bad:
            raise HilbertLabError(f"relations fail for {self.label}: {bad}")
        if domain is not None and not domain.approximation:
            from .errors import MapDoesNotPreserveDomain
            rng = np.random.default_rng(0) if rng is None else rng
            Y = domain.sample_interior(samples, rng)
            for name, M in self.letters():
                img = domain.chart.map_point(ProjectiveMap(M), Y)
                if not np.all(domain.margin(img) > -TOL.boundary_margin):
                    raise MapDoesNotPreserveDomain(f"generator {name} of {self.label} leaves the domain")
        return True

    # --- serialization -------------------------------------------------------
    def descriptor(self) -> dict:
        d = {"label": self.label,
             "generators": [g.matrix.tolist() for g in self.generators],
             "relations": list(self.relations)}
        if self.coxeter is not None:
            d["cartan"] = self.coxeter.cartan.tolist()
            d["frame"] = self.coxeter.frame.tolist()
            d["orders"] = self.coxeter.orders.tolist()
        return d

    @classmethod
    def from_descriptor(cls, desc: dict) -> "ProjectiveGroup":
        cox = None
        if "cartan" in desc:
            cox = CoxeterData(np.asarray(desc["cartan"], float), np.asarray(desc["frame"], float),
                              np.asarray(desc["orders"], int))
        g = cls([np.asarray(m, float) for m in desc["generators"]], desc.get("relations", ()),
                desc.get("label", "group"), cox)
        g.validate()
        return g

    # --- orbits ----------------------------------------------------------------
    def word_orbit(self, X, depth: int):
        """Homogeneous images w X for all words of length <= depth (deduplicated)."""
        from .orbits import enumerate_words
        return enumerate_words(self, X, depth).points

    def limit_seeds(self, count: int = 4):
        """Attracting fixed points of a few short loxodromic words (boundary points
        of any invariant properly convex domain)."""
        out = []
        names = [n for n, _ in self.letters()]
        words = []
        k = len(names)
        for length in (2, 3, 4):
            for idx in np.ndindex(*([k] * length)):
                w = "".join(names[i] for i in idx)
                if len(set(w)) == length or length == 2 and w[0] != w[1]:
                    words.append(w)
        for w in words:
            vals, vecs = np.linalg.eig(self.word_matrix(w))
            order = np.argsort(-np.abs(vals))
            top, second = vals[order[0]], vals[order[1]]
            if abs(top.imag) > 1e-12 or abs(top) < (1 + 1e-6) * abs(second):
                continue
            v = np.real(vecs[:, order[0]])
            out.append(v / np.linalg.norm(v))
            if len(out) >= count:
                break
        return np.array(out)


# --- constructors --------------------------------------------------------------

def _lorentz_frame(G):
    """T with T^T J T = G for a Lorentzian Gram matrix G (J = diag(-1, 1, ..., 1))."""
    w, Q = np.linalg.eigh(G)
    if np.sum(w < 0) != 1 or np.any(np.abs(w) < 1e-12):
        raise ValueError("Gram matrix is not Lorentzian")
    order = np.argsort(w)
    w, Q = w[order], Q[:, order]
    return np.sqrt(np.abs(w))[:, None] * Q.T


def coxeter_group(orders, deformation: float = 1.0, label: str | None = None) -> ProjectiveGroup:
    """Rank-3 hyperbolic Coxeter group acting on RP^2.

    ``orders`` = (p, q, r) are the exponents of (ab), (bc), (ca); 0 or inf
    means the two walls are parallel (an ideal vertex).  With deformation
    t != 1 the Cartan entries A_ab, A_ba become t A_ab, A_ba / t, a
    Kac-Vinberg style deformation; it is nontrivial only when the cyclic
    product A_ab A_bc A_ca is nonzero, i.e. no exponent equals 2.

    The ambient frame is the one of the undeformed group, with the chamber
    point moved to the origin of the Klein chart.
    """
    p, q, r = [0 if (m is None or m == 0 or np.isinf(m)) else int(m) for m in orders]
    m = np.array([[1, p, r], [p, 1, q], [r, q, 1]])

    def c(k):
        return 1.0 if k == 0 else np.cos(np.pi / k)

    G = np.eye(3)
    for i, j, k in ((0, 1, p), (1, 2, q), (0, 2, r)):
        G[i, j] = G[j, i] = -c(k)
    angle_sum = sum(0.0 if k == 0 else np.pi / k for k in (p, q, r))
    if angle_sum >= np.pi - 1e-12:
        raise ValueError("triangle is not hyperbolic")
    T = _lorentz_frame(G)
    A0 = 2 * G
    from .hyperbolic import boost, normalize
    x0 = T @ -np.linalg.solve(A0, np.ones(3))
    if x0[0] < 0:
        T = -T
        x0 = -x0
    T = np.linalg.inv(boost(normalize(x0))) @ T
    A = A0.copy()
    if deformation != 1.0:
        if deformation <= 0:
            raise ValueError("deformation parameter must be positive")
        A[0, 1] *= deformation
        A[1, 0] /= deformation
    cox = CoxeterData(A, T, m)
    S = cox.root_reflections()
    Tinv = np.linalg.inv(T)
    gens = [T @ Si @ Tinv for Si in S]
    rels = ["aa", "bb", "cc"]
    for (x, y), k in ((("a", "b"), p), (("b", "c"), q), (("c", "a"), r)):
        if k:
            rels.append((x + y) * k)
    if label is None:
        name = ",".join("inf" if k == 0 else str(k) for k in (p, q, r))
        label = f"triangle({name})" + ("" if deformation == 1.0 else f"@t={deformation:g}")
    group = ProjectiveGroup(gens, rels, label, cox, {"orders": [p, q, r], "deformation": deformation})
    _check_cartan(cox)
    group.validate()
    return group


def _check_cartan(cox: CoxeterData):
    A, m = cox.cartan, cox.orders
    k = A.shape[0]
    for i in range(k):
        for j in range(i + 1, k):
            target = 4.0 if m[i, j] == 0 else 4 * np.cos(np.pi / m[i, j]) ** 2
            prod = A[i, j] * A[j, i]
            if m[i, j] == 0:
                ok = prod >= target - 1e-12
            else:
                ok = abs(prod - target) < 1e-12
            if not ok or A[i, j] > 0 or A[j, i] > 0 or (A[i, j] == 0) != (A[j, i] == 0):
                raise HilbertLabError(f"Cartan entries ({i},{j}) are not admissible")
    if np.linalg.det(A) >= 0:
        raise HilbertLabError("Cartan matrix is not of negative type")


def sl2_lift(g):
    """SO(2,1) image of g in SL(2, R) acting on symmetric 2x2 matrices S -> g S g^T.

    Coordinates x = ((a + c)/2, (a - c)/2, b) for S = [[a, b], [b, c]], so
    det S = x0^2 - x1^2 - x2^2.
    """
    g = np.asarray(g, float)
    g = g / np.sqrt(abs(np.linalg.det(g)))
    basis = [np.array([[1.0, 0], [0, 1.0]]), np.array([[1.0, 0], [0, -1.0]]), np.array([[0, 1.0], [1.0, 0]])]
    L = np.empty((3, 3))
    for j, S in enumerate(basis):
        R = g @ S @ g.T
        L[:, j] = [(R[0, 0] + R[1, 1]) / 2, (R[0, 0] - R[1, 1]) / 2, R[0, 1]]
    return L


def eichler(ell, u):
    """Unipotent isometry x -> x + <x,l> u - <x,u> l - <u,u>/2 <x,l> l of the
    Minkowski form, fixing the null vector l (u orthogonal to l)."""
    ell = np.asarray(ell, float)
    u = np.asarray(u, float)
    n1 = ell.size
    J = np.diag([-1.0] + [1.0] * (n1 - 1))
    Jl, Ju = J @ ell, J @ u
    uu = u @ J @ u
    return np.eye(n1) + np.outer(u, Jl) - np.outer(ell, Ju) - 0.5 * uu * np.outer(ell, Jl)


def cyclic_group(matrix, label: str = "cyclic") -> ProjectiveGroup:
    return ProjectiveGroup([np.asarray(matrix, float)], (), label, meta={"kind": "cyclic"})


def parabolic_disc(label: str = "parabolic-disc") -> ProjectiveGroup:
    """Lift of [[1, 1], [0, 1]]; fixes the boundary point e1 of the unit disc."""
    g = cyclic_group(sl2_lift([[1.0, 1.0], [0.0, 1.0]]), label)
    g.meta.update(cusp=[1.0, 0.0], kind="parabolic")
    return g


def parabolic_powers_disc(label: str = "parabolic-disc-powers") -> ProjectiveGroup:
    """Rank-one cusp group with redundant generators p and p^2."""
    P = sl2_lift([[1.0, 1.0], [0.0, 1.0]])
    g = ProjectiveGroup([P, P @ P], ("aaB",), label, meta={"cusp": [1.0, 0.0], "kind": "parabolic"})
    g.validate()
    return g


def hyperbolic_disc(lam: float, label: str | None = None) -> ProjectiveGroup:
    """Lift of diag(lam, 1/lam): translation length 2 log lam along the e1 axis."""
    return cyclic_group(sl2_lift(np.diag([lam, 1.0 / lam])), label or f"loxodromic({lam:g})")


def rotation_disc(angle: float, label: str | None = None) -> ProjectiveGroup:
    from .hyperbolic import rotation_about_origin
    return cyclic_group(rotation_about_origin(2, angle), label or f"rotation({angle:g})")


def parabolic_ball(n: int = 3, label: str | None = None) -> ProjectiveGroup:
    """Rank n-1 abelian parabolic group fixing e1 in the unit ball of R^n."""
    ell = np.zeros(n + 1)
    ell[0] = ell[1] = 1.0
    gens = []
    for k in range(2, n + 1):
        u = np.zeros(n + 1)
        u[k] = 1.0
        gens.append(eichler(ell, u))
    letters = ascii_lowercase[:len(gens)]
    rels = [a + b + a.upper() + b.upper() for i, a in enumerate(letters) for b in letters[i + 1:]]
    cusp = np.eye(n)[0].tolist()
    g = ProjectiveGroup(gens, rels, label or f"parabolic-ball{n}", meta={"cusp": cusp, "kind": "parabolic"})
    g.validate()
    return g


def cusped_lattice(label: str = "triangle(2,3,inf)") -> ProjectiveGroup:
    """Nonuniform (2, 3, inf) reflection lattice of the disc."""
    return coxeter_group((2, 3, 0), label=label)


def cusp_subgroup(group: ProjectiveGroup) -> tuple[ProjectiveGroup, np.ndarray]:
    """Parabolic stabilizer of the ideal vertex of a Coxeter chamber, and its
    fixed point in chart coordinates."""
    if group.coxeter is None:
        raise ValueError("cusp subgroup needs a Coxeter group")
    m = group.coxeter.orders
    for i in range(3):
        for j in range(i + 1, 3):
            if m[i, j] == 0:
                P = group.generators[i].matrix @ group.generators[j].matrix
                vals, vecs = np.linalg.eig(P)
                k = int(np.argmin(np.abs(vals - 1.0)))
                xi = np.real(vecs[:, k])
                xi = xi[1:] / xi[0]
                word = ascii_lowercase[i] + ascii_lowercase[j]
                sub = cyclic_group(P, f"{group.label}:cusp[{word}]")
                sub.meta.update(cusp=(xi / np.linalg.norm(xi)).tolist(), kind="parabolic", word=word)
                return sub, xi / np.linalg.norm(xi)
    raise ValueError("the chamber has no ideal vertex")


def builtin_groups() -> dict:
    """Named example groups used by the scenes and the acceptance suite."""
    return {
        "triangle237": lambda: coxeter_group((2, 3, 7)),
        "triangle444": lambda: coxeter_group((4, 4, 4)),
        "triangle444-deformed": lambda: coxeter_group((4, 4, 4), deformation=2.0),
        "triangle23inf": cusped_lattice,
        "parabolic-disc": parabolic_disc,
        "parabolic-disc-powers": parabolic_powers_disc,
        "parabolic-ball3": lambda: parabolic_ball(3),
        "loxodromic-disc": lambda: hyperbolic_disc(2.0),
    }
