"""Orbit enumeration: word trees, distance-pruned orbit balls, and a brute-force oracle.

Every orbit is stored as a tree: entry i is ``letter[i]`` applied on the
left of entry ``parent[i]``, so its word is that letter followed by the
parent's word.  Entries are in shortlex order of their words.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import OrbitTooSmall
from .projective import ProjectivePoint


@dataclass
class Orbit:
    letters: list            # letter names, indexed by ``letter``
    parent: np.ndarray
    letter: np.ndarray
    length: np.ndarray
    points: np.ndarray       # homogeneous vectors
    distance: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.parent)

    def word(self, i: int) -> str:
        out = []
        while self.parent[i] >= 0:
            out.append(self.letters[self.letter[i]])
            i = self.parent[i]
        return "".join(out)

    def words(self):
        words = [""] * len(self)
        for i in range(1, len(self)):
            words[i] = self.letters[self.letter[i]] + words[self.parent[i]]
        return words

    def entries(self):
        """(word, ProjectivePoint, distance) triples in shortlex order."""
        words = self.words()
        dist = self.distance if self.distance is not None else np.full(len(self), np.nan)
        within = self.meta.get("within", np.ones(len(self), bool))
        return [(w, ProjectivePoint(p), float(d))
                for w, p, d, ok in zip(words, self.points, dist, within) if ok]

    def replay(self, matrices, x0):
        """Images of x0 under the same words for another choice of letter matrices."""
        matrices = np.asarray(matrices, float)
        out = np.empty((len(self), len(x0)))
        out[0] = x0
        for k in range(1, int(self.length.max(initial=0)) + 1):
            idx = np.nonzero(self.length == k)[0]
            out[idx] = np.einsum("nij,nj->ni", matrices[self.letter[idx]], out[self.parent[idx]])
        return out

    def select(self, mask):
        """Sub-orbit keeping the masked entries; the mask must be closed under parents."""
        mask = np.asarray(mask, bool)
        keep = np.nonzero(mask)[0]
        if np.any(mask[self.parent[keep[1:]]] == False):  # noqa: E712
            raise ValueError("selection is not closed under taking parents")
        remap = -np.ones(len(self), int)
        remap[keep] = np.arange(len(keep))
        parent = np.where(self.parent[keep] >= 0, remap[np.maximum(self.parent[keep], 0)], -1)
        return Orbit(self.letters, parent, self.letter[keep], self.length[keep], self.points[keep],
                     None if self.distance is None else self.distance[keep], dict(self.meta))


def _coxeter_layers(group, x0, keep_fn, max_length, shards=1):
    """Canonical reduced words, one group element per word.

    u = s w is kept (w already canonical) when s is not a left descent of w
    and s is the smallest left descent of u.  Left descents are read off the
    sign of the simple roots under u^{-1}, tracked in root coordinates.
    """
    cox = group.coxeter
    S = cox.root_reflections()
    T = cox.frame
    Tinv = np.linalg.inv(T)
    M = np.einsum("ij,sjk,kl->sil", T, S, Tinv)
    k = cox.rank
    inv = [np.eye(k)[None]]
    par, let, ln, pts = [np.array([-1])], [np.array([0])], [np.array([0])], [np.asarray(x0, float)[None]]
    layer_inv, layer_pts, offset = inv[0], pts[0], 0
    for length in range(1, max_length + 1):
        cand_par, cand_let, cand_inv, cand_pts = [], [], [], []
        m = len(layer_pts)
        bounds = np.linspace(0, m, shards + 1).astype(int)
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            Winv, P = layer_inv[lo:hi], layer_pts[lo:hi]
            for s in range(k):
                grows = Winv[:, :, s].sum(axis=1) > 0
                Uinv = Winv[grows] @ S[s]
                ok = np.ones(len(Uinv), bool)
                for t in range(s):
                    ok &= Uinv[:, :, t].sum(axis=1) > 0
                idx = np.nonzero(grows)[0][ok]
                cand_par.append(offset + lo + idx)
                cand_let.append(np.full(len(idx), s))
                cand_inv.append(Uinv[ok])
                cand_pts.append(P[idx] @ M[s].T)
        cp = np.concatenate(cand_par)
        cl = np.concatenate(cand_let)
        ci = np.concatenate(cand_inv)
        cx = np.concatenate(cand_pts)
        keep = keep_fn(cx)
        if not np.any(keep):
            break
        cp, cl, ci, cx = cp[keep], cl[keep], ci[keep], cx[keep]
        order = np.lexsort((cp, cl))  # shortlex: first letter, then parent's rank
        offset += m
        layer_inv, layer_pts = ci[order], cx[order]
        par.append(cp[order])
        let.append(cl[order])
        ln.append(np.full(len(order), length))
        pts.append(layer_pts)
    names = [chr(ord("a") + i) for i in range(k)]
    return Orbit(names, np.concatenate(par), np.concatenate(let), np.concatenate(ln), np.concatenate(pts))


def _free_layers(group, x0, keep_fn, max_length, shards=1, tol=1e-6):
    """Breadth-first search over all words with deduplication of orbit points.

    Points are compared as homogeneous vectors of determinant-one matrices
    applied to x0, sign-fixed, rounded at ``tol`` relative to |x0|.
    """
    letters = group.letters()
    names = [n for n, _ in letters]
    M = np.array([m for _, m in letters])
    x0 = np.asarray(x0, float)
    scale = tol * np.linalg.norm(x0)

    def keys(P):
        lead = P[np.arange(len(P)), np.argmax(np.abs(P) > 1e-300, axis=1)]
        K = np.round(np.sign(lead)[:, None] * P / scale).astype(np.int64)
        return [row.tobytes() for row in K]

    seen = set(keys(x0[None]))
    par, let, ln, pts = [np.array([-1])], [np.array([0])], [np.array([0])], [x0[None]]
    layer, offset = x0[None], 0
    for length in range(1, max_length + 1):
        cp, cl, cx = [], [], []
        for s in range(len(M)):
            cp.append(offset + np.arange(len(layer)))
            cl.append(np.full(len(layer), s))
            cx.append(layer @ M[s].T)
        cp, cl, cx = np.concatenate(cp), np.concatenate(cl), np.concatenate(cx)
        order = np.lexsort((cp, cl))
        order = order[keep_fn(cx[order])]
        new = []
        for i, kk in zip(order, keys(cx[order])):
            if kk not in seen:
                seen.add(kk)
                new.append(i)
        if not new:
            break
        new = np.array(new)
        offset += len(layer)
        layer = cx[new]
        par.append(cp[new])
        let.append(cl[new])
        ln.append(np.full(len(new), length))
        pts.append(layer)
    return Orbit(names, np.concatenate(par), np.concatenate(let), np.concatenate(ln), np.concatenate(pts))


def enumerate_words(group, X, depth: int, canonical: bool = True) -> Orbit:
    """Orbit of X under all words of length <= depth."""
    def everything(P):
        return np.ones(len(P), bool)
    if group.coxeter is not None and canonical:
        return _coxeter_layers(group, X, everything, depth)
    return _free_layers(group, X, everything, depth)


def generator_displacement(domain, group, X):
    return max(float(domain.distance_homogeneous(X, M @ X)) for _, M in group.letters())


def orbit_ball(domain, group, o=None, R_max: float = 5.0, *, max_length: int = 10_000,
               shards: int = 1, prune: bool = True) -> Orbit:
    """All orbit points g o with d(o, g o) <= R_max, one per group element.

    Coxeter groups acting on an exact invariant domain use canonical words;
    distance is then nondecreasing along canonical extensions (a reflection
    moves a point on the basepoint's side of its wall farther away), so
    pruning at R_max is exact.  Other cases keep a slack of twice the largest
    generator displacement, which is a heuristic for non-Coxeter groups.
    ``prune=False`` expands the full word tree up to ``max_length``.
    """
    if o is None:
        o = domain.chart.from_chart(domain.basepoint)
    o = np.asarray(o, float)
    if o.size == domain.dim:
        o = domain.chart.from_chart(o)
    delta = generator_displacement(domain, group, o)
    exact = group.coxeter is not None and not domain.approximation
    slack = 1e-9 if exact else 2 * delta

    def keep_fn(P):
        if not prune:
            return np.ones(len(P), bool)
        return domain.distance_homogeneous(o[None], P) <= R_max + slack

    if group.coxeter is not None:
        orb = _coxeter_layers(group, o, keep_fn, max_length, shards)
    else:
        orb = _free_layers(group, o, keep_fn, max_length, shards)
    d = domain.distance_homogeneous(o[None], orb.points)
    d[0] = 0.0
    orb.distance = d
    within = d <= R_max
    # entries beyond R_max can still be parents of kept ones; keep the tree closed
    need = within.copy()
    for i in np.nonzero(within)[0][::-1]:
        j = orb.parent[i]
        while j >= 0 and not need[j]:
            need[j] = True
            j = orb.parent[j]
    orb.meta.update(R_max=R_max, slack=slack, basepoint=o.tolist(), exact=exact,
                    generator_displacement=delta, group=group.label)
    orb = orb.select(need)
    orb.meta["within"] = orb.distance <= R_max
    return orb


def require_size(orbit: Orbit, minimum: int):
    inside = int(np.sum(orbit.meta.get("within", np.ones(len(orbit), bool))))
    if inside < minimum:
        raise OrbitTooSmall(f"orbit has {inside} points, need {minimum}")
    return orbit


def brute_force_count(domain, group, o, R_max: float, max_length: int) -> int:
    """Oracle: all distinct orbit points from words of length <= max_length, no
    pruning, no canonical forms; count those within R_max."""
    orb = _free_layers(group, o, lambda P: np.ones(len(P), bool), max_length)
    d = domain.distance_homogeneous(np.asarray(o, float)[None], orb.points)
    return int(np.sum(d <= R_max))
