"""Homogeneous-coordinate linear algebra on RP^n.

Points are stored in a canonical normalization (unit Euclidean norm, first
nonzero entry positive) so that equality and hashing are well defined.
Affine charts are given by a linear functional; chart coordinates are taken
in a fixed orthonormal basis of the functional's kernel.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import TOL
from .errors import DegenerateConfiguration, NonCollinear


def canonicalize(coords):
    """Canonical representative(s) of homogeneous vectors (last axis)."""
    c = np.asarray(coords, dtype=float)
    norm = np.linalg.norm(c, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise ValueError("zero vector is not a projective point")
    c = c / norm
    idx = np.argmax(np.abs(c) > 1e-15, axis=-1)
    lead = np.take_along_axis(c, idx[..., None], axis=-1)
    return c * np.where(lead < 0, -1.0, 1.0)


@dataclass(frozen=True, eq=False)
class ProjectivePoint:
    coords: np.ndarray

    def __post_init__(self):
        c = canonicalize(np.asarray(self.coords, dtype=float).reshape(-1))
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    @property
    def dim(self) -> int:
        return self.coords.size - 1

    def __eq__(self, other):
        if not isinstance(other, ProjectivePoint) or other.dim != self.dim:
            return NotImplemented
        return bool(np.max(np.abs(self.coords - other.coords)) < TOL.point_equality)

    def __hash__(self):
        return hash(tuple(np.round(self.coords, 9)))

    def __repr__(self):
        return f"ProjectivePoint({np.array2string(self.coords, precision=6)})"


@dataclass(frozen=True, eq=False)
class ProjectiveMap:
    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("projective map needs a square matrix")
        scaled = m / np.linalg.norm(m)
        if abs(np.linalg.det(scaled)) <= TOL.map_conditioning:
            raise ValueError("matrix is not invertible")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0] - 1

    def __matmul__(self, other):
        if isinstance(other, ProjectiveMap):
            return ProjectiveMap(self.matrix @ other.matrix)
        if isinstance(other, ProjectivePoint):
            return apply_map(self, other)
        return NotImplemented

    def inverse(self) -> "ProjectiveMap":
        return ProjectiveMap(np.linalg.inv(self.matrix))

    @classmethod
    def identity(cls, n: int) -> "ProjectiveMap":
        return cls(np.eye(n + 1))


def apply_map(g: ProjectiveMap, p: ProjectivePoint) -> ProjectivePoint:
    return ProjectivePoint(g.matrix @ p.coords)


@dataclass(frozen=True, eq=False)
class AffineChart:
    """Chart {X : functional(X) != 0} -> R^n, X -> basis @ (X / functional(X))."""

    functional: np.ndarray
    basis: np.ndarray = field(default=None)

    def __post_init__(self):
        phi = np.asarray(self.functional, dtype=float).reshape(-1)
        if np.linalg.norm(phi) == 0:
            raise ValueError("chart functional must be nonzero")
        basis = self.basis
        if basis is None:
            # Orthonormal basis of phi^perp; the standard one when phi = e0.
            if np.allclose(phi / np.linalg.norm(phi), np.eye(phi.size)[0]):
                basis = np.eye(phi.size)[1:]
            else:
                _, _, vt = np.linalg.svd(phi[None, :])
                basis = vt[1:]
        object.__setattr__(self, "functional", phi)
        object.__setattr__(self, "basis", np.asarray(basis, dtype=float))

    @property
    def dim(self) -> int:
        return self.functional.size - 1

    @classmethod
    def standard(cls, n: int) -> "AffineChart":
        return cls(np.eye(n + 1)[0])

    def evaluate(self, X):
        return np.asarray(X, dtype=float) @ self.functional

    def to_chart(self, X):
        if isinstance(X, ProjectivePoint):
            X = X.coords
        X = np.asarray(X, dtype=float)
        f = X @ self.functional
        return (X / f[..., None]) @ self.basis.T

    def from_chart(self, y):
        y = np.asarray(y, dtype=float)
        base = self.functional / (self.functional @ self.functional)
        return base + y @ self.basis

    def direction_to_homogeneous(self, v):
        return np.asarray(v, dtype=float) @ self.basis

    def point(self, y) -> ProjectivePoint:
        return ProjectivePoint(self.from_chart(y))

    def coords(self, p) -> np.ndarray:
        """Chart coordinates of a ProjectivePoint, or pass array input through."""
        if isinstance(p, ProjectivePoint):
            return self.to_chart(p.coords)
        return np.asarray(p, dtype=float)

    def map_point(self, g: ProjectiveMap, y):
        return self.to_chart(self.from_chart(y) @ g.matrix.T)

    def map_direction(self, g: ProjectiveMap, y, v):
        """Differential of the chart expression of g at y applied to v."""
        X = self.from_chart(y)
        gX = X @ g.matrix.T
        gV = self.direction_to_homogeneous(v) @ g.matrix.T
        f = gX @ self.functional
        df = gV @ self.functional
        d = gV / f[..., None] - gX * (df / f**2)[..., None]
        return d @ self.basis.T


def _line_coordinates(points):
    M = canonicalize(np.stack([p.coords if isinstance(p, ProjectivePoint) else np.asarray(p, float)
                               for p in points]))
    _, s, vt = np.linalg.svd(M)
    if s.size > 2 and s[2] > TOL.collinearity * s[0]:
        raise NonCollinear(f"singular value ratio {s[2] / s[0]:.3e}")
    return M @ vt[:2].T


def cross_ratio(a, x, y, b) -> float:
    """[a:x:y:b] = |a-y||b-x| / (|a-x||b-y|), computed chart-free on the line.

    With 2-vector line coordinates the Euclidean cross-ratio in any chart equals
    the ratio of 2x2 determinants, since every point enters once above and once
    below the fraction bar.
    """
    A, Xc, Y, B = _line_coordinates([a, x, y, b])

    def det(p, q):
        return p[0] * q[1] - p[1] * q[0]

    scale = 1e-12
    ax, by = det(A, Xc), det(B, Y)
    if abs(ax) < scale or abs(by) < scale:
        raise DegenerateConfiguration("a coincides with x or b coincides with y")
    return abs(det(A, Y) * det(B, Xc)) / abs(ax * by)
