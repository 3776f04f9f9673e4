"""Quadrature and low-discrepancy point sets on the unit sphere S^{n-1}."""
from __future__ import annotations

import math

import numpy as np
from scipy.spatial.transform import Rotation


def sphere_area(n: int) -> float:
    """Area of the unit sphere S^{n-1} in R^n."""
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def sphere_rule(n: int, nodes: int):
    """Nodes and weights (summing to the sphere area) on S^{n-1}, n in {2, 3}.

    Circle: trapezoid rule.  Sphere: Gauss-Legendre in z times trapezoid in
    the azimuth, with about ``nodes`` points in total.
    """
    if n == 2:
        ang = 2 * np.pi * np.arange(nodes) / nodes
        U = np.stack([np.cos(ang), np.sin(ang)], axis=1)
        return U, np.full(nodes, 2 * np.pi / nodes)
    if n == 3:
        m = max(4, int(round(math.sqrt(nodes / 2))))
        z, wz = np.polynomial.legendre.leggauss(m)
        k = 2 * m
        phi = 2 * np.pi * np.arange(k) / k
        Z, P = np.meshgrid(z, phi, indexing="ij")
        r = np.sqrt(1 - Z**2)
        U = np.stack([r * np.cos(P), r * np.sin(P), Z], axis=-1).reshape(-1, 3)
        W = np.repeat(wz, k) * (2 * np.pi / k)
        return U, W
    raise ValueError("sphere quadrature is implemented for n = 2, 3")


def fibonacci_sphere(count: int, n: int = 3, rng=None):
    """Spiral low-discrepancy points on S^2 (circle points when n = 2)."""
    if n == 2:
        phase = rng.uniform(0, 2 * np.pi) if rng is not None else 0.0
        ang = phase + 2 * np.pi * (np.arange(count) + 0.5) / count
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    if n != 3:
        raise ValueError("low-discrepancy sets implemented for n = 2, 3")
    i = np.arange(count) + 0.5
    z = 1 - 2 * i / count
    golden = math.pi * (3 - math.sqrt(5))
    phi = golden * i
    r = np.sqrt(1 - z**2)
    U = np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)
    if rng is not None:
        U = U @ Rotation.random(random_state=rng).as_matrix().T
    return U
