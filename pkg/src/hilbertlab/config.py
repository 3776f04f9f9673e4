"""Numerical tolerances, gathered in one record so they can be audited."""
from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    point_equality: float = 1e-12
    map_conditioning: float = 1e-12
    collinearity: float = 1e-9
    chord_bisection_steps: int = 80
    chord_newton_steps: int = 5
    boundary_margin: float = 1e-10
    busemann_spread: float = 1e-6
    relation_residual: float = 1e-9
    barycenter_gradient: float = 1e-8
    barycenter_max_iter: int = 10_000
    sphere_nodes: int = 4096
    volume_rel_error: float = 0.02
    parabolic_displacement: float = 1e-3


TOL = Tolerances()
