"""Numerical laboratory for Hilbert geometries of convex projective domains.

Hilbert metric, volume and entropy on convex domains, projective group
actions and their orbits, Patterson-Sullivan style boundary measures, and
the barycenter (natural) map into hyperbolic space.
"""
__version__ = "0.1.0"
