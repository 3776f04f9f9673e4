import numpy as np
import pytest
from hypothesis import given, strategies as st

from hilbertlab import hyperbolic as hyp
from hilbertlab.barycenter import (bar, busemann_functional, busemann_gradient, busemann_hyperbolic,
                                   eccentricity, halfspace_control_D, hilbert_density, homotopy_track,
                                   jacobian_check, natural_map)
from hilbertlab.domains import Ellipsoid, PNormBall
from hilbertlab.errors import MassTooConcentrated, StepTooLarge
from hilbertlab.groups import coxeter_group
from hilbertlab.measures import (BoundaryMeasure, IdentityCorrespondence, PattersonSullivan, halfspace_mass,
                                 visual_measure)
from hilbertlab.scene import group_basepoint

from conftest import stretched_ellipsoid


def random_measure(rng, n=2, atoms=12):
    return BoundaryMeasure(rng.standard_normal((atoms, n)), rng.uniform(0.5, 1.5, atoms))


@pytest.fixture(scope="module")
def family():
    D = Ellipsoid.unit_ball(2)
    G = coxeter_group((2, 3, 7))
    return PattersonSullivan(D, G, 1.05, 7.0, group_basepoint(G, 2), pad=1.5)


def test_busemann_closed_form():
    o = hyp.from_klein([0.1, 0.2])
    xi = hyp.ideal([0.0, 1.0])
    assert busemann_hyperbolic(o, xi, o) == 0.0
    assert busemann_hyperbolic(o, xi, hyp.geodesic_toward(o, xi, 2.5)) == pytest.approx(-2.5, abs=1e-12)


def test_gradient_matches_finite_differences(rng):
    m = random_measure(rng)
    y = hyp.from_klein([0.2, -0.1])
    g = busemann_gradient(y, m)
    for _ in range(3):
        u = hyp.project_tangent(y, np.r_[0.0, rng.standard_normal(2)])
        h = 1e-5
        fd = (busemann_functional(hyp.exp_map(y, h * u), m) - busemann_functional(hyp.exp_map(y, -h * u), m)) / (2 * h)
        assert fd == pytest.approx(hyp.mink(g, u), abs=1e-7)


def test_roots_of_unity_center_the_disc():
    ang = 2 * np.pi * np.arange(3) / 3
    m = BoundaryMeasure(np.stack([np.cos(ang), np.sin(ang)], 1), np.ones(3))
    res = bar(m)
    assert np.linalg.norm(res.klein) < 1e-8
    assert res.gradient_norm <= 1e-8 * m.total_mass


def test_concentrated_mass_rejected():
    m = BoundaryMeasure([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]], [2.0, 1.0, 1.0])
    with pytest.raises(MassTooConcentrated):
        bar(m)


@pytest.mark.parametrize("n", [2, 3])
def test_visual_barycenter(n, rng):
    for _ in range(5):
        y = hyp.from_klein(0.8 * rng.uniform(-1, 1, n) / np.sqrt(n))
        assert hyp.distance(bar(visual_measure(y, 4096, seed=1)).point, y) < 0.05


@given(st.integers(0, 2 ** 32 - 1))
def test_equivariance_homogeneity_and_start(seed):
    rng = np.random.default_rng(seed)
    m = random_measure(rng)
    g = hyp.random_isometry(2, rng)
    base = bar(m, tolerance=1e-12).point
    assert hyp.distance(bar(m.pushed(g), tolerance=1e-12).point, base @ g.T) < 1e-7
    assert hyp.distance(bar(m.scaled(3.7), tolerance=1e-12).point, base) < 1e-9
    start = hyp.from_klein(rng.uniform(-0.6, 0.6, 2))
    assert hyp.distance(bar(m, start=start).point, base) < 1e-6


@given(st.integers(0, 2 ** 32 - 1))
def test_functional_is_geodesically_convex(seed):
    rng = np.random.default_rng(seed)
    m = random_measure(rng)
    a, b = hyp.from_klein(rng.uniform(-0.6, 0.6, (2, 2)))
    mid = hyp.exp_map(a, 0.5 * hyp.log_map(a, b))
    assert busemann_functional(mid, m) <= 0.5 * (busemann_functional(a, m) + busemann_functional(b, m)) + 1e-9


def test_halfspace_constant():
    D2, D3 = halfspace_control_D(2), halfspace_control_D(3)
    assert D2 == pytest.approx(np.arctanh(0.5), abs=1e-9)
    assert D3 >= D2 - 1e-9


def test_halfspace_control_on_concentrated_measures(rng):
    D = halfspace_control_D(2)
    H = hyp.HalfspaceAtInfinity.from_klein([1.0, 0.0], 0.3)
    for _ in range(100):
        inside = rng.integers(6, 12)
        ang_in = rng.uniform(-1.2, 1.2, inside)        # within the cap {k1 >= 0.3}
        ang_out = rng.uniform(1.3, 2 * np.pi - 1.3, 3)
        ang = np.r_[ang_in, ang_out]
        m = BoundaryMeasure(np.stack([np.cos(ang), np.sin(ang)], 1), rng.uniform(0.5, 1.5, len(ang)))
        if halfspace_mass(m, H) <= 2 / 3 * m.total_mass or m.max_atom() >= 0.5 * m.total_mass:
            continue
        assert H.distance(bar(m).point) <= D


def test_natural_map_close_to_identity(family):
    corr = IdentityCorrespondence(family.domain)
    x = family.o_chart + np.array([0.05, -0.03])
    val = natural_map(family, corr, x)
    assert hyp.distance(val.point, corr.interior(x)) < 0.1
    assert val.result.gradient_norm <= 1e-8


def test_natural_map_equivariance(family):
    corr = IdentityCorrespondence(family.domain)
    x = family.o_chart + np.array([0.02, 0.01])
    for _, M in family.group.letters():
        gx = hyp.to_klein(M @ hyp.from_klein(x))
        a = natural_map(family, corr, x, tolerance=1e-12).point
        b = natural_map(family, corr, gx, tolerance=1e-12).point
        assert hyp.distance(M @ a, b) < 1e-6


def test_homotopy_endpoints(family):
    corr = IdentityCorrespondence(family.domain)
    x = family.o_chart + np.array([0.03, 0.0])
    track = homotopy_track(family, corr, x, [0.0, 0.5, 1.0], visual_atoms=4096)
    assert hyp.distance(track[0]["point"], corr.interior(x)) < 0.05
    assert np.array_equal(track[-1]["point"], natural_map(family, corr, x).point)


def test_jacobian_of_the_identity_map(disc):
    x = np.array([0.3, -0.2])
    rep = jacobian_check(lambda y: np.asarray(y, float), x, hilbert_density(disc, x))
    assert rep.jacobian == pytest.approx(1.0, abs=1e-6)
    assert not rep.violation and rep.ratio == pytest.approx(1.0, abs=1e-6)


def test_jacobian_step_too_large(disc):
    x = np.array([0.0, 0.0])
    with pytest.raises(StepTooLarge):
        jacobian_check(lambda y: np.array([np.sin(80 * y[0]), y[1]]), x, 1.0, step=0.1)


def test_eccentricity_of_ellipsoids(rng):
    E, _ = stretched_ellipsoid(rng)
    rep = eccentricity(E, E.sample_interior(5, rng, shrink=0.8))
    assert np.allclose(rep.N_value, 1.0, atol=1e-6)
    assert np.allclose(rep.K, 1.0, atol=1e-6)


def test_eccentricity_of_a_pball(rng):
    D = PNormBall(4.0, n=2)
    rep = eccentricity(D, D.sample_interior(5, rng, shrink=0.8))
    assert np.all(rep.N_value >= 1 - 1e-9)
    assert np.all(rep.sandwich_ok)
    assert np.all(rep.K ** (-4) <= rep.N_value) and np.all(rep.N_value <= rep.K ** 4)
