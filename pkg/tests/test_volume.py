import numpy as np
import pytest

from hilbertlab.errors import BudgetExceeded, OrbitTooSmall
from hilbertlab.metric import distance_chart
from hilbertlab.quadrature import ball_volume as unit_ball_volume
from hilbertlab.volume import (ball_volume, count_profile, entropy_ball_growth, fit_growth,
                               volume_density, volume_density_chart)

from conftest import stretched_ellipsoid


def test_density_hand_values(disc):
    assert volume_density(disc, disc.chart.point([0.0, 0.0])) == pytest.approx(1.0, rel=1e-9)
    assert volume_density(disc, disc.chart.point([0.5, 0.0])) == pytest.approx(0.75 ** -1.5, rel=1e-9)


def test_klein_density_oracle(ball3, rng):
    Y = ball3.sample_interior(30, rng, shrink=0.9)
    ref = (1 - np.sum(Y ** 2, axis=1)) ** -2.0
    assert np.allclose(volume_density_chart(ball3, Y), ref, rtol=1e-8)


def test_density_transforms_as_a_volume(disc, rng):
    # under a chart-affine map the density picks up the inverse Jacobian determinant
    E, A = stretched_ellipsoid(rng)
    x = 0.4 * rng.uniform(-1, 1, 2)
    Lx = E.chart.to_chart(A @ np.r_[1.0, x])
    det = abs(np.linalg.det(A[1:, 1:]))
    assert volume_density_chart(E, Lx[None])[0] * det == pytest.approx(
        volume_density_chart(disc, x[None])[0], rel=1e-9)


def test_ball_volume_closed_form(disc):
    v = ball_volume(disc, disc.chart.point([0.0, 0.0]), 1.0, seed=3)
    assert v.value == pytest.approx(2 * np.pi * (np.cosh(1) - 1), rel=0.02)
    assert v.stderr <= 0.02 * v.value


def test_small_ball_normalization(disc):
    R = 0.05
    o = disc.chart.point([0.0, 0.0])
    v = ball_volume(disc, o, R, seed=0)
    assert v.value / (unit_ball_volume(2) * R ** 2 * volume_density(disc, o)) == pytest.approx(1.0, rel=0.05)
    # Busemann-Hausdorff normalization: small metric balls have volume omega_n R^n anywhere
    v = ball_volume(disc, disc.chart.point([0.3, -0.2]), R, seed=0)
    assert v.value / (unit_ball_volume(2) * R ** 2) == pytest.approx(1.0, rel=0.05)


def test_ball_volume_monotone_and_reproducible(pball):
    x = pball.chart.point(pball.basepoint)
    kw = dict(nodes=256, target=0.05, replicates=4, batch=64)
    v1, v2 = ball_volume(pball, x, 1.0, seed=5, **kw), ball_volume(pball, x, 2.0, seed=5, **kw)
    assert v2.value > v1.value
    assert ball_volume(pball, x, 1.0, seed=5, **kw) == v1


def test_region_restricts_the_integral(disc):
    x = disc.chart.point([0.0, 0.0])
    half = ball_volume(disc, x, 1.0, seed=1, region=lambda Y: Y[:, 0] >= 0)
    full = ball_volume(disc, x, 1.0, seed=1)
    assert half.value == pytest.approx(0.5 * full.value, rel=0.03)


def test_budget_exceeded(disc):
    with pytest.raises(BudgetExceeded):
        ball_volume(disc, disc.chart.point([0.0, 0.0]), 3.0, seed=0, target=1e-7, max_samples=4096)


def test_ball_growth_invariant_under_linear_images(disc, rng):
    E, A = stretched_ellipsoid(rng)
    h1 = entropy_ball_growth(disc, disc.chart.point([0.0, 0.0]), 3.0, 5.0, seed=2)
    h2 = entropy_ball_growth(E, E.chart.point(E.chart.to_chart(A @ np.r_[1.0, 0.0, 0.0])), 3.0, 5.0, seed=2)
    assert abs(h1.value - h2.value) <= 3 * np.hypot(h1.standard_error, h2.standard_error) + 1e-3


def test_count_profile_and_fit():
    h = 0.7
    d = np.log(np.arange(1, 200_001)) / h          # N(R) = e^{hR} exactly
    radii, counts = count_profile(d, 15.0)
    slope, err, window = fit_growth(radii, counts)
    assert slope == pytest.approx(h, abs=0.01)
    assert window[0] >= radii[0]
    with pytest.raises(OrbitTooSmall):
        fit_growth(radii, counts, minimum=10 ** 9)


def test_cyclic_orbit_distances(disc):
    from hilbertlab.groups import hyperbolic_disc
    from hilbertlab.orbits import orbit_ball
    orb = orbit_ball(disc, hyperbolic_disc(2.0), np.zeros(2), 10.0)
    d = np.sort(orb.distance[orb.meta["within"]])
    ell = 2 * np.log(2.0)
    k = np.arange(1, int(10 / ell) + 1)
    assert np.allclose(d, np.sort(np.r_[0.0, k * ell, k * ell]), atol=1e-9)
