import numpy as np
import pytest

from hilbertlab.domains import Ellipsoid
from hilbertlab.dynamics import (classify, displacement, displacement_chart, horoball_ellipsoid,
                                 osculating_ellipsoids, short_loop_horoball)
from hilbertlab.errors import HilbertLabError, LevelNotFound, MapDoesNotPreserveDomain
from hilbertlab.groups import (ProjectiveGroup, builtin_groups, coxeter_group, cusp_subgroup,
                               hyperbolic_disc, parabolic_disc, parabolic_powers_disc, rotation_disc,
                               sl2_lift)
from hilbertlab.orbits import brute_force_count, orbit_ball
from hilbertlab.scene import group_basepoint


@pytest.mark.parametrize("name", sorted(builtin_groups()))
def test_builtin_relations_hold(name):
    G = builtin_groups()[name]()
    assert all(r < 1e-9 for r in G.relation_residuals().values())


def test_coxeter_groups_preserve_the_disc(disc):
    for orders in [(2, 3, 7), (4, 4, 4), (2, 3, 0)]:
        assert coxeter_group(orders).validate(disc)


def test_deformation_keeps_relations_but_leaves_the_disc(disc):
    G = coxeter_group((4, 4, 4), deformation=2.0)
    assert all(r < 1e-9 for r in G.relation_residuals().values())
    with pytest.raises(MapDoesNotPreserveDomain):
        G.validate(disc)


def test_bad_relations_rejected():
    G = ProjectiveGroup([np.diag([1.0, 2.0, 0.5])], ("aa",), "not-an-involution")
    with pytest.raises(HilbertLabError):
        G.validate()


def test_descriptor_round_trip():
    G = coxeter_group((2, 3, 7))
    again = ProjectiveGroup.from_descriptor(G.descriptor())
    assert np.allclose(again.word_matrix("abc"), G.word_matrix("abc"))


def test_displacement_examples(disc):
    half_turn = rotation_disc(np.pi).generators[0].matrix
    assert displacement(disc, np.eye(3), disc.chart.point([0.3, 0.1])) == 0.0
    assert displacement(disc, half_turn, disc.chart.point([0.0, 0.0])) == pytest.approx(0.0, abs=1e-12)
    assert displacement(disc, half_turn, disc.chart.point([0.5, 0.0])) == pytest.approx(2 * np.arctanh(0.5))


def test_displacement_conjugation_invariance(disc, rng):
    g = hyperbolic_disc(1.7).generators[0].matrix
    h = sl2_lift(np.array([[1.2, 0.4], [-0.3, 0.9]]))
    Y = disc.sample_interior(20, rng, shrink=0.8)
    hY = disc.chart.map_point(type(hyperbolic_disc(1.0).generators[0])(h), Y)
    assert np.allclose(displacement_chart(disc, h @ g @ np.linalg.inv(h), hY),
                       displacement_chart(disc, g, Y), atol=1e-9)


def test_shear_does_not_preserve_the_disc(disc):
    with pytest.raises(MapDoesNotPreserveDomain):
        displacement(disc, np.array([[1.0, 0, 0], [0, 1.0, 0.6], [0, 0, 1.0]]), disc.chart.point([0, 0]))


def test_classification(disc):
    assert classify(disc, parabolic_disc().generators[0].matrix).kind == "parabolic"
    c = classify(disc, hyperbolic_disc(2.0).generators[0].matrix)
    assert c.kind == "hyperbolic"
    assert c.evidence == pytest.approx(2 * np.log(2.0), rel=1e-6)
    assert classify(disc, rotation_disc(0.7).generators[0].matrix).kind == "elliptic-or-identity"


def test_orbit_below_minimal_displacement_is_the_basepoint(disc):
    G = coxeter_group((2, 3, 7))
    orb = orbit_ball(disc, G, group_basepoint(G, 2), 1e-3)
    assert int(orb.meta["within"].sum()) == 1


def test_orbit_matches_brute_force(disc):
    G = coxeter_group((2, 3, 7))
    O = disc.chart.from_chart(group_basepoint(G, 2))
    orb = orbit_ball(disc, G, O, 8.0)
    count = int(orb.meta["within"].sum())
    # the unpruned count has stabilized in the word length
    assert brute_force_count(disc, G, O, 8.0, 60) == count
    assert brute_force_count(disc, G, O, 8.0, 75) == count


def test_orbit_entries_and_replay(disc):
    G = coxeter_group((2, 3, 7))
    O = disc.chart.from_chart(group_basepoint(G, 2))
    orb = orbit_ball(disc, G, O, 3.0)
    entries = orb.entries()
    assert entries[0][0] == "" and entries[0][2] == 0.0
    M = np.array([m for _, m in G.letters()])
    P = orb.replay(M, O)
    assert np.allclose(P / P[:, :1], orb.points / orb.points[:, :1], atol=1e-9)
    for i in range(1, 20):
        X = G.word_matrix(orb.word(i)) @ O
        assert np.allclose(X / X[0], orb.points[i] / orb.points[i][0], atol=1e-9)


@pytest.mark.parametrize("name", ["parabolic-disc", "parabolic-disc-powers", "parabolic-ball3"])
def test_short_loop_horoballs(name):
    G = builtin_groups()[name]()
    D = Ellipsoid.unit_ball(G.dim)
    gens = [m for _, m in G.letters()]
    levels = []
    for eps in (0.2, 0.1, 0.05):
        ball = short_loop_horoball(D, gens, np.asarray(G.meta["cusp"]), eps, D.basepoint)
        assert ball.certificate["max_displacement"] < eps
        levels.append(ball.level)
    assert levels[0] > levels[1] > levels[2]


def test_lattice_cusp_horoball(disc):
    G = coxeter_group((2, 3, 0))
    sub, xi = cusp_subgroup(G)
    assert classify(disc, sub.generators[0].matrix).kind == "parabolic"
    ball = short_loop_horoball(disc, [sub.generators[0].matrix], xi, 0.1, group_basepoint(G, 2))
    assert ball.certificate["max_displacement"] < 0.1


def test_short_loop_rejects_hyperbolic(disc):
    with pytest.raises(LevelNotFound):
        short_loop_horoball(disc, [hyperbolic_disc(2.0).generators[0].matrix], np.array([1.0, 0.0]), 0.1,
                            max_steps=12)


def test_osculating_ellipsoids(disc):
    theta = np.array([1.0, 0.0])
    assert osculating_ellipsoids(disc, disc, disc, theta).passed
    inner = horoball_ellipsoid(theta, -0.5)
    assert osculating_ellipsoids(inner, disc, disc, theta).passed
    offset = Ellipsoid(np.diag([-0.25, 1.0, 1.0]))
    assert not osculating_ellipsoids(offset, disc, disc, theta).tangent
