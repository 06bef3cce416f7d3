import numpy as np
import pytest

from compopt.errors import ConfigurationError, InvalidInputError, RegistryError
from compopt.outer import SupportCappedSimplex
from compopt.problems import (BUFFERED_ALPHA, BUFFERED_P, REGISTRY, brute_force_distance,
                              build_family, build_instance, capped_simplex_vertices,
                              capped_support_by_vertices, descriptor, grid_oracle,
                              list_instances, verify_instance)
from compopt.stationarity import StationarityTriple, residual


def test_unknown_instance():
    with pytest.raises(RegistryError):
        build_instance("nope")
    with pytest.raises(RegistryError):
        build_family("quartic")


def test_unknown_parameter():
    with pytest.raises(ConfigurationError):
        build_instance("quartic", {"theta": 2.0})


def test_parameter_override():
    p = build_instance("sincounter", {"theta": 4.0})
    assert p.params["theta"] == 4.0
    assert p.h.value(np.array([1.0])) == pytest.approx(4.0)


def test_listing_sorted_and_serializable():
    names = [d["name"] for d in list_instances()]
    assert names == sorted(REGISTRY)
    assert {"abs1d", "quartic", "sincounter", "buffered", "distpen", "sparse-concave"} <= set(names)
    assert descriptor("buffered").synthetic


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_instance_builds_and_verifies(name, rng):
    d = descriptor(name)
    p = build_instance(name)
    assert p.n == d.dims["n"] and p.m == d.dims["m"]
    assert p.X.contains(np.array(d.x0))
    for alg in d.algorithms:
        assert p.supports(alg)
    rep = verify_instance(p, rng)
    assert rep.ok, rep.checks


def test_abs1d_data():
    p = build_instance("abs1d")
    assert p.objective([0.0]) == 0.0
    assert p.jacobian([0.4])[0, 0] == pytest.approx(1.0)


def test_sincounter_data():
    p = build_instance("sincounter")
    assert p.inner([np.pi / 2]) == pytest.approx([1.0])
    assert p.jacobian([0.0])[0, 0] == pytest.approx(1.0)


def test_quartic_constants():
    p = build_instance("quartic")
    assert p.L_h == 1.0 and p.L_F == 4.0 and p.lipschitz_exact


def test_buffered_support_matches_vertex_enumeration(rng):
    h = SupportCappedSimplex(BUFFERED_P, BUFFERED_ALPHA, 1)
    verts = capped_simplex_vertices(BUFFERED_P, BUFFERED_ALPHA)
    caps = np.array(BUFFERED_P) / (1 - BUFFERED_ALPHA)
    assert np.allclose(verts.sum(axis=1), 1.0)
    assert np.all(verts >= -1e-14) and np.all(verts <= caps + 1e-12)
    for _ in range(200):
        w = rng.standard_normal(len(BUFFERED_P))
        assert h.value(w) == pytest.approx(capped_support_by_vertices(BUFFERED_P, BUFFERED_ALPHA, w),
                                           abs=1e-10)


def test_brute_force_matches_closed_forms():
    p = build_instance("abs1d")
    assert brute_force_distance(p, 0.3, 0.0, 0.0) == pytest.approx(0.3, abs=1e-6)
    assert brute_force_distance(p, 0.0, 0.5, 0.0) == pytest.approx(0.5, abs=1e-6)
    q = build_instance("quartic")
    assert brute_force_distance(q, 1.0, 0.0, 0.0) == pytest.approx(0.0, abs=1e-6)
    # at the upper box edge N_X = [0, inf) cannot absorb the outward gradient 4
    assert brute_force_distance(q, 2.0, 1.0, 3.0) == pytest.approx(4.0, abs=1e-6)
    assert brute_force_distance(q, 2.0, 0.0, 3.0) == pytest.approx(1.0, abs=1e-6)


def test_brute_force_needs_scalar_problem():
    with pytest.raises(InvalidInputError):
        brute_force_distance(build_instance("distpen2d"), 0.0, 0.0, 0.0)
    with pytest.raises(InvalidInputError):
        grid_oracle(build_instance("distpen2d"), -1, 1)


def test_grid_oracle_abs1d():
    points, _, _ = grid_oracle(build_instance("abs1d"), -1.0, 1.0)
    assert points == pytest.approx([0.0], abs=1e-3)


def test_grid_oracle_distpen1d_with_quadratic():
    # 0.1 x^2 + dist^2(x, {-1, 1})/2: x = +-5/6 and the DC-stationary kink at 0
    p = build_instance("distpen1d", {"c0": 0.1})
    points, _, _ = grid_oracle(p, -1.5, 1.5, step=1e-3, mode="dc")
    assert points == pytest.approx([-5 / 6, 0.0, 5 / 6], abs=1e-3)


def test_residual_engine_agrees_with_brute_force(rng):
    p = build_instance("quartic")
    for _ in range(200):
        x = rng.uniform(-2, 2)
        y = rng.uniform(-1.5, 1.5)
        z = rng.uniform(-1.5, 3)
        r = residual(p, StationarityTriple([x], [y], [z])).total
        assert r == pytest.approx(brute_force_distance(p, x, y, z), abs=1e-5)
