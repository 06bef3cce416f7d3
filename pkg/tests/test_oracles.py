import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from compopt.errors import ConfigurationError, InfeasiblePointError, InvalidInputError
from compopt.oracles import (AffineMapping, Ball, Box, CallableMapping, ConcaveDistancePart,
                             FiniteSet, MaxAffine, Polyhedron, Quadratic, WholeSpace,
                             fd_gradient_error, fd_jacobian_error, half_lipschitz_violation,
                             mapping_lipschitz, sample_in_set)

finite = st.floats(-10, 10, allow_nan=False)


def test_box_projection_clamps():
    assert np.allclose(Box([-1, -1], [1, 1]).project([2.0, 0.5]), [1.0, 0.5])


def test_finite_set_tie_goes_to_smallest_point():
    assert FiniteSet([[1.0], [-1.0]]).project([0.0]).tolist() == [-1.0]


def test_ball_projection_scales_radially():
    assert np.allclose(Ball([0, 0], 1.0).project([3.0, 4.0]), [0.6, 0.8])


def test_projection_dimension_mismatch():
    with pytest.raises(InvalidInputError):
        Box([0, 0], [1, 1]).project([1.0, 2.0, 3.0])


def test_tangent_residual_examples():
    assert WholeSpace(2).tangent_residual([0.0, 0.0], [1.0, 2.0]) == pytest.approx(np.sqrt(5))
    # n = -1 lies in N_X(0) for X = [0, 1]
    assert Box([0.0], [1.0]).tangent_residual([0.0], [1.0]) == pytest.approx(0.0)
    assert Box([0.0], [1.0]).tangent_residual([0.0], [-1.0]) == pytest.approx(1.0)
    assert Box([0.0], [1.0]).tangent_residual([0.5], [0.7]) == pytest.approx(0.7)


def test_tangent_residual_infeasible_point():
    with pytest.raises(InfeasiblePointError):
        Box([0.0], [1.0]).tangent_residual([2.0], [1.0])


def test_ball_and_polyhedron_boundary_residuals():
    # at (1, 0) on the unit ball the normal cone is the ray of (1, 0)
    B = Ball([0.0, 0.0], 1.0)
    assert B.tangent_residual([1.0, 0.0], [-3.0, 2.0]) == pytest.approx(2.0)
    assert B.tangent_residual([1.0, 0.0], [3.0, 2.0]) == pytest.approx(np.hypot(3, 2))
    # x1 <= 0, x2 <= 0 at the origin: normal cone is the nonnegative orthant
    P = Polyhedron(np.eye(2), [0.0, 0.0])
    assert P.tangent_residual([0.0, 0.0], [-1.0, 2.0]) == pytest.approx(2.0)


def test_mapping_lipschitz_examples():
    F = CallableMapping(1, 2, lambda x: x, lambda x: np.ones((2, 1)), component_L=[3, 4])
    assert mapping_lipschitz(F) == 5.0
    assert mapping_lipschitz(AffineMapping([[1.0]])) == 0.0
    G = CallableMapping(1, 1, lambda x: x * x - 1, lambda x: 2 * x.reshape(1, 1), component_L=[4])
    assert mapping_lipschitz(G) == 4.0
    with pytest.raises(ConfigurationError):
        mapping_lipschitz(CallableMapping(1, 1, lambda x: x, lambda x: np.ones((1, 1))))


def test_quartic_constant_is_tight(rng):
    G = CallableMapping(1, 1, lambda x: x * x - 1, lambda x: 2 * x.reshape(1, 1), component_L=[4])
    xs = rng.uniform(-2, 2, size=(200, 1))
    pairs = list(zip(xs, xs[::-1]))
    assert half_lipschitz_violation(G, pairs) <= 1e-12
    G.component_L = np.array([3.9])
    assert half_lipschitz_violation(G, pairs) > 0


def test_gradient_consistency_random_quadratics(rng):
    for _ in range(10):
        A = rng.standard_normal((3, 3))
        f = Quadratic(A @ A.T, rng.standard_normal(3), 1.0)
        for x in rng.standard_normal((100, 3)):
            assert fd_gradient_error(f.value, f.gradient, x) <= 1e-4


def test_jacobian_consistency(rng):
    F = CallableMapping(2, 2, lambda x: np.array([np.sin(x[0]) * x[1], x[0] ** 2]),
                        lambda x: np.array([[np.cos(x[0]) * x[1], np.sin(x[0])], [2 * x[0], 0.0]]))
    for x in rng.standard_normal((100, 2)):
        assert fd_jacobian_error(F, x) <= 1e-4


def test_finite_set_projection_matches_exhaustive(rng):
    pts = rng.integers(-3, 4, size=(7, 2)).astype(float)
    K = FiniteSet(pts)
    for x in rng.uniform(-4, 4, size=(200, 2)):
        d = np.sum((pts - x) ** 2, axis=1)
        cands = pts[d == d.min()]
        best = sorted(map(tuple, cands))[0]
        assert tuple(K.project(x)) == best


def test_concave_distance_identity(rng):
    K = FiniteSet([[1.0, 0.0], [-1.0, 2.0]])
    f2 = ConcaveDistancePart(K)
    for x in rng.standard_normal((200, 2)) * 3:
        assert x @ x - f2.value(x) == pytest.approx(K.distance_squared(x), abs=1e-10)


def test_max_affine_tie_average():
    f = MaxAffine.scaled_abs(2, 0, 3.0)
    assert f.value([-2.0, 5.0]) == 6.0
    assert np.allclose(f.subgradient([0.0, 1.0]), [0.0, 0.0])


@settings(max_examples=100, deadline=None)
@given(st.lists(finite, min_size=2, max_size=2), st.lists(finite, min_size=2, max_size=2))
def test_projection_idempotent_and_optimal(x, y):
    for S in (Box([-1, 0], [2, 3]), Ball([0.5, -0.5], 2.0), WholeSpace(2)):
        p = S.project(x)
        assert np.allclose(S.project(p), p)
        q = S.project(y)
        assert np.linalg.norm(p - np.asarray(x)) <= np.linalg.norm(q - np.asarray(x)) + 1e-9


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1, 2), min_size=2, max_size=2), st.lists(finite, min_size=2, max_size=2),
       st.floats(0, 50))
def test_tangent_residual_homogeneous_and_zero(x, v, a):
    S = Box([-1, -1], [1, 1])
    x = S.project(x)
    assert S.tangent_residual(x, [0.0, 0.0]) == 0.0
    r = S.tangent_residual(x, v)
    assert S.tangent_residual(x, a * np.asarray(v)) == pytest.approx(a * r, rel=1e-9, abs=1e-9)


def test_interior_residual_is_norm(rng):
    S = Ball([0.0, 0.0], 5.0)
    for v in rng.standard_normal((50, 2)):
        assert S.tangent_residual([0.1, 0.2], v) == pytest.approx(np.linalg.norm(v))


def test_sample_in_set_feasible(rng):
    for S in (Box([-1, 0], [1, 2]), Ball([1, 1], 0.5), Polyhedron([[1.0, 1.0]], [1.0])):
        for x in sample_in_set(S, rng, 20):
            assert S.contains(x)
