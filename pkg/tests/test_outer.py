import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from compopt.errors import ConfigurationError
from compopt.outer import (AbsValue, Composed, GenericOracle, Hinge, MaxCoordinates,
                           NonpositiveIndicator, SeparablePwl, SupportCappedSimplex,
                           identity_outer, scaled_hinge_of)
from compopt.problems import capped_support_by_vertices

P5 = (0.1, 0.15, 0.2, 0.25, 0.3)


def variants():
    return [
        AbsValue(2),
        SeparablePwl([0.5, -1.0], [2.0, 0.0]),
        Hinge(3.0, 2),
        MaxCoordinates(3),
        SupportCappedSimplex(P5, 0.8, 2),
        Composed(Hinge(1.5, 1), [SupportCappedSimplex(P5, 0.8, 2)]),
        scaled_hinge_of(MaxCoordinates(2), 2.0),
    ]


def test_value_examples():
    assert AbsValue(1).value([-3.0]) == 3.0
    assert SeparablePwl([0.5], [2.0]).value([-1.0]) == -0.5
    assert SupportCappedSimplex([0.5, 0.5], 0.5, 1).value([3.0, 1.0]) == 3.0


def test_subgradient_examples():
    assert AbsValue(1).subgradient([0.0]).tolist() == [0.0]
    assert Hinge(2.0).subgradient([1.0]).tolist() == [2.0]
    assert Hinge(2.0).subgradient([0.0]).tolist() == [0.0]
    assert np.allclose(MaxCoordinates(3).subgradient([1.0, 1.0, 0.0]), [0.5, 0.5, 0.0])


def test_subdiff_distance_examples():
    assert AbsValue(1).subdiff_distance([0.0], [0.5]) == (0.0, True)
    assert AbsValue(1).subdiff_distance([0.0], [2.0]) == (1.0, True)
    d, exact = Hinge(2.0).subdiff_distance([0.0], [-0.5])
    assert d == pytest.approx(0.5) and exact


def test_lipschitz_examples():
    assert AbsValue(1).lipschitz_bound() == 1.0
    assert SeparablePwl([0.5], [2.0]).lipschitz_bound() == 2.5
    assert Hinge(3.0).lipschitz_bound() == 3.0
    with pytest.raises(ConfigurationError):
        GenericOracle(1, lambda z: z[0], lambda z: [1.0]).lipschitz_bound()


def test_generic_oracle_distance_is_flagged_inexact():
    h = GenericOracle(1, lambda z: abs(z[0]), lambda z: [np.sign(z[0])], lipschitz=1.0)
    d, exact = h.subdiff_distance([0.0], [0.5])
    assert d == pytest.approx(0.5) and not exact


def test_capped_simplex_support_matches_vertex_enumeration(rng):
    h = SupportCappedSimplex(P5, 0.8, 1)
    for w in rng.standard_normal((500, 5)) * 3:
        assert h.value(w) == pytest.approx(capped_support_by_vertices(P5, 0.8, w), abs=1e-10)


def test_capped_simplex_maximizer_feasible(rng):
    h = SupportCappedSimplex(P5, 0.8, 1)
    caps = np.array(P5) / 0.2
    for w in rng.standard_normal((100, 5)):
        pi, _ = h.maximizer(w)
        assert pi.sum() == pytest.approx(1.0)
        assert np.all(pi >= -1e-15) and np.all(pi <= caps + 1e-15)
        assert pi @ w == pytest.approx(h.value(w))


def test_indicator_is_extended_valued():
    h = NonpositiveIndicator(2)
    assert h.value([-1.0, 0.0]) == 0.0
    assert h.value([0.1, -1.0]) == np.inf
    assert np.allclose(h.project_domain([0.3, -2.0]), [0.0, -2.0])


def test_identity_outer():
    assert identity_outer(3).value([1.0, -2.0, 0.5]) == pytest.approx(-0.5)


@pytest.mark.parametrize("h", variants(), ids=lambda h: h.variant)
def test_subgradient_inequality_and_lipschitz(h, rng):
    m = h.dim
    Z = rng.standard_normal((1000, m)) * 2
    Zp = rng.standard_normal((1000, m)) * 2
    L = h.lipschitz_bound()
    for z, zp in zip(Z, Zp):
        s = h.subgradient(zp)
        assert h.value(z) >= h.value(zp) + s @ (z - zp) - 1e-10
        assert abs(h.value(z) - h.value(zp)) <= L * np.linalg.norm(z - zp) + 1e-10


@pytest.mark.parametrize("h", variants(), ids=lambda h: h.variant)
def test_subgradient_lies_in_subdifferential(h, rng):
    for z in rng.standard_normal((30, h.dim)):
        d, _ = h.subdiff_distance(z, h.subgradient(z))
        assert d <= 1e-8
    z0 = np.zeros(h.dim)
    assert h.subdiff_distance(z0, h.subgradient(z0))[0] <= 1e-8


@pytest.mark.parametrize("h", [v for v in variants() if v.monotone], ids=lambda h: h.variant)
def test_monotone_flag(h, rng):
    for z in rng.standard_normal((300, h.dim)):
        bump = np.abs(rng.standard_normal(h.dim))
        assert h.value(z + bump) >= h.value(z) - 1e-12


def test_monotone_flags_are_as_expected():
    assert not AbsValue(1).monotone
    assert Hinge(1.0).monotone
    assert not SeparablePwl([-1.0], [0.5]).monotone


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_abs_subdiff_distance_closed_form(z, y):
    d, _ = AbsValue(1).subdiff_distance([z], [y])
    if z > 0:
        want = abs(y - 1)
    elif z < 0:
        want = abs(y + 1)
    else:
        want = max(0.0, abs(y) - 1)
    assert d == pytest.approx(want, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.1, 4))
def test_hinge_subdiff_distance_closed_form(z, y, rho):
    d, _ = Hinge(rho).subdiff_distance([z], [y])
    if z > 0:
        want = abs(y - rho)
    elif z < 0:
        want = abs(y)
    else:
        want = max(0.0, -y, y - rho)
    assert d == pytest.approx(want, abs=1e-12)


def test_composed_subdiff_distance_exact_at_kink():
    # rho * max{0, max(u1, u2)} at u = 0: subdifferential is rho * {w >= 0, sum w <= 1}
    h = scaled_hinge_of(MaxCoordinates(2), 2.0)
    assert h.subdiff_distance([0.0, 0.0], [0.5, 0.5])[0] == pytest.approx(0.0, abs=1e-9)
    assert h.subdiff_distance([0.0, 0.0], [2.0, 2.0])[0] == pytest.approx(np.sqrt(2), abs=1e-7)
    assert h.subdiff_distance([0.0, 0.0], [-1.0, 0.0])[0] == pytest.approx(1.0, abs=1e-7)
