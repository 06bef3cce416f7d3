import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from compopt.composite import CompositeProblem
from compopt.dc import (DcConfig, dc_epsilon_certificate, dc_run, dc_step, initial_state,
                        proximal_distance_step)
from compopt.errors import ConfigurationError, InvalidInputError
from compopt.oracles import (ConcaveDistancePart, DcComponent, FiniteSet, MaxAffine, Quadratic,
                             SmoothConvex, WholeSpace)
from compopt.outer import identity_outer
from compopt.problems import build_instance

DC_RUNS = [("distpen1d", [0.2]), ("distpen2d", [0.2, 0.1]), ("distpen", [0.0, 0.0]),
           ("sparse-concave", [1.0, 1.0, 1.0]), ("hingepen", [0.0])]


def affine_f2_problem():
    # F(x) = x^2 - (2x + 1) with an affine concave part; h = identity
    f1 = SmoothConvex(Quadratic([[2.0]]))
    f2 = MaxAffine([[2.0]], [1.0])
    return CompositeProblem("affine-f2", WholeSpace(1), Quadratic.zero(1), identity_outer(1),
                            components=[DcComponent(f1, f2)])


@pytest.mark.parametrize("kw", [{"t": 0.0}, {"tol": -1.0}, {"e": -1.0},
                                {"tol": 1e-6, "e": 1e-8}, {"max_iter": 0}])
def test_config_rejects(kw):
    with pytest.raises(ConfigurationError):
        DcConfig(**kw)


def test_default_e():
    assert DcConfig(tol=0.0).e == 1e-12
    assert DcConfig(tol=1e-6).e == 1e-6


def test_x0_must_be_feasible():
    with pytest.raises(InvalidInputError):
        initial_state(build_instance("distpen2d"), [5.0, 0.0])


def test_closed_form_step():
    p = build_instance("distpen1d")
    cfg = DcConfig(t=1.0)
    st0 = initial_state(p, [0.2])
    _, rec = dc_step(st0, p, cfg)
    assert rec.x_next == pytest.approx([0.6], abs=1e-9)
    _, rec2 = proximal_distance_step(st0, p, cfg)
    assert rec2.x_next == pytest.approx([0.6], abs=1e-12)


def test_fixed_point_at_set_point():
    p = build_instance("distpen1d")
    for step in (dc_step, proximal_distance_step):
        _, rec = step(initial_state(p, [1.0]), p, DcConfig(tol=0.0))
        assert rec.x_next == pytest.approx([1.0], abs=1e-10)
        assert abs(rec.v) <= 1e-12 and abs(rec.e) <= 1e-12
        assert rec.step_kind == "stop"


def test_affine_f2_has_zero_error():
    p = affine_f2_problem()
    res = dc_run(p, DcConfig(max_iter=20, tol=1e-10), [3.0])
    # exact linearization up to rounding
    assert all(abs(r.e) <= 1e-14 for r in res.records)
    cert = dc_epsilon_certificate(res.records[-1], p, DcConfig(e=0.0, tol=0.0))
    assert cert.components["subgradient"] == 0.0 and cert.exact


def test_distpen1d_iteration_matches_recursion():
    # x_{k+1} = (1 + x_k)/2 for x_k in (0, 1]
    p = build_instance("distpen1d")
    res = dc_run(p, DcConfig(tol=1e-12, max_iter=200), [0.2])
    x = 0.2
    for r in res.records[:20]:
        x = (1 + x) / 2
        assert r.x_next[0] == pytest.approx(x, abs=1e-9)
    assert abs(res.x[0] - 1.0) <= 1e-6


@pytest.mark.parametrize("name,x0", DC_RUNS)
def test_run_invariants(name, x0):
    p = build_instance(name)
    cfg = DcConfig()
    res = dc_run(p, cfg, x0)
    assert res.converged
    for r in res.records:
        assert r.objective <= r.objective_prev + 1e-12
        assert r.e >= -1e-12
        assert r.step_norm ** 2 / (2 * cfg.t) <= r.v + 1e-12


@pytest.mark.parametrize("name,x0", [("distpen1d", [0.2]), ("distpen2d", [0.2, 0.1])])
def test_proximal_distance_matches_dc(name, x0):
    p = build_instance(name)
    cfg = DcConfig(tol=0.0)
    a = b = initial_state(p, x0)
    for _ in range(50):
        a, ra = dc_step(a, p, cfg)
        b, rb = proximal_distance_step(b, p, cfg)
        assert np.allclose(ra.x_next, rb.x_next, atol=1e-8)


def test_proximal_distance_needs_structure():
    p = build_instance("sparse-concave")
    with pytest.raises(ConfigurationError):
        proximal_distance_step(initial_state(p, [1.0, 1.0, 1.0]), p, DcConfig())
    with pytest.raises(ConfigurationError):
        dc_run(p, DcConfig(), [1.0, 1.0, 1.0], variant="proximal-distance")


def test_stationary_start_stops_at_zero():
    p = build_instance("distpen1d")
    res = dc_run(p, DcConfig(tol=0.0), [-1.0])
    assert res.iterations == 1 and res.converged
    assert res.certificate.epsilon == pytest.approx(0.0, abs=1e-10)


def test_certificate_at_stop_has_two_terms():
    p = build_instance("distpen1d")
    cfg = DcConfig(tol=1e-8, e=1e-8)
    res = dc_run(p, cfg, [0.2])
    r = res.records[-1]
    expected = np.sqrt(np.sum((p.inner(r.x_next) - r.z_next) ** 2)
                       + np.sum((r.x_next - r.x) ** 2) / cfg.t ** 2)
    assert res.certificate.epsilon == pytest.approx(expected, rel=1e-12, abs=1e-15)
    assert res.certificate.exact


def test_max_iter_not_converged():
    res = dc_run(build_instance("distpen1d"), DcConfig(max_iter=3), [0.2])
    assert not res.converged and res.iterations == 3


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2),
       st.lists(st.lists(st.floats(-3, 3), min_size=2, max_size=2), min_size=1, max_size=5))
def test_distance_dc_identity(x, pts):
    K = FiniteSet(np.array(pts))
    x = np.array(x)
    f1 = x @ x
    f2 = ConcaveDistancePart(K).value(x)
    assert f1 - f2 == pytest.approx(K.distance_squared(x), abs=1e-10)


def test_fixed_point_noise_does_not_raise_objective():
    # the distpen master lands within rounding of its fixed point on the last step
    p = build_instance("distpen")
    res = dc_run(p, DcConfig(), [0.0, 0.0])
    last = res.records[-1]
    assert last.objective <= last.objective_prev
    assert last.step_kind == "stop"
