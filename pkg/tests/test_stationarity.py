import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from compopt.errors import InvalidInputError
from compopt.problems import build_instance
from compopt.stationarity import (StationarityTriple, best_residual, check_near_stationary,
                                  multiplier_diagnostics, residual)


def test_abs_triple():
    p = build_instance("abs1d")
    r = residual(p, StationarityTriple([0.3], [0.0], [0.0]))
    assert r.r_primal == pytest.approx(0.3)
    assert r.r_dual == 0.0 and r.r_stat == 0.0
    assert r.total == pytest.approx(0.3)
    assert r.exact


def test_sine_triple_zero_for_every_theta():
    for nu in range(8):
        theta = 2.0 ** nu
        p = build_instance("sincounter", {"theta": theta})
        r = residual(p, StationarityTriple([np.pi / 2], [theta], [1.0]))
        assert r.total <= 1e-12 * theta
        assert check_near_stationary(p, StationarityTriple([np.pi / 2], [theta], [1.0]),
                                     1e-12 * theta)


def test_quartic_stationary_point():
    p = build_instance("quartic")
    assert residual(p, StationarityTriple([1.0], [0.0], [0.0])).total == 0.0


def test_near_stationary_thresholds():
    p = build_instance("abs1d")
    trip = StationarityTriple([0.3], [0.0], [0.0])
    assert check_near_stationary(p, trip, 0.3)
    assert not check_near_stationary(p, trip, 0.29)
    assert not check_near_stationary(p, trip, 0.0)
    assert check_near_stationary(p, StationarityTriple([0.0], [0.0], [0.0]), 0.0)
    with pytest.raises(InvalidInputError):
        check_near_stationary(p, trip, -1.0)


def test_bad_mode_and_dimension():
    p = build_instance("abs1d")
    with pytest.raises(InvalidInputError):
        residual(p, StationarityTriple([0.0], [0.0], [0.0]), mode="other")
    with pytest.raises(InvalidInputError):
        residual(p, StationarityTriple([0.0, 1.0], [0.0], [0.0]))


def test_dc_mode_is_inexact():
    p = build_instance("distpen1d")
    r = residual(p, StationarityTriple([1.0], [0.5], [0.0]), mode="dc")
    assert not r.exact
    assert r.total <= 1e-12


def test_best_residual_uses_snap():
    # z just off the kink: y = 0 lies in the subdifferential only at 0
    p = build_instance("abs1d")
    assert residual(p, StationarityTriple([0.0], [0.0], [1e-12])).r_dual == pytest.approx(1.0)
    r, z = best_residual(p, [0.0], [0.0], [[1e-12]])
    assert z == pytest.approx([0.0])
    assert r.total == 0.0


@settings(max_examples=80, deadline=None)
@given(st.floats(-2, 2), st.floats(-3, 3), st.floats(-4, 4))
def test_components_bounded_by_total(x, y, z):
    p = build_instance("quartic")
    r = residual(p, StationarityTriple([x], [y], [z]))
    assert min(r.r_primal, r.r_dual, r.r_stat) >= 0
    assert max(r.r_primal, r.r_dual, r.r_stat) <= r.total + 1e-15


def test_multiplier_diagnostics_sine_schedule():
    ys = [[2.0 ** nu] for nu in range(21)]
    rep = multiplier_diagnostics(ys, threshold=1e3)
    assert rep.flagged and rep.first_flag == 10


def test_multiplier_diagnostics_quiet_cases():
    assert not multiplier_diagnostics([[0.0]] * 10).flagged
    assert not multiplier_diagnostics([[1.0], [0.9], [1.1]], threshold=1e3).flagged
    rep = multiplier_diagnostics([[1.0], [5e6]])
    assert rep.threshold == pytest.approx(2e6) and rep.flagged
    # a failing residual never triggers the flag
    assert not multiplier_diagnostics([[1.0], [1e9]], residual_ok=[True, False]).flagged
    with pytest.raises(InvalidInputError):
        multiplier_diagnostics([])
