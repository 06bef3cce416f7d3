import json

import numpy as np
import pytest

from compopt.errors import UninitializedModelError
from compopt.models import CuttingPlaneModel, Linearization, StructuredModel, combine
from compopt.outer import AbsValue, Composed, Hinge, MaxCoordinates, SupportCappedSimplex
from compopt.problems import BUFFERED_P


def cut(h, z, tag="trial", index=0):
    return Linearization.of(h, np.atleast_1d(np.asarray(z, dtype=float)), tag, index)


def test_evaluate_examples():
    h = AbsValue(1)
    m = CuttingPlaneModel([cut(h, 1.0)])
    assert m.evaluate([-1.0]) == -1.0
    m2 = CuttingPlaneModel([cut(h, 1.0), cut(h, -1.0)])
    assert m2.evaluate([0.0]) == 0.0
    s = StructuredModel(Hinge(2.0), [[Linearization(np.zeros(1), 0.0, np.ones(1))]])
    assert s.evaluate([-3.0]) == 0.0


def test_empty_model_raises():
    with pytest.raises(UninitializedModelError):
        CuttingPlaneModel([]).evaluate([0.0])


def test_model_subgradient_examples():
    h = AbsValue(1)
    single = CuttingPlaneModel([cut(h, 2.0)])
    assert single.model_subgradient([-5.0]).tolist() == [1.0]
    two = CuttingPlaneModel([cut(h, 1.0), cut(h, -1.0)])
    assert two.model_subgradient([0.0], alpha=[0.5, 0.5]).tolist() == [0.0]
    s = StructuredModel(Hinge(1.0), [[Linearization(np.zeros(1), 0.0, np.array([3.0]))]])
    assert s.model_subgradient([1.0], lam=[2.0], sfrak=[np.array([3.0])]).tolist() == [6.0]


def test_serious_reset_is_single_center_cut():
    h = AbsValue(1)
    m = CuttingPlaneModel([cut(h, 1.0), cut(h, -1.0)]).update_after_serious([2.0], 2.0, [1.0])
    assert m.size == 1
    for z in np.linspace(-3, 3, 13):
        assert m.evaluate([z]) == pytest.approx(2 + (z - 2))


def test_serious_retain_active_keeps_positive_alpha():
    h = AbsValue(1)
    m = CuttingPlaneModel([cut(h, 1.0), cut(h, -1.0), cut(h, 3.0)], serious_policy="retain-active")
    m2 = m.update_after_serious([2.0], 2.0, [1.0], alpha=[0.5, 0.5, 0.0])
    assert m2.size == 3


def test_structured_serious_reduces_to_one_cut_each():
    h = Composed(Hinge(1.0), [MaxCoordinates(2)])
    m = StructuredModel.at_center(h, np.array([0.5, -0.5]))
    m = m.update_after_serious(np.array([1.0, 2.0]), [2.0], [np.array([0.0, 1.0])], index=1)
    assert [len(c) for c in m.inner_cuts] == [1]


@pytest.mark.parametrize("policy", ["economical", "full", "minimal"])
def test_null_update_majorizes_eq7_rows(policy, rng):
    h = MaxCoordinates(3)
    cuts = [cut(h, rng.standard_normal(3), index=j) for j in range(6)]
    cuts[0] = Linearization(cuts[0].anchor, cuts[0].value, cuts[0].slope, "center", 0)
    m = CuttingPlaneModel(cuts, null_policy=policy)
    alpha = np.array([0.2, 0.0, 0.5, 0.3, 0.0, 0.0])
    z_trial = rng.standard_normal(3)
    center = cuts[0]
    trial = cut(h, z_trial, index=7)
    y = m.model_subgradient(z_trial, alpha)
    agg = Linearization(z_trial, m.evaluate(z_trial), y, "aggregate", 7)
    m2 = m.update_after_null(center, trial, agg, alpha)
    for z in rng.standard_normal((1000, 3)) * 3:
        val = m2.evaluate(z)
        assert val >= center(z) - 1e-12
        assert val >= trial(z) - 1e-12
        assert val >= agg(z) - 1e-12
        assert val <= h.value(z) + 1e-10


def test_prune_examples():
    h = AbsValue(1)
    m = CuttingPlaneModel([cut(h, 1.0), cut(h, -1.0), cut(h, 2.0)])
    assert m.prune([1.0, 0.0, 0.0]).size == 1
    assert m.prune([1 / 3, 1 / 3, 1 / 3]).size == 3


def test_prune_with_small_bundle_keeps_aggregate_majorization(rng):
    h = MaxCoordinates(2)
    cuts = [cut(h, rng.standard_normal(2), index=j) for j in range(6)]
    alpha = np.full(6, 1 / 6)
    m = CuttingPlaneModel(cuts, max_bundle=3)
    agg = combine(cuts, alpha, cuts[0].anchor, 0)
    m2 = m.prune(alpha)
    assert m2.size <= 3
    for z in rng.standard_normal((1000, 2)) * 3:
        assert m2.evaluate(z) >= agg(z) - 1e-10
        assert m2.evaluate(z) >= cuts[0](z) - 1e-12


def test_model_subgradient_bounded_by_stored_slopes(rng):
    h = MaxCoordinates(3)
    m = CuttingPlaneModel([cut(h, rng.standard_normal(3)) for _ in range(5)])
    for _ in range(50):
        a = rng.random(5)
        a /= a.sum()
        assert np.linalg.norm(m.model_subgradient(None, a)) <= m.max_slope_norm() + 1e-12


def test_structured_model_is_lower_model_and_chain_rule(rng):
    inner = SupportCappedSimplex(BUFFERED_P, 0.8, 2)
    h = Composed(Hinge(1.5), [inner])
    anchors = rng.standard_normal((4, 10))
    cuts = [Linearization.of(inner, a, "trial", j) for j, a in enumerate(anchors)]
    m = StructuredModel(h.h0, [cuts])
    for z in rng.standard_normal((1000, 10)) * 2:
        assert m.evaluate(z) <= h.value(z) + 1e-10
    for zp in rng.standard_normal((30, 10)):
        g = m.model_subgradient(zp)
        for z in rng.standard_normal((30, 10)):
            assert m.evaluate(z) >= m.evaluate(zp) + g @ (z - zp) - 1e-10


def test_center_interpolation():
    h = AbsValue(1)
    m = CuttingPlaneModel.at_center(h, np.array([-0.3]))
    assert m.evaluate([-0.3]) == h.value([-0.3])


def test_json_round_trip(rng):
    h = MaxCoordinates(2)
    m = CuttingPlaneModel([cut(h, rng.standard_normal(2), index=j) for j in range(3)])
    m2 = CuttingPlaneModel.from_dict(json.loads(m.to_json()))
    for z in rng.standard_normal((20, 2)):
        assert m2.evaluate(z) == m.evaluate(z)
