"""Acceptance suite: one test per criterion.

Run with `pytest tests/test_acceptance.py -v`; the terminal summary prints
one PASS/FAIL line per criterion.
"""
import time

import numpy as np
import pytest

from compopt.approx import Schedule, make_lse, run_outer
from compopt.bundle import BundleConfig, bundle_run
from compopt.cli import main
from compopt.dc import DcConfig, dc_run, dc_step, initial_state, proximal_distance_step
from compopt.oracles import ConcaveDistancePart, FiniteSet, fd_jacobian_error
from compopt.problems import (BUFFERED_CUT_SETS, REGISTRY, _buffered_psis, brute_force_distance,
                              build_family, build_instance, grid_oracle)
from compopt.stationarity import StationarityTriple, residual

BUNDLE_INSTANCES = sorted(n for n, d in REGISTRY.items() if "bundle" in d.algorithms)
DC_INSTANCES = sorted(n for n, d in REGISTRY.items() if "dc" in d.algorithms)


def bundle_runs(config=None, hook=None):
    out = {}
    for name in BUNDLE_INSTANCES:
        p = build_instance(name)
        cfg = config or BundleConfig()
        out[name] = (p, cfg, bundle_run(p, cfg, list(REGISTRY[name].x0), master_hook=hook))
    return out


@pytest.fixture(scope="module")
def runs():
    return bundle_runs()


def test_criterion_01_lower_models():
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    checked = 0
    for name, (p, _, res) in bundle_runs().items():
        for rec in res.records:
            model, Fc = rec.model, rec.F_center
            assert abs(model.evaluate(Fc) - p.h.value(Fc)) <= 1e-12, name
            Z = Fc + (1 + np.abs(Fc)) * 3 * rng.standard_normal((1000, p.m))
            for z in Z:
                assert model.evaluate(z) - p.h.value(z) <= 1e-10, name
            checked += 1
    assert checked > 0
    assert time.perf_counter() - start < 10.0


def test_criterion_02_key_relation(runs):
    for name, (_, _, res) in runs.items():
        for rec in res.records:
            assert rec.step_norm ** 2 / (2 * rec.t) <= rec.v + 1e-12, (name, rec.k)


def test_criterion_03_prox_floor():
    p = build_instance("quartic")
    assert p.L_h == 1.0 and p.L_F == 4.0 and p.lipschitz_exact
    cfg = BundleConfig(kappa=0.1, tau=2.0)
    floor = cfg.kappa / (2 * cfg.tau * p.L_h * p.L_F)
    assert floor == 6.25e-3
    res = bundle_run(p, cfg, [2.0])
    for rec in res.records:
        assert floor <= rec.t <= cfg.t_max
        assert floor <= rec.t_next <= cfg.t_max


def test_criterion_04_serious_descent(runs):
    for name, (_, cfg, res) in runs.items():
        values = [rec.center_value for rec in res.records]
        assert all(b <= a for a, b in zip(values, values[1:])), name
        for rec in res.records:
            if rec.step_kind == "serious":
                assert rec.center_value - rec.objective >= 0.5 * cfg.kappa * rec.v - 1e-12


def test_criterion_05_bundle_convergence():
    reference, _, _ = grid_oracle(build_instance("quartic"), -2.0, 2.0, step=1e-3)
    assert reference == pytest.approx([-1.0, 0.0, 1.0], abs=1e-3)
    p = build_instance("quartic")
    start = time.perf_counter()
    res = bundle_run(p, BundleConfig(kappa=0.1, tau=2.0, t0=1.0, t_max=100.0, tol=1e-8), [2.0])
    elapsed = time.perf_counter() - start
    assert res.converged and res.iterations <= 500
    assert min(abs(res.x[0] - r) for r in reference) <= 1e-4
    assert res.residual.total <= 1e-6
    assert elapsed < 1.0


def test_criterion_06_master_certification():
    solves = []
    bundle_runs(hook=lambda spec, sol: solves.append((spec.variant, sol)))
    assert solves
    for variant, sol in solves:
        assert sol.kkt_residual <= 1e-9
        if variant == "bundle-cp":
            assert abs(sol.alpha.sum() - 1.0) <= 1e-10
            assert np.all(sol.alpha >= -1e-12)
    for name in DC_INSTANCES:
        res = dc_run(build_instance(name), DcConfig(), list(REGISTRY[name].x0))
        assert all(r.kkt_residual <= 1e-9 for r in res.records), name
    p = build_instance("buffered")
    flat = bundle_run(p, BundleConfig(model="flat"), [0.0, 0.0])
    structured = bundle_run(p, BundleConfig(model="structured"), [0.0, 0.0])
    assert len(flat.records) == len(structured.records)
    for a, b in zip(flat.records, structured.records):
        assert np.allclose(a.x_next, b.x_next, atol=1e-8, rtol=0)


def test_criterion_07_dc_suite():
    start = time.perf_counter()
    for name in DC_INSTANCES:
        p = build_instance(name)
        cfg = DcConfig()
        res = dc_run(p, cfg, list(REGISTRY[name].x0))
        for r in res.records:
            assert r.objective <= r.objective_prev, (name, r.k)
            assert r.e >= 0, (name, r.k)
            assert r.v >= r.step_norm ** 2 / (2 * cfg.t), (name, r.k)
    res = dc_run(build_instance("distpen1d"), DcConfig(tol=1e-12), [0.2])
    assert abs(res.x[0] - 1.0) <= 1e-6
    assert time.perf_counter() - start < 1.0
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n = int(rng.integers(1, 4))
        K = FiniteSet(rng.uniform(-3, 3, size=(int(rng.integers(1, 6)), n)))
        x = rng.uniform(-4, 4, size=n)
        dc_value = x @ x - ConcaveDistancePart(K).value(x)
        assert abs(dc_value - K.distance_squared(x)) <= 1e-10


@pytest.mark.parametrize("name,x0", [("distpen1d", [0.2]), ("distpen2d", [0.2, 0.1])])
def test_criterion_08_dc_equals_proximal_distance(name, x0):
    p = build_instance(name)
    cfg = DcConfig(tol=0.0)
    a = b = initial_state(p, x0)
    for _ in range(50):
        a, ra = dc_step(a, p, cfg)
        b, rb = proximal_distance_step(b, p, cfg)
        assert np.max(np.abs(ra.x_next - rb.x_next)) <= 1e-8


def test_criterion_09_sine_counterexample():
    start = time.perf_counter()
    sched = Schedule(length=21, warm_start="initial", divergence_threshold=1e3)
    out = run_outer(build_family("sincounter"), sched, "bundle", [np.pi / 2])
    elapsed = time.perf_counter() - start
    assert len(out.rows) == 21
    for nu, row in enumerate(out.rows):
        assert row.params["theta"] == 2.0 ** nu
        assert row.near_stationary
        assert row.residual_approx.total <= max(row.certificate, row.tol)
        assert row.y_norm == pytest.approx(2.0 ** nu, rel=1e-12)
        assert row.residual_actual.total >= 0.5
    assert out.diagnostic.flagged and out.diagnostic.first_flag <= 20
    assert elapsed < 1.0


@pytest.mark.parametrize("eta", [1.0, 0.1, 0.01])
def test_criterion_10_lse_sandwich(eta):
    rng = np.random.default_rng(10)
    psis, _, _ = _buffered_psis(7)
    F = make_lse(psis, BUFFERED_CUT_SETS, eta, 2)
    q = len(BUFFERED_CUT_SETS)
    for x in rng.uniform(-2, 2, size=(1000, 2)):
        vals = F.value(x)
        for i, row in enumerate(psis):
            for j, K in enumerate(BUFFERED_CUT_SETS):
                m = min(row[k].value(x) for k in K)
                assert m - eta <= vals[i * q + j] <= m
    for x in rng.uniform(-2, 2, size=(50, 2)):
        assert fd_jacobian_error(F, x) <= 1e-4


@pytest.mark.parametrize("name,lo,hi", [("abs1d", -1.0, 1.0), ("quartic", -2.0, 2.0)])
def test_criterion_11_residual_oracle(name, lo, hi):
    p = build_instance(name)
    ys = (-1.0, 0.0, 0.5, 1.0)
    worst = 0.0
    for x in np.round(np.arange(lo, hi + 5e-4, 1e-3), 3):
        Fx = p.inner([x])[0]
        for z in np.round(Fx, 3) + 1e-3 * np.array([-1, 0, 1]):
            z = round(float(z), 3)
            for y in ys:
                r = residual(p, StationarityTriple([x], [y], [z])).total
                worst = max(worst, abs(r - brute_force_distance(p, float(x), y, z)))
    assert worst <= 1e-6


def test_criterion_12_determinism(tmp_path):
    outs = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert main(["bench", "--out", str(out), "--seed", "5", "--per-run"]) == 0
        outs.append(out)
    names = sorted(f.relative_to(outs[0]) for f in outs[0].rglob("*")
                   if f.is_file() and f.name != "timings.csv")
    assert any(str(n).endswith(".csv") for n in names) and any(str(n).endswith(".json") for n in names)
    for rel in names:
        assert (outs[0] / rel).read_bytes() == (outs[1] / rel).read_bytes(), rel
