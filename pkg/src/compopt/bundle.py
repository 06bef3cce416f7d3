"""Composite proximal bundle method.

Each iteration linearizes F at the stability center, replaces h by a convex
lower model and solves the proximal master problem. The candidate is
classified as serious, null or backtracking by two descent tests, the first
with the linearized inner value z and the second with the true F.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, Optional, Union

import numpy as np

from .composite import CompositeProblem
from .errors import ConfigurationError, InvalidInputError
from .master import MasterSpec, MasterSolution, solve_master
from .models import (NULL_POLICIES, SERIOUS_POLICIES, CuttingPlaneModel, Linearization,
                     StructuredModel)
from .outer import Composed
from .stationarity import ResidualBreakdown, best_residual

log = logging.getLogger(__name__)

STEP_KINDS = ("serious", "null", "backtracking", "stop")
MODEL_KINDS = ("auto", "flat", "structured")

Model = Union[CuttingPlaneModel, StructuredModel]


@dataclass
class BundleConfig:
    kappa: float = 0.1
    tau: float = 2.0
    t0: float = 1.0
    t_max: float = 100.0
    t_lower0: float = 0.01
    tol: float = 1e-8
    max_iter: int = 500
    model: str = "auto"
    null_policy: str = "economical"
    serious_policy: str = "reset"
    max_bundle: int = 50
    activity_threshold: float = 1e-12
    master_tol: float = 1e-10
    grow: float = 1.5
    shrink: float = 0.9

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        def bad(name, why):
            raise ConfigurationError(f"{name}: {why}")

        if not 0 < self.kappa < 1:
            bad("kappa", "must lie in (0, 1)")
        if not self.tau > 1:
            bad("tau", "must exceed 1")
        if not 0 < self.t_lower0 < self.t0 < self.t_max < np.inf:
            bad("t0", "need 0 < t_lower0 < t0 < t_max < inf")
        if not self.tol >= 0:
            bad("tol", "must be nonnegative")
        if int(self.max_iter) < 1:
            bad("max_iter", "must be at least 1")
        if self.model not in MODEL_KINDS:
            bad("model", f"must be one of {MODEL_KINDS}")
        if not self.grow >= 1:
            bad("grow", "must be at least 1")
        if not 0 < self.shrink <= 1:
            bad("shrink", "must lie in (0, 1]")
        if self.null_policy not in NULL_POLICIES:
            bad("null_policy", f"must be one of {NULL_POLICIES}")
        if self.serious_policy not in SERIOUS_POLICIES:
            bad("serious_policy", f"must be one of {SERIOUS_POLICIES}")
        if int(self.max_bundle) < 3:
            bad("max_bundle", "must be at least 3")


@dataclass
class BundleState:
    center: np.ndarray
    f0_center: float
    h_center: float
    F_center: np.ndarray
    J_center: np.ndarray
    s_hat: np.ndarray
    model: Model
    t: float
    t_lower: float
    k: int = 0
    last_serious: bool = False
    center_index: int = 0

    @property
    def center_value(self) -> float:
        return self.f0_center + self.h_center


@dataclass
class IterationRecord:
    k: int
    step_kind: str
    v: float
    t: float
    t_next: float
    step_norm: float
    objective: float
    model_size: int
    center: np.ndarray
    center_value: float
    F_center: np.ndarray
    x_next: np.ndarray
    z_next: np.ndarray
    y_next: np.ndarray
    model: Model
    kkt_residual: float
    alpha: Optional[np.ndarray] = None
    master_objective: float = float("nan")
    residual_total: Optional[float] = None

    def row(self) -> dict:
        return {"k": self.k, "step_kind": self.step_kind, "v_k": self.v, "e_k": None,
                "t_k": self.t, "step_norm": self.step_norm, "objective": self.objective,
                "model_size": self.model_size, "residual_total": self.residual_total}


@dataclass
class Certificate:
    epsilon: float
    components: dict
    surrogate: bool = True

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "components": dict(self.components),
                "surrogate": self.surrogate}


@dataclass
class BundleResult:
    x: np.ndarray
    converged: bool
    records: list
    state: BundleState
    certificate: Optional[Certificate] = None
    residual: Optional[ResidualBreakdown] = None
    y: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    t_min_used: float = float("nan")

    @property
    def iterations(self) -> int:
        return len(self.records)

    def counts(self) -> dict:
        out = {kind: 0 for kind in STEP_KINDS}
        for r in self.records:
            out[r.step_kind] += 1
        return out


# ---------------------------------------------------------------------------

def _use_structured(problem: CompositeProblem, config: BundleConfig) -> bool:
    composed = isinstance(problem.h, Composed) and problem.h.h0.epigraph_terms() is not None
    if config.model == "structured" and not composed:
        raise ConfigurationError("model: structured models need a composed h with polyhedral h0")
    return config.model == "structured" or (config.model == "auto" and composed)


def initial_state(problem: CompositeProblem, config: BundleConfig, x0) -> BundleState:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.size != problem.n:
        raise InvalidInputError(f"x0 has dimension {x0.size}, expected {problem.n}")
    if not problem.X.contains(x0):
        raise InvalidInputError("x0 must lie in X")
    Fc = problem.inner(x0)
    kw = {"activity_threshold": config.activity_threshold, "max_bundle": config.max_bundle}
    if _use_structured(problem, config):
        model = StructuredModel.at_center(problem.h, Fc, 0, **kw)
    else:
        model = CuttingPlaneModel.at_center(problem.h, Fc, 0, null_policy=config.null_policy,
                                            serious_policy=config.serious_policy, **kw)
    return BundleState(x0.copy(), problem.f0.value(x0), problem.h.value(Fc), Fc,
                       problem.jacobian(x0), problem.h.subgradient(Fc), model,
                       config.t0, config.t_lower0)


def _master_spec(state: BundleState, problem: CompositeProblem, config: BundleConfig) -> MasterSpec:
    variant = "bundle-structured" if isinstance(state.model, StructuredModel) else "bundle-cp"
    return MasterSpec(variant, problem.f0, problem.X, state.center, state.t,
                      F_center=state.F_center, J_center=state.J_center, model=state.model,
                      tol=config.master_tol)


def _null_model(state: BundleState, problem: CompositeProblem, sol: MasterSolution, k: int) -> Model:
    """Model majorizing the center, trial and aggregate linearizations."""
    z = sol.z_next
    model = state.model
    if isinstance(model, StructuredModel):
        h: Composed = problem.h
        centers, trials, aggs = [], [], []
        inner_model_vals = model.inner_values(z)
        for i, hi in enumerate(h.inners):
            centers.append(Linearization.of(hi, state.F_center, "center", state.center_index))
            trials.append(Linearization.of(hi, z, "trial", k + 1))
            aggs.append(Linearization(z.copy(), float(inner_model_vals[i]),
                                      np.asarray(sol.sfrak[i], dtype=float), "aggregate", k + 1))
        return model.update_after_null(centers, trials, aggs, sol.mu_inner)
    center = Linearization(state.F_center.copy(), state.h_center, state.s_hat.copy(), "center",
                           state.center_index)
    trial = Linearization.of(problem.h, z, "trial", k + 1)
    aggregate = Linearization(z.copy(), model.evaluate(z), sol.y_next.copy(), "aggregate", k + 1)
    return model.update_after_null(center, trial, aggregate, sol.alpha)


def bundle_step(state: BundleState, problem: CompositeProblem, config: BundleConfig,
                master_hook: Optional[Callable[[MasterSpec, MasterSolution], None]] = None):
    """One iteration; returns (new state, record)."""
    spec = _master_spec(state, problem, config)
    sol = solve_master(spec)
    if master_hook is not None:
        master_hook(spec, sol)
    k = state.k
    x, z = sol.x_next, sol.z_next
    d = x - state.center
    f0x = problem.f0.value(x)
    model_val = state.model.evaluate(z)
    v = state.center_value - (f0x + model_val)
    step_norm = float(np.linalg.norm(d))
    base = dict(k=k, v=float(v), t=state.t, step_norm=step_norm, model_size=state.model.size,
                center=state.center.copy(), center_value=state.center_value,
                F_center=state.F_center.copy(), x_next=x.copy(), z_next=z.copy(),
                y_next=sol.y_next.copy(), model=state.model, kkt_residual=sol.kkt_residual,
                alpha=None if sol.alpha is None else sol.alpha.copy(),
                master_objective=sol.objective)

    if v <= config.tol:
        rec = IterationRecord(step_kind="stop", t_next=state.t,
                              objective=problem.objective(x), **base)
        return replace(state, k=k + 1), rec

    Fx = None
    objective = float("nan")
    if f0x + problem.h.value(z) <= state.center_value - config.kappa * v:
        Fx = problem.inner(x)
        objective = f0x + problem.h.value(Fx)
        if objective <= state.center_value - 0.5 * config.kappa * v:
            t_next = min(config.t_max, config.grow * state.t) if state.last_serious else state.t
            s_new = problem.h.subgradient(Fx)
            if isinstance(state.model, StructuredModel):
                h: Composed = problem.h
                model = state.model.update_after_serious(
                    Fx, [hi.value(Fx) for hi in h.inners], [hi.subgradient(Fx) for hi in h.inners],
                    k + 1)
            else:
                model = state.model.update_after_serious(Fx, problem.h.value(Fx), s_new, k + 1,
                                                         sol.alpha)
            new = replace(state, center=x.copy(), f0_center=f0x, h_center=problem.h.value(Fx),
                          F_center=Fx, J_center=problem.jacobian(x), s_hat=s_new, model=model,
                          t=t_next, k=k + 1, last_serious=True, center_index=k + 1)
            rec = IterationRecord(step_kind="serious", t_next=t_next, objective=objective, **base)
            return new, rec
        t_next = state.t / config.tau
        t_lower = min(t_next, state.t_lower)
        kind = "backtracking"
    else:
        t_next = max(state.t_lower, config.shrink * state.t)
        t_lower = state.t_lower
        kind = "null"
    if Fx is None:
        objective = problem.objective(x)
    model = _null_model(state, problem, sol, k)
    new = replace(state, model=model, t=t_next, t_lower=t_lower, k=k + 1, last_serious=False)
    rec = IterationRecord(step_kind=kind, t_next=t_next, objective=objective, **base)
    return new, rec


def prox_floor(problem: CompositeProblem, config: BundleConfig, records=()) -> float:
    """t_min = min(t_lower0, kappa / (2 tau L_h L_F)).

    With L_h L_F = 0 backtracking never happens and the floor falls back to
    the smallest t used in the run.
    """
    L = problem.lipschitz_product()
    if L is None or L <= 0:
        ts = [r.t for r in records]
        return float(min(ts)) if ts else config.t_lower0
    return float(min(config.t_lower0, config.kappa / (2 * config.tau * L)))


def epsilon_certificate(record: IterationRecord, problem: CompositeProblem,
                        t_min: float) -> Certificate:
    """Surrogate certificate with z* = F(x_{k+1}) and y* = y_{k+1}.

    eps^2 = ||F(x+) - z*||^2 + ||x+ - xh||^2 / t_min^2
            + ||J(x+)' y* - J(xh)' y_{k+1}||^2.
    """
    x, xh, y = record.x_next, record.center, record.y_next
    Fx = problem.inner(x)
    primal = 0.0
    step = float(np.linalg.norm(x - xh)) / t_min
    jac = float(np.linalg.norm(problem.jacobian(x).T @ y - problem.jacobian(xh).T @ y))
    eps = float(np.sqrt(primal ** 2 + step ** 2 + jac ** 2))
    return Certificate(eps, {"primal": primal, "step": step, "jacobian": jac, "t_min": t_min,
                             "z_star": Fx.tolist(), "y_star": y.tolist()})


def final_residual(problem: CompositeProblem, record: IterationRecord):
    """Best residual at x_{k+1} with y_{k+1} over the natural z candidates."""
    x = record.x_next
    return best_residual(problem, x, record.y_next, [record.z_next, problem.inner(x)])


def bundle_run(problem: CompositeProblem, config: Optional[BundleConfig] = None, x0=None,
               master_hook=None) -> BundleResult:
    config = config or BundleConfig()
    if not problem.supports("bundle"):
        raise ConfigurationError(f"problem {problem.name} does not meet the bundle assumptions")
    state = initial_state(problem, config, x0)
    floor = None
    L = problem.lipschitz_product()
    if L is not None and L > 0:
        floor = config.kappa / (2 * config.tau * L)
    records = []
    converged = False
    for _ in range(int(config.max_iter)):
        state, rec = bundle_step(state, problem, config, master_hook)
        records.append(rec)
        if floor is not None and rec.t_next < floor:
            msg = f"prox parameter {rec.t_next:.3e} fell below the Lipschitz floor {floor:.3e}"
            if problem.lipschitz_exact:
                log.error(msg)
            else:
                log.warning(msg)
        if rec.step_kind == "stop":
            converged = True
            break
    last = records[-1]
    res, z_best = final_residual(problem, last)
    last.residual_total = res.total
    t_min = prox_floor(problem, config, records)
    cert = epsilon_certificate(last, problem, t_min)
    x_final = last.x_next if converged else state.center
    return BundleResult(x_final, converged, records, state, cert, res, last.y_next, z_best, t_min)


__all__ = [
    "BundleConfig", "BundleState", "IterationRecord", "BundleResult", "Certificate",
    "initial_state", "bundle_step", "bundle_run", "epsilon_certificate", "prox_floor",
    "final_residual",
]
