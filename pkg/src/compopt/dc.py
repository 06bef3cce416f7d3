"""Composite DC algorithm and its proximal distance variant.

Components are F_i = f1_i - f2_i with f1_i, f2_i convex. Each iteration
replaces f2_i by its affine minorant at x_k, which turns the problem into a
convex master problem whenever h is nondecreasing.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .composite import CompositeProblem
from .errors import ConfigurationError, InvalidInputError
from .oracles import convex_subgradient
from .master import MasterSpec, solve_distance, solve_master
from .stationarity import ResidualBreakdown, best_residual

VARIANTS = ("dc", "proximal-distance")
ROUNDING = 1e-12


@dataclass
class DcConfig:
    t: float = 1.0
    tol: float = 1e-8
    max_iter: int = 500
    e: Optional[float] = None
    master_tol: float = 1e-10

    def __post_init__(self):
        if self.e is None:
            self.e = max(self.tol, 1e-12)
        self.validate()

    def validate(self) -> None:
        if not self.t > 0:
            raise ConfigurationError("t: must be positive")
        if not self.tol >= 0:
            raise ConfigurationError("tol: must be nonnegative")
        if not self.e >= 0:
            raise ConfigurationError("e: must be nonnegative")
        if self.tol > 0 and self.e < self.tol:
            raise ConfigurationError("e: must be at least tol when tol > 0")
        if int(self.max_iter) < 1:
            raise ConfigurationError("max_iter: must be at least 1")


@dataclass
class DcState:
    x: np.ndarray
    f2: np.ndarray
    s2: np.ndarray
    objective: float
    k: int = 0


@dataclass
class DcIterationRecord:
    k: int
    step_kind: str
    v: float
    e: float
    e_parts: np.ndarray
    step_norm: float
    objective: float
    objective_prev: float
    x: np.ndarray
    x_next: np.ndarray
    z_next: np.ndarray
    y_next: np.ndarray
    s2: np.ndarray
    g1: Optional[np.ndarray]
    t: float
    kkt_residual: float
    residual_total: Optional[float] = None

    def row(self) -> dict:
        return {"k": self.k, "step_kind": self.step_kind, "v_k": self.v, "e_k": self.e,
                "t_k": self.t, "step_norm": self.step_norm, "objective": self.objective,
                "model_size": None, "residual_total": self.residual_total}


@dataclass
class DcCertificate:
    epsilon: float
    components: dict
    exact: bool

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "components": dict(self.components), "exact": self.exact}


@dataclass
class DcResult:
    x: np.ndarray
    converged: bool
    records: list
    state: DcState
    certificate: Optional[DcCertificate] = None
    residual: Optional[ResidualBreakdown] = None
    y: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    def counts(self) -> dict:
        return {"step": sum(r.step_kind == "step" for r in self.records),
                "stop": sum(r.step_kind == "stop" for r in self.records)}


def _f2_data(problem: CompositeProblem, x):
    comps = problem.components
    return (np.array([c.f2.value(x) for c in comps]),
            np.array([np.atleast_1d(c.f2.subgradient(x)) for c in comps]))


def initial_state(problem: CompositeProblem, x0) -> DcState:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.size != problem.n:
        raise InvalidInputError(f"x0 has dimension {x0.size}, expected {problem.n}")
    if not problem.X.contains(x0):
        raise InvalidInputError("x0 must lie in X")
    f2, s2 = _f2_data(problem, x0)
    return DcState(x0.copy(), f2, s2, problem.objective(x0))


def _finish(state: DcState, problem: CompositeProblem, config: DcConfig, x_next, z_next, y_next,
            g1, v, kkt):
    objective = problem.objective(x_next)
    rise = objective - state.objective
    tiny_step = np.linalg.norm(x_next - state.x) <= ROUNDING * (1.0 + np.linalg.norm(state.x))
    if tiny_step and 0 < rise <= ROUNDING * (1.0 + abs(state.objective)):
        # exact iterates never increase the objective; this is master noise around a fixed point
        x_next, z_next, v, objective = state.x.copy(), problem.inner(state.x), 0.0, state.objective
    d = x_next - state.x
    f2_next, s2_next = _f2_data(problem, x_next)
    e_parts = f2_next - (state.f2 + state.s2 @ d)
    e = float(np.max(e_parts))
    stop = v <= config.tol and e <= config.tol
    rec = DcIterationRecord(state.k, "stop" if stop else "step", float(v), e, e_parts,
                            float(np.linalg.norm(d)), objective, state.objective, state.x.copy(),
                            x_next.copy(), np.asarray(z_next, dtype=float), np.asarray(y_next, dtype=float),
                            state.s2.copy(), g1, config.t, kkt)
    new = DcState(x_next.copy(), f2_next, s2_next, objective, state.k + 1)
    return new, rec


def dc_step(state: DcState, problem: CompositeProblem, config: DcConfig):
    """One iteration of the composite DC algorithm."""
    spec = MasterSpec("dc", problem.f0, problem.X, state.x, config.t, h=problem.h,
                      components=problem.components, f2_center=state.f2, s2=state.s2,
                      tol=config.master_tol)
    sol = solve_master(spec)
    v = state.objective - (problem.f0.value(sol.x_next) + problem.h.value(sol.z_next))
    return _finish(state, problem, config, sol.x_next, sol.z_next, sol.y_next, sol.g1, v,
                   sol.kkt_residual)


def proximal_distance_step(state: DcState, problem: CompositeProblem, config: DcConfig):
    """One iteration of the proximal distance variant.

    x_{k+1} minimizes f0(x) + (mu/2)||x - p_hat||^2 over X, where
    mu = 1/t + sum rho_i and p_hat averages the projections with x_k.
    """
    ds = problem.distance
    if ds is None:
        raise ConfigurationError(f"problem {problem.name} has no distance-penalty structure")
    x, t = state.x, config.t
    P = np.array([K.project(x) for K in ds.sets])
    mu = 1.0 / t + ds.rho.sum()
    p_hat = (ds.rho @ P + x / t) / mu
    spec = MasterSpec("distance", problem.f0, problem.X, x, t, p_hat=p_hat, mu=mu,
                      tol=config.master_tol)
    sol = solve_distance(spec)
    x_next = sol.x_next
    z_next = np.sum((x_next - P) ** 2, axis=1)
    dist_now = np.array([K.distance_squared(x) for K in ds.sets])
    v = (problem.f0.value(x) + 0.5 * ds.rho @ dist_now) \
        - (problem.f0.value(x_next) + 0.5 * ds.rho @ z_next)
    y_next = 0.5 * ds.rho
    g1 = 2.0 * np.tile(x_next, (len(ds.sets), 1))
    return _finish(state, problem, config, x_next, z_next, y_next, g1, v, sol.kkt_residual)


def _witnesses(problem: CompositeProblem, rec: DcIterationRecord, e: float):
    """g2_i = s2_ik when it is an e-subgradient at x_{k+1}, else a fresh subgradient."""
    _, s2_next = _f2_data(problem, rec.x_next)
    g2 = np.where((rec.e_parts <= e)[:, None], rec.s2, s2_next)
    g1 = rec.g1
    if g1 is None:
        g1 = np.array([np.atleast_1d(convex_subgradient(c.f1, rec.x_next))
                       for c in problem.components])
    return g1, g2


def dc_epsilon_certificate(rec: DcIterationRecord, problem: CompositeProblem,
                           config: DcConfig) -> DcCertificate:
    """eps^2 = ||F(x+) - z+||^2 + ||x+ - x_k||^2/t^2 + third term.

    The third term is zero when e_k <= e; otherwise it is bounded above
    with a subgradient of f2 at x_{k+1} and the certificate is inexact.
    """
    primal = float(np.linalg.norm(problem.inner(rec.x_next) - rec.z_next))
    step = float(np.linalg.norm(rec.x_next - rec.x)) / config.t
    if rec.e <= config.e:
        third, exact = 0.0, True
    else:
        _, s2_next = _f2_data(problem, rec.x_next)
        third = float(np.linalg.norm((rec.s2 - s2_next).T @ rec.y_next))
        exact = False
    eps = float(np.sqrt(primal ** 2 + step ** 2 + third ** 2))
    return DcCertificate(eps, {"primal": primal, "step": step, "subgradient": third}, exact)


def final_residual(problem: CompositeProblem, rec: DcIterationRecord, config: DcConfig):
    witnesses = _witnesses(problem, rec, config.e)
    return best_residual(problem, rec.x_next, rec.y_next,
                         [rec.z_next, problem.inner(rec.x_next)], mode="dc", witnesses=witnesses)


def dc_run(problem: CompositeProblem, config: Optional[DcConfig] = None, x0=None,
           variant: str = "dc") -> DcResult:
    config = config or DcConfig()
    if variant not in VARIANTS:
        raise ConfigurationError(f"unknown DC variant {variant!r}")
    algorithm = "dc" if variant == "dc" else "proximal-distance"
    if not problem.supports(algorithm):
        raise ConfigurationError(f"problem {problem.name} does not meet the {algorithm} assumptions")
    step = dc_step if variant == "dc" else proximal_distance_step
    state = initial_state(problem, x0)
    records = []
    converged = False
    for _ in range(int(config.max_iter)):
        state, rec = step(state, problem, config)
        records.append(rec)
        if rec.step_kind == "stop":
            converged = True
            break
    last = records[-1]
    res, z_best = final_residual(problem, last, config)
    last.residual_total = res.total
    cert = dc_epsilon_certificate(last, problem, config)
    return DcResult(last.x_next.copy(), converged, records, state, cert, res, last.y_next, z_best)


__all__ = [
    "DcConfig", "DcState", "DcIterationRecord", "DcCertificate", "DcResult", "initial_state",
    "dc_step", "proximal_distance_step", "dc_epsilon_certificate", "dc_run", "final_residual",
]
