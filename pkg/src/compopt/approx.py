"""Global approximations and the outer loop over approximating problems.

The outer loop builds problem nu from a parameter record, warm-starts an
inner solver at the previous point projected onto X^nu, and records the
residual against both the approximating and the actual problem.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .bundle import BundleConfig, bundle_run
from .composite import CompositeProblem
from .dc import DcConfig, dc_run
from .errors import CompOptError, ConfigurationError, InvalidInputError
from .oracles import CallableMapping, SmoothFunction
from .outer import Hinge, NonpositiveIndicator, OuterFunction, SeparablePwl, scaled_hinge_of
from .stationarity import (ResidualBreakdown, StationarityTriple, best_residual,
                           multiplier_diagnostics, residual)

FAMILY_KINDS = ("lse-smoothing", "hinge-penalty", "distance-penalty", "identity")
INNER_SOLVERS = ("bundle", "dc", "proximal-distance")
# "previous" starts level nu at x^{nu-1}; "initial" restarts every level at x0
WARM_STARTS = ("previous", "initial")


# ---------------------------------------------------------------------------
# LogSumExp smoothing of min_k psi_k

def lse(values, grads, eta: float):
    """Soft minimum -(1/c) ln sum_k exp(-c psi_k), c = ln|K| / eta.

    Returns (value, gradient). A single term is returned unchanged since
    the formula degenerates at ln 1 = 0.
    """
    values = np.asarray(values, dtype=float)
    grads = np.atleast_2d(np.asarray(grads, dtype=float))
    K = values.size
    if K == 1:
        return float(values[0]), grads[0].copy()
    if not eta > 0:
        raise InvalidInputError("eta must be positive")
    c = np.log(K) / eta
    a = -c * values
    w = np.exp(a - a.max())
    total = w.sum()
    # min - eta*log(total)/log(K) with 1 <= total <= K keeps the sandwich exact under rounding
    value = values.min() - eta * (np.log(total) / np.log(K))
    return float(value), (w / total) @ grads


def make_lse(psis: Sequence[Sequence[SmoothFunction]], cut_sets: Sequence[Sequence[int]],
             eta: float, n: int, component_L: Optional[Sequence[float]] = None) -> CallableMapping:
    """Mapping x -> (LSE_ij(x)) for scenarios i and cut sets j, row-major in (i, j).

    psis[i][k] is the smooth performance function of component k in scenario i.
    """
    if not eta > 0:
        raise InvalidInputError("eta must be positive")
    if any(len(K) < 1 for K in cut_sets):
        raise InvalidInputError("cut sets must be nonempty")
    s, q = len(psis), len(cut_sets)

    def evaluate(x):
        vals = np.empty(s * q)
        jac = np.empty((s * q, n))
        for i in range(s):
            for j, K in enumerate(cut_sets):
                v = [psis[i][k].value(x) for k in K]
                g = [psis[i][k].gradient(x) for k in K]
                vals[i * q + j], jac[i * q + j] = lse(v, g, eta)
        return vals, jac

    return CallableMapping(n, s * q, lambda x: evaluate(x)[0], lambda x: evaluate(x)[1],
                           component_L=component_L, lipschitz_exact=False)


def lse_smoothness_bound(M: float, G: float, K: int, eta: float) -> float:
    """L_i with ||grad LSE(x) - grad LSE(x')|| <= (L_i/2)||x - x'||.

    The Hessian is a softmin average of the psi Hessians (norm <= M) plus
    (ln K / eta) times a gradient covariance (norm <= G^2).
    """
    c = 0.0 if K == 1 else np.log(K) / eta
    return 2.0 * (M + c * G * G)


# ---------------------------------------------------------------------------
# penalties

def make_hinge_penalty(weight: float, m: int = 1, inner: Optional[OuterFunction] = None) -> OuterFunction:
    """weight * sum_i max{0, z_i}, or weight * max{0, inner(z)} when inner is given."""
    if not weight > 0:
        raise InvalidInputError("penalty weight must be positive")
    if inner is None:
        return Hinge(weight, m)
    return scaled_hinge_of(inner, weight)


def make_distance_penalty(rho, eta) -> SeparablePwl:
    """sum_i (rho_i/2) z_i + sum_i eta_i max{0, z_{q+i}}."""
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    if np.any(rho <= 0) or np.any(eta <= 0):
        raise InvalidInputError("penalty weights must be positive")
    return SeparablePwl(np.concatenate([rho / 2, np.zeros(eta.size)]),
                        np.concatenate([np.zeros(rho.size), eta]))


# ---------------------------------------------------------------------------
# families and schedules

@dataclass
class ApproximationFamily:
    kind: str
    generator: Callable[[dict], CompositeProblem]
    params0: dict
    actual: Optional[CompositeProblem] = None

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ConfigurationError(f"unknown family kind {self.kind!r}")

    def problem(self, params: dict) -> CompositeProblem:
        return self.generator(params)


@dataclass
class Schedule:
    length: int = 10
    tol0: float = 1e-2
    tol_factor: float = 0.5
    eta_factor: float = 0.5
    theta_factor: float = 2.0
    rho_factor: float = 2.0
    divergence_threshold: Optional[float] = None
    halt_on_divergence: bool = False
    warm_start: str = "previous"

    def __post_init__(self):
        if int(self.length) < 1:
            raise ConfigurationError("length: must be at least 1")
        if not self.tol0 > 0:
            raise ConfigurationError("tol0: must be positive")
        if not 0 < self.tol_factor < 1:
            raise ConfigurationError("tol_factor: must lie in (0, 1)")
        if not 0 < self.eta_factor <= 1:
            raise ConfigurationError("eta_factor: must lie in (0, 1]")
        if not self.theta_factor >= 1:
            raise ConfigurationError("theta_factor: must be at least 1")
        if not self.rho_factor >= 1:
            raise ConfigurationError("rho_factor: must be at least 1")
        if self.warm_start not in WARM_STARTS:
            raise ConfigurationError(f"warm_start: must be one of {WARM_STARTS}")

    def tol(self, nu: int) -> float:
        return self.tol0 * self.tol_factor ** nu

    def params(self, params0: dict, nu: int) -> dict:
        factors = {"eta": self.eta_factor, "theta": self.theta_factor, "rho": self.rho_factor}
        out = dict(params0)
        for key, f in factors.items():
            if key in out:
                out[key] = out[key] * f ** nu
        return out


@dataclass
class OuterRow:
    nu: int
    params: dict
    tol: float
    x: np.ndarray
    y: np.ndarray
    iterations: int
    converged: bool
    certificate: float
    residual_approx: ResidualBreakdown
    residual_actual: Optional[ResidualBreakdown]
    y_norm: float
    near_stationary: bool

    def to_dict(self) -> dict:
        return {"nu": self.nu, "params": dict(self.params), "tol": self.tol,
                "x": self.x.tolist(), "iterations": self.iterations, "converged": self.converged,
                "certificate": self.certificate, "residual_approx": self.residual_approx.to_dict(),
                "residual_actual": None if self.residual_actual is None
                else self.residual_actual.to_dict(),
                "y_norm": self.y_norm, "near_stationary": self.near_stationary}


@dataclass
class OuterResult:
    rows: list
    x: np.ndarray
    diagnostic: object
    failure: Optional[dict] = None

    def to_dict(self) -> dict:
        return {"rows": [r.to_dict() for r in self.rows], "x": self.x.tolist(),
                "diagnostic": self.diagnostic.to_dict() if self.diagnostic else None,
                "failure": self.failure}


def actual_residual(actual: CompositeProblem, x, y, snap_tol: float = 1e-9) -> ResidualBreakdown:
    """Residual of the actual problem at x, choosing (y, z) from the inner output.

    For an indicator h the point z is the projection of F(x) onto the
    domain and y is clipped to the normal cone there.
    """
    Fx = actual.inner(x)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if isinstance(actual.h, NonpositiveIndicator):
        z = actual.h.project_domain(Fx)
        best = None
        # also try the boundary when F(x) is within rounding of it
        for cand in (z, np.where(np.abs(z) <= snap_tol, 0.0, z)):
            y_star = np.where(cand == 0, np.maximum(y, 0.0), 0.0)
            r = residual(actual, StationarityTriple(x, y_star, cand))
            if best is None or r.total < best.total:
                best = r
        return best
    mode = "smooth" if actual.has_smooth_mapping else "dc"
    res, _ = best_residual(actual, x, y, [Fx], mode=mode)
    return res


def run_outer(family: ApproximationFamily, schedule: Schedule, inner: str, x0,
              inner_config=None) -> OuterResult:
    """Outer loop: one warm-started inner solve per approximation level."""
    if inner not in INNER_SOLVERS:
        raise ConfigurationError(f"inner: must be one of {INNER_SOLVERS}")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    x = x0
    rows = []
    failure = None
    ys = []
    oks = []
    for nu in range(int(schedule.length)):
        params = schedule.params(family.params0, nu)
        tol = schedule.tol(nu)
        try:
            prob = family.problem(params)
            start = prob.X.project(x if schedule.warm_start == "previous" else x0)
            if inner == "bundle":
                cfg = replace(inner_config or BundleConfig(), tol=tol)
                res = bundle_run(prob, cfg, start)
            else:
                base = inner_config or DcConfig()
                cfg = replace(base, tol=tol, e=max(tol, base.e if base.e is not None else 0.0))
                res = dc_run(prob, cfg, start, variant="dc" if inner == "dc" else "proximal-distance")
        except CompOptError as exc:
            failure = {"nu": nu, "error": type(exc).__name__, "message": str(exc)}
            break
        x = res.x
        y = res.y
        cert = res.certificate.epsilon
        r_approx = res.residual
        r_actual = None
        if family.actual is not None:
            r_actual = actual_residual(family.actual, x, y)
        near = bool(r_approx.total <= max(cert, tol))
        y_norm = float(np.linalg.norm(y))
        ys.append(y)
        oks.append(near)
        rows.append(OuterRow(nu, params, tol, x.copy(), np.asarray(y).copy(), res.iterations,
                             res.converged, cert, r_approx, r_actual, y_norm, near))
        if schedule.halt_on_divergence:
            diag = multiplier_diagnostics(ys, schedule.divergence_threshold, oks)
            if diag.flagged:
                break
    diagnostic = multiplier_diagnostics(ys, schedule.divergence_threshold, oks) if ys else None
    return OuterResult(rows, x, diagnostic, failure)


__all__ = [
    "lse", "make_lse", "lse_smoothness_bound", "make_hinge_penalty", "make_distance_penalty",
    "ApproximationFamily", "Schedule", "OuterRow", "OuterResult", "actual_residual", "run_outer",
]
