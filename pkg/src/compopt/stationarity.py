"""Stationarity residuals dist(0, S(x, y, z)) and related checks.

S(x, y, z) stacks three pieces: F(x) - z, the membership y in the
subdifferential of h at z, and grad f0(x) + sum_i y_i D_i(x) + N_X(x).
The residual reports the norm of each piece and their Euclidean total.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .composite import CompositeProblem
from .errors import InfeasiblePointError, InvalidInputError
from .oracles import Ball, Box, FiniteSet, Polyhedron, WholeSpace, as_point, convex_subgradient

MODES = ("smooth", "dc")
EXACT_SET_KINDS = (WholeSpace, Box, Ball, Polyhedron, FiniteSet)
DEFAULT_SNAP = 1e-7


@dataclass
class StationarityTriple:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        self.x = np.atleast_1d(np.asarray(self.x, dtype=float))
        self.y = np.atleast_1d(np.asarray(self.y, dtype=float))
        self.z = np.atleast_1d(np.asarray(self.z, dtype=float))


@dataclass
class ResidualBreakdown:
    r_primal: float
    r_dual: float
    r_stat: float
    dual_exact: bool = True
    stat_exact: bool = True

    @property
    def total(self) -> float:
        return float(np.sqrt(self.r_primal ** 2 + self.r_dual ** 2 + self.r_stat ** 2))

    @property
    def exact(self) -> bool:
        return self.dual_exact and self.stat_exact

    def to_dict(self) -> dict:
        d = asdict(self)
        d["total"] = self.total
        return d


def _dc_directions(problem: CompositeProblem, x, witnesses=None) -> np.ndarray:
    """Rows g1_i - g2_i of witness subgradients of the DC parts."""
    if witnesses is not None:
        g1, g2 = witnesses
        return np.atleast_2d(np.asarray(g1, dtype=float)) - np.atleast_2d(np.asarray(g2, dtype=float))
    return np.array([convex_subgradient(c.f1, x) - convex_subgradient(c.f2, x)
                     for c in problem.components])


def residual(problem: CompositeProblem, triple: StationarityTriple, mode: str = "smooth",
             witnesses=None) -> ResidualBreakdown:
    """Componentwise distances of the stationarity mapping at (x, y, z).

    In "dc" mode D_i(x) is represented by witness subgradients
    (g1_i, g2_i); the stationarity term is then an upper bound.
    """
    if mode not in MODES:
        raise InvalidInputError(f"unknown residual mode {mode!r}")
    x = as_point(triple.x, problem.n)
    y = as_point(triple.y, problem.m)
    z = as_point(triple.z, problem.m)
    Fx = problem.inner(x)
    r_primal = float(np.linalg.norm(Fx - z))
    r_dual, dual_exact = problem.h.subdiff_distance(z, y)
    if mode == "smooth":
        rows = problem.jacobian(x)
        rows_exact = True
    else:
        # witnesses pick one element of D_i(x), so the distance is only an upper bound
        rows = _dc_directions(problem, x, witnesses)
        rows_exact = False
    v = problem.f0.gradient(x) + rows.T @ y
    try:
        r_stat = problem.X.tangent_residual(x, v)
    except InfeasiblePointError:
        r_stat = float("inf")
    stat_exact = rows_exact and isinstance(problem.X, EXACT_SET_KINDS)
    return ResidualBreakdown(r_primal, float(r_dual), float(r_stat), bool(dual_exact), stat_exact)


def best_residual(problem: CompositeProblem, x, y, z_candidates: Iterable, mode: str = "smooth",
                  witnesses=None, snap_tol: float = DEFAULT_SNAP):
    """Smallest residual over the candidate z values and their kink snaps.

    Any candidate gives a valid upper bound on dist(0, S(x, y, .)) over z,
    so taking the minimum stays sound.
    """
    best = None
    best_z = None
    seen = []
    for z in z_candidates:
        z = np.atleast_1d(np.asarray(z, dtype=float))
        for cand in (z, problem.h.snap(z, snap_tol)):
            if any(np.array_equal(cand, s) for s in seen):
                continue
            seen.append(cand)
            r = residual(problem, StationarityTriple(x, y, cand), mode, witnesses)
            if best is None or r.total < best.total:
                best, best_z = r, cand
    return best, best_z


def check_near_stationary(problem: CompositeProblem, triple: StationarityTriple, eps: float,
                          mode: str = "smooth", witnesses=None) -> bool:
    """True iff the (possibly upper-bound) residual total is at most eps."""
    if eps < 0:
        raise InvalidInputError("tolerance must be nonnegative")
    return bool(residual(problem, triple, mode, witnesses).total <= eps)


@dataclass
class MultiplierReport:
    norms: list
    threshold: float
    flagged: bool
    first_flag: Optional[int]

    def to_dict(self) -> dict:
        return asdict(self)


def multiplier_diagnostics(ys: Sequence, threshold: Optional[float] = None,
                           residual_ok: Optional[Sequence[bool]] = None) -> MultiplierReport:
    """Flag ||y|| growing past a threshold while the residual checks pass.

    The default threshold is 1e6 * (1 + ||y_0||).
    """
    ys = [np.atleast_1d(np.asarray(y, dtype=float)) for y in ys]
    if not ys:
        raise InvalidInputError("multiplier diagnostics need at least one multiplier")
    norms = [float(np.linalg.norm(y)) for y in ys]
    if threshold is None:
        threshold = 1e6 * (1.0 + norms[0])
    ok = [True] * len(ys) if residual_ok is None else list(residual_ok)
    first = next((i for i, (nv, good) in enumerate(zip(norms, ok)) if good and nv > threshold), None)
    return MultiplierReport(norms, float(threshold), first is not None, first)


__all__ = [
    "StationarityTriple", "ResidualBreakdown", "residual", "best_residual",
    "check_near_stationary", "MultiplierReport", "multiplier_diagnostics",
]
