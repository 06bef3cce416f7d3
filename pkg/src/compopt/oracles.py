"""Oracles for smooth functions, vector mappings, DC parts and feasible sets.

Every oracle is immutable after construction and evaluates without side
effects, so one instance may be shared across concurrent solver runs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import nnls

from .errors import ConfigurationError, InfeasiblePointError, InvalidInputError


def as_point(x, n: Optional[int] = None) -> np.ndarray:
    """Return `x` as a finite 1-D float array, checking the dimension."""
    arr = np.atleast_1d(np.asarray(x, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise InvalidInputError(f"expected a nonempty vector, got shape {arr.shape}")
    if n is not None and arr.size != n:
        raise InvalidInputError(f"expected dimension {n}, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError("point has non-finite entries")
    return arr


def feasibility_tol(x) -> float:
    return 1e-9 * (1.0 + float(np.linalg.norm(x)))


# ---------------------------------------------------------------------------
# smooth functions

class SmoothFunction:
    """Real-valued C^1 function with gradient oracle.

    Subclasses override `value` and `gradient`; `hessian` defaults to
    central differences of the gradient, which the master solver only uses
    as a Newton model and never for certification.
    """

    dim: int
    convex: bool = True
    grad_lipschitz: Optional[float] = None

    def value(self, x) -> float:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        n = x.size
        H = np.empty((n, n))
        h = 1e-5 * (1.0 + np.abs(x))
        for i in range(n):
            e = np.zeros(n)
            e[i] = h[i]
            H[:, i] = (self.gradient(x + e) - self.gradient(x - e)) / (2 * h[i])
        return 0.5 * (H + H.T)

    def __call__(self, x) -> float:
        return self.value(x)


class Quadratic(SmoothFunction):
    """f(x) = 0.5 x'Qx + b'x + c."""

    def __init__(self, Q, b=None, c: float = 0.0, convex: Optional[bool] = None):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[0] != Q.shape[1]:
            raise InvalidInputError("Q must be square")
        self.Q = 0.5 * (Q + Q.T)
        self.dim = Q.shape[0]
        self.b = np.zeros(self.dim) if b is None else as_point(b, self.dim)
        self.c = float(c)
        eig = np.linalg.eigvalsh(self.Q) if self.dim else np.zeros(0)
        self.convex = bool(eig.min() >= -1e-12) if convex is None else convex
        self.grad_lipschitz = float(np.max(np.abs(eig), initial=0.0))

    @classmethod
    def zero(cls, n: int) -> "Quadratic":
        return cls(np.zeros((n, n)))

    @classmethod
    def scaled_distance(cls, weight: float, center) -> "Quadratic":
        """(weight/2)||x - center||^2."""
        center = as_point(center)
        n = center.size
        return cls(weight * np.eye(n), -weight * center, 0.5 * weight * center @ center)

    @property
    def is_zero(self) -> bool:
        return not self.Q.any() and not self.b.any()

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.Q @ x + self.b @ x + self.c)

    def gradient(self, x) -> np.ndarray:
        return self.Q @ np.asarray(x, dtype=float) + self.b

    def hessian(self, x) -> np.ndarray:
        return self.Q.copy()

    def to_dict(self) -> dict:
        return {"kind": "quadratic", "Q": self.Q.tolist(), "b": self.b.tolist(), "c": self.c}


class CallableSmooth(SmoothFunction):
    """Smooth function assembled from user callables."""

    def __init__(self, dim: int, value: Callable, gradient: Callable,
                 hessian: Optional[Callable] = None, convex: bool = True,
                 grad_lipschitz: Optional[float] = None):
        self.dim = int(dim)
        self._value = value
        self._gradient = gradient
        self._hessian = hessian
        self.convex = convex
        self.grad_lipschitz = grad_lipschitz

    def value(self, x) -> float:
        return float(self._value(np.asarray(x, dtype=float)))

    def gradient(self, x) -> np.ndarray:
        return np.asarray(self._gradient(np.asarray(x, dtype=float)), dtype=float).reshape(-1)

    def hessian(self, x) -> np.ndarray:
        if self._hessian is None:
            return super().hessian(x)
        return np.atleast_2d(np.asarray(self._hessian(np.asarray(x, dtype=float)), dtype=float))


# ---------------------------------------------------------------------------
# vector mappings

class Mapping:
    """Smooth F: R^n -> R^m with Jacobian and per-component constants L_i.

    L_i follows the half-Lipschitz convention
    ||grad f_i(x) - grad f_i(x')|| <= (L_i / 2) ||x - x'|| on X.
    `lipschitz_exact` records whether the constants are proven bounds.
    """

    dim_in: int
    dim_out: int
    component_L: Optional[np.ndarray] = None
    lipschitz_exact: bool = True

    def value(self, x) -> np.ndarray:
        raise NotImplementedError

    def jacobian(self, x) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x) -> np.ndarray:
        return self.value(x)


class CallableMapping(Mapping):
    def __init__(self, dim_in: int, dim_out: int, value: Callable, jacobian: Callable,
                 component_L=None, lipschitz_exact: bool = True):
        self.dim_in = int(dim_in)
        self.dim_out = int(dim_out)
        self._value = value
        self._jacobian = jacobian
        self.component_L = None if component_L is None else np.atleast_1d(
            np.asarray(component_L, dtype=float))
        self.lipschitz_exact = lipschitz_exact

    def value(self, x) -> np.ndarray:
        return np.atleast_1d(np.asarray(self._value(np.asarray(x, dtype=float)), dtype=float))

    def jacobian(self, x) -> np.ndarray:
        J = np.asarray(self._jacobian(np.asarray(x, dtype=float)), dtype=float)
        return J.reshape(self.dim_out, self.dim_in)


class AffineMapping(Mapping):
    """F(x) = Mx + c."""

    def __init__(self, M, c=None):
        self.M = np.atleast_2d(np.asarray(M, dtype=float))
        self.dim_out, self.dim_in = self.M.shape
        self.c = np.zeros(self.dim_out) if c is None else as_point(c, self.dim_out)
        self.component_L = np.zeros(self.dim_out)
        self.lipschitz_exact = True

    def value(self, x) -> np.ndarray:
        return self.M @ np.asarray(x, dtype=float) + self.c

    def jacobian(self, x) -> np.ndarray:
        return self.M.copy()


def mapping_lipschitz(F: Mapping) -> float:
    """L_F = sqrt(sum L_i^2)."""
    L = F.component_L
    if L is None or np.any(~np.isfinite(np.asarray(L, dtype=float))):
        raise ConfigurationError("component Lipschitz constants L_i are missing")
    return float(np.sqrt(np.sum(np.asarray(L, dtype=float) ** 2)))


# ---------------------------------------------------------------------------
# convex parts of DC components

class ConvexFunction:
    """Convex real-valued function with a subgradient oracle."""

    dim: int

    def value(self, x) -> float:
        raise NotImplementedError

    def subgradient(self, x) -> np.ndarray:
        raise NotImplementedError


class MaxAffine(ConvexFunction):
    """f(x) = max_p (a_p'x + b_p). Ties average the active slopes."""

    def __init__(self, A, b):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.atleast_1d(np.asarray(b, dtype=float))
        self.dim = self.A.shape[1]
        if self.b.size != self.A.shape[0]:
            raise InvalidInputError("MaxAffine needs one offset per piece")

    @classmethod
    def scaled_abs(cls, n: int, i: int, scale: float) -> "MaxAffine":
        """scale * |x_i|."""
        a = np.zeros(n)
        a[i] = scale
        return cls(np.vstack([a, -a]), np.zeros(2))

    def value(self, x) -> float:
        return float(np.max(self.A @ np.asarray(x, dtype=float) + self.b))

    def subgradient(self, x) -> np.ndarray:
        vals = self.A @ np.asarray(x, dtype=float) + self.b
        act = vals == vals.max()
        return self.A[act].mean(axis=0)


class SmoothConvex(ConvexFunction):
    """Adapter exposing a convex SmoothFunction through the convex interface."""

    def __init__(self, f: SmoothFunction):
        self.f = f
        self.dim = f.dim

    def value(self, x) -> float:
        return self.f.value(x)

    def subgradient(self, x) -> np.ndarray:
        return self.f.gradient(x)


class ConcaveDistancePart(ConvexFunction):
    """max over u in K of 2<x,u> - ||u||^2, the convex part removed from ||x||^2.

    Its subgradient at x is 2 * project(K, x) under the finite-set tie rule.
    """

    def __init__(self, K: "FiniteSet"):
        self.K = K
        self.dim = K.dim

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        P = self.K.points
        return float(np.max(2.0 * P @ x - np.sum(P * P, axis=1)))

    def subgradient(self, x) -> np.ndarray:
        return 2.0 * self.K.project(x)


@dataclass
class DcComponent:
    """f_i = f1 - f2 with f1, f2 convex. f1 must be smooth or max-affine."""

    f1: object
    f2: ConvexFunction

    def value(self, x) -> float:
        return self.f1.value(x) - self.f2.value(x)


def convex_value(f, x) -> float:
    return f.value(x)


def convex_subgradient(f, x) -> np.ndarray:
    if isinstance(f, SmoothFunction):
        return f.gradient(x)
    return f.subgradient(x)


# ---------------------------------------------------------------------------
# feasible sets

class FeasibleSet:
    """Closed set with projection and normal-cone residual."""

    kind: str
    dim: int

    def project(self, x) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x, tol: Optional[float] = None) -> bool:
        x = np.asarray(x, dtype=float)
        tol = feasibility_tol(x) if tol is None else tol
        return bool(np.linalg.norm(self.project(x) - x) <= tol)

    def tangent_residual(self, x, v) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def _check(self, x) -> np.ndarray:
        x = as_point(x, self.dim)
        if not self.contains(x):
            raise InfeasiblePointError(f"point {x} is not in the {self.kind} set")
        return x


class WholeSpace(FeasibleSet):
    kind = "whole-space"

    def __init__(self, n: int):
        self.dim = int(n)

    def project(self, x) -> np.ndarray:
        return as_point(x, self.dim).copy()

    def contains(self, x, tol=None) -> bool:
        return True

    def tangent_residual(self, x, v) -> float:
        as_point(x, self.dim)
        return float(np.linalg.norm(as_point(v, self.dim)))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "dim": self.dim}


class Box(FeasibleSet):
    kind = "box"

    def __init__(self, lower, upper):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if self.lower.shape != self.upper.shape or np.any(self.lower > self.upper):
            raise InvalidInputError("box bounds must satisfy lower <= upper")
        self.dim = self.lower.size

    def project(self, x) -> np.ndarray:
        return np.clip(as_point(x, self.dim), self.lower, self.upper)

    def tangent_residual(self, x, v) -> float:
        x = self._check(x)
        v = as_point(v, self.dim)
        tol = feasibility_tol(x)
        at_lo = x <= self.lower + tol
        at_hi = x >= self.upper - tol
        r = v.copy()
        # N at a lower bound is (-inf, 0]: only v_i < 0 survives
        r[at_lo & ~at_hi] = np.minimum(v[at_lo & ~at_hi], 0.0)
        r[at_hi & ~at_lo] = np.maximum(v[at_hi & ~at_lo], 0.0)
        r[at_lo & at_hi] = 0.0
        return float(np.linalg.norm(r))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lower": self.lower.tolist(), "upper": self.upper.tolist()}


class Ball(FeasibleSet):
    kind = "euclidean-ball"

    def __init__(self, center, radius: float):
        self.center = as_point(center)
        self.radius = float(radius)
        if self.radius < 0:
            raise InvalidInputError("radius must be nonnegative")
        self.dim = self.center.size

    def project(self, x) -> np.ndarray:
        x = as_point(x, self.dim)
        d = x - self.center
        nd = np.linalg.norm(d)
        if nd <= self.radius:
            return x.copy()
        return self.center + d * (self.radius / nd)

    def tangent_residual(self, x, v) -> float:
        x = self._check(x)
        v = as_point(v, self.dim)
        d = x - self.center
        nd = np.linalg.norm(d)
        if nd < self.radius - feasibility_tol(x) or nd == 0.0:
            return float(np.linalg.norm(v))
        u = d / nd
        # N = {beta u : beta >= 0}; the optimal beta removes the inward part of v
        beta = max(0.0, -float(v @ u))
        return float(np.linalg.norm(v + beta * u))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "center": self.center.tolist(), "radius": self.radius}


class Polyhedron(FeasibleSet):
    """Intersection of halfspaces {x : A x <= b}."""

    kind = "halfspace-intersection"

    def __init__(self, A, b):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.b = np.atleast_1d(np.asarray(b, dtype=float))
        if self.A.shape[0] != self.b.size:
            raise InvalidInputError("one offset per halfspace is required")
        self.dim = self.A.shape[1]

    def contains(self, x, tol=None) -> bool:
        x = as_point(x, self.dim)
        tol = feasibility_tol(x) if tol is None else tol
        return bool(np.all(self.A @ x - self.b <= tol * (1.0 + np.abs(self.b))))

    def project(self, x) -> np.ndarray:
        from .program import solve_qp

        x = as_point(x, self.dim)
        if self.contains(x, 0.0):
            return x.copy()
        res = solve_qp(np.eye(self.dim), -x, self.A, self.b, w0=x)
        return res.w

    def tangent_residual(self, x, v) -> float:
        x = self._check(x)
        v = as_point(v, self.dim)
        tol = feasibility_tol(x)
        act = self.A @ x >= self.b - tol * (1.0 + np.abs(self.b))
        if not act.any():
            return float(np.linalg.norm(v))
        # min over beta >= 0 of ||v + A_act' beta||
        _, rnorm = nnls(self.A[act].T, -v)
        return float(rnorm)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "A": self.A.tolist(), "b": self.b.tolist()}


class FiniteSet(FeasibleSet):
    """Finite point set; used for the sets K_i of distance penalties."""

    kind = "finite-point-set"

    def __init__(self, points):
        P = np.asarray(points, dtype=float)
        if P.ndim == 1:
            P = P.reshape(-1, 1)
        if P.shape[0] == 0:
            raise InvalidInputError("finite set must be nonempty")
        # store in lexicographic order so argmin picks the smallest tie
        order = np.lexsort(P.T[::-1])
        self.points = P[order]
        self.dim = P.shape[1]

    def project(self, x) -> np.ndarray:
        x = as_point(x, self.dim)
        d2 = np.sum((self.points - x) ** 2, axis=1)
        return self.points[int(np.argmin(d2))].copy()

    def distance_squared(self, x) -> float:
        x = as_point(x, self.dim)
        return float(np.min(np.sum((self.points - x) ** 2, axis=1)))

    def contains(self, x, tol=None) -> bool:
        x = as_point(x, self.dim)
        tol = feasibility_tol(x) if tol is None else tol
        return bool(np.sqrt(self.distance_squared(x)) <= tol)

    def tangent_residual(self, x, v) -> float:
        # the normal cone of an isolated point is the whole space
        self._check(x)
        return 0.0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "points": self.points.tolist()}


def project(S: FeasibleSet, x) -> np.ndarray:
    return S.project(x)


def tangent_residual(S: FeasibleSet, x, v) -> float:
    """min over n in N_S(x) of ||v + n||."""
    return S.tangent_residual(x, v)


def set_from_dict(d: dict) -> FeasibleSet:
    kind = d.get("kind")
    if kind == "whole-space":
        return WholeSpace(d["dim"])
    if kind == "box":
        return Box(d["lower"], d["upper"])
    if kind == "euclidean-ball":
        return Ball(d["center"], d["radius"])
    if kind == "halfspace-intersection":
        return Polyhedron(d["A"], d["b"])
    if kind == "finite-point-set":
        return FiniteSet(d["points"])
    raise InvalidInputError(f"unknown set kind {kind!r}")


# ---------------------------------------------------------------------------
# sampled verification helpers (opt-in, never called from hot paths)

def fd_gradient_error(value: Callable, gradient: Callable, x, step: float = 1e-6) -> float:
    """Relative error between central differences and the gradient oracle."""
    x = np.asarray(x, dtype=float)
    g = np.asarray(gradient(x), dtype=float)
    fd = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        fd[i] = (value(x + e) - value(x - e)) / (2 * step)
    return float(np.linalg.norm(fd - g) / max(1.0, np.linalg.norm(g)))


def fd_jacobian_error(F: Mapping, x, step: float = 1e-6) -> float:
    """Worst row-wise relative error of the Jacobian against central differences."""
    x = np.asarray(x, dtype=float)
    J = F.jacobian(x)
    worst = 0.0
    for i in range(F.dim_out):
        err = fd_gradient_error(lambda u, i=i: F.value(u)[i], lambda u, i=i: J[i], x, step)
        worst = max(worst, err)
    return worst


def half_lipschitz_violation(F: Mapping, pairs: Sequence[tuple]) -> float:
    """Largest ||grad f_i(x) - grad f_i(x')|| - (L_i/2)||x - x'|| over pairs."""
    L = np.asarray(F.component_L, dtype=float)
    worst = -np.inf
    for x, xp in pairs:
        dJ = np.linalg.norm(F.jacobian(x) - F.jacobian(xp), axis=1)
        gap = dJ - 0.5 * L * np.linalg.norm(np.asarray(x) - np.asarray(xp))
        worst = max(worst, float(np.max(gap)))
    return worst


def sample_in_set(S: FeasibleSet, rng: np.random.Generator, n_samples: int,
                  radius: float = 3.0) -> np.ndarray:
    """Random points in S (projected Gaussians); finite sets return their points."""
    if isinstance(S, FiniteSet):
        idx = rng.integers(0, S.points.shape[0], size=n_samples)
        return S.points[idx]
    if isinstance(S, Box):
        lo = np.where(np.isfinite(S.lower), S.lower, -radius)
        hi = np.where(np.isfinite(S.upper), S.upper, radius)
        return lo + (hi - lo) * rng.random((n_samples, S.dim))
    raw = radius * rng.standard_normal((n_samples, S.dim))
    return np.array([S.project(r) for r in raw])


__all__ = [
    "as_point", "feasibility_tol", "SmoothFunction", "Quadratic", "CallableSmooth",
    "Mapping", "CallableMapping", "AffineMapping", "mapping_lipschitz",
    "ConvexFunction", "MaxAffine", "SmoothConvex", "ConcaveDistancePart", "DcComponent",
    "convex_value", "convex_subgradient",
    "FeasibleSet", "WholeSpace", "Box", "Ball", "Polyhedron", "FiniteSet",
    "project", "tangent_residual", "set_from_dict",
    "fd_gradient_error", "fd_jacobian_error", "half_lipschitz_violation", "sample_in_set",
]
