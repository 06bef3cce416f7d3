"""Outer convex functions h with subgradients and subdifferential distances.

Kink conventions (deterministic): max{0, t} at t = 0 reports slope 0,
|t| at 0 reports 0, and ties in a max of coordinates share the weight
uniformly over the argmax.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConfigurationError, InvalidInputError
from .oracles import as_point
from .program import ConvexProgram

# A polyhedral outer function is a sum of pointwise maxima of affine pieces:
#   h(z) = sum_k max_p (C_k[p] . z + d_k[p])
EpigraphTerm = tuple[np.ndarray, np.ndarray]


@dataclass
class Polytope:
    """{v : A_eq v = b_eq, A_ub v <= b_ub, lo <= v <= hi}."""

    lo: np.ndarray
    hi: np.ndarray
    A_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    A_ub: Optional[np.ndarray] = None
    b_ub: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return self.lo.size

    @property
    def is_box(self) -> bool:
        return (self.A_eq is None or self.A_eq.shape[0] == 0) and (
            self.A_ub is None or self.A_ub.shape[0] == 0)


def polytope_distance(y, poly: Polytope) -> float:
    """Euclidean distance from y to the polytope."""
    y = np.asarray(y, dtype=float)
    if poly.is_box:
        return float(np.linalg.norm(y - np.clip(y, poly.lo, poly.hi)))
    return homogenized_distance(y, Polytope(np.ones(1), np.ones(1)), [poly])


def homogenized_distance(y, outer: Polytope, inner: Sequence[Polytope]) -> float:
    """Distance from y to {sum_i lam_i v_i : lam in outer, v_i in inner[i]}.

    Requires lam >= 0 on `outer`; the set is then convex and equals
    {sum_i u_i : u_i in lam_i * inner[i]}, which is linear in (lam, u).
    """
    y = np.asarray(y, dtype=float)
    d = len(inner)
    m = y.size
    N = d + d * m
    prog = ConvexProgram(N)
    # 0.5 ||S w - y||^2 with S summing the u blocks
    S = np.zeros((m, N))
    for i in range(d):
        S[:, d + i * m: d + (i + 1) * m] = np.eye(m)
    prog.add_quadratic(S.T @ S, -S.T @ y)
    _add_polytope_rows(prog, outer, np.arange(d), None)
    for i, poly in enumerate(inner):
        cols = d + i * m + np.arange(m)
        _add_polytope_rows(prog, poly, cols, i)
    # start from an interior-ish point: lam at the lower end, u = lam * lo
    res = prog.solve()
    return float(np.linalg.norm(S @ res.w - y))


def _add_polytope_rows(prog: ConvexProgram, poly: Polytope, cols, scale_col) -> None:
    """Add poly's rows on variables `cols`, right-hand sides times w[scale_col]."""
    N = prog.nvar

    def row(coefs, rhs):
        a = np.zeros(N)
        a[cols] = coefs
        if scale_col is None:
            return a, rhs
        a[scale_col] -= rhs
        return a, 0.0

    k = len(cols)
    eye = np.eye(k)
    if poly.A_eq is not None:
        for a_i, b_i in zip(poly.A_eq, poly.b_eq):
            prog.add_eq(*row(a_i, b_i))
    if poly.A_ub is not None:
        for a_i, b_i in zip(poly.A_ub, poly.b_ub):
            prog.add_le(*row(a_i, b_i))
    for j in range(k):
        if np.isfinite(poly.hi[j]):
            prog.add_le(*row(eye[j], poly.hi[j]))
        if np.isfinite(poly.lo[j]):
            prog.add_le(*row(-eye[j], -poly.lo[j]))


class OuterFunction:
    """Convex h: R^m -> R."""

    variant: str = "generic"
    dim: int
    monotone: bool = False
    lipschitz_exact: bool = True

    def value(self, z) -> float:
        raise NotImplementedError

    def subgradient(self, z) -> np.ndarray:
        raise NotImplementedError

    def subdiff_polytope(self, z) -> Optional[Polytope]:
        """Description of the subdifferential at z, when it is a known polytope."""
        return None

    def subdiff_distance(self, z, y) -> tuple[float, bool]:
        """(dist(y, subdifferential at z), exact flag)."""
        z = as_point(z, self.dim)
        y = as_point(y, self.dim)
        poly = self.subdiff_polytope(z)
        if poly is None:
            return float(np.linalg.norm(y - self.subgradient(z))), False
        return polytope_distance(y, poly), True

    def lipschitz_bound(self) -> float:
        raise ConfigurationError(f"no Lipschitz bound available for {self.variant}")

    def epigraph_terms(self) -> Optional[list[EpigraphTerm]]:
        return None

    def snap(self, z, tol: float) -> np.ndarray:
        """Nearest point where the subdifferential is largest, within tol."""
        return np.asarray(z, dtype=float).copy()

    def to_dict(self) -> dict:
        return {"variant": self.variant, "dim": self.dim}

    def __call__(self, z) -> float:
        return self.value(z)


class AbsValue(OuterFunction):
    """h(z) = sum_i |z_i| (the absolute value for m = 1)."""

    variant = "abs-value"

    def __init__(self, m: int = 1):
        self.dim = int(m)

    def value(self, z) -> float:
        return float(np.sum(np.abs(as_point(z, self.dim))))

    def subgradient(self, z) -> np.ndarray:
        return np.sign(as_point(z, self.dim))

    def subdiff_polytope(self, z) -> Polytope:
        z = as_point(z, self.dim)
        s = np.sign(z)
        return Polytope(np.where(z == 0, -1.0, s), np.where(z == 0, 1.0, s))

    def lipschitz_bound(self) -> float:
        return float(np.sqrt(self.dim))

    def epigraph_terms(self):
        eye = np.eye(self.dim)
        return [(np.vstack([eye[i], -eye[i]]), np.zeros(2)) for i in range(self.dim)]

    def snap(self, z, tol):
        z = np.asarray(z, dtype=float).copy()
        z[np.abs(z) <= tol] = 0.0
        return z


class SeparablePwl(OuterFunction):
    """h(z) = sum_i a_i z_i + sum_i b_i max{0, z_i} with b >= 0."""

    variant = "separable-pwl"

    def __init__(self, a, b):
        self.a = np.atleast_1d(np.asarray(a, dtype=float))
        self.b = np.atleast_1d(np.asarray(b, dtype=float))
        if self.a.shape != self.b.shape:
            raise InvalidInputError("a and b must have the same length")
        if np.any(self.b < 0):
            raise InvalidInputError("hinge weights b must be nonnegative")
        self.dim = self.a.size
        self.monotone = bool(np.all(self.a >= 0))

    def value(self, z) -> float:
        z = as_point(z, self.dim)
        return float(self.a @ z + self.b @ np.maximum(z, 0.0))

    def subgradient(self, z) -> np.ndarray:
        z = as_point(z, self.dim)
        return self.a + self.b * (z > 0)

    def subdiff_polytope(self, z) -> Polytope:
        z = as_point(z, self.dim)
        return Polytope(self.a + self.b * (z > 0), self.a + self.b * (z >= 0))

    def lipschitz_bound(self) -> float:
        return float(np.linalg.norm(np.abs(self.a) + self.b))

    def epigraph_terms(self):
        terms = []
        if np.any(self.a != 0):
            terms.append((self.a.reshape(1, -1), np.zeros(1)))
        eye = np.eye(self.dim)
        for i in np.flatnonzero(self.b):
            terms.append((np.vstack([np.zeros(self.dim), self.b[i] * eye[i]]), np.zeros(2)))
        return terms

    def snap(self, z, tol):
        z = np.asarray(z, dtype=float).copy()
        z[(np.abs(z) <= tol) & (self.b > 0)] = 0.0
        return z

    def to_dict(self):
        return {"variant": self.variant, "a": self.a.tolist(), "b": self.b.tolist()}


class Hinge(SeparablePwl):
    """h(z) = rho * sum_i max{0, z_i}; for m = 1 the scaled hinge rho*max{0,z}."""

    variant = "scaled-hinge"

    def __init__(self, rho: float, m: int = 1):
        if rho <= 0:
            raise InvalidInputError("hinge weight must be positive")
        self.rho = float(rho)
        super().__init__(np.zeros(m), np.full(m, self.rho))

    def to_dict(self):
        return {"variant": self.variant, "rho": self.rho, "dim": self.dim}


def identity_outer(m: int = 1) -> SeparablePwl:
    """h(z) = sum_i z_i."""
    return SeparablePwl(np.ones(m), np.zeros(m))


class MaxCoordinates(OuterFunction):
    variant = "max-of-coordinates"
    monotone = True

    def __init__(self, m: int):
        self.dim = int(m)

    def value(self, z) -> float:
        return float(np.max(as_point(z, self.dim)))

    def subgradient(self, z) -> np.ndarray:
        z = as_point(z, self.dim)
        act = z == z.max()
        return act / act.sum()

    def subdiff_polytope(self, z) -> Polytope:
        z = as_point(z, self.dim)
        act = (z == z.max()).astype(float)
        return Polytope(np.zeros(self.dim), act, act.reshape(1, -1), np.ones(1))

    def lipschitz_bound(self) -> float:
        return 1.0

    def epigraph_terms(self):
        return [(np.eye(self.dim), np.zeros(self.dim))]


class SupportCappedSimplex(OuterFunction):
    """h(u) = max over pi in P_alpha of sum_i pi_i max_j u_ij.

    P_alpha = {pi : sum pi = 1, 0 <= pi_i <= p_i / (1 - alpha)}; u is the
    row-major flattening of an s-by-q array.
    """

    variant = "support-capped-simplex"
    monotone = True

    def __init__(self, p, alpha: float, q: int = 1):
        self.p = np.atleast_1d(np.asarray(p, dtype=float))
        if not 0 <= alpha < 1:
            raise InvalidInputError("alpha must lie in [0, 1)")
        if np.any(self.p < 0) or abs(self.p.sum() - 1.0) > 1e-12:
            raise InvalidInputError("p must be a probability vector")
        self.alpha = float(alpha)
        self.s = self.p.size
        self.q = int(q)
        self.caps = self.p / (1.0 - self.alpha)
        self.dim = self.s * self.q

    def _rows(self, u):
        U = as_point(u, self.dim).reshape(self.s, self.q)
        return U, U.max(axis=1)

    def maximizer(self, w) -> tuple[np.ndarray, float]:
        """Greedy maximizer of pi . w over P_alpha and the threshold level."""
        order = np.argsort(-w, kind="stable")
        pi = np.zeros(self.s)
        rem = 1.0
        gamma = w[order[-1]]
        for i in order:
            take = min(self.caps[i], rem)
            pi[i] = take
            rem -= take
            if rem <= 1e-15:
                gamma = w[i]
                break
        return pi, float(gamma)

    def value(self, u) -> float:
        _, w = self._rows(u)
        pi, _ = self.maximizer(w)
        return float(pi @ w)

    def subgradient(self, u) -> np.ndarray:
        U, w = self._rows(u)
        pi, _ = self.maximizer(w)
        act = U == w[:, None]
        return (act / act.sum(axis=1, keepdims=True) * pi[:, None]).reshape(-1)

    def subdiff_polytope(self, u) -> Polytope:
        U, w = self._rows(u)
        _, gamma = self.maximizer(w)
        act = U == w[:, None]
        s, q = self.s, self.q
        hi = np.where(act & (w[:, None] >= gamma), self.caps[:, None], 0.0).reshape(-1)
        lo = np.zeros(self.dim)
        A_eq = [np.ones(self.dim)]
        b_eq = [1.0]
        A_ub, b_ub = [], []
        for i in range(s):
            row = np.zeros((s, q))
            row[i] = act[i]
            if w[i] > gamma:
                A_eq.append(row.reshape(-1))
                b_eq.append(self.caps[i])
            elif w[i] == gamma and act[i].sum() > 1:
                A_ub.append(row.reshape(-1))
                b_ub.append(self.caps[i])
        return Polytope(lo, hi, np.array(A_eq), np.array(b_eq),
                        np.array(A_ub).reshape(-1, self.dim), np.array(b_ub))

    def lipschitz_bound(self) -> float:
        # the cap-greedy vertex majorizes every pi in P_alpha, so it maximizes ||pi||
        pi, _ = self.maximizer(self.caps)
        return float(np.linalg.norm(pi))

    def to_dict(self):
        return {"variant": self.variant, "p": self.p.tolist(), "alpha": self.alpha, "q": self.q}


class Composed(OuterFunction):
    """h = h0 o (h_1, ..., h_d) with h0 convex nondecreasing."""

    variant = "composed"

    def __init__(self, h0: OuterFunction, inners: Sequence[OuterFunction],
                 lipschitz: Optional[float] = None):
        if h0.dim != len(inners):
            raise InvalidInputError("h0 dimension must equal the number of inner functions")
        dims = {h.dim for h in inners}
        if len(dims) != 1:
            raise InvalidInputError("inner functions must share the input dimension")
        if not h0.monotone:
            raise ConfigurationError("outer function h0 of a composition must be nondecreasing")
        self.h0 = h0
        self.inners = list(inners)
        self.dim = dims.pop()
        self.monotone = all(h.monotone for h in self.inners)
        self._lipschitz = lipschitz
        self.lipschitz_exact = lipschitz is not None or len(self.inners) == 1

    def inner_values(self, z) -> np.ndarray:
        return np.array([h.value(z) for h in self.inners])

    def value(self, z) -> float:
        z = as_point(z, self.dim)
        return self.h0.value(self.inner_values(z))

    def subgradient(self, z) -> np.ndarray:
        z = as_point(z, self.dim)
        lam = self.h0.subgradient(self.inner_values(z))
        out = np.zeros(self.dim)
        for li, h in zip(lam, self.inners):
            if li != 0:
                out += li * h.subgradient(z)
        return out

    def subdiff_distance(self, z, y) -> tuple[float, bool]:
        z = as_point(z, self.dim)
        y = as_point(y, self.dim)
        outer = self.h0.subdiff_polytope(self.inner_values(z))
        inner = [h.subdiff_polytope(z) for h in self.inners]
        if outer is None or any(p is None for p in inner):
            return float(np.linalg.norm(y - self.subgradient(z))), False
        if outer.is_box and np.all(outer.lo == outer.hi):
            lam = outer.lo
            if np.count_nonzero(lam) == 0:
                return float(np.linalg.norm(y)), True
            if np.count_nonzero(lam) == 1:
                i = int(np.flatnonzero(lam)[0])
                p = inner[i]
                scaled = Polytope(lam[i] * p.lo, lam[i] * p.hi,
                                  p.A_eq, None if p.b_eq is None else lam[i] * p.b_eq,
                                  p.A_ub, None if p.b_ub is None else lam[i] * p.b_ub)
                return polytope_distance(y, scaled), True
        return homogenized_distance(y, outer, inner), True

    def lipschitz_bound(self) -> float:
        if self._lipschitz is not None:
            return float(self._lipschitz)
        Ls = np.array([h.lipschitz_bound() for h in self.inners])
        return float(self.h0.lipschitz_bound() * np.linalg.norm(Ls))

    def to_dict(self):
        return {"variant": self.variant, "h0": self.h0.to_dict(),
                "inners": [h.to_dict() for h in self.inners]}


def scaled_hinge_of(inner: OuterFunction, rho: float) -> Composed:
    """rho * max{0, inner(z)}."""
    return Composed(Hinge(rho, 1), [inner])


class GenericOracle(OuterFunction):
    """User-supplied value and subgradient; subdifferential distance is a bound."""

    variant = "generic-oracle"

    def __init__(self, m: int, value: Callable, subgradient: Callable,
                 lipschitz: Optional[float] = None, monotone: bool = False):
        self.dim = int(m)
        self._value = value
        self._subgradient = subgradient
        self._lipschitz = lipschitz
        self.monotone = monotone

    def value(self, z) -> float:
        return float(self._value(as_point(z, self.dim)))

    def subgradient(self, z) -> np.ndarray:
        return np.atleast_1d(np.asarray(self._subgradient(as_point(z, self.dim)), dtype=float))

    def lipschitz_bound(self) -> float:
        if self._lipschitz is None:
            raise ConfigurationError("generic-oracle outer function needs a user-supplied Lipschitz bound")
        return float(self._lipschitz)


class NonpositiveIndicator(OuterFunction):
    """Indicator of the nonpositive orthant (extended-valued).

    Only used to evaluate residuals against an actual constrained problem;
    inner solvers never receive it.
    """

    variant = "nonpositive-indicator"
    monotone = True

    def __init__(self, m: int = 1):
        self.dim = int(m)

    def value(self, z) -> float:
        return 0.0 if np.all(as_point(z, self.dim) <= 0) else float("inf")

    def subgradient(self, z) -> np.ndarray:
        return np.zeros(self.dim)

    def subdiff_distance(self, z, y) -> tuple[float, bool]:
        z = as_point(z, self.dim)
        y = as_point(y, self.dim)
        if np.any(z > 0):
            return float("inf"), True
        # normal cone: y_i >= 0 where z_i = 0, y_i = 0 where z_i < 0
        target = np.where(z == 0, np.maximum(y, 0.0), 0.0)
        return float(np.linalg.norm(y - target)), True

    def project_domain(self, z) -> np.ndarray:
        return np.minimum(np.asarray(z, dtype=float), 0.0)

    def lipschitz_bound(self) -> float:
        raise ConfigurationError("an indicator function is not Lipschitz")


__all__ = [
    "Polytope", "polytope_distance", "homogenized_distance", "OuterFunction", "AbsValue",
    "SeparablePwl", "Hinge", "identity_outer", "MaxCoordinates", "SupportCappedSimplex",
    "Composed", "scaled_hinge_of", "GenericOracle", "NonpositiveIndicator",
]
