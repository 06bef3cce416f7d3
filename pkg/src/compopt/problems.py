"""Shipped desk-scale instances and brute-force reference oracles.

Numeric data of the buffered and distance instances is synthetic: it is
drawn once from fixed seeds so that every build sees identical values.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .approx import (ApproximationFamily, lse_smoothness_bound, make_distance_penalty,
                     make_hinge_penalty, make_lse)
from .composite import CompositeProblem, DistanceStructure
from .errors import ConfigurationError, InvalidInputError, RegistryError
from .oracles import (AffineMapping, Box, CallableMapping, ConcaveDistancePart, ConvexFunction,
                      DcComponent, FiniteSet, MaxAffine, Quadratic, SmoothConvex, WholeSpace,
                      fd_gradient_error, fd_jacobian_error, half_lipschitz_violation,
                      sample_in_set)
from .outer import (AbsValue, Composed, Hinge, NonpositiveIndicator, SeparablePwl,
                    SupportCappedSimplex, identity_outer)


# ---------------------------------------------------------------------------
# instance-specific oracles

def _scalar_mapping(f, df, L: float) -> CallableMapping:
    return CallableMapping(1, 1, lambda x: np.array([f(x[0])]), lambda x: np.array([[df(x[0])]]),
                           component_L=[L], lipschitz_exact=True)


class LogGap(ConvexFunction):
    """tau|x_i| - lam*log(1 + |x_i|/eps), convex when tau >= lam/eps."""

    def __init__(self, n: int, i: int, lam: float, eps: float, tau: float):
        if tau < lam / eps:
            raise InvalidInputError("tau must be at least lam/eps for convexity")
        self.dim, self.i, self.lam, self.eps, self.tau = n, i, lam, eps, tau

    def value(self, x) -> float:
        a = abs(float(x[self.i]))
        return self.tau * a - self.lam * np.log1p(a / self.eps)

    def subgradient(self, x) -> np.ndarray:
        g = np.zeros(self.dim)
        xi = float(x[self.i])
        if xi != 0.0:
            g[self.i] = np.sign(xi) * (self.tau - self.lam / (self.eps + abs(xi)))
        return g


def _zero_convex(n: int) -> MaxAffine:
    return MaxAffine(np.zeros((1, n)), [0.0])


def _square_norm(n: int, shift: float = 0.0) -> Quadratic:
    """||x||^2 + shift."""
    return Quadratic(2.0 * np.eye(n), None, shift)


# ---------------------------------------------------------------------------
# builders

def _abs1d(p):
    return CompositeProblem("abs1d", WholeSpace(1), Quadratic.zero(1), AbsValue(1),
                            F=AffineMapping([[1.0]]), L_h=1.0, L_F=0.0, lipschitz_exact=True,
                            params=p)


def _quartic(p):
    F = _scalar_mapping(lambda x: x * x - 1.0, lambda x: 2.0 * x, 4.0)
    return CompositeProblem("quartic", Box([-2.0], [2.0]), Quadratic.zero(1), AbsValue(1), F=F,
                            L_h=1.0, L_F=4.0, lipschitz_exact=True, params=p)


def _sincounter(p):
    F = _scalar_mapping(np.sin, np.cos, 2.0)
    return CompositeProblem("sincounter", WholeSpace(1), Quadratic.zero(1),
                            make_hinge_penalty(p["theta"]), F=F, L_F=2.0, lipschitz_exact=True,
                            params=p)


def _sincounter_actual(p):
    F = _scalar_mapping(np.sin, np.cos, 2.0)
    return CompositeProblem("sincounter-actual", WholeSpace(1), Quadratic.zero(1),
                            NonpositiveIndicator(1), F=F, L_F=2.0, params=p)


def _hingepen(p, actual=False):
    F = _scalar_mapping(lambda x: x * x - 1.0, lambda x: 2.0 * x, 4.0)
    comps = [DcComponent(SmoothConvex(Quadratic([[2.0]], None, -1.0)), _zero_convex(1))]
    h = NonpositiveIndicator(1) if actual else make_hinge_penalty(p["theta"])
    return CompositeProblem("hingepen-actual" if actual else "hingepen", Box([-3.0], [3.0]),
                            Quadratic([[2.0]], [-4.0], 4.0), h, F=F, components=comps, L_F=4.0,
                            lipschitz_exact=True, params=p)


BUFFERED_CUT_SETS = ((0, 1), (1, 2))
BUFFERED_P = (0.1, 0.15, 0.2, 0.25, 0.3)
BUFFERED_ALPHA = 0.8
BUFFERED_BOX = 2.0


def buffered_data(seed: int = 7):
    """Synthetic psi_ik(x) = sigma_ik/2 ||x||^2 + a_ik'x - c_ik for s=5, r=3, n=2."""
    rng = np.random.default_rng(seed)
    s, r, n = len(BUFFERED_P), 3, 2
    sigma = rng.uniform(0.1, 0.5, size=(s, r))
    a = rng.standard_normal((s, r, n))
    c = rng.uniform(0.5, 1.5, size=(s, r))
    return sigma, a, c


def _buffered_psis(seed: int):
    sigma, a, c = buffered_data(seed)
    s, r, n = a.shape
    psis = [[Quadratic(sigma[i, k] * np.eye(n), a[i, k], -c[i, k]) for k in range(r)]
            for i in range(s)]
    M = float(sigma.max())
    G = float(np.max(sigma * BUFFERED_BOX * np.sqrt(n) + np.linalg.norm(a, axis=2)))
    return psis, M, G


def _buffered(p):
    psis, M, G = _buffered_psis(int(p["seed"]))
    n = 2
    L = [lse_smoothness_bound(M, G, len(K), p["eta"]) for _ in psis for K in BUFFERED_CUT_SETS]
    F = make_lse(psis, BUFFERED_CUT_SETS, p["eta"], n, component_L=L)
    inner = SupportCappedSimplex(BUFFERED_P, BUFFERED_ALPHA, len(BUFFERED_CUT_SETS))
    h = Composed(Hinge(p["rho"], 1), [inner])
    f0 = Quadratic.scaled_distance(1.0, [1.5, 1.5])
    return CompositeProblem("buffered", Box([-BUFFERED_BOX] * n, [BUFFERED_BOX] * n), f0, h, F=F,
                            lipschitz_exact=False, params=p)


def _distance_dc(name, X, f0, sets, rho, params, extra=(), extra_h=None):
    n = X.dim
    comps = [DcComponent(_square_norm(n), ConcaveDistancePart(K)) for K in sets] + list(extra)
    if extra_h is None:
        h = _half_sum(rho)
        dist = DistanceStructure(sets, rho)
    else:
        h = extra_h
        dist = None
    return CompositeProblem(name, X, f0, h, components=comps, distance=dist, params=params)


def _half_sum(rho):
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    return SeparablePwl(rho / 2, np.zeros(rho.size))


def _distpen1d(p):
    K = FiniteSet([[-1.0], [1.0]])
    f0 = Quadratic([[2.0 * p["c0"]]])
    return _distance_dc("distpen1d", WholeSpace(1), f0, [K], [p["rho"]], p)


DISTPEN2D_SETS = (
    ((1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)),
    ((0.0, 2.0), (2.0, 0.0), (-1.5, -1.5)),
)


def _distpen2d(p):
    sets = [FiniteSet(np.array(S)) for S in DISTPEN2D_SETS]
    f0 = Quadratic.scaled_distance(0.1, [0.3, -0.2])
    return _distance_dc("distpen2d", Box([-3.0, -3.0], [3.0, 3.0]), f0, sets,
                        [p["rho"], 2.0 * p["rho"]], p)


DISTPEN_SET = ((1.5, 1.5), (-1.5, 1.0), (0.5, -2.0))
DISTPEN_RADIUS = 1.0


def _distpen(p, actual=False):
    n = 2
    K = FiniteSet(np.array(DISTPEN_SET))
    hard = DcComponent(SmoothConvex(_square_norm(n, -DISTPEN_RADIUS ** 2)), _zero_convex(n))
    f0 = Quadratic.scaled_distance(0.1, [0.3, -0.2])
    h = make_distance_penalty([p["rho"]], [p["theta"]])
    return _distance_dc("distpen", Box([-3.0] * n, [3.0] * n), f0, [K], [p["rho"]], p,
                        extra=[hard], extra_h=h)


SPARSE_A = ((1.0, 0.5, 0.0), (0.0, 1.0, -0.5), (0.5, 0.0, 1.0), (1.0, 1.0, 1.0))
SPARSE_B = (1.0, 0.2, -0.1, 1.1)


def _sparse(p):
    A = np.array(SPARSE_A)
    b = np.array(SPARSE_B)
    n = A.shape[1]
    lam, eps = p["lam"], p["eps"]
    tau = lam / eps
    comps = [DcComponent(MaxAffine.scaled_abs(n, i, tau), LogGap(n, i, lam, eps, tau))
             for i in range(n)]
    f0 = Quadratic(A.T @ A, -A.T @ b, 0.5 * b @ b)
    return CompositeProblem("sparse-concave", Box([-5.0] * n, [5.0] * n), f0, identity_outer(n),
                            components=comps, params=p)


# ---------------------------------------------------------------------------
# registry

@dataclass(frozen=True)
class InstanceDescriptor:
    name: str
    description: str
    builder: Callable[[dict], CompositeProblem]
    defaults: dict
    x0: tuple
    algorithms: tuple
    dims: dict
    reference: Optional[tuple] = None
    reference_tol: float = 1e-3
    family: Optional[Callable[[dict], ApproximationFamily]] = None
    synthetic: bool = False

    def params(self, overrides: Optional[dict] = None) -> dict:
        out = dict(self.defaults)
        for key, value in (overrides or {}).items():
            if key not in out:
                raise ConfigurationError(f"{key}: unknown parameter for instance {self.name}")
            out[key] = type(out[key])(value)
        return out

    def to_dict(self) -> dict:
        return {"name": self.name, "description": self.description, "defaults": dict(self.defaults),
                "x0": list(self.x0), "algorithms": list(self.algorithms), "dims": dict(self.dims),
                "reference": None if self.reference is None else list(self.reference),
                "synthetic": self.synthetic, "family": self.family is not None}


def _sine_family(p):
    return ApproximationFamily("hinge-penalty", _sincounter, dict(p), _sincounter_actual(p))


def _hingepen_family(p):
    return ApproximationFamily("hinge-penalty", _hingepen, dict(p), _hingepen(p, actual=True))


def _buffered_family(p):
    return ApproximationFamily("lse-smoothing", _buffered, dict(p))


def _distpen_family(p):
    return ApproximationFamily("distance-penalty", _distpen, dict(p))


REGISTRY = {d.name: d for d in [
    InstanceDescriptor("abs1d", "h = |.|, F(x) = x on the real line", _abs1d, {}, (0.7,),
                       ("bundle",), {"n": 1, "m": 1}, reference=(0.0,)),
    InstanceDescriptor("quartic", "h = |.|, F(x) = x^2 - 1 on [-2, 2]", _quartic, {}, (2.0,),
                       ("bundle",), {"n": 1, "m": 1}, reference=(-1.0, 0.0, 1.0)),
    InstanceDescriptor("sincounter", "theta * max{0, sin x}, a hinge penalty of sin x <= 0",
                       _sincounter, {"theta": 1.0}, (np.pi / 2,), ("bundle",), {"n": 1, "m": 1},
                       family=_sine_family),
    InstanceDescriptor("hingepen", "(x-2)^2 + theta * max{0, x^2 - 1}, penalty of a convex "
                       "constrained problem", _hingepen, {"theta": 0.1}, (0.0,), ("bundle", "dc"),
                       {"n": 1, "m": 1}, reference=(2.0 / 1.1,), family=_hingepen_family),
    InstanceDescriptor("buffered", "LSE-smoothed buffered failure probability penalty "
                       "(synthetic data)", _buffered, {"eta": 0.1, "rho": 1.0, "seed": 7},
                       (0.0, 0.0), ("bundle",),
                       {"n": 2, "m": 10, "s": 5, "q": 2, "r": 3}, family=_buffered_family,
                       synthetic=True),
    InstanceDescriptor("distpen1d", "c0 x^2 + (rho/2) dist^2(x, {-1, 1})", _distpen1d,
                       {"rho": 1.0, "c0": 0.0}, (0.2,), ("dc", "proximal-distance"),
                       {"n": 1, "m": 1}, reference=(-1.0, 0.0, 1.0)),
    InstanceDescriptor("distpen2d", "two finite-set distance penalties in the plane "
                       "(synthetic data)", _distpen2d, {"rho": 1.0}, (0.2, 0.1),
                       ("dc", "proximal-distance"), {"n": 2, "m": 2}, synthetic=True),
    InstanceDescriptor("distpen", "distance penalty with a hinge-penalized ball constraint "
                       "(synthetic data)", _distpen, {"rho": 1.0, "theta": 0.5}, (0.0, 0.0),
                       ("dc",), {"n": 2, "m": 2, "q": 1}, family=_distpen_family, synthetic=True),
    InstanceDescriptor("sparse-concave", "least squares plus a concave log penalty of |x_i|",
                       _sparse, {"lam": 0.1, "eps": 0.5}, (1.0, 1.0, 1.0), ("dc",),
                       {"n": 3, "m": 3}),
]}


def list_instances() -> list:
    return [REGISTRY[k].to_dict() for k in sorted(REGISTRY)]


def descriptor(name: str) -> InstanceDescriptor:
    try:
        return REGISTRY[name]
    except KeyError:
        raise RegistryError(f"unknown instance {name!r}; known: {sorted(REGISTRY)}") from None


def build_instance(name: str, params: Optional[dict] = None) -> CompositeProblem:
    d = descriptor(name)
    return d.builder(d.params(params))


def build_family(name: str, params: Optional[dict] = None) -> ApproximationFamily:
    d = descriptor(name)
    if d.family is None:
        raise RegistryError(f"instance {name!r} has no approximation family")
    return d.family(d.params(params))


def identity_family(problem: CompositeProblem) -> ApproximationFamily:
    """No approximation: every level returns the same problem."""
    return ApproximationFamily("identity", lambda _p: problem, {}, problem)


# ---------------------------------------------------------------------------
# brute-force oracles (independent of the residual engine)

_FD = 1e-7


def _one_sided(f, u: float, delta: float = _FD) -> tuple[float, float]:
    """Left and right derivatives of a scalar function by one-sided differences."""
    f0 = f(u)
    return (f0 - f(u - delta)) / delta, (f(u + delta) - f0) / delta


def _interval_dist(lo: float, hi: float) -> float:
    """Distance from 0 to [lo, hi]."""
    if lo > 0:
        return lo
    if hi < 0:
        return -hi
    return 0.0


def _normal_interval(X, x: float) -> tuple[float, float]:
    if isinstance(X, WholeSpace):
        return 0.0, 0.0
    if isinstance(X, Box):
        lo, hi = float(X.lower[0]), float(X.upper[0])
        at_lo, at_hi = x <= lo, x >= hi
        return (-np.inf if at_lo else 0.0), (np.inf if at_hi else 0.0)
    raise InvalidInputError("brute-force oracle supports intervals only")


def _d_interval(problem: CompositeProblem, x: float, mode: str) -> tuple[float, float]:
    """D(x) for a scalar mapping as an interval, from difference quotients."""
    if mode == "smooth":
        F = lambda u: float(problem.F.value(np.array([u]))[0])
        g = (F(x + 1e-6) - F(x - 1e-6)) / 2e-6
        return g, g
    comp = problem.components[0]
    l1, r1 = _one_sided(lambda u: comp.f1.value(np.array([u])), x)
    l2, r2 = _one_sided(lambda u: comp.f2.value(np.array([u])), x)
    return l1 - r2, r1 - l2


def brute_force_distance(problem: CompositeProblem, x: float, y: float, z: float,
                         mode: str = "smooth") -> float:
    """dist(0, S(x, y, z)) for n = m = 1 by interval arithmetic."""
    if problem.n != 1 or problem.m != 1:
        raise InvalidInputError("brute-force distance needs n = m = 1")
    Fx = float(problem.inner(np.array([x]))[0])
    primal = abs(Fx - z)
    hl, hr = _one_sided(lambda u: problem.h.value(np.array([u])), z)
    dual = _interval_dist(hl - y, hr - y)
    g0 = (problem.f0.value(np.array([x + 1e-6])) - problem.f0.value(np.array([x - 1e-6]))) / 2e-6
    dl, dr = _d_interval(problem, x, mode)
    yl, yr = sorted((y * dl, y * dr))
    nl, nr = _normal_interval(problem.X, x)
    stat = _interval_dist(g0 + yl + nl, g0 + yr + nr)
    return float(np.sqrt(primal ** 2 + dual ** 2 + stat ** 2))


def _min_over_yz(problem, x: float, mode: str, z_step: float, z_count: int, y_count: int,
                 zoom: int) -> float:
    Fx = float(problem.inner(np.array([x]))[0])
    center = z_step * np.round(Fx / z_step)
    zs = center + z_step * np.arange(-z_count, z_count + 1)
    best = np.inf
    for z in np.append(zs, Fx):
        hl, hr = _one_sided(lambda u: problem.h.value(np.array([u])), z)
        lo, hi = min(hl, hr), max(hl, hr)
        for _ in range(zoom + 1):
            ys = np.linspace(lo, hi, y_count) if hi > lo else np.array([lo])
            vals = [brute_force_distance(problem, x, y, z, mode) for y in ys]
            j = int(np.argmin(vals))
            best = min(best, vals[j])
            if hi <= lo:
                break
            width = (hi - lo) / (y_count - 1)
            lo, hi = ys[j] - width, ys[j] + width
    return best


def grid_oracle(problem: CompositeProblem, lo: float, hi: float, step: float = 1e-3,
                mode: str = "smooth", tol: Optional[float] = None, z_step: float = 1e-3,
                z_count: int = 3, y_count: int = 9, zoom: int = 3):
    """Reference stationary set of a 1-D instance by grid search.

    Each grid point x gets the smallest brute-force residual over a z grid
    near F(x) and a refined y grid over the subdifferential; points below
    `tol` form runs, and each run contributes its minimizer.
    Returns (stationary points, grid, per-point minimal residuals).
    """
    if problem.n != 1:
        raise InvalidInputError("grid oracle supports one-dimensional instances only")
    xs = np.round(np.arange(lo, hi + 0.5 * step, step) / step) * step
    res = np.array([_min_over_yz(problem, float(x), mode, z_step, z_count, y_count, zoom)
                    for x in xs])
    if tol is None:
        tol = 5.0 * step
    below = res <= tol
    points = []
    j = 0
    while j < len(xs):
        if below[j]:
            k = j
            while k + 1 < len(xs) and below[k + 1]:
                k += 1
            seg = slice(j, k + 1)
            points.append(float(xs[seg][np.argmin(res[seg])]))
            j = k + 1
        else:
            j += 1
    return points, xs, res


def capped_simplex_vertices(p, alpha: float) -> np.ndarray:
    """All vertices of P_alpha: each has at most one coordinate strictly between its bounds."""
    p = np.asarray(p, dtype=float)
    caps = p / (1.0 - alpha)
    s = p.size
    verts = []
    for capped in itertools.product([False, True], repeat=s):
        capped = np.array(capped)
        base = np.where(capped, caps, 0.0)
        rest = 1.0 - base.sum()
        if abs(rest) <= 1e-12:
            verts.append(base)
            continue
        for j in np.flatnonzero(~capped):
            if 0 <= rest <= caps[j] + 1e-12:
                v = base.copy()
                v[j] = rest
                verts.append(v)
    return np.unique(np.round(np.array(verts), 14), axis=0)


def capped_support_by_vertices(p, alpha: float, w) -> float:
    return float(np.max(capped_simplex_vertices(p, alpha) @ np.asarray(w, dtype=float)))


# ---------------------------------------------------------------------------
# sampled assumption checks

@dataclass
class VerificationReport:
    name: str
    checks: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.checks.values())


def verify_instance(problem: CompositeProblem, rng: Optional[np.random.Generator] = None,
                    samples: int = 50) -> VerificationReport:
    """Sampled checks of convexity, Lipschitz bounds, monotonicity and derivatives."""
    rng = rng or np.random.default_rng(0)
    rep = VerificationReport(problem.name)
    xs = sample_in_set(problem.X, rng, samples)
    lam = rng.random(samples)
    mid = [problem.f0.value(l * a + (1 - l) * b) <= l * problem.f0.value(a)
           + (1 - l) * problem.f0.value(b) + 1e-10 for l, a, b in zip(lam, xs, xs[::-1])]
    rep.checks["f0_convex"] = all(mid)
    rep.checks["f0_gradient"] = max(fd_gradient_error(problem.f0.value, problem.f0.gradient, x)
                                    for x in xs) <= 1e-5
    m = problem.m
    Z = 3.0 * rng.standard_normal((samples, m))
    finite = not isinstance(problem.h, NonpositiveIndicator)
    if finite and problem.L_h is not None:
        ratios = [abs(problem.h.value(a) - problem.h.value(b)) / max(np.linalg.norm(a - b), 1e-300)
                  for a, b in zip(Z, Z[::-1])]
        rep.checks["h_lipschitz"] = bool(max(ratios) <= problem.L_h * (1 + 1e-9))
    if problem.h.monotone and finite:
        bumps = np.abs(rng.standard_normal((samples, m)))
        rep.checks["h_monotone"] = all(problem.h.value(z + d) >= problem.h.value(z) - 1e-12
                                       for z, d in zip(Z, bumps))
    if problem.F is not None:
        rep.checks["F_jacobian"] = max(fd_jacobian_error(problem.F, x) for x in xs) <= 1e-5
        if getattr(problem.F, "component_L", None) is not None:
            pairs = list(zip(xs, xs[::-1]))
            rep.checks["F_smoothness"] = half_lipschitz_violation(problem.F, pairs) <= 1e-9
    if problem.components is not None:
        ok = True
        for comp in problem.components:
            for f in (comp.f1, comp.f2):
                for a, b, l in zip(xs, xs[::-1], lam):
                    if f.value(l * a + (1 - l) * b) > l * f.value(a) + (1 - l) * f.value(b) + 1e-10:
                        ok = False
        rep.checks["dc_parts_convex"] = ok
    return rep


__all__ = [
    "LogGap", "InstanceDescriptor", "REGISTRY", "list_instances", "descriptor", "build_instance",
    "build_family", "identity_family", "buffered_data", "brute_force_distance", "grid_oracle",
    "capped_simplex_vertices", "capped_support_by_vertices", "VerificationReport",
    "verify_instance",
]
