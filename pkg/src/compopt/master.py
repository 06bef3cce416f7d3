"""Master subproblems of the bundle, DC and proximal distance methods.

All variants are posed in the shifted variable d = x - center and handed
to the dense convex-program engine; multipliers of the epigraph rows give
the cut weights alpha, the outer multipliers lambda and the DC dual y.
Every solution is re-checked against the variant's own optimality system,
computed from oracles rather than from the engine's internal residuals.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigurationError, InfeasiblePointError, MasterFailure
from .models import CuttingPlaneModel, StructuredModel
from .oracles import (Ball, Box, DcComponent, FeasibleSet, FiniteSet, MaxAffine, Polyhedron,
                      Quadratic, SmoothConvex, SmoothFunction, WholeSpace)
from .outer import OuterFunction
from .program import ConvexProgram

VARIANTS = ("bundle-cp", "bundle-structured", "dc", "distance")

DEFAULT_TOL = 1e-10
# solutions whose re-verified residual exceeds this are treated as failures
FAILURE_KKT = 1e-6


@dataclass
class MasterSpec:
    variant: str
    f0: SmoothFunction
    X: FeasibleSet
    center: np.ndarray
    t: float
    F_center: Optional[np.ndarray] = None
    J_center: Optional[np.ndarray] = None
    model: Optional[object] = None
    h: Optional[OuterFunction] = None
    components: Optional[Sequence[DcComponent]] = None
    f2_center: Optional[np.ndarray] = None
    s2: Optional[np.ndarray] = None
    p_hat: Optional[np.ndarray] = None
    mu: Optional[float] = None
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown master variant {self.variant!r}")
        if not self.t > 0:
            raise ConfigurationError("prox parameter must be positive")
        self.center = np.asarray(self.center, dtype=float)

    def to_dict(self) -> dict:
        """JSON-ready description (schema in README, section "Master dumps")."""
        d = {"variant": self.variant, "center": self.center.tolist(), "t": self.t,
             "X": self.X.to_dict(), "tol": self.tol}
        if isinstance(self.f0, Quadratic):
            d["f0"] = self.f0.to_dict()
        if self.F_center is not None:
            d["F_center"] = np.asarray(self.F_center).tolist()
            d["J_center"] = np.asarray(self.J_center).tolist()
        if self.model is not None:
            d["model"] = self.model.to_dict()
        if self.p_hat is not None:
            d["p_hat"] = np.asarray(self.p_hat).tolist()
            d["mu"] = self.mu
        if self.s2 is not None:
            d["f2_center"] = np.asarray(self.f2_center).tolist()
            d["s2"] = np.asarray(self.s2).tolist()
        return d


@dataclass
class MasterSolution:
    x_next: np.ndarray
    z_next: Optional[np.ndarray]
    y_next: Optional[np.ndarray]
    objective: float
    kkt_residual: float
    alpha: Optional[np.ndarray] = None
    lam: Optional[np.ndarray] = None
    sfrak: Optional[list] = None
    mu_inner: Optional[list] = None
    g1: Optional[np.ndarray] = None
    iterations: int = 0
    polished: bool = True
    extras: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# shared building blocks

def _add_set(prog: ConvexProgram, X: FeasibleSet, center, n: int) -> None:
    """Constraints x = center + d in X on the first n variables."""
    N = prog.nvar
    if isinstance(X, WholeSpace):
        return
    if isinstance(X, Box):
        for i in range(n):
            a = np.zeros(N)
            a[i] = 1.0
            if np.isfinite(X.upper[i]):
                prog.add_le(a, X.upper[i] - center[i])
            if np.isfinite(X.lower[i]):
                prog.add_le(-a, center[i] - X.lower[i])
        return
    if isinstance(X, Polyhedron):
        for a_i, b_i in zip(X.A, X.b):
            a = np.zeros(N)
            a[:n] = a_i
            prog.add_le(a, b_i - a_i @ center)
        return
    if isinstance(X, Ball):
        shift = center - X.center
        R2 = X.radius ** 2

        def ball(w):
            u = shift + w[:n]
            g = np.zeros(N)
            g[:n] = 2 * u
            H = np.zeros((N, N))
            H[:n, :n] = 2 * np.eye(n)
            return float(u @ u - R2), g, H

        prog.add_nonlinear_le(ball)
        return
    if isinstance(X, FiniteSet):
        raise ConfigurationError("master problems need a convex feasible set")
    raise ConfigurationError(f"unsupported feasible set kind {X.kind!r}")


def _add_f0(prog: ConvexProgram, f0: SmoothFunction, center, n: int) -> None:
    N = prog.nvar
    if isinstance(f0, Quadratic):
        P = np.zeros((N, N))
        P[:n, :n] = f0.Q
        q = np.zeros(N)
        q[:n] = f0.Q @ center + f0.b
        prog.add_quadratic(P, q)
        return

    def term(w):
        x = center + w[:n]
        g = np.zeros(N)
        g[:n] = f0.gradient(x)
        H = np.zeros((N, N))
        H[:n, :n] = f0.hessian(x)
        return f0.value(x), g, H

    prog.add_smooth(term)


def _add_prox(prog: ConvexProgram, coef: float, n: int) -> None:
    """coef/2 * ||d||^2."""
    P = np.zeros((prog.nvar, prog.nvar))
    P[:n, :n] = coef * np.eye(n)
    prog.add_quadratic(P)


def _finish_point(X: FeasibleSet, center, d) -> tuple[np.ndarray, np.ndarray]:
    x = center + d
    if isinstance(X, Box):
        x = np.clip(x, X.lower, X.upper)
    return x, x - center


def _stat_residual(X: FeasibleSet, x, v) -> float:
    try:
        return X.tangent_residual(x, v)
    except InfeasiblePointError:
        return float("inf")


def _run(prog: ConvexProgram, w0, tol: float):
    try:
        return prog.solve(w0=w0, tol=tol)
    except np.linalg.LinAlgError as exc:
        raise MasterFailure(f"linear algebra failure in master solve: {exc}") from exc


def _check(kkt: float, variant: str) -> None:
    if not np.isfinite(kkt) or kkt > FAILURE_KKT:
        raise MasterFailure(f"{variant} master solution failed verification (KKT {kkt:.3e})")


# ---------------------------------------------------------------------------
# bundle, flat model

def solve_bundle_cp(spec: MasterSpec) -> MasterSolution:
    """min f0(x) + max_j cut_j(F(xh) + J(x - xh)) + ||x - xh||^2/(2t) over X."""
    model: CuttingPlaneModel = spec.model
    if model is None or model.size == 0:
        raise ConfigurationError("bundle master needs a nonempty model")
    c = spec.center
    n = c.size
    Fc = np.asarray(spec.F_center, dtype=float)
    J = np.atleast_2d(np.asarray(spec.J_center, dtype=float))
    cuts = model.cuts
    a = np.array([cut(Fc) for cut in cuts])
    G = np.array([J.T @ cut.slope for cut in cuts])

    prog = ConvexProgram(n + 1)
    _add_f0(prog, spec.f0, c, n)
    _add_prox(prog, 1.0 / spec.t, n)
    q = np.zeros(n + 1)
    q[n] = 1.0
    prog.add_quadratic(q=q)
    first = prog.n_linear
    for a_j, g_j in zip(a, G):
        prog.add_le(np.append(g_j, -1.0), -a_j)
    _add_set(prog, spec.X, c, n)
    w0 = np.zeros(n + 1)
    w0[n] = float(np.max(a)) + 1.0
    res = _run(prog, w0, spec.tol)

    alpha = res.lam[first:first + len(cuts)].copy()
    x, d = _finish_point(spec.X, c, res.w[:n])
    z = Fc + J @ d
    y = model.model_subgradient(z, alpha)
    objective = spec.f0.value(x) + model.evaluate(z) + d @ d / (2 * spec.t)
    kkt = verify_bundle_cp(spec, x, alpha)
    _check(kkt, spec.variant)
    return MasterSolution(x, z, y, objective, kkt, alpha=alpha,
                          iterations=res.iterations, polished=res.polished)


def verify_bundle_cp(spec: MasterSpec, x, alpha) -> float:
    """Scaled residual of the flat bundle master optimality system."""
    c = spec.center
    J = np.atleast_2d(np.asarray(spec.J_center, dtype=float))
    d = x - c
    z = np.asarray(spec.F_center, dtype=float) + J @ d
    vals = spec.model.values(z)
    mval = float(np.max(vals))
    alpha = np.asarray(alpha, dtype=float)
    y = spec.model.model_subgradient(z, alpha)
    gf = spec.f0.gradient(x)
    Jy = J.T @ y
    scale = 1.0 + np.linalg.norm(gf) + np.linalg.norm(Jy) + np.linalg.norm(d) / spec.t + abs(mval)
    r_stat = _stat_residual(spec.X, x, gf + Jy + d / spec.t)
    r_simplex = abs(alpha.sum() - 1.0) + float(np.sum(np.maximum(-alpha, 0.0)))
    r_comp = float(np.sum(np.maximum(alpha, 0.0) * (mval - vals)))
    return float(max(r_stat / scale, r_simplex, r_comp / scale))


# ---------------------------------------------------------------------------
# bundle, structured model

def solve_bundle_structured(spec: MasterSpec) -> MasterSolution:
    """Master with model h0(hcheck_1(z), ..., hcheck_d(z)), z linearized."""
    model: StructuredModel = spec.model
    terms = model.h0.epigraph_terms()
    if terms is None:
        raise ConfigurationError("structured master needs a polyhedral h0")
    c = spec.center
    n = c.size
    dd = model.d
    Fc = np.asarray(spec.F_center, dtype=float)
    J = np.atleast_2d(np.asarray(spec.J_center, dtype=float))
    multi = [k for k, (C, _) in enumerate(terms) if C.shape[0] > 1]
    N = n + dd + len(multi)
    prog = ConvexProgram(N)
    _add_f0(prog, spec.f0, c, n)
    _add_prox(prog, 1.0 / spec.t, n)

    a_in = [np.array([cut(Fc) for cut in cuts]) for cuts in model.inner_cuts]
    r0 = np.array([np.max(a) for a in a_in]) + 1.0
    w0 = np.zeros(N)
    w0[n:n + dd] = r0
    q = np.zeros(N)
    u_col = {}
    for k, (C, e) in enumerate(terms):
        if C.shape[0] == 1:
            q[n:n + dd] += C[0]
        else:
            col = n + dd + len(u_col)
            u_col[k] = col
            q[col] = 1.0
            w0[col] = float(np.max(C @ r0 + e)) + 1.0
    prog.add_quadratic(q=q)

    rows = []
    for i, cuts in enumerate(model.inner_cuts):
        idx = []
        for cut, a_ij in zip(cuts, a_in[i]):
            row = np.zeros(N)
            row[:n] = J.T @ cut.slope
            row[n + i] = -1.0
            idx.append(prog.add_le(row, -a_ij))
        rows.append(idx)
    for k, col in u_col.items():
        C, e = terms[k]
        for p in range(C.shape[0]):
            row = np.zeros(N)
            row[n:n + dd] = C[p]
            row[col] = -1.0
            prog.add_le(row, -e[p])
    _add_set(prog, spec.X, c, n)
    res = _run(prog, w0, spec.tol)

    x, d = _finish_point(spec.X, c, res.w[:n])
    z = Fc + J @ d
    mu = [res.lam[idx].copy() for idx in rows]
    lam = np.array([m.sum() for m in mu])
    sfrak = []
    for i, cuts in enumerate(model.inner_cuts):
        if lam[i] > 1e-14 * (1.0 + lam.sum()):
            sfrak.append(np.sum([m_ij * cut.slope for m_ij, cut in zip(mu[i], cuts)], axis=0) / lam[i])
        else:
            sfrak.append(model.inner_subgradient(i, z))
    y = model.model_subgradient(z, lam, sfrak)
    objective = spec.f0.value(x) + model.evaluate(z) + d @ d / (2 * spec.t)
    kkt = verify_bundle_structured(spec, x, lam, mu, sfrak)
    _check(kkt, spec.variant)
    return MasterSolution(x, z, y, objective, kkt, lam=lam, sfrak=sfrak, mu_inner=mu,
                          iterations=res.iterations, polished=res.polished)


def verify_bundle_structured(spec: MasterSpec, x, lam, mu, sfrak) -> float:
    model: StructuredModel = spec.model
    c = spec.center
    J = np.atleast_2d(np.asarray(spec.J_center, dtype=float))
    d = x - c
    z = np.asarray(spec.F_center, dtype=float) + J @ d
    r = model.inner_values(z)
    y = model.model_subgradient(z, lam, sfrak)
    gf = spec.f0.gradient(x)
    Jy = J.T @ y
    scale = 1.0 + np.linalg.norm(gf) + np.linalg.norm(Jy) + np.linalg.norm(d) / spec.t + np.abs(r).sum()
    snap_tol = 1e-9 * (1.0 + np.linalg.norm(r))
    r_outer = min(model.h0.subdiff_distance(r, lam)[0],
                  model.h0.subdiff_distance(model.h0.snap(r, snap_tol), lam)[0])
    r_comp = 0.0
    r_sign = 0.0
    for i, cuts in enumerate(model.inner_cuts):
        vals = np.array([cut(z) for cut in cuts])
        r_comp += float(np.sum(np.maximum(mu[i], 0.0) * (r[i] - vals)))
        r_sign += float(np.sum(np.maximum(-mu[i], 0.0)))
    r_stat = _stat_residual(spec.X, x, gf + Jy + d / spec.t)
    return float(max(r_stat / scale, r_outer / scale, r_comp / scale, r_sign / scale))


# ---------------------------------------------------------------------------
# DC master

def _smooth_part(f1) -> SmoothFunction:
    if isinstance(f1, SmoothConvex):
        return f1.f
    if isinstance(f1, SmoothFunction):
        return f1
    raise ConfigurationError("DC convex parts f1 must be smooth or max-affine")


def _dc_linearized(spec: MasterSpec, x) -> np.ndarray:
    d = x - spec.center
    return np.array([comp.f1.value(x) - f2c - s2 @ d
                     for comp, f2c, s2 in zip(spec.components, spec.f2_center, spec.s2)])


def solve_dc(spec: MasterSpec) -> MasterSolution:
    """min f0(x) + h(Fbar(x)) + ||x - x_k||^2/(2t) over X, Fbar_i = f1_i - affine."""
    h = spec.h
    if not h.monotone:
        raise ConfigurationError("the DC master needs a nondecreasing outer function")
    terms = h.epigraph_terms()
    if terms is None:
        raise ConfigurationError(f"outer function {h.variant} has no polyhedral form for the DC master")
    comps = list(spec.components)
    m = len(comps)
    c = spec.center
    n = c.size
    f2c = np.asarray(spec.f2_center, dtype=float)
    S2 = np.atleast_2d(np.asarray(spec.s2, dtype=float))
    pwl = [i for i, comp in enumerate(comps) if isinstance(comp.f1, MaxAffine)]
    v_col = {i: n + k for k, i in enumerate(pwl)}
    multi = [k for k, (C, _) in enumerate(terms) if C.shape[0] > 1]
    u_col = {k: n + len(pwl) + j for j, k in enumerate(multi)}
    N = n + len(pwl) + len(multi)

    def fbar(i, w):
        """Value, gradient and Hessian of Fbar_i in w."""
        comp = comps[i]
        g = np.zeros(N)
        H = np.zeros((N, N))
        g[:n] = -S2[i]
        if i in v_col:
            g[v_col[i]] = 1.0
            return w[v_col[i]] - f2c[i] - S2[i] @ w[:n], g, H
        x = c + w[:n]
        f1 = _smooth_part(comp.f1)
        g[:n] += f1.gradient(x)
        H[:n, :n] = f1.hessian(x)
        return f1.value(x) - f2c[i] - S2[i] @ w[:n], g, H

    def combo(coefs, const):
        nz = [i for i in range(m) if coefs[i] != 0.0]
        linear = all(i in v_col for i in nz)

        def term(w):
            val, g, H = const, np.zeros(N), np.zeros((N, N))
            for i in nz:
                vi, gi, Hi = fbar(i, w)
                val += coefs[i] * vi
                g += coefs[i] * gi
                H += coefs[i] * Hi
            return val, g, H

        return term, linear

    prog = ConvexProgram(N)
    _add_f0(prog, spec.f0, c, n)
    _add_prox(prog, 1.0 / spec.t, n)
    w0 = np.zeros(N)
    for i in pwl:
        w0[v_col[i]] = comps[i].f1.value(c) + 1.0
    q = np.zeros(N)
    piece_rows = {}
    for k, (C, e) in enumerate(terms):
        if C.shape[0] == 1:
            term, linear = combo(C[0], float(e[0]))
            if linear:
                _, g, _ = term(np.zeros(N))
                q += g
            else:
                prog.add_smooth(term)
            continue
        col = u_col[k]
        q[col] = 1.0
        idx = []
        vals0 = []
        for p in range(C.shape[0]):
            term, linear = combo(C[p], float(e[p]))
            v0, g0, _ = term(w0)
            vals0.append(v0)
            if linear:
                _, g, _ = term(np.zeros(N))
                row = g.copy()
                row[col] -= 1.0
                idx.append(("lin", prog.add_le(row, -term(np.zeros(N))[0])))
            else:
                def nl(w, term=term, col=col):
                    v, g, H = term(w)
                    g = g.copy()
                    g[col] -= 1.0
                    return v - w[col], g, H
                idx.append(("nl", prog.add_nonlinear_le(nl)))
        w0[col] = max(vals0) + 1.0
        piece_rows[k] = idx
    prog.add_quadratic(q=q)
    aff_rows = {}
    for i in pwl:
        A, b = comps[i].f1.A, comps[i].f1.b
        idx = []
        for a_p, b_p in zip(A, b):
            row = np.zeros(N)
            row[:n] = a_p
            row[v_col[i]] = -1.0
            idx.append(prog.add_le(row, -(a_p @ c + b_p)))
        aff_rows[i] = idx
    _add_set(prog, spec.X, c, n)
    res = _run(prog, w0, spec.tol)

    n_lin = prog.n_linear

    def mult(kind_idx):
        kind, j = kind_idx
        return res.lam[j] if kind == "lin" else res.lam[n_lin + j]

    y = np.zeros(m)
    for k, (C, e) in enumerate(terms):
        if C.shape[0] == 1:
            y += C[0]
        else:
            for p, ki in enumerate(piece_rows[k]):
                y += mult(ki) * C[p]
    x, d = _finish_point(spec.X, c, res.w[:n])
    g1 = np.zeros((m, n))
    for i, comp in enumerate(comps):
        if i in aff_rows:
            om = res.lam[aff_rows[i]]
            if om.sum() > 1e-14 * (1.0 + abs(y[i])):
                g1[i] = om @ comp.f1.A / om.sum()
            else:
                g1[i] = comp.f1.subgradient(x)
        else:
            g1[i] = _smooth_part(comp.f1).gradient(x)
    z = _dc_linearized(spec, x)
    objective = spec.f0.value(x) + h.value(z) + d @ d / (2 * spec.t)
    kkt = verify_dc(spec, x, y, g1)
    _check(kkt, spec.variant)
    return MasterSolution(x, z, y, objective, kkt, g1=g1, iterations=res.iterations,
                          polished=res.polished)


def verify_dc(spec: MasterSpec, x, y, g1) -> float:
    """Residual of the DC master optimality system at (x, y) with witnesses g1."""
    d = x - spec.center
    z = _dc_linearized(spec, x)
    # rounding can leave z a hair off a kink that the solver sits on
    snap_tol = 1e-9 * (1.0 + np.linalg.norm(z))
    r_dual = min(spec.h.subdiff_distance(z, y)[0],
                 spec.h.subdiff_distance(spec.h.snap(z, snap_tol), y)[0])
    S2 = np.atleast_2d(np.asarray(spec.s2, dtype=float))
    gf = spec.f0.gradient(x)
    dirs = np.asarray(g1) - S2
    v = gf + dirs.T @ y + d / spec.t
    scale = 1.0 + np.linalg.norm(gf) + np.linalg.norm(dirs.T @ y) + np.linalg.norm(d) / spec.t \
        + np.abs(y).sum()
    r_sub = 0.0
    for i, comp in enumerate(spec.components):
        if isinstance(comp.f1, MaxAffine):
            # g1 must lie in the hull of the active pieces
            vals = comp.f1.A @ x + comp.f1.b
            act = vals >= vals.max() - 1e-9 * (1.0 + abs(vals.max()))
            r_sub += _hull_distance(g1[i], comp.f1.A[act]) * abs(y[i])
    r_stat = _stat_residual(spec.X, x, v)
    return float(max(r_stat / scale, r_dual / scale, r_sub / scale))


def _hull_distance(g, V) -> float:
    """Distance from g to the convex hull of the rows of V."""
    if V.shape[0] == 1:
        return float(np.linalg.norm(g - V[0]))
    k = V.shape[0]
    prog = ConvexProgram(k)
    prog.add_quadratic(V @ V.T, -V @ g)
    prog.add_eq(np.ones(k), 1.0)
    for j in range(k):
        row = np.zeros(k)
        row[j] = -1.0
        prog.add_le(row, 0.0)
    res = prog.solve(w0=np.full(k, 1.0 / k))
    return float(np.linalg.norm(V.T @ res.w - g))


# ---------------------------------------------------------------------------
# proximal distance master

def solve_distance(spec: MasterSpec) -> MasterSolution:
    """min f0(x) + (mu/2)||x - p_hat||^2 over X."""
    mu = float(spec.mu)
    p_hat = np.asarray(spec.p_hat, dtype=float)
    c = spec.center
    n = c.size
    if isinstance(spec.f0, Quadratic) and spec.f0.is_zero and not isinstance(spec.X, Polyhedron):
        x = spec.X.project(p_hat)
        iterations = 0
    else:
        prog = ConvexProgram(n)
        _add_f0(prog, spec.f0, c, n)
        _add_prox(prog, mu, n)
        prog.add_quadratic(q=mu * (c - p_hat))
        _add_set(prog, spec.X, c, n)
        res = _run(prog, np.zeros(n), spec.tol)
        x, _ = _finish_point(spec.X, c, res.w)
        iterations = res.iterations
    objective = spec.f0.value(x) + 0.5 * mu * float((x - p_hat) @ (x - p_hat))
    kkt = verify_distance(spec, x)
    _check(kkt, spec.variant)
    return MasterSolution(x, None, None, objective, kkt, iterations=iterations)


def verify_distance(spec: MasterSpec, x) -> float:
    gf = spec.f0.gradient(x)
    v = gf + spec.mu * (x - np.asarray(spec.p_hat, dtype=float))
    scale = 1.0 + np.linalg.norm(gf) + spec.mu * np.linalg.norm(x - spec.p_hat)
    return _stat_residual(spec.X, x, v) / scale


SOLVERS = {
    "bundle-cp": solve_bundle_cp,
    "bundle-structured": solve_bundle_structured,
    "dc": solve_dc,
    "distance": solve_distance,
}


def solve_master(spec: MasterSpec) -> MasterSolution:
    return SOLVERS[spec.variant](spec)


def dump_master(spec: MasterSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(spec.to_dict(), fh, indent=2, sort_keys=True)


__all__ = [
    "MasterSpec", "MasterSolution", "solve_bundle_cp", "solve_bundle_structured", "solve_dc",
    "solve_distance", "solve_master", "verify_bundle_cp", "verify_bundle_structured",
    "verify_dc", "verify_distance", "dump_master",
]
