"""Dense solver for small smooth convex programs.

    minimize    f(w)
    subject to  A w <= b
                c_l(w) <= 0        (smooth convex)
                E w  = e

A Mehrotra predictor-corrector interior point method brings the iterate
close to the optimum; a Newton polish on the equality system of the
identified active set then recovers primal points and multipliers to
rounding accuracy. Problems here have at most a few dozen variables, so
everything is dense and factorized from scratch each iteration.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import MasterFailure

SmoothTerm = Callable[[np.ndarray], tuple[float, np.ndarray, np.ndarray]]

_FRACTION_TO_BOUNDARY = 0.995


@dataclass
class ProgramResult:
    w: np.ndarray
    lam: np.ndarray          # linear rows first, then nonlinear rows
    nu: np.ndarray
    iterations: int
    kkt: float
    polished: bool


class ConvexProgram:
    """Builder for a program of the form above.

    Nonlinear rows need a strongly convex objective: with a flat objective
    the Lagrangian Hessian vanishes with the multipliers and Newton steps
    overshoot the curved constraint. Every master carries a prox term, so
    this holds for all callers in the package.
    """

    def __init__(self, nvar: int):
        self.nvar = int(nvar)
        self.P = np.zeros((nvar, nvar))
        self.q = np.zeros(nvar)
        self._smooth: list[SmoothTerm] = []
        self._A: list[np.ndarray] = []
        self._b: list[float] = []
        self._nl: list[SmoothTerm] = []
        self._E: list[np.ndarray] = []
        self._e: list[float] = []

    # -- construction -------------------------------------------------
    def add_quadratic(self, P=None, q=None) -> None:
        """Add 0.5 w'Pw + q'w to the objective."""
        if P is not None:
            self.P += np.asarray(P, dtype=float)
        if q is not None:
            self.q += np.asarray(q, dtype=float)

    def add_smooth(self, term: SmoothTerm) -> None:
        self._smooth.append(term)

    def add_le(self, a, b: float) -> int:
        self._A.append(np.asarray(a, dtype=float))
        self._b.append(float(b))
        return len(self._A) - 1

    def add_nonlinear_le(self, term: SmoothTerm) -> int:
        """Add c(w) <= 0; returns the index among nonlinear rows."""
        self._nl.append(term)
        return len(self._nl) - 1

    def add_eq(self, a, e: float) -> int:
        self._E.append(np.asarray(a, dtype=float))
        self._e.append(float(e))
        return len(self._E) - 1

    @property
    def n_linear(self) -> int:
        return len(self._A)

    @property
    def n_ineq(self) -> int:
        return len(self._A) + len(self._nl)

    @property
    def is_quadratic(self) -> bool:
        return not self._smooth and not self._nl

    # -- evaluation ---------------------------------------------------
    def objective(self, w):
        g = self.P @ w + self.q
        val = 0.5 * w @ (self.P @ w) + self.q @ w
        H = self.P.copy()
        for term in self._smooth:
            v, gt, Ht = term(w)
            val += v
            g = g + gt
            H = H + Ht
        return val, g, H

    def _matrices(self):
        N = self.nvar
        A = np.array(self._A, dtype=float).reshape(-1, N)
        b = np.array(self._b, dtype=float)
        E = np.array(self._E, dtype=float).reshape(-1, N)
        e = np.array(self._e, dtype=float)
        return A, b, E, e

    def constraints(self, w, A, b):
        m1 = A.shape[0]
        m = m1 + len(self._nl)
        c = np.empty(m)
        J = np.empty((m, self.nvar))
        c[:m1] = A @ w - b
        J[:m1] = A
        hess = []
        for l, term in enumerate(self._nl):
            v, g, H = term(w)
            c[m1 + l] = v
            J[m1 + l] = g
            hess.append(H)
        return c, J, hess

    def kkt_residual(self, w, lam, nu) -> float:
        """Scaled max-norm KKT violation of (w, lam, nu)."""
        A, b, E, e = self._matrices()
        _, g, _ = self.objective(w)
        c, J, _ = self.constraints(w, A, b)
        rd = g + J.T @ lam + E.T @ nu
        scale = 1.0 + max(np.max(np.abs(g), initial=0.0),
                          np.max(np.abs(J.T @ lam), initial=0.0))
        parts = [np.max(np.abs(rd), initial=0.0) / scale,
                 np.max(np.maximum(c, 0.0), initial=0.0),
                 np.max(np.abs(lam * c), initial=0.0) / scale,
                 np.max(np.maximum(-lam, 0.0), initial=0.0) / scale,
                 np.max(np.abs(E @ w - e), initial=0.0)]
        return float(max(parts))

    # -- solve --------------------------------------------------------
    def solve(self, w0=None, tol: float = 1e-10, max_iter: int = 200) -> ProgramResult:
        N = self.nvar
        A, b, E, e = self._matrices()
        m1 = A.shape[0]
        m = m1 + len(self._nl)
        p = E.shape[0]
        w = np.zeros(N) if w0 is None else np.array(w0, dtype=float)

        if m == 0:
            active = np.zeros(0, dtype=bool)
            out = self._newton_eq(w, active, np.zeros(0), A, b, E, e)
            if out is None:
                raise MasterFailure("equality-constrained Newton solve failed")
            w, lam, nu = out
            return ProgramResult(w, lam, nu, 0, self.kkt_residual(w, lam, nu), True)

        c, J, hess = self.constraints(w, A, b)
        s = np.maximum(-c, 1.0)
        lam = np.ones(m)
        nu = np.zeros(p)
        nonlinear = not self.is_quadratic
        zero_pp = np.zeros((p, p))

        it = 0
        for it in range(1, max_iter + 1):
            _, g, H = self.objective(w)
            c, J, hess = self.constraints(w, A, b)
            HL = H.copy()
            for l, Hl in enumerate(hess):
                HL += lam[m1 + l] * Hl
            rd = g + J.T @ lam + E.T @ nu
            rp = c + s
            re = E @ w - e
            mu = s @ lam / m
            gscale = 1.0 + np.max(np.abs(g))
            if (np.max(np.abs(rd)) <= tol * gscale
                    and np.max(np.abs(rp), initial=0.0) <= tol
                    and np.max(np.abs(re), initial=0.0) <= tol
                    and mu <= 1e-2 * tol * gscale):
                break
            D = lam / s
            M = HL + J.T @ (D[:, None] * J)
            K = np.block([[M, E.T], [E, zero_pp]]) if p else M

            def direction(rc):
                rhs_w = -rd - J.T @ (D * rp - rc / s)
                rhs = np.concatenate([rhs_w, -re]) if p else rhs_w
                try:
                    sol = np.linalg.solve(K, rhs)
                except np.linalg.LinAlgError:
                    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
                dw = sol[:N]
                dnu = sol[N:]
                dlam = D * (rp + J @ dw) - rc / s
                ds = -rp - J @ dw
                return dw, ds, dlam, dnu

            dw, ds, dl, dn = direction(s * lam)
            ap = _max_step(s, ds)
            ad = _max_step(lam, dl)
            mu_aff = (s + ap * ds) @ (lam + ad * dl) / m
            sigma = min(1.0, (mu_aff / mu) ** 3) if mu > 0 else 0.0
            dw, ds, dl, dn = direction(s * lam + ds * dl - sigma * mu)
            alpha = min(1.0, _FRACTION_TO_BOUNDARY * _max_step(s, ds),
                        _FRACTION_TO_BOUNDARY * _max_step(lam, dl))
            if nonlinear:
                old = _merit(rd, rp, re, mu)
                for _ in range(30):
                    w_t = w + alpha * dw
                    s_t = s + alpha * ds
                    l_t = lam + alpha * dl
                    n_t = nu + alpha * dn
                    _, g_t, _ = self.objective(w_t)
                    c_t, J_t, _ = self.constraints(w_t, A, b)
                    new = _merit(g_t + J_t.T @ l_t + E.T @ n_t, c_t + s_t,
                                 E @ w_t - e, s_t @ l_t / m)
                    if new <= (1.0 - 1e-4 * alpha) * old:
                        break
                    alpha *= 0.5
            w = w + alpha * dw
            s = s + alpha * ds
            lam = lam + alpha * dl
            nu = nu + alpha * dn
            s = np.maximum(s, 1e-300)
            lam = np.maximum(lam, 1e-300)

        ipm_kkt = self.kkt_residual(w, lam, nu)
        polished = self._polish(w, lam, nu, s, A, b, E, e)
        if polished is not None:
            wp, lp, np_ = polished
            kp = self.kkt_residual(wp, lp, np_)
            if kp <= max(ipm_kkt, 1e-13):
                return ProgramResult(wp, lp, np_, it, kp, True)
        lam = np.maximum(lam, 0.0)
        if not np.isfinite(ipm_kkt) or ipm_kkt > 1e3 * tol:
            raise MasterFailure(f"interior point stalled with KKT residual {ipm_kkt:.3e}")
        return ProgramResult(w, lam, nu, it, ipm_kkt, False)

    def _newton_eq(self, w, active, lam, A, b, E, e, max_newton: int = 12):
        """Newton's method on the KKT system of the active constraints."""
        N = self.nvar
        m1 = A.shape[0]
        idx = np.flatnonzero(active)
        k = idx.size
        p = E.shape[0]
        lamA = lam[idx].copy() if k else np.zeros(0)
        nu = np.zeros(p)
        w = w.copy()
        for _ in range(max_newton):
            _, g, H = self.objective(w)
            c, J, hess = self.constraints(w, A, b)
            HL = H.copy()
            for pos, i in enumerate(idx):
                if i >= m1:
                    HL += lamA[pos] * hess[i - m1]
            JA = J[idx]
            K = np.zeros((N + k + p, N + k + p))
            K[:N, :N] = HL
            K[:N, N:N + k] = JA.T
            K[N:N + k, :N] = JA
            if p:
                K[:N, N + k:] = E.T
                K[N + k:, :N] = E
            rhs = np.concatenate([-g, -c[idx], e - E @ w])
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
            if not np.all(np.isfinite(sol)):
                return None
            dw = sol[:N]
            lamA = sol[N:N + k]
            nu = sol[N + k:]
            w = w + dw
            if np.linalg.norm(dw) <= 1e-15 * (1.0 + np.linalg.norm(w)):
                break
        full = np.zeros(m1 + len(self._nl))
        full[idx] = lamA
        return w, full, nu

    def _polish(self, w, lam, nu, s, A, b, E, e):
        active = lam > s
        m = lam.size
        lam_scale = 1.0 + np.max(np.abs(lam), initial=0.0)
        seen = set()
        for _ in range(2 * m + 4):
            key = active.tobytes()
            if key in seen:
                return None
            seen.add(key)
            out = self._newton_eq(w, active, lam, A, b, E, e)
            if out is None:
                return None
            wp, lp, nup = out
            c, _, _ = self.constraints(wp, A, b)
            cscale = 1.0 + np.max(np.abs(wp), initial=0.0)
            neg = lp < -1e-11 * lam_scale
            viol = (~active) & (c > 1e-11 * cscale)
            if not neg.any() and not viol.any():
                return wp, np.maximum(lp, 0.0), nup
            active = active.copy()
            if neg.any():
                active[int(np.argmin(lp))] = False
            else:
                cand = np.where(viol, c, -np.inf)
                active[int(np.argmax(cand))] = True
        return None


def _max_step(v, dv) -> float:
    neg = dv < 0
    if not neg.any():
        return 1.0
    with np.errstate(over="ignore", divide="ignore"):
        return float(min(1.0, np.min(-v[neg] / dv[neg])))


def _merit(rd, rp, re, mu) -> float:
    return float(np.linalg.norm(rd) + np.linalg.norm(rp) + np.linalg.norm(re) + abs(mu))


def solve_qp(P, q, A=None, b=None, E=None, e=None, w0=None, tol: float = 1e-10) -> ProgramResult:
    """Convenience wrapper for a convex quadratic program."""
    q = np.asarray(q, dtype=float)
    prog = ConvexProgram(q.size)
    prog.add_quadratic(P, q)
    if A is not None:
        for a_i, b_i in zip(np.atleast_2d(A), np.atleast_1d(b)):
            prog.add_le(a_i, b_i)
    if E is not None:
        for a_i, e_i in zip(np.atleast_2d(E), np.atleast_1d(e)):
            prog.add_eq(a_i, e_i)
    return prog.solve(w0=w0, tol=tol)
