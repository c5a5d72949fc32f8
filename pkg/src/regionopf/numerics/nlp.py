"""Smooth nonconvex programs by a bound-constrained augmented Lagrangian.

Problem form::

    minimize    f(x)
    subject to  c(x) = 0,  g(x) <= 0,  lo <= x <= hi

Equalities and inequalities are moved into the augmented Lagrangian
(inequalities in Rockafellar's shifted form); bounds stay explicit and are
handled by a damped projected Newton method whose Hessian model is the exact
penalty term plus a BFGS estimate of the Lagrangian curvature.
Callbacks return ``(value, derivative)`` pairs; Jacobians are dense
``(m, n)`` arrays.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .qp import SolverResult, SolverStatus

log = logging.getLogger(__name__)


@dataclass
class NlpProblem:
    objective: Callable
    x0: np.ndarray
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    eq: Callable | None = None
    ineq: Callable | None = None

    @property
    def n(self) -> int:
        return len(self.x0)


def _empty(n):
    return np.zeros(0), np.zeros((0, n))


def check_derivatives(p: NlpProblem, x=None, step: float = 1e-6, rtol: float = 1e-4):
    """Compare analytic derivatives with central differences.

    Returns ``(worst_relative_error, description)``.
    """
    x = np.asarray(p.x0 if x is None else x, dtype=float)
    n = x.size
    worst = (0.0, "")
    pieces = [("objective", lambda v: _wrap_scalar(p.objective(v)))]
    if p.eq is not None:
        pieces.append(("equality", p.eq))
    if p.ineq is not None:
        pieces.append(("inequality", p.ineq))
    for name, fn in pieces:
        _, jac = fn(x)
        jac = np.atleast_2d(jac)
        fd = np.zeros_like(jac, dtype=float)
        for j in range(n):
            e = np.zeros(n)
            e[j] = step
            fd[:, j] = (np.atleast_1d(fn(x + e)[0]) - np.atleast_1d(fn(x - e)[0])) / (2 * step)
        if jac.size == 0:
            continue
        err = np.abs(jac - fd) / np.maximum(1.0, np.abs(fd))
        i, j = np.unravel_index(np.argmax(err), err.shape)
        if err[i, j] > worst[0]:
            worst = (float(err[i, j]), f"{name} row {i} column {j}: analytic {jac[i, j]:.6g}, "
                                       f"finite difference {fd[i, j]:.6g}")
    return worst


def _wrap_scalar(out):
    f, g = out
    return np.array([f]), np.atleast_2d(g)


def solve_nlp(p: NlpProblem, tol: float = 1e-6, max_outer: int = 60, max_inner: int = 500,
              derivative_check: bool = False) -> SolverResult:
    """Find a local KKT point of ``p`` starting from ``p.x0``.

    ``kkt_residual`` combines projected Lagrangian stationarity (relative to
    the objective gradient scale), constraint violation and complementarity.
    """
    n = p.n
    lo = np.full(n, -np.inf) if p.lo is None else np.asarray(p.lo, dtype=float)
    hi = np.full(n, np.inf) if p.hi is None else np.asarray(p.hi, dtype=float)
    if np.any(lo > hi):
        bad = int(np.flatnonzero(lo > hi)[0])
        return SolverResult(SolverStatus.INFEASIBLE, np.asarray(p.x0, dtype=float), np.nan, np.inf,
                            message=f"empty bound interval for variable {bad}")
    x = np.clip(np.asarray(p.x0, dtype=float), lo, hi)

    if derivative_check:
        err, where = check_derivatives(p, x)
        if err > 1e-4:
            return SolverResult(SolverStatus.NUMERICAL_FAILURE, x, np.nan, np.inf,
                                message=f"derivative check failed ({err:.2e}): {where}")

    eq = p.eq if p.eq is not None else (lambda v: _empty(n))
    ineq = p.ineq if p.ineq is not None else (lambda v: _empty(n))

    f0, g0 = p.objective(x)
    fscale = 1.0 / max(1.0, float(np.abs(g0).max(initial=0.0)))
    c0, _ = eq(x)
    h0, _ = ineq(x)
    lam = np.zeros(len(c0))
    nu = np.zeros(len(h0))
    mu = 10.0

    def kkt_measure(v, lam_, nu_):
        _, gf = p.objective(v)
        c, Jc = eq(v)
        h, Jh = ineq(v)
        grad_l = fscale * gf + Jc.T @ lam_ + Jh.T @ nu_
        stat = np.abs(v - np.clip(v - grad_l, lo, hi)).max(initial=0.0)
        feas = max(np.abs(c).max(initial=0.0), np.maximum(h, 0.0).max(initial=0.0))
        comp = np.abs(nu_ * h).max(initial=0.0)
        return float(stat), float(feas), float(comp)

    status = SolverStatus.MAX_ITERATIONS
    message = ""
    feas_prev = np.inf
    inner_tol = 1e-3
    outer = 0
    B = np.eye(n)
    for outer in range(1, max_outer + 1):
        x, B = _inner_newton(p.objective, eq, ineq, x, lo, hi, lam, nu, mu, fscale, B,
                             inner_tol, max_inner)
        if not np.all(np.isfinite(x)):
            status = SolverStatus.NUMERICAL_FAILURE
            message = "non-finite iterate"
            break
        c, _ = eq(x)
        h, _ = ineq(x)
        lam = lam + mu * c
        nu = np.maximum(0.0, nu + mu * h)
        stat, feas, comp = kkt_measure(x, lam, nu)
        log.debug("outer %d: mu=%.1e stat=%.2e feas=%.2e comp=%.2e", outer, mu, stat, feas, comp)
        if max(stat, feas, comp) <= tol:
            status = SolverStatus.OPTIMAL
            break
        if feas > 0.25 * feas_prev and feas > tol:
            mu *= 10.0
        feas_prev = min(feas_prev, feas) if np.isfinite(feas_prev) else feas
        inner_tol = max(0.1 * tol, min(inner_tol, 0.1 * max(feas, stat)))
        if mu > 1e12:
            status = SolverStatus.INFEASIBLE
            message = f"penalty exhausted with constraint violation {feas:.2e}"
            break

    f, _ = p.objective(x)
    stat, feas, comp = kkt_measure(x, lam, nu)
    kkt = max(stat, feas, comp)
    mults = (lam / fscale, nu / fscale)
    return SolverResult(status, x, float(f), kkt, outer, mults[0], mults[1], message)


def _box_qp(H, g, lo, hi, active_lo, active_hi, max_iter: int = 500):
    """Minimize ``g'd + d'Hd/2`` over ``lo <= d <= hi`` (``lo <= 0 <= hi``, ``H`` positive definite).

    Primal active-set method started from ``d = 0`` with the given working
    set (bounds equal to zero only). Each pass either reaches the minimizer
    on the current face or stops at the first blocking bound, so iterates
    stay feasible and the objective never increases.
    """
    n = g.size
    d = np.zeros(n)
    at_lo = active_lo & (lo == 0)
    at_hi = active_hi & (hi == 0) & ~at_lo
    for _ in range(max_iter):
        free = ~(at_lo | at_hi)
        target = d.copy()
        if free.any():
            rhs = g[free] + H[np.ix_(free, ~free)] @ d[~free]
            try:
                target[free] = -cho_solve(cho_factor(H[np.ix_(free, free)], check_finite=False),
                                          rhs, check_finite=False)
            except np.linalg.LinAlgError:
                return d
        move = target - d
        # longest feasible fraction of the move
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(move < 0, (lo - d) / move, np.where(move > 0, (hi - d) / move, np.inf))
        ratio[~free] = np.inf
        alpha = min(1.0, float(ratio.min(initial=np.inf)))
        d = d + alpha * move
        if alpha < 1.0:
            j = int(np.argmin(ratio))
            if move[j] < 0:
                d[j] = lo[j]
                at_lo[j] = True
            else:
                d[j] = hi[j]
                at_hi[j] = True
            continue
        r = g + H @ d
        # multiplier signs: at a lower bound the gradient must point up, at an upper bound down
        wrong = np.where(at_lo, -r, 0.0) + np.where(at_hi, r, 0.0)
        wrong[(lo == hi)] = 0.0
        j = int(np.argmax(wrong))
        if wrong[j] <= 1e-14 * max(1.0, np.abs(r).max()):
            return d
        at_lo[j] = at_hi[j] = False
    return d


def _inner_newton(objective, eq, ineq, x, lo, hi, lam, nu, mu, fscale, B, gtol, max_iter):
    """Minimize the augmented Lagrangian over the box by damped Newton steps.

    The model Hessian is ``B + mu J^T J``: the penalty part is exact (and is
    what makes the problem stiff), ``B`` is a damped BFGS estimate of the
    Lagrangian curvature, updated with the structured secant. Each step
    minimizes the quadratic model over the box, followed by a backtracking
    search. The damping ``delta`` behaves like an inverse trust radius.
    Returns ``(x, B)``.
    """
    n = x.size

    def evaluate(v):
        f, gf = objective(v)
        c, Jc = eq(v)
        h, Jh = ineq(v)
        w = lam + mu * c
        s = np.maximum(0.0, nu + mu * h)
        val = fscale * f + lam @ c + 0.5 * mu * (c @ c) + (s @ s - nu @ nu) / (2 * mu)
        grad = fscale * gf + Jc.T @ w + Jh.T @ s
        return float(val), np.asarray(grad, dtype=float), (gf, Jc, Jh, w, s)

    val, grad, parts = evaluate(x)
    delta = 0.0
    fresh = np.allclose(B, np.eye(n))
    curvature = 1.0  # y'y / s'y of the latest secant pair; scales identity resets
    for _ in range(max_iter):
        pgrad = x - np.clip(x - grad, lo, hi)
        pnorm = np.abs(pgrad).max(initial=0.0)
        if pnorm <= gtol:
            break
        gf, Jc, Jh, w, s = parts
        Ja = Jh[s > 0]
        H = B + mu * (Jc.T @ Jc) + mu * (Ja.T @ Ja)
        scale = max(1.0, float(np.abs(np.diag(H)).max(initial=1.0)))
        lo_d, hi_d = np.minimum(lo - x, 0.0), np.maximum(hi - x, 0.0)
        accepted = False
        for _attempt in range(30):
            d = _box_qp(H + delta * scale * np.eye(n), grad, lo_d, hi_d, grad > 0, grad < 0)
            t = 1.0
            for _halving in range(40):
                x_new = np.clip(x + t * d, lo, hi)
                step = x_new - x
                pred = grad @ step
                if pred >= 0 or not np.any(step):
                    break
                val_new, grad_new, parts_new = evaluate(x_new)
                if np.isfinite(val_new) and val_new <= val + 1e-4 * pred:
                    accepted = True
                    break
                if -pred < 1e-14 * max(1.0, abs(val)):
                    # decrease is below roundoff in the merit; judge by the projected gradient
                    pg_new = x_new - np.clip(x_new - grad_new, lo, hi)
                    accepted = bool(np.abs(pg_new).max() < pnorm)
                    break
                t *= 0.5
            if accepted:
                break
            delta = max(10.0 * delta, 1e-10)
            if not fresh:
                B = curvature * np.eye(n)
                fresh = True
                H = B + mu * (Jc.T @ Jc) + mu * (Ja.T @ Ja)
        if not accepted:
            break
        delta = 0.0 if delta < 1e-8 else 0.1 * delta
        # structured secant: Lagrangian gradient difference at the new weights
        gf_n, Jc_n, Jh_n, w_n, s_n = parts_new
        y = fscale * (gf_n - gf) + (Jc_n - Jc).T @ w_n + (Jh_n - Jh).T @ s_n
        sy = float(step @ y)
        if sy > 0:
            curvature = float(y @ y) / sy
            if fresh:
                B = curvature * np.eye(n)
                fresh = False
        Bs = B @ step
        sBs = float(step @ Bs)
        ss = float(step @ step)
        if sBs > 1e-12 * ss:
            if sy < 0.2 * sBs:
                theta = 0.8 * sBs / (sBs - sy)
                y = theta * y + (1 - theta) * Bs
                sy = float(step @ y)
            if sy > 1e-10 * np.sqrt(ss) * np.linalg.norm(y):
                B = B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy
        x, val, grad, parts = x_new, val_new, grad_new, parts_new
    log.debug("inner exit after %d: |pg|=%.3e gtol=%.1e", _, np.abs(x - np.clip(x - grad, lo, hi)).max(), gtol)
    return x, B
