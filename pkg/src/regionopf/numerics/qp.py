"""Convex quadratic programs by a primal-dual interior-point method.

Problem form::

    minimize    1/2 x'Hx + c'x
    subject to  A_eq x = b_eq,  A_in x <= b_in,  lo <= x <= hi

Bounds are folded into the inequality block. Each iteration solves the
reduced KKT system with Mehrotra's predictor-corrector step.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.linalg import splu

DENSE_KKT_LIMIT = 600


class SolverStatus(enum.Enum):
    OPTIMAL = "Optimal"
    MAX_ITERATIONS = "MaxIterations"
    INFEASIBLE = "Infeasible"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class SolverResult:
    status: SolverStatus
    x: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int = 0
    eq_multipliers: np.ndarray | None = None
    ineq_multipliers: np.ndarray | None = None
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == SolverStatus.OPTIMAL


@dataclass
class QpProblem:
    H: object
    c: np.ndarray
    A_eq: object = None
    b_eq: np.ndarray | None = None
    A_in: object = None
    b_in: np.ndarray | None = None
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    constant: float = 0.0
    names: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.c)

    def objective(self, x) -> float:
        return float(0.5 * x @ (self.H @ x) + self.c @ x + self.constant)


def _matrix(m, rows, cols, dense):
    if m is None:
        return np.zeros((rows, cols)) if dense else sp.csr_matrix((rows, cols))
    if dense:
        return m.toarray() if sp.issparse(m) else np.asarray(m, dtype=float).reshape(-1, cols)
    return sp.csr_matrix(m, dtype=float)


def _stack_inequalities(p: QpProblem, dense: bool = False):
    """Rows of ``G x <= h``: general inequalities, then finite lower and upper bounds."""
    n = p.n
    blocks = []
    rhs = []
    if p.A_in is not None and p.b_in is not None and len(p.b_in):
        blocks.append(_matrix(p.A_in, 0, n, dense))
        rhs.append(np.asarray(p.b_in, dtype=float))
    eye = np.eye(n) if dense else sp.identity(n, format="csr")
    if p.lo is not None:
        lo = np.asarray(p.lo, dtype=float)
        idx = np.flatnonzero(np.isfinite(lo))
        if idx.size:
            blocks.append(-eye[idx])
            rhs.append(-lo[idx])
    if p.hi is not None:
        hi = np.asarray(p.hi, dtype=float)
        idx = np.flatnonzero(np.isfinite(hi))
        if idx.size:
            blocks.append(eye[idx])
            rhs.append(hi[idx])
    if not blocks:
        return _matrix(None, 0, n, dense), np.zeros(0)
    if dense:
        return np.vstack(blocks), np.concatenate(rhs)
    return sp.vstack(blocks, format="csr"), np.concatenate(rhs)


def _initial_point(p: QpProblem):
    n = p.n
    x = np.zeros(n)
    lo = np.full(n, -np.inf) if p.lo is None else np.asarray(p.lo, dtype=float)
    hi = np.full(n, np.inf) if p.hi is None else np.asarray(p.hi, dtype=float)
    both = np.isfinite(lo) & np.isfinite(hi)
    x[both] = 0.5 * (lo[both] + hi[both])
    only_lo = np.isfinite(lo) & ~np.isfinite(hi)
    x[only_lo] = np.maximum(lo[only_lo], 0.0)
    only_hi = ~np.isfinite(lo) & np.isfinite(hi)
    x[only_hi] = np.minimum(hi[only_hi], 0.0)
    return x


class _Kkt:
    """Factorization of [[H + G'WG + dI, A'], [A, -dI]] reused by both step solves.

    Dense inputs get a dense LU; sparse inputs a sparse one.
    """

    def __init__(self, H, A, G, w, reg):
        n = H.shape[0]
        m = A.shape[0]
        self.n = n
        self.dense = isinstance(H, np.ndarray)
        if self.dense:
            K = np.zeros((n + m, n + m))
            K[:n, :n] = H + (G.T * w) @ G
            K[:n, n:] = A.T
            K[n:, :n] = A
            idx = np.arange(n + m)
            K[idx, idx] += np.where(idx < n, reg, -reg)
            if not np.all(np.isfinite(K)):
                raise ValueError("non-finite KKT matrix")
            self.lu = la.lu_factor(K, check_finite=False)
        else:
            top = H + (G.T @ sp.diags(w) @ G) + reg * sp.identity(n)
            self.lu = splu(sp.bmat([[top, A.T], [A, -reg * sp.identity(m)]], format="csc"))

    def solve(self, r1, r2):
        rhs = np.concatenate([r1, r2])
        if self.dense:
            sol = la.lu_solve(self.lu, rhs, check_finite=False)
        else:
            sol = self.lu.solve(rhs)
        return sol[: self.n], sol[self.n:]


def _max_step(v, dv):
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return float(min(1.0, np.min(-v[neg] / dv[neg])))


def solve_qp(p: QpProblem, tol: float = 1e-8, max_iter: int = 200) -> SolverResult:
    """Solve a convex QP; the returned status tells whether ``x`` is trustworthy."""
    n = p.n
    b = np.zeros(0) if p.b_eq is None else np.asarray(p.b_eq, dtype=float)
    # small systems: sparse bookkeeping costs more than the arithmetic
    dense = n + b.size <= DENSE_KKT_LIMIT
    H = _matrix(p.H, n, n, dense)
    A = _matrix(p.A_eq, 0, n, dense)
    if A.shape[0] != b.size:
        raise ValueError("A_eq and b_eq sizes differ")
    G, h = _stack_inequalities(p, dense)
    m = G.shape[0]
    # normalize the objective so multipliers are O(1) next to the unit starting point
    c = np.asarray(p.c, dtype=float)
    h_max = float(abs(H).max()) if (H.size if dense else H.nnz) else 0.0
    fscale = max(1.0, np.abs(c).max(initial=0.0), h_max)
    H = H / fscale
    c = c / fscale
    reg = 1e-11 * max(1.0, h_max / fscale)

    x = _initial_point(p)
    y = np.zeros(A.shape[0])
    s = np.maximum(h - G @ x, 1.0)
    z = np.ones(m)

    scale_b = 1.0 + (np.abs(b).max() if b.size else 0.0)
    scale_h = 1.0 + (np.abs(h[np.isfinite(h)]).max() if m else 0.0)
    scale_c = 1.0 + (np.abs(c).max() if n else 0.0)

    def residuals(x, y, z, s):
        r_d = H @ x + c + A.T @ y + G.T @ z
        r_p = A @ x - b
        r_i = G @ x + s - h
        return r_d, r_p, r_i

    def measure(x, y, z, s):
        r_d, r_p, r_i = residuals(x, y, z, s)
        obj = 0.5 * x @ (H @ x) + c @ x
        gap = (s @ z) / (1.0 + abs(obj)) if m else 0.0
        return max(
            np.abs(r_d).max(initial=0.0) / scale_c,
            np.abs(r_p).max(initial=0.0) / scale_b,
            np.abs(r_i).max(initial=0.0) / scale_h,
            gap,
        )

    status = SolverStatus.MAX_ITERATIONS
    message = ""
    it = 0
    for it in range(1, max_iter + 1):
        r_d, r_p, r_i = residuals(x, y, z, s)
        kkt = measure(x, y, z, s)
        if kkt <= tol:
            status = SolverStatus.OPTIMAL
            break

        # Farkas certificate: z >= 0, A'y + G'z ~ 0 and b'y + h'z < 0
        dual_norm = max(np.abs(y).max(initial=0.0), np.abs(z).max(initial=0.0))
        if dual_norm > 1e6 * scale_c:
            ray = (A.T @ y + G.T @ z) / dual_norm
            val = (b @ y + h @ z) / dual_norm
            if np.abs(ray).max(initial=0.0) < 1e-6 and val < -1e-6:
                status = SolverStatus.INFEASIBLE
                message = "primal infeasibility certificate found"
                break

        mu = (s @ z) / m if m else 0.0
        w = z / s if m else np.zeros(0)
        try:
            kkt_mat = _Kkt(H, A, G, w, reg)
        except (RuntimeError, la.LinAlgError, ValueError) as exc:
            status = SolverStatus.NUMERICAL_FAILURE
            message = f"KKT factorization failed: {exc}"
            break

        def direction(rc):
            rhs1 = -r_d - G.T @ (w * r_i - rc / s) if m else -r_d
            dx, dy = kkt_mat.solve(rhs1, -r_p)
            if m:
                ds = -r_i - G @ dx
                dz = (-rc - z * ds) / s
            else:
                ds = dz = np.zeros(0)
            return dx, dy, ds, dz

        dx, dy, ds, dz = direction(s * z)
        if m:
            a_aff = min(_max_step(s, ds), _max_step(z, dz))
            mu_aff = ((s + a_aff * ds) @ (z + a_aff * dz)) / m
            sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
            dx, dy, ds, dz = direction(s * z + ds * dz - sigma * mu)
            alpha = min(1.0, 0.995 * min(_max_step(s, ds), _max_step(z, dz)))
        else:
            alpha = 1.0
        if not np.all(np.isfinite(dx)):
            status = SolverStatus.NUMERICAL_FAILURE
            message = "non-finite search direction"
            break
        x = x + alpha * dx
        y = y + alpha * dy
        if m:
            s = np.maximum(s + alpha * ds, 1e-300)
            z = np.maximum(z + alpha * dz, 1e-300)

    kkt = measure(x, y, z, s)
    if status == SolverStatus.MAX_ITERATIONS and kkt <= tol:
        status = SolverStatus.OPTIMAL
    obj = float(fscale * (0.5 * x @ (H @ x) + c @ x) + p.constant)
    return SolverResult(status, x, obj, float(kkt), it, fscale * y, fscale * z, message)
