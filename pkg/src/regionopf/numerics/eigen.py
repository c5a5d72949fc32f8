"""Smallest nonzero eigenpairs of graph Laplacians.

Small problems go through a dense symmetric eigensolve. Larger ones use a
shift-invert Lanczos iteration with full reorthogonalization, run on the
orthogonal complement of the constant vector (the Laplacian null space).
Converged Ritz pairs are locked and the iteration is restarted in the
complement of everything locked so far, which also recovers repeated
eigenvalues that a single Krylov sequence cannot see.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ..errors import ConvergenceFailure, DisconnectedGraph

DENSE_LIMIT = 2000


@dataclass(frozen=True)
class SparseSymMatrix:
    """Symmetric matrix stored as upper-triangle triplets (0-based indices)."""

    n: int
    rows: tuple
    cols: tuple
    values: tuple

    def __post_init__(self):
        seen = set()
        for r, c in zip(self.rows, self.cols):
            if not (0 <= r < self.n and 0 <= c < self.n):
                raise ValueError(f"index ({r}, {c}) out of range for n={self.n}")
            if r > c:
                raise ValueError("only upper-triangle entries may be stored")
            if (r, c) in seen:
                raise ValueError(f"duplicate entry ({r}, {c})")
            seen.add((r, c))

    @classmethod
    def from_matrix(cls, m) -> "SparseSymMatrix":
        upper = sp.triu(sp.coo_matrix(m)).tocoo()
        upper.sum_duplicates()
        keep = upper.data != 0
        return cls(
            int(upper.shape[0]),
            tuple(int(i) for i in upper.row[keep]),
            tuple(int(j) for j in upper.col[keep]),
            tuple(float(v) for v in upper.data[keep]),
        )

    def to_csr(self) -> sp.csr_matrix:
        rows = np.asarray(self.rows, dtype=int)
        cols = np.asarray(self.cols, dtype=int)
        vals = np.asarray(self.values, dtype=float)
        off = rows != cols
        m = sp.coo_matrix(
            (np.concatenate([vals, vals[off]]),
             (np.concatenate([rows, cols[off]]), np.concatenate([cols, rows[off]]))),
            shape=(self.n, self.n),
        )
        return m.tocsr()

    def to_dense(self) -> np.ndarray:
        return self.to_csr().toarray()


def _as_csr(L) -> sp.csr_matrix:
    if isinstance(L, SparseSymMatrix):
        return L.to_csr()
    if sp.issparse(L):
        return sp.csr_matrix(L, dtype=float)
    return sp.csr_matrix(np.asarray(L, dtype=float))


def _pattern_components(L: sp.csr_matrix) -> int:
    """Count connected components of the off-diagonal sparsity pattern."""
    n = L.shape[0]
    seen = np.zeros(n, dtype=bool)
    count = 0
    indptr, indices, data = L.indptr, L.indices, L.data
    for start in range(n):
        if seen[start]:
            continue
        count += 1
        seen[start] = True
        queue = deque([start])
        while queue:
            i = queue.popleft()
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                if data[p] != 0 and not seen[j]:
                    seen[j] = True
                    queue.append(j)
    return count


def _dense_pairs(L: sp.csr_matrix, k: int):
    vals, vecs = np.linalg.eigh(L.toarray())
    scale = max(1.0, abs(vals[-1]))
    zero = int(np.sum(vals < 1e-9 * scale))
    if zero > 1:
        raise DisconnectedGraph(zero)
    start = max(zero, 1)
    if start + k > len(vals):
        raise ValueError(f"requested {k} nonzero eigenpairs but only {len(vals) - start} exist")
    return vals[start:start + k], vecs[:, start:start + k]


def _lanczos_pass(apply_op, n, steps, locked, rng):
    """One shift-invert Lanczos run in the complement of ``locked`` columns."""

    def project(v):
        if locked.shape[1]:
            v = v - locked @ (locked.T @ v)
            v = v - locked @ (locked.T @ v)
        return v

    q = project(rng.standard_normal(n))
    q /= np.linalg.norm(q)
    Q = np.zeros((n, steps))
    alpha = np.zeros(steps)
    beta = np.zeros(steps)
    m = 0
    for j in range(steps):
        Q[:, j] = q
        w = project(apply_op(q))
        alpha[j] = q @ w
        w -= Q[:, : j + 1] @ (Q[:, : j + 1].T @ w)
        # second pass keeps the basis orthogonal to working precision
        w -= Q[:, : j + 1] @ (Q[:, : j + 1].T @ w)
        m = j + 1
        b = np.linalg.norm(w)
        if b < 1e-14 * max(1.0, abs(alpha[j])):
            break
        beta[j] = b
        q = w / b
    T = np.diag(alpha[:m]) + np.diag(beta[: m - 1], 1) + np.diag(beta[: m - 1], -1)
    theta, S = np.linalg.eigh(T)
    return theta, Q[:, :m] @ S


def _lanczos_pairs(L: sp.csr_matrix, k: int, tol: float, max_passes: int, seed: int):
    n = L.shape[0]
    if _pattern_components(L) > 1:
        raise DisconnectedGraph(_pattern_components(L))
    diag_scale = max(1.0, float(np.abs(L.diagonal()).max(initial=0.0)))
    shift = 1e-6 * diag_scale
    lu = splu(sp.csc_matrix(L + shift * sp.identity(n)))
    rng = np.random.default_rng(seed)

    locked = np.ones((n, 1)) / np.sqrt(n)
    values: list[float] = []
    steps = min(n - 1, max(2 * k + 20, 40))
    for _ in range(max_passes):
        room = n - locked.shape[1]
        if room <= 0:
            break
        if room <= steps:
            # a Krylov pass would span the whole complement anyway; project exactly
            basis = np.linalg.qr(locked, mode="complete")[0][:, locked.shape[1]:]
            small = basis.T @ (L @ basis)
            rv, rs = np.linalg.eigh((small + small.T) / 2)
            locked = np.column_stack([locked, basis @ rs])
            values.extend(float(v) for v in rv)
            break
        theta, Y = _lanczos_pass(lu.solve, n, min(steps, room), locked, rng)
        # largest shift-inverted values are the smallest Laplacian eigenvalues;
        # only the leading run of converged Ritz pairs is trusted
        new_vals, new_vecs = [], []
        for idx in np.argsort(-theta):
            y = Y[:, idx] / np.linalg.norm(Y[:, idx])
            lam = float(y @ (L @ y))
            if np.linalg.norm(L @ y - lam * y) > tol * max(1.0, abs(lam)):
                break
            new_vals.append(lam)
            new_vecs.append(y)
        if not new_vals:
            steps = min(n - 1, 2 * steps)
            continue
        if len(values) >= k:
            kth = sorted(values)[k - 1]
            if new_vals[0] >= kth - tol * max(1.0, kth):
                break
        for lam, y in zip(new_vals, new_vecs):
            y = y - locked @ (locked.T @ y)
            y /= np.linalg.norm(y)
            locked = np.column_stack([locked, y])
            values.append(lam)
    else:
        raise ConvergenceFailure(max_passes, f"(locked {len(values)} of {k} eigenpairs)")
    if len(values) < k:
        raise ConvergenceFailure(max_passes, f"(locked {len(values)} of {k} eigenpairs)")

    order = np.argsort(values)[:k]
    vecs = locked[:, 1:][:, order]
    # Rayleigh-Ritz on the locked block restores exact orthonormality
    Qb, _ = np.linalg.qr(vecs)
    small = Qb.T @ (L @ Qb)
    rv, rs = np.linalg.eigh((small + small.T) / 2)
    return rv, Qb @ rs


def smallest_eigenpairs(L, k: int, *, method: str = "auto", tol: float = 1e-8,
                        max_passes: int = 200, seed: int = 0):
    """Return the ``k`` smallest nonzero eigenvalues of a Laplacian and their eigenvectors.

    ``L`` may be a :class:`SparseSymMatrix`, a scipy sparse matrix or a dense
    array. Eigenvalues come back ascending; eigenvectors are orthonormal
    columns of an ``n x k`` array. The constant null vector is excluded.
    Raises :class:`DisconnectedGraph` if the zero eigenvalue is repeated.
    """
    A = _as_csr(L)
    n = A.shape[0]
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n, got k={k}, n={n}")
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "lanczos"
    if method == "dense":
        return _dense_pairs(A, k)
    if method == "lanczos":
        return _lanczos_pairs(A, k, tol, max_passes, seed)
    raise ValueError(f"unknown method {method!r}")
