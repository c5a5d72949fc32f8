import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import path_laplacian_eigs, qp_by_active_sets
from regionopf.errors import DisconnectedGraph
from regionopf.numerics.eigen import SparseSymMatrix, smallest_eigenpairs
from regionopf.numerics.nlp import NlpProblem, check_derivatives, solve_nlp
from regionopf.numerics.qp import QpProblem, SolverStatus, solve_qp


def laplacian(n, edges):
    A = np.zeros((n, n))
    for u, v in edges:
        A[u, v] = A[v, u] = 1
    return np.diag(A.sum(1)) - A


# ---------------------------------------------------------------- eigen

@pytest.mark.parametrize("method", ["dense", "lanczos"])
def test_three_node_path(method):
    L = np.array([[1, -1, 0], [-1, 2, -1], [0, -1, 1]], dtype=float)
    vals, vecs = smallest_eigenpairs(L, 2, method=method)
    assert np.allclose(vals, [1, 3], atol=1e-10)
    assert np.allclose(vecs.T @ vecs, np.eye(2), atol=1e-10)


@pytest.mark.parametrize("method", ["dense", "lanczos"])
def test_triangle_degenerate(method):
    vals, vecs = smallest_eigenpairs(laplacian(3, [(0, 1), (1, 2), (0, 2)]), 2, method=method)
    assert np.allclose(vals, [3, 3], atol=1e-10)
    assert np.allclose(vecs.sum(0), 0, atol=1e-10)


@pytest.mark.parametrize("method", ["dense", "lanczos"])
def test_disconnected(method):
    with pytest.raises(DisconnectedGraph):
        smallest_eigenpairs(laplacian(4, [(0, 1), (2, 3)]), 1, method=method)


def test_sparse_sym_matrix_input():
    L = laplacian(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
    m = SparseSymMatrix.from_matrix(L)
    assert all(r <= c for r, c in zip(m.rows, m.cols))
    vals, _ = smallest_eigenpairs(m, 4)
    assert np.allclose(vals, path_laplacian_eigs(5), atol=1e-10)


def test_sparse_sym_matrix_rejects_lower_triangle():
    with pytest.raises(ValueError):
        SparseSymMatrix(2, (1,), (0,), (1.0,))


@pytest.mark.parametrize("n", [10, 40])
def test_lanczos_residuals_on_grid(n):
    edges = [(i * n + j, i * n + j + 1) for i in range(n) for j in range(n - 1)]
    edges += [(i * n + j, (i + 1) * n + j) for i in range(n - 1) for j in range(n)]
    L = sp.csr_matrix(laplacian(n * n, edges))
    vals, vecs = smallest_eigenpairs(L, 4, method="lanczos")
    dense, _ = smallest_eigenpairs(L, 4, method="dense")
    assert np.allclose(vals, dense, atol=1e-8)
    for k in range(4):
        r = L @ vecs[:, k] - vals[k] * vecs[:, k]
        assert np.linalg.norm(r) <= 1e-8 * max(1, vals[k])
    assert np.allclose(vecs.T @ vecs, np.eye(4), atol=1e-10)


def test_k_out_of_range():
    with pytest.raises(ValueError):
        smallest_eigenpairs(laplacian(3, [(0, 1), (1, 2)]), 3)


# ---------------------------------------------------------------- QP

def test_qp_active_bound():
    r = solve_qp(QpProblem(np.array([[2.0]]), np.zeros(1), lo=np.array([1.0])))
    assert r.status == SolverStatus.OPTIMAL
    assert r.x[0] == pytest.approx(1, abs=1e-7)
    assert r.objective == pytest.approx(1, abs=1e-7)


def test_qp_equality():
    # (x-3)^2 + (y-1)^2 expanded, constant 10
    p = QpProblem(2 * np.eye(2), np.array([-6.0, -2.0]), np.array([[1.0, 1.0]]), np.array([2.0]),
                  constant=10.0)
    r = solve_qp(p)
    assert np.allclose(r.x, [2, 0], atol=1e-7)
    assert r.objective == pytest.approx(2, abs=1e-7)


def test_qp_infeasible():
    p = QpProblem(np.zeros((1, 1)), np.zeros(1), A_in=np.array([[1.0], [-1.0]]),
                  b_in=np.array([0.0, -1.0]))
    assert solve_qp(p).status == SolverStatus.INFEASIBLE


def test_qp_sparse_inputs():
    n = 400
    H = sp.diags(np.full(n, 2.0))
    A = sp.csr_matrix(np.ones((1, n)))
    r = solve_qp(QpProblem(H, -np.arange(n, dtype=float) / n, A, np.array([1.0]),
                           lo=np.zeros(n), hi=np.full(n, 0.01)))
    assert r.ok
    assert r.x.sum() == pytest.approx(1, abs=1e-8)
    assert r.x.min() >= -1e-8 and r.x.max() <= 0.01 + 1e-8


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=1, max_value=5), st.integers(min_value=1, max_value=6),
       st.integers(min_value=0, max_value=2 ** 31))
def test_qp_matches_active_set_enumeration(n, m, seed):
    rng = np.random.default_rng(seed)
    M = rng.normal(size=(n, n))
    H = M @ M.T + 0.1 * np.eye(n)
    c = rng.normal(size=n)
    A = rng.normal(size=(m, n))
    x_feas = rng.normal(size=n)
    b = A @ x_feas + rng.uniform(0.01, 1.0, size=m)
    expected, _ = qp_by_active_sets(H, c, A, b)
    r = solve_qp(QpProblem(H, c, A_in=A, b_in=b))
    assert r.ok
    assert r.objective == pytest.approx(expected, abs=1e-6 * max(1, abs(expected)))


# ---------------------------------------------------------------- NLP

def test_nlp_bound_quadratic():
    p = NlpProblem(lambda x: ((x[0] - 2) ** 2, np.array([2 * (x[0] - 2)])), np.array([0.5]),
                   np.array([0.0]), np.array([1.0]))
    r = solve_nlp(p)
    assert r.ok
    assert r.x[0] == pytest.approx(1, abs=1e-8)


def _hyperbola():
    obj = lambda x: (x @ x, 2 * x)  # noqa: E731
    eq = lambda x: (np.array([x[0] * x[1] - 1]), np.array([[x[1], x[0]]]))  # noqa: E731
    return obj, eq


def test_nlp_hyperbola_from_positive_start():
    obj, eq = _hyperbola()
    r = solve_nlp(NlpProblem(obj, np.array([1.5, 1.5]), eq=eq))
    assert r.ok
    assert np.allclose(r.x, [1, 1], atol=1e-6)
    # grid check at 0.01 resolution on the feasible curve
    grid = np.arange(0.01, 5, 0.01)
    assert r.objective <= (grid ** 2 + grid ** -2).min() + 1e-9


def test_nlp_inequality_active():
    # min -(x+y) on the unit disc
    obj = lambda x: (-(x[0] + x[1]), np.array([-1.0, -1.0]))  # noqa: E731
    ineq = lambda x: (np.array([x @ x - 1]), 2 * x[None, :])  # noqa: E731
    r = solve_nlp(NlpProblem(obj, np.zeros(2), ineq=ineq))
    assert r.ok
    assert np.allclose(r.x, [math.sqrt(0.5)] * 2, atol=1e-6)
    assert r.ineq_multipliers[0] == pytest.approx(1 / math.sqrt(2), rel=1e-4)


def test_nlp_infeasible_bounds():
    p = NlpProblem(lambda x: (0.0, np.zeros(1)), np.zeros(1), np.array([1.0]), np.array([0.0]))
    assert solve_nlp(p).status == SolverStatus.INFEASIBLE


def test_nlp_wrong_gradient_detected():
    p = NlpProblem(lambda x: (x[0] ** 2, np.array([3 * x[0]])), np.array([1.0]))
    r = solve_nlp(p, derivative_check=True)
    assert r.status == SolverStatus.NUMERICAL_FAILURE
    assert "objective" in r.message
    err, _ = check_derivatives(p)
    assert err > 1e-4


def test_nlp_infeasible_equalities():
    # x = 0 and x = 1 cannot both hold
    eq = lambda x: (np.array([x[0], x[0] - 1]), np.array([[1.0], [1.0]]))  # noqa: E731
    r = solve_nlp(NlpProblem(lambda x: (0.0, np.zeros(1)), np.zeros(1), eq=eq), max_outer=30)
    assert r.status != SolverStatus.OPTIMAL


def test_lanczos_full_spectrum():
    n = 37
    L = laplacian(n, [(i, i + 1) for i in range(n - 1)])
    vals, vecs = smallest_eigenpairs(L, n - 1, method="lanczos")
    assert np.allclose(vals, path_laplacian_eigs(n), atol=1e-10)
    assert np.allclose(vecs.T @ vecs, np.eye(n - 1), atol=1e-10)
