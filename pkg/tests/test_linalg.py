"""Tests for the shared numeric kernels, including the independent oracles
(dense Gaussian elimination, characteristic-polynomial bisection) used by the
acceptance suite."""

import math

import numpy as np
import pytest
import scipy.sparse as sp

from tfmultiscale.linalg import (SolveError, gamma_fn, gen_eig_smallest,
                                 kkt_solve, spd_solve)


def random_spd(n, rng, scale=1.0):
    B = rng.standard_normal((n, n))
    return scale * (B @ B.T + n * np.eye(n))


def gauss_solve(A, b):
    """Plain Gaussian elimination with partial pivoting (test oracle)."""
    A = np.array(A, dtype=float)
    b = np.array(b, dtype=float)
    n = len(b)
    for col in range(n):
        p = col + np.argmax(np.abs(A[col:, col]))
        if p != col:
            A[[col, p]] = A[[p, col]]
            b[[col, p]] = b[[p, col]]
        for row in range(col + 1, n):
            f = A[row, col] / A[col, col]
            A[row, col:] -= f * A[col, col:]
            b[row] -= f * b[col]
    x = np.zeros(n)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - A[row, row + 1:] @ x[row + 1:]) / A[row, row]
    return x


def charpoly_eigs_bisect(A, B, tol=1e-12):
    """All eigenvalues of A v = lambda B v via sign changes of det(A - t B).

    Brackets each root of the characteristic polynomial by scanning, then
    bisects; independent of any LAPACK eigensolver.
    """
    n = A.shape[0]

    def f(t):
        return np.linalg.det(A - t * B)

    lo = -1.0
    hi = float(np.linalg.norm(A, 2) / min(np.linalg.eigvalsh(B))) + 1.0
    ts = np.linspace(lo, hi, 200001)
    vals = np.array([f(t) for t in ts])
    roots = []
    for i in range(len(ts) - 1):
        if vals[i] == 0.0:
            roots.append(ts[i])
        elif vals[i] * vals[i + 1] < 0:
            a, b = ts[i], ts[i + 1]
            for _ in range(100):
                m = 0.5 * (a + b)
                if f(a) * f(m) <= 0:
                    b = m
                else:
                    a = m
                if b - a < tol:
                    break
            roots.append(0.5 * (a + b))
    assert len(roots) == n, "oracle failed to isolate all roots"
    return np.array(sorted(roots))


def kkt_dense_oracle(A, C, b, g):
    """Saddle-point solve by dense block elimination (test oracle)."""
    A = np.asarray(A, dtype=float)
    C = np.asarray(C, dtype=float)
    Ainv_b = gauss_solve(A, b)
    Ainv_Ct = np.column_stack([gauss_solve(A, C[i]) for i in range(C.shape[0])])
    S = C @ Ainv_Ct
    mu = gauss_solve(S, C @ Ainv_b - g)
    x = Ainv_b - Ainv_Ct @ mu
    return x, mu


# ---------------------------------------------------------------- spd_solve

def test_spd_solve_identity():
    b = np.array([3.0, -1.0, 2.0])
    x = spd_solve(sp.identity(3, format="csc"), b)
    assert np.allclose(x, b, atol=1e-14)


def test_spd_solve_diagonal():
    x = spd_solve(sp.diags([2.0], format="csc", shape=(1, 1)), np.array([4.0]))
    assert x == pytest.approx(2.0)


def test_spd_solve_vs_dense_oracle():
    rng = np.random.default_rng(0)
    A = random_spd(8, rng)
    b = rng.standard_normal(8)
    x = spd_solve(sp.csc_matrix(A), b)
    assert np.allclose(x, gauss_solve(A, b), rtol=1e-9, atol=1e-12)


def test_spd_solve_residual_property():
    rng = np.random.default_rng(1)
    for _ in range(100):
        n = int(rng.integers(2, 51))
        A = random_spd(n, rng, scale=float(rng.uniform(0.1, 10)))
        b = rng.standard_normal(n)
        x = spd_solve(sp.csc_matrix(A), b)
        assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_spd_solve_rejects_indefinite():
    A = sp.diags([1.0, -1.0], format="csc", offsets=0)
    with pytest.raises(SolveError):
        spd_solve(A, np.ones(2))


# ---------------------------------------------------------- gen_eig_smallest

def test_gen_eig_identity_pair():
    e = gen_eig_smallest(np.eye(4), np.eye(4), 3)
    assert np.allclose(e.values, 1.0)


def test_gen_eig_diagonal():
    e = gen_eig_smallest(np.diag([3.0, 1.0, 2.0]), np.eye(3), 2)
    assert np.allclose(e.values, [1.0, 2.0])


def test_gen_eig_vs_charpoly_bisection():
    rng = np.random.default_rng(2)
    A = random_spd(6, rng)
    B = random_spd(6, rng)
    e = gen_eig_smallest(A, B, 6)
    oracle = charpoly_eigs_bisect(A, B)
    assert np.allclose(e.values, oracle, rtol=1e-9, atol=1e-9)


def test_gen_eig_b_orthonormal():
    rng = np.random.default_rng(3)
    A = random_spd(7, rng)
    B = random_spd(7, rng)
    e = gen_eig_smallest(A, B, 5)
    G = e.vectors.T @ B @ e.vectors
    assert np.allclose(G, np.eye(5), atol=1e-10)


def test_gen_eig_scaling_invariance():
    rng = np.random.default_rng(4)
    A = random_spd(6, rng)
    B = random_spd(6, rng)
    e1 = gen_eig_smallest(A, B, 4)
    e2 = gen_eig_smallest(7.3 * A, 7.3 * B, 4)
    assert np.allclose(e1.values, e2.values, rtol=1e-10)


def test_gen_eig_errors():
    with pytest.raises(ValueError):
        gen_eig_smallest(np.eye(3), np.eye(3), 4)
    with pytest.raises(SolveError):
        gen_eig_smallest(np.eye(2), np.diag([1.0, -1.0]), 1)


# ------------------------------------------------------------------ kkt_solve

def test_kkt_empty_constraints_reduces_to_spd():
    rng = np.random.default_rng(5)
    A = random_spd(5, rng)
    b = rng.standard_normal(5)
    x, mu = kkt_solve(sp.csc_matrix(A), sp.csr_matrix((0, 5)), b, np.zeros(0))
    assert len(mu) == 0
    assert np.allclose(x, gauss_solve(A, b), rtol=1e-9)


def test_kkt_hand_example():
    x, mu = kkt_solve(sp.identity(2, format="csc"),
                      sp.csr_matrix(np.array([[1.0, 0.0]])),
                      np.zeros(2), np.array([1.0]))
    assert np.allclose(x, [1.0, 0.0], atol=1e-12)
    assert mu[0] == pytest.approx(-1.0)


def test_kkt_vs_dense_oracle():
    rng = np.random.default_rng(6)
    A = random_spd(10, rng)
    C = rng.standard_normal((3, 10))
    b = rng.standard_normal(10)
    g = rng.standard_normal(3)
    x, mu = kkt_solve(sp.csc_matrix(A), sp.csr_matrix(C), b, g)
    xo, muo = kkt_dense_oracle(A, C, b, g)
    assert np.allclose(x, xo, rtol=1e-9, atol=1e-10)
    assert np.allclose(mu, muo, rtol=1e-9, atol=1e-10)
    assert np.linalg.norm(A @ x + C.T @ mu - b) < 1e-10 * max(np.linalg.norm(b), 1)
    assert np.linalg.norm(C @ x - g) < 1e-10 * max(np.linalg.norm(g), 1)


def test_kkt_rank_deficient_names_constraint():
    A = sp.identity(4, format="csc")
    C = sp.csr_matrix(np.array([[1.0, 0, 0, 0], [2.0, 0, 0, 0]]))
    with pytest.raises(SolveError, match="constraint"):
        kkt_solve(A, C, np.zeros(4), np.array([1.0, 1.0]))


# ------------------------------------------------------------------- gamma_fn

def test_gamma_known_values():
    assert gamma_fn(1.0) == pytest.approx(1.0, rel=1e-12)
    assert gamma_fn(2.0) == pytest.approx(1.0, rel=1e-12)
    assert gamma_fn(1.5) == pytest.approx(math.sqrt(math.pi) / 2, rel=1e-12)
    assert gamma_fn(1.5) == pytest.approx(0.886226925452758, rel=1e-12)


def test_gamma_functional_equation():
    for x in np.linspace(0.51, 1.5, 20):
        assert gamma_fn(x + 1) == pytest.approx(x * gamma_fn(x), rel=1e-11)


def test_gamma_range_check():
    with pytest.raises(ValueError):
        gamma_fn(0.5)
    with pytest.raises(ValueError):
        gamma_fn(3.0)
