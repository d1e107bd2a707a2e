import numpy as np
import pytest
import scipy.sparse as sp

from semistokes.linalg import (Factorization, FactorizationError, assemble, factor_solve,
                               smallest_rayleigh)


def test_identity():
    b = np.array([1.0, -2.0, 3.5])
    assert np.array_equal(factor_solve(sp.identity(3, format="csr"), b), b)


def test_indefinite_saddle():
    A = sp.csr_matrix([[0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(factor_solve(A, [1.0, 2.0]), [2.0, 1.0], atol=1e-15)


def test_spd_against_dense():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((50, 50))
    A = X @ X.T + 50 * np.eye(50)
    b = rng.standard_normal(50)
    x = factor_solve(sp.csr_matrix(A), b)
    ref = np.linalg.solve(A, b)
    assert np.linalg.norm(x - ref) <= 1e-10 * np.linalg.norm(ref)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * (np.linalg.norm(A) * np.linalg.norm(x)
                                                 + np.linalg.norm(b))


def test_singular_reports_pivot():
    A = sp.csr_matrix([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(FactorizationError, match="pivot|singular"):
        Factorization(A)


def test_nonsquare_rejected():
    with pytest.raises(ValueError):
        Factorization(sp.csr_matrix(np.ones((2, 3))))


def test_assembly_order_independence():
    rng = np.random.default_rng(1)
    n = 40
    rows = rng.integers(0, 10, n)
    cols = rng.integers(0, 10, n)
    vals = rng.integers(-5, 5, n).astype(float)      # integers: sums are order independent
    A = assemble(rows, cols, vals, (10, 10))
    p = rng.permutation(n)
    B = assemble(rows[p], cols[p], vals[p], (10, 10))
    assert A.has_sorted_indices and A.has_canonical_format
    for name in ("indptr", "indices", "data"):
        assert getattr(A, name).tobytes() == getattr(B, name).tobytes()


def test_rayleigh_identity_pencil():
    M = sp.diags([1.0, 2.0, 3.0, 4.0, 5.0])
    val, vec = smallest_rayleigh(M, M)
    assert val == pytest.approx(1.0, rel=1e-12)
    assert vec @ (M @ vec) == pytest.approx(1.0)


def test_rayleigh_diagonal():
    val, vec = smallest_rayleigh(sp.diags([1.0, 4.0]), sp.identity(2))
    assert val == pytest.approx(1.0, rel=1e-12)
    assert abs(abs(vec[0]) - 1) < 1e-10 and abs(vec[1]) < 1e-10


def test_rayleigh_laplacian_1d():
    n = 200
    hh = 1.0 / (n + 1)
    A = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]) / hh**2
    val, _ = smallest_rayleigh(A, sp.identity(n))
    exact = 4 / hh**2 * np.sin(np.pi * hh / 2) ** 2          # discrete sine mode
    assert abs(val - exact) <= 1e-6 * exact


def test_rayleigh_with_constraint():
    # excluding e1 leaves diag(4, 9) -> 4
    A = sp.diags([1.0, 4.0, 9.0])
    C = sp.csr_matrix([[1.0], [0.0], [0.0]])
    val, vec = smallest_rayleigh(A, sp.identity(3), constraint=C)
    assert val == pytest.approx(4.0, rel=1e-12) and abs(vec[0]) < 1e-12
