"""Sparse assembly and direct solves.

Matrices are plain ``scipy.sparse.csr_matrix`` objects in canonical form
(sorted, duplicate-free column indices).  Factorizations go through
SuperLU, which pivots and therefore handles the symmetric-indefinite
saddle systems of the mixed method as well as the nonsymmetric upwind
transport matrices.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

RESIDUAL_RTOL = 1e-10


class FactorizationError(RuntimeError):
    """Raised when a matrix is numerically singular."""


class IterationError(RuntimeError):
    """Raised when an eigen iteration does not converge."""


def assemble(rows, cols, vals, shape) -> sp.csr_matrix:
    """Build a canonical CSR matrix from COO triplets (duplicates summed)."""
    A = sp.coo_matrix(
        (np.asarray(vals, dtype=float).ravel(),
         (np.asarray(rows).ravel(), np.asarray(cols).ravel())),
        shape=shape,
    ).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


class Factorization:
    """LU factorization of a square sparse matrix, reusable across solves."""

    def __init__(self, A):
        A = sp.csc_matrix(A, dtype=float)
        if A.shape[0] != A.shape[1]:
            raise ValueError(f"matrix must be square, got {A.shape}")
        self.A = A
        self.norm = spla.norm(A, np.inf) if A.nnz else 0.0
        try:
            self._lu = spla.splu(A, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise FactorizationError(f"factorization failed: {exc}") from None
        u_diag = np.abs(self._lu.U.diagonal())
        if u_diag.size and u_diag.min() <= 1e-14 * u_diag.max():
            k = int(np.argmin(u_diag))
            raise FactorizationError(
                f"numerically singular: pivot {k} has magnitude {u_diag[k]:.3e}"
            )

    def solve(self, b, check=True):
        b = np.asarray(b, dtype=float)
        x = self._lu.solve(b)
        if check:
            r = self.A @ x - b
            rn = np.linalg.norm(r, np.inf)
            scale = self.norm * np.linalg.norm(x, np.inf) + np.linalg.norm(b, np.inf)
            if rn > RESIDUAL_RTOL * scale:
                # one step of iterative refinement before giving up
                x = x - self._lu.solve(r)
                r = self.A @ x - b
                rn = np.linalg.norm(r, np.inf)
                if rn > RESIDUAL_RTOL * scale:
                    raise FactorizationError(
                        f"residual {rn:.3e} exceeds contract {RESIDUAL_RTOL * scale:.3e}"
                    )
        return x


def factor_solve(A, b):
    """Solve ``A x = b`` by sparse LU with partial pivoting."""
    return Factorization(A).solve(b)


def _saddle_solver(A, C):
    """Solver for ``A x + C s = M y, C^T x = 0`` returning x."""
    n = A.shape[0]
    if C is None:
        fac = Factorization(A)
        return lambda rhs: fac.solve(rhs)
    C = sp.csr_matrix(C)
    k = C.shape[1]
    K = sp.bmat([[A, C], [C.T, None]], format="csc")
    fac = Factorization(K)

    def solve(rhs):
        return fac.solve(np.concatenate([rhs, np.zeros(k)]))[:n]

    return solve


def smallest_rayleigh(A, M, constraint=None, block=4, tol=1e-8, maxiter=500, seed=0):
    """Smallest generalized Rayleigh quotient ``x^T A x / x^T M x``.

    The minimum is taken over ``{x : constraint^T x = 0}`` (all of R^n when
    ``constraint`` is None).  Uses block inverse iteration with a
    Rayleigh-Ritz step so that clustered eigenvalues do not stall it.
    The constrained inverse is applied through the saddle system
    ``[[A, C], [C^T, 0]]``, which is nonsingular whenever A is positive
    definite on the constrained subspace.

    Returns ``(value, vector)`` with ``vector`` M-normalized.
    """
    A = sp.csr_matrix(A, dtype=float)
    M = sp.csr_matrix(M, dtype=float)
    n = A.shape[0]
    free = n - (0 if constraint is None else constraint.shape[1])
    if free < 1:
        raise ValueError("constrained subspace is trivial")
    # a block wider than the subspace would pick up rounding directions
    block = max(1, min(block, free))
    solve = _saddle_solver(A, constraint)
    if constraint is not None:
        C = sp.csr_matrix(constraint, dtype=float)
        CtC = Factorization(C.T @ C)

        def project(r):
            return r - C @ CtC.solve(C.T @ r, check=False)
    else:
        def project(r):
            return r

    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, block))
    lam = np.inf
    for _ in range(maxiter):
        Y = np.column_stack([solve(M @ X[:, j]) for j in range(block)])
        Q, _ = np.linalg.qr(Y)
        Ar = Q.T @ (A @ Q)
        Mr = Q.T @ (M @ Q)
        vals, vecs = sla.eigh(0.5 * (Ar + Ar.T), 0.5 * (Mr + Mr.T))
        X = Q @ vecs
        lam = float(vals[0])
        x = X[:, 0] / np.sqrt(X[:, 0] @ (M @ X[:, 0]))
        Ax, Mx = A @ x, M @ x
        r = project(Ax - lam * Mx)
        if np.linalg.norm(r) <= tol * (np.linalg.norm(Ax) + abs(lam) * np.linalg.norm(Mx)):
            return lam, x
    raise IterationError(f"inverse iteration did not converge; last value {lam!r}")
