"""Discrete Hodge decomposition ``V_h = curl W_h + V_h^{0,perp}``.

In 2D the zero-trace P1 space has no nonzero curl-free members, so the
curl part is found from a scalar Dirichlet problem with the P1 stiffness
matrix (``G^T M_V G``), and no gauge fixing is needed.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import PreconditionError
from .fespace import DensityField, VelocityField, VorticityField, operators
from .linalg import Factorization, smallest_rayleigh


@dataclass(frozen=True, eq=False)
class HodgeParts:
    zeta: VorticityField
    z: VelocityField

    @property
    def curl_part(self) -> VelocityField:
        return VelocityField(self.zeta.mesh, operators(self.zeta.mesh).G @ self.zeta.values)


_FACTORS: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _factors(mesh):
    f = _FACTORS.get(mesh)
    if f is None:
        ops = operators(mesh)
        K = ops.B.T @ ops.A_Q @ ops.B
        MG = ops.M_V @ ops.G
        saddle = sp.bmat([[K, MG], [MG.T, None]], format="csc")
        f = {"stiff": Factorization(ops.K_W), "div": Factorization(saddle)}
        _FACTORS[mesh] = f
    return f


def decompose(mesh, u: VelocityField) -> HodgeParts:
    """Split ``u = curl zeta + z`` with ``z`` orthogonal to all discrete curls."""
    ops = operators(mesh)
    rhs = ops.G.T @ (ops.M_V @ u.coeffs)
    zeta = _factors(mesh)["stiff"].solve(rhs)
    z = u.coeffs - ops.G @ zeta
    return HodgeParts(VorticityField(mesh, zeta), VelocityField(mesh, z))


def solve_div(mesh, q) -> VelocityField:
    """The unique ``v`` in ``V_h^{0,perp}`` with ``div v = q`` cellwise.

    ``q`` must have zero mean.  Solved as the div-div form with a
    multiplier on ``curl W_h`` enforcing orthogonality.
    """
    q = q.values if isinstance(q, DensityField) else np.asarray(q, dtype=float)
    mean = float(mesh.areas @ q)
    if abs(mean) > 1e-10 * max(np.sqrt(mesh.areas @ q**2), 1e-300) * np.sqrt(mesh.volume):
        raise PreconditionError(f"right-hand side must have zero mean, got integral {mean:.3e}")
    ops = operators(mesh)
    n_v = ops.M_V.shape[0]
    rhs = np.concatenate([ops.B.T @ (ops.A_Q @ q), np.zeros(ops.M_W.shape[0])])
    x = _factors(mesh)["div"].solve(rhs)
    return VelocityField(mesh, x[:n_v])


def poincare_constants(mesh):
    """Discrete Poincare constants ``(C_div, C_curl)``.

    ``C_div = sup ||v|| / ||div v||`` over ``V_h^{0,perp}`` and
    ``C_curl = sup ||w|| / ||curl w||`` over ``W_h``, each as the inverse
    square root of the smallest generalized Rayleigh quotient.  A space
    with no nonzero members (no interior faces or vertices) gives 0.
    """
    ops = operators(mesh)
    K = ops.B.T @ ops.A_Q @ ops.B
    c_div = c_curl = 0.0
    if ops.M_V.shape[0]:
        C = ops.M_V @ ops.G if ops.M_W.shape[0] else None
        lam_div, _ = smallest_rayleigh(K, ops.M_V, constraint=C)
        c_div = 1.0 / np.sqrt(lam_div)
    if ops.M_W.shape[0]:
        lam_curl, _ = smallest_rayleigh(ops.K_W, ops.M_W)
        c_curl = 1.0 / np.sqrt(lam_curl)
    return c_div, c_curl
