"""Mixed vorticity-velocity solve of the quasi-static momentum balance.

Unknowns are ``w`` in ``W_h`` and ``u`` in ``V_h``.  For a given cellwise
pressure ``p`` and cellwise force ``f`` they satisfy, for all test pairs,

    int mu curl(w).v + ((mu + lam) div u - p) div v = int f.v
    int w eta - u.curl(eta) = 0

The second equation is scaled by ``-mu`` so that the block matrix

    [[-mu M_W,       mu G^T M_V   ],
     [ mu M_V G,  (mu + lam) B^T A B]]

is symmetric.  It depends only on the mesh and the viscosities, so it is
factorized once and reused for every pressure.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, PreconditionError
from .fespace import DensityField, VelocityField, VorticityField, operators
from .linalg import Factorization, FactorizationError

DIM = 2


@dataclass(frozen=True)
class FluidParams:
    """Viscosities and barotropic pressure law ``p = a rho**gamma``."""

    mu: float = 1.0
    lam: float = 0.0
    a: float = 1.0
    gamma: float = 1.4

    def __post_init__(self):
        if not self.mu > 0:
            raise ConfigError(f"mu must be positive, got {self.mu}")
        if not DIM * self.lam + 2 * self.mu >= 0:
            raise ConfigError(f"need N*lambda + 2*mu >= 0, got lambda={self.lam}, mu={self.mu}")
        if not self.a > 0:
            raise ConfigError(f"pressure constant a must be positive, got {self.a}")
        if not self.gamma > 1:
            raise ConfigError("adiabatic exponent must satisfy gamma > 1 (standing assumption "
                              f"of the model), got {self.gamma}")

    @property
    def bulk(self):
        return self.mu + self.lam


def _values(rho):
    return rho.values if isinstance(rho, DensityField) else np.asarray(rho, dtype=float)


def pressure(rho, params: FluidParams) -> DensityField:
    """Cellwise ``a rho**gamma``."""
    r = _values(rho)
    if np.any(r < 0):
        raise PreconditionError("density must be nonnegative")
    out = params.a * r**params.gamma
    return DensityField(rho.mesh, out) if isinstance(rho, DensityField) else out


def pressure_potential(rho, params: FluidParams) -> DensityField:
    """Cellwise ``a / (gamma - 1) rho**gamma``; ``rho P' - P = p``."""
    r = _values(rho)
    if np.any(r < 0):
        raise PreconditionError("density must be nonnegative")
    out = params.a / (params.gamma - 1.0) * r**params.gamma
    return DensityField(rho.mesh, out) if isinstance(rho, DensityField) else out


def effective_flux(rho, u: VelocityField, params: FluidParams) -> DensityField:
    """Cellwise ``p(rho) - (mu + lam) div u``."""
    p = pressure(rho, params)
    vals = _values(p) - params.bulk * u.div()
    return DensityField(u.mesh, vals)


def force_load(mesh, f):
    """``int f . psi_j`` for a cellwise-constant force ``f`` of shape (nc, 2)."""
    f = np.asarray(f, dtype=float).reshape(mesh.n_cells, 2)
    p = mesh.vertices[mesh.cells]
    # int_E psi_i = s_i (x_c - p_i) / 2
    loc = np.einsum("cd,cid->ci", f, mesh.centroids[:, None, :] - p) * 0.5 * mesh.cell_face_signs
    full = np.bincount(mesh.cell_faces.ravel(), loc.ravel(), minlength=mesh.n_faces)
    return full[mesh.interior_faces]


class MomentumSolver:
    """Factorized saddle system for one mesh and one set of viscosities."""

    def __init__(self, mesh, params: FluidParams):
        if not params.bulk > 0:
            raise ConfigError(
                "mu + lambda must be positive for the div-div form to control V_h; "
                f"got {params.bulk}"
            )
        self.mesh = mesh
        self.params = params
        ops = operators(mesh)
        mu = params.mu
        self.n_w = ops.M_W.shape[0]
        self.n_v = ops.M_V.shape[0]
        K = ops.B.T @ ops.A_Q @ ops.B
        MG = ops.M_V @ ops.G
        self.matrix = sp.bmat(
            [[-mu * ops.M_W, mu * MG.T], [mu * MG, params.bulk * K]], format="csc"
        )
        try:
            self._fac = Factorization(self.matrix)
        except FactorizationError as exc:
            raise RuntimeError(f"momentum system is singular: {exc}") from None
        self._ops = ops

    def rhs(self, p, f):
        ops = self._ops
        load = force_load(self.mesh, f) if f is not None else np.zeros(self.n_v)
        return np.concatenate([np.zeros(self.n_w), load + ops.B.T @ (ops.A_Q @ p)])

    def solve(self, p, f):
        """Return ``(w, u)`` for cellwise pressure ``p`` and force ``f``."""
        x = self._fac.solve(self.rhs(np.asarray(p, dtype=float), f))
        return (VorticityField(self.mesh, x[: self.n_w]),
                VelocityField(self.mesh, x[self.n_w:]))

    def residual(self, w, u, p, f):
        """Relative residual of both discrete equations."""
        b = self.rhs(np.asarray(p, dtype=float), f)
        x = np.concatenate([w.values, u.coeffs])
        r = self.matrix @ x - b
        scale = np.linalg.norm(b) + np.linalg.norm(self.matrix @ x)
        return float(np.linalg.norm(r) / scale) if scale > 0 else float(np.linalg.norm(r))


_SOLVERS: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def momentum_solver(mesh, params: FluidParams) -> MomentumSolver:
    """Cached :class:`MomentumSolver` for ``(mesh, mu, lam)``."""
    per_mesh = _SOLVERS.setdefault(mesh, {})
    key = (params.mu, params.lam)
    if key not in per_mesh:
        per_mesh[key] = MomentumSolver(mesh, params)
    return per_mesh[key]


def solve_momentum(mesh, rho, f, params: FluidParams, alpha=1.0):
    """Solve the mixed momentum system with pressure ``alpha * p(rho)``."""
    p = alpha * _values(pressure(rho, params))
    return momentum_solver(mesh, params).solve(p, f)


def momentum_identities(w: VorticityField, u: VelocityField, rho, f, params: FluidParams):
    """Both energy identities implied by the momentum equations.

    ``pairing``: ``int p div u`` against ``(mu+lam)||div u||^2 + mu||w||^2 - int f.u``
    (test with ``v = u`` and ``eta = w``).
    ``vorticity``: ``mu ||curl w||^2`` against ``int f . curl w`` (test with
    ``v = curl w``; the pressure drops out since ``div curl = 0``).
    Each entry is ``(lhs, rhs, relative_residual)``.
    """
    mesh = u.mesh
    ops = operators(mesh)
    p = _values(pressure(rho, params))
    div = u.div()
    f = np.zeros((mesh.n_cells, 2)) if f is None else np.asarray(f, float)
    load = force_load(mesh, f)
    cw = ops.G @ w.values
    lhs1 = float(mesh.areas @ (p * div))
    rhs1 = float(params.bulk * (mesh.areas @ div**2) + params.mu * (w.values @ (ops.M_W @ w.values))
                 - load @ u.coeffs)
    lhs2 = float(params.mu * (cw @ (ops.M_V @ cw)))
    rhs2 = float(load @ cw)

    def rel(a, b, *terms):
        scale = max([abs(a), abs(b)] + [abs(t) for t in terms])
        return abs(a - b) / scale if scale > 0 else 0.0

    return {
        "pairing": (lhs1, rhs1, rel(lhs1, rhs1, params.bulk * (mesh.areas @ div**2), load @ u.coeffs)),
        "vorticity": (lhs2, rhs2, rel(lhs2, rhs2)),
    }
