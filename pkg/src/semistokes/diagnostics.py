"""A posteriori evaluation of the discrete stability and compactness estimates.

Every function is a pure function of a mesh, a field or a stored
trajectory.  Quantities whose integrands are cellwise constant are
evaluated exactly; the rest use the cell and face rules of ``fespace``.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass, fields

import numpy as np

from .errors import PreconditionError
from .fespace import (VelocityField, cell_averages, cell_quadrature, face_quadrature,
                      operators, p1_gradients, rt0_values)
from .hodge import decompose
from .linalg import Factorization, assemble
from .mesh import GeometryError, refine_uniform
from .momentum import FluidParams, effective_flux, force_load, pressure_potential
from .transport import Renormalizer, renormalized_terms


# --------------------------------------------------------------------------
# energy


@dataclass
class EnergyLedger:
    """Per-step terms of the energy balance; index ``m - 1`` holds step ``m``.

    ``P_int`` has ``M + 1`` entries (``m = 0..M``).  ``time_diss`` and
    ``face_diss`` are the exact Taylor remainders, ``face_diss_lower`` the
    intermediate-density lower bound used in the estimate.  ``work`` is
    ``dt int f.u`` and ``f_sq`` is ``dt ||f||^2``.
    """

    P_int: np.ndarray
    time_diss: np.ndarray
    face_diss: np.ndarray
    face_diss_lower: np.ndarray
    u_sq: np.ndarray
    div_sq: np.ndarray
    w_sq: np.ndarray
    curl_w_sq: np.ndarray
    work: np.ndarray
    f_sq: np.ndarray
    params: FluidParams

    @property
    def M(self):
        return len(self.time_diss)

    def viscous(self):
        """``dt [(mu + lam) ||div u||^2 + mu ||w||^2]`` per step."""
        return self.params.bulk * self.div_sq + self.params.mu * self.w_sq

    def balance_residual(self):
        """Relative residual of the exact per-step balance."""
        lhs = self.P_int[1:] + self.time_diss + self.face_diss + self.viscous()
        rhs = self.P_int[:-1] + self.work
        scale = np.maximum.reduce([np.abs(lhs), np.abs(rhs), np.abs(self.work)])
        scale = np.where(scale > 0, scale, 1.0)
        return np.abs(lhs - rhs) / scale

    def inequality_slack(self):
        """Cumulative slack of the estimate with lower-bounded face dissipation.

        Entry ``m - 1`` is ``int P(rho^0) + sum work - [int P(rho^m) + sum
        dissipation]`` over steps ``1..m``, divided by ``int P(rho^0)``.
        """
        diss = np.cumsum(self.time_diss + self.face_diss_lower + self.viscous())
        slack = self.P_int[0] + np.cumsum(self.work) - (self.P_int[1:] + diss)
        return slack / max(abs(self.P_int[0]), 1e-300)

    def rows(self):
        """One dict per step with a stable key order (for CSV output)."""
        names = [f.name for f in fields(self) if f.name not in ("P_int", "params")]
        res = self.balance_residual()
        slack = self.inequality_slack()
        out = []
        for k in range(self.M):
            row = {"m": k + 1, "P_int": float(self.P_int[k + 1])}
            row.update({n: float(getattr(self, n)[k]) for n in names})
            row["balance_residual"] = float(res[k])
            row["inequality_slack"] = float(slack[k])
            out.append(row)
        return out


def energy_ledger(trajectory, f=None, params: FluidParams | None = None) -> EnergyLedger:
    """Evaluate every energy term along a converged trajectory.

    ``f`` overrides the stored cellwise forces (list indexed by step);
    ``params`` defaults to the trajectory's configuration.
    """
    params = params or trajectory.config.params
    forces = trajectory.forces if f is None else f
    mesh = trajectory.mesh
    ops = operators(mesh)
    dt = trajectory.dt
    R = Renormalizer.power(params.gamma, params.a / (params.gamma - 1.0))
    M = trajectory.M
    cols = {k: np.zeros(M) for k in ("time_diss", "face_diss", "face_diss_lower", "u_sq",
                                       "div_sq", "w_sq", "curl_w_sq", "work", "f_sq")}
    P_int = np.array([mesh.areas @ pressure_potential(s.rho, params).values
                      for s in trajectory.states])
    for m in range(1, M + 1):
        s0, s1 = trajectory.states[m - 1], trajectory.states[m]
        terms = renormalized_terms(s0.rho, s1.rho, s1.u, dt, R)
        fm = np.asarray(forces[m], dtype=float)
        u = s1.u.coeffs
        w = s1.w.values
        cw = ops.G @ w
        cols["time_diss"][m - 1] = terms["time"]
        cols["face_diss"][m - 1] = terms["face"]
        cols["face_diss_lower"][m - 1] = terms["face_lower"]
        cols["u_sq"][m - 1] = dt * (u @ (ops.M_V @ u))
        cols["div_sq"][m - 1] = dt * (mesh.areas @ s1.u.div() ** 2)
        cols["w_sq"][m - 1] = dt * (w @ (ops.M_W @ w))
        cols["curl_w_sq"][m - 1] = dt * (cw @ (ops.M_V @ cw))
        cols["work"][m - 1] = dt * (force_load(mesh, fm) @ u)
        cols["f_sq"][m - 1] = dt * (mesh.areas @ np.sum(fm**2, axis=1))
    return EnergyLedger(P_int=P_int, params=params, **cols)


# --------------------------------------------------------------------------
# density estimates


def _grad_sup(mesh, phi, eps=1e-6):
    """Sampled ``max |D phi|`` over vertices and cell quadrature points."""
    pts, _ = cell_quadrature(mesh)
    x = np.vstack([mesh.vertices, pts.reshape(-1, 2), mesh.centroids])
    gx = (phi(x[:, 0] + eps, x[:, 1]) - phi(x[:, 0] - eps, x[:, 1])) / (2 * eps)
    gy = (phi(x[:, 0], x[:, 1] + eps) - phi(x[:, 0], x[:, 1] - eps)) / (2 * eps)
    return float(np.max(np.hypot(gx, gy)))


def upwind_diffusion_bound(trajectory, phi, grad_sup=None):
    """Artificial upwind diffusion tested against ``Pi_Q phi - phi``.

    Returns ``(lhs, bound)`` with ``bound = ||D phi||_inf h^(1/2)``; the
    face integrals use two-point Gauss.  ``phi(x, y)`` is time independent.
    """
    mesh = trajectory.mesh
    fi = mesh.interior_faces
    em, ep = mesh.face_cells[fi, 0], mesh.face_cells[fi, 1]
    phi_h = cell_averages(mesh, phi)
    pts, w = face_quadrature(mesh, fi)
    phi_face = np.sum(phi(pts[..., 0], pts[..., 1]) * w, axis=1)     # int_Gamma phi
    L = mesh.face_lengths[fi]
    total = 0.0
    for m in range(1, trajectory.M + 1):
        s = trajectory.states[m]
        r = s.rho.values
        q = s.u.coeffs                         # flux from E- to E+
        jump = r[ep] - r[em]
        # seen from E-: outward flux q, outside minus inside = jump
        from_minus = jump * np.minimum(q, 0.0) / L * (phi_h[em] * L - phi_face)
        # seen from E+: outward flux -q, outside minus inside = -jump
        from_plus = -jump * np.minimum(-q, 0.0) / L * (phi_h[ep] * L - phi_face)
        total += trajectory.dt * float(np.sum(from_minus + from_plus))
    gs = _grad_sup(mesh, phi) if grad_sup is None else grad_sup
    return abs(total), gs * np.sqrt(mesh.h)


def time_continuity_bound(trajectory, phi, grad_sup=None):
    """``|int int d/dt(Pi_L rho_h) phi|`` and the reference ``(1 + h^(1/2)) ||D phi||_inf``.

    With a time-independent ``phi`` the time integral telescopes per step
    into ``int (rho^m - rho^(m-1)) Pi_Q phi``.
    """
    mesh = trajectory.mesh
    phi_h = cell_averages(mesh, phi)
    total = 0.0
    for m in range(1, trajectory.M + 1):
        d = trajectory.states[m].rho.values - trajectory.states[m - 1].rho.values
        total += float(mesh.areas @ (d * phi_h))
    gs = _grad_sup(mesh, phi) if grad_sup is None else grad_sup
    return abs(total), (1.0 + np.sqrt(mesh.h)) * gs


def flux_pairing(trajectory, params: FluidParams | None = None, t=None):
    """``int_0^t int P_eff(rho_h, u_h) rho_h``; exact for cellwise constants."""
    params = params or trajectory.config.params
    T = trajectory.dt * trajectory.M
    t = T if t is None else float(t)
    if not 0 < t <= T * (1 + 1e-12):
        raise ValueError(f"t must lie in (0, {T}], got {t}")
    mesh = trajectory.mesh
    total = 0.0
    for m in range(1, trajectory.M + 1):
        a, b = (m - 1) * trajectory.dt, min(m * trajectory.dt, t)
        if b <= a:
            break
        s = trajectory.states[m]
        peff = effective_flux(s.rho, s.u, params).values
        total += (b - a) * float(mesh.areas @ (peff * s.rho.values))
    return total


# --------------------------------------------------------------------------
# velocity estimates


def _require_perp(mesh, z, tol=1e-8):
    if not isinstance(z, VelocityField):
        raise TypeError("expected a VelocityField")
    nz = z.norm()
    if nz == 0:
        return
    curl_part = decompose(mesh, z).curl_part.norm()
    if curl_part > tol * nz:
        raise PreconditionError(
            f"field is not orthogonal to discrete curls (curl part {curl_part:.2e} of {nz:.2e})")


def _boundary_distance(mesh, x):
    """Distance from points ``x`` (n, 2) to the polygonal boundary."""
    bf = mesh.faces[mesh.boundary_faces]
    a = mesh.vertices[bf[:, 0]]
    d = mesh.vertices[bf[:, 1]] - a
    dist = np.full(len(x), np.inf)
    for start in range(0, len(x), 4096):
        xs = x[start:start + 4096]
        rel = xs[:, None, :] - a[None]
        s = np.clip(np.einsum("nfd,fd->nf", rel, d) / np.sum(d * d, axis=1), 0.0, 1.0)
        diff = rel - s[..., None] * d[None]
        dist[start:start + 4096] = np.sqrt(np.min(np.sum(diff**2, axis=2), axis=1))
    return dist


def translation_norm(mesh, z: VelocityField, xi, check=True):
    """``||z(.) - z(. - xi)||`` in ``L^2(Omega_xi)``, ``Omega_xi = {dist(x, bdry) > |xi|}``.

    Uses the three-point cell rule; quadrature points outside
    ``Omega_xi`` are dropped.
    """
    xi = np.asarray(xi, dtype=float)
    if check:
        _require_perp(mesh, z)
    pts, w = cell_quadrature(mesh)
    x = pts.reshape(-1, 2)
    w = w.ravel()
    cells = np.repeat(np.arange(mesh.n_cells), pts.shape[1])
    r = float(np.hypot(*xi))
    keep = _boundary_distance(mesh, x) > r
    if not np.any(keep):
        raise GeometryError(f"Omega_xi is empty for |xi| = {r}")
    if r == 0:
        return 0.0
    x, w, cells = x[keep], w[keep], cells[keep]
    full = z.full()
    shifted = x - xi
    sc = mesh.locate_points(shifted)
    if np.any(sc < 0):
        raise GeometryError("shifted quadrature point fell outside the mesh")
    d = rt0_values(mesh, full, cells, x) - rt0_values(mesh, full, sc, shifted)
    return float(np.sqrt(w @ np.sum(d * d, axis=1)))


def jump_sums(mesh, z, check=True):
    """``(max_G |int_G [z x nu]|, sum_G |int_G [z x nu]|^2)`` over interior faces.

    ``z`` is a ``VelocityField`` or an array of fluxes on all faces (the
    latter skips the orthogonality check).  ``z x nu = z_x nu_y - z_y nu_x``
    and the jump is the ``E+`` trace minus the ``E-`` trace.
    """
    if isinstance(z, VelocityField):
        if check:
            _require_perp(mesh, z)
        full = z.full()
    else:
        full = np.asarray(z, dtype=float)
    fi = mesh.interior_faces
    if len(fi) == 0:
        return 0.0, 0.0
    pts, w = face_quadrature(mesh, fi)
    nu = mesh.normals[fi]
    em = np.repeat(mesh.face_cells[fi, 0][:, None], pts.shape[1], axis=1)
    ep = np.repeat(mesh.face_cells[fi, 1][:, None], pts.shape[1], axis=1)
    d = rt0_values(mesh, full, ep, pts) - rt0_values(mesh, full, em, pts)
    tang = d[..., 0] * nu[:, None, 1] - d[..., 1] * nu[:, None, 0]
    J = np.abs(np.sum(tang * w, axis=1))
    return float(J.max()), float(J @ J)


_FINE: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def _fine_space(mesh):
    """Scalar P1_0 on the uniformly refined mesh: curls of hats and ``H^1`` factor."""
    data = _FINE.get(mesh)
    if data is None:
        fine = refine_uniform(mesh)
        fops = operators(fine)
        vi = fine.interior_vertices
        grads = p1_gradients(fine)                                   # (nc, 3, 2)
        nc = fine.n_cells
        rows = np.repeat(np.arange(nc), 3)
        cols = fine.cells.ravel()
        # curl of hat j on fine cell c, weighted by the cell area
        cx = assemble(rows, cols, (grads[..., 1] * fine.areas[:, None]).ravel(),
                      (nc, fine.n_vertices)).tocsc()[:, vi]
        cy = assemble(rows, cols, (-grads[..., 0] * fine.areas[:, None]).ravel(),
                      (nc, fine.n_vertices)).tocsc()[:, vi]
        S = (fops.K_W + fops.M_W).tocsc()
        # refine_uniform numbers the children of coarse cell c as 4c..4c+3
        parent = np.arange(nc) // 4
        data = {"fine": fine, "cx": cx.tocsr(), "cy": cy.tocsr(), "fac": Factorization(S),
                "parent": parent}
        _FINE[mesh] = data
    return data


def negative_norm_curl(mesh, z: VelocityField, check=True):
    """Discrete ``W^{-1,2}`` norm of the scalar curl of ``z``.

    ``sup_phi |int z . curl phi| / ||phi||_{W^{1,2}}`` over scalar P1
    functions vanishing on the boundary of the once-refined mesh, computed
    as ``sqrt(b^T S^{-1} b)``.  On the mesh of ``z`` itself this supremum
    is identically zero for fields orthogonal to the discrete curls, so a
    strictly richer test space is required.  ``z`` may also be an array of
    fluxes on all faces, which skips the orthogonality check.
    """
    if isinstance(z, VelocityField):
        if check:
            _require_perp(mesh, z)
        full = z.full()
    else:
        full = np.asarray(z, dtype=float)
    d = _fine_space(mesh)
    fine = d["fine"]
    # the coarse RT0 field is linear on each fine cell: the centroid rule is exact
    zc = rt0_values(mesh, full, d["parent"], fine.centroids)
    b = d["cx"].T @ zc[:, 0] + d["cy"].T @ zc[:, 1]
    if not np.any(b):
        return 0.0
    return float(np.sqrt(max(b @ d["fac"].solve(b), 0.0)))


def velocity_l2_error(mesh, u: VelocityField, exact):
    """``||u - exact||`` by the three-point cell rule; ``exact(x, y) -> (ux, uy)``."""
    pts, w = cell_quadrature(mesh)
    cells = np.repeat(np.arange(mesh.n_cells)[:, None], pts.shape[1], axis=1)
    uh = rt0_values(mesh, u.full(), cells, pts)
    ex = np.stack(exact(pts[..., 0], pts[..., 1]), axis=-1)
    return float(np.sqrt(np.sum(w * np.sum((uh - ex) ** 2, axis=-1))))
