"""Lowest-order finite element spaces on a triangular mesh.

``Q_h``  piecewise constants, one value per cell.
``V_h``  Raviart-Thomas RT0; the degree of freedom of a face is the
         integrated normal flux along the face normal ``nu``.  Boundary
         fluxes are zero, so only interior faces carry unknowns.
``W_h``  continuous P1 scalars vanishing on the boundary (the 2D
         curl-conforming space); one value per interior vertex.

On a cell with vertices ``p_i`` and outward flux ``F_i`` through the face
opposite ``p_i``, an RT0 field reads ``u(x) = sum_i F_i (x - p_i) / (2|E|)``,
so ``div u = sum_i F_i / |E|``.  For ``w`` in ``W_h`` the discrete curl
``(d_y w, -d_x w)`` lies in ``V_h`` with face flux ``w(end) - w(start)``.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .linalg import assemble
from .mesh import Mesh

# edge-midpoint rule, exact for quadratics on triangles
TRI_BARY = np.array([[0.0, 0.5, 0.5], [0.5, 0.0, 0.5], [0.5, 0.5, 0.0]])
TRI_WEIGHTS = np.full(3, 1.0 / 3.0)
# 2-point Gauss on [0, 1]
EDGE_POINTS = 0.5 + np.array([-0.5, 0.5]) / np.sqrt(3.0)
EDGE_WEIGHTS = np.array([0.5, 0.5])


@dataclass(frozen=True, eq=False)
class DensityField:
    """A ``Q_h`` function: one value per cell."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.mesh.n_cells,):
            raise ValueError(f"expected {self.mesh.n_cells} cell values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite values in cell field")
        object.__setattr__(self, "values", v)

    def integral(self):
        return float(self.mesh.areas @ self.values)

    def norm(self):
        return float(np.sqrt(self.mesh.areas @ self.values**2))


@dataclass(frozen=True, eq=False)
class VelocityField:
    """A ``V_h`` function: integrated normal flux on every interior face."""

    mesh: Mesh
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.shape != (len(self.mesh.interior_faces),):
            raise ValueError(
                f"expected {len(self.mesh.interior_faces)} interior-face fluxes, got shape {c.shape}"
            )
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, np.zeros(len(mesh.interior_faces)))

    def full(self):
        """Fluxes on all faces, zero on the boundary."""
        out = np.zeros(self.mesh.n_faces)
        out[self.mesh.interior_faces] = self.coeffs
        return out

    def div(self):
        return div_V(self)

    def norm(self):
        return float(np.sqrt(self.coeffs @ (operators(self.mesh).M_V @ self.coeffs)))


@dataclass(frozen=True, eq=False)
class VorticityField:
    """A ``W_h`` function: one value per interior vertex (zero on the boundary)."""

    mesh: Mesh
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (len(self.mesh.interior_vertices),):
            raise ValueError(
                f"expected {len(self.mesh.interior_vertices)} interior-vertex values, got shape {v.shape}"
            )
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, np.zeros(len(mesh.interior_vertices)))

    def full(self):
        """Values on all vertices, zero on the boundary."""
        out = np.zeros(self.mesh.n_vertices)
        out[self.mesh.interior_vertices] = self.values
        return out

    def norm(self):
        return float(np.sqrt(self.values @ (operators(self.mesh).M_W @ self.values)))


# --------------------------------------------------------------------------
# operator matrices


@dataclass(frozen=True, eq=False)
class Operators:
    """Sparse matrices of the discrete complex on one mesh.

    Suffix ``_full`` marks the unconstrained RT0/P1 spaces (all faces,
    all vertices); the plain names act on the boundary-constrained
    ``V_h`` and ``W_h``.
    """

    M_V_full: sp.csr_matrix   # RT0 mass
    B_full: sp.csr_matrix     # cellwise divergence, (nc, nf)
    G_full: sp.csr_matrix     # curl incidence, (nf, nv)
    M_W_full: sp.csr_matrix   # P1 mass
    K_W_full: sp.csr_matrix   # P1 stiffness
    M_V: sp.csr_matrix
    B: sp.csr_matrix
    G: sp.csr_matrix
    M_W: sp.csr_matrix
    K_W: sp.csr_matrix
    A_Q: sp.csr_matrix        # diag(|E|)


_CACHE: "weakref.WeakKeyDictionary[Mesh, Operators]" = weakref.WeakKeyDictionary()


def p1_gradients(mesh):
    """Gradients of the three barycentric functions on every cell, (nc, 3, 2)."""
    p = mesh.vertices[mesh.cells]
    x, y = p[..., 0], p[..., 1]
    two_a = 2.0 * mesh.areas
    gx = np.column_stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]]) / two_a[:, None]
    gy = np.column_stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]]) / two_a[:, None]
    return np.stack([gx, gy], axis=-1)


def operators(mesh: Mesh) -> Operators:
    """Assemble (once per mesh) the matrices of the discrete complex."""
    ops = _CACHE.get(mesh)
    if ops is not None:
        return ops
    nc, nf, nv = mesh.n_cells, mesh.n_faces, mesh.n_vertices
    areas = mesh.areas
    p = mesh.vertices[mesh.cells]                      # (nc, 3, 2)
    s = mesh.cell_face_signs.astype(float)             # (nc, 3)
    cf = mesh.cell_faces

    # RT0 mass: int (x - p_i).(x - p_j) s_i s_j / (4|E|^2)
    q = np.einsum("qk,ckd->cqd", TRI_BARY, p)           # (nc, 3q, 2)
    d = q[:, :, None, :] - p[:, None, :, :]             # (nc, q, i, 2)
    gram = np.einsum("cqid,cqjd->cij", d, d) * (areas / 3.0)[:, None, None]
    loc = gram * s[:, :, None] * s[:, None, :] / (4.0 * areas**2)[:, None, None]
    rows = np.repeat(cf, 3, axis=1)
    cols = np.tile(cf, (1, 3))
    M_V_full = assemble(rows, cols, loc.reshape(nc, 9), (nf, nf))

    B_full = assemble(np.repeat(np.arange(nc), 3), cf, s / areas[:, None], (nc, nf))

    f = mesh.faces
    G_full = assemble(np.repeat(np.arange(nf), 2), f[:, ::-1],
                      np.tile([1.0, -1.0], nf), (nf, nv))

    grads = p1_gradients(mesh)
    kloc = np.einsum("cid,cjd->cij", grads, grads) * areas[:, None, None]
    mloc = (np.ones((3, 3)) + np.eye(3))[None] * (areas / 12.0)[:, None, None]
    vr = np.repeat(mesh.cells, 3, axis=1)
    vc = np.tile(mesh.cells, (1, 3))
    K_W_full = assemble(vr, vc, kloc.reshape(nc, 9), (nv, nv))
    M_W_full = assemble(vr, vc, mloc.reshape(nc, 9), (nv, nv))

    fi = mesh.interior_faces
    vi = mesh.interior_vertices
    ops = Operators(
        M_V_full=M_V_full,
        B_full=B_full,
        G_full=G_full,
        M_W_full=M_W_full,
        K_W_full=K_W_full,
        M_V=M_V_full[fi][:, fi].tocsr(),
        B=B_full[:, fi].tocsr(),
        G=G_full[fi][:, vi].tocsr(),
        M_W=M_W_full[vi][:, vi].tocsr(),
        K_W=K_W_full[vi][:, vi].tocsr(),
        A_Q=sp.diags(areas).tocsr(),
    )
    _CACHE[mesh] = ops
    return ops


# --------------------------------------------------------------------------
# interpolation


def cell_quadrature(mesh):
    """Quadrature points (nc, 3, 2) and weights (nc, 3) of the cell rule."""
    p = mesh.vertices[mesh.cells]
    pts = np.einsum("qk,ckd->cqd", TRI_BARY, p)
    return pts, np.outer(mesh.areas, TRI_WEIGHTS)


def face_quadrature(mesh, faces=None):
    """Gauss points (nfq, 2, 2) and weights (nfq, 2) on the given faces."""
    if faces is None:
        faces = np.arange(mesh.n_faces)
    a = mesh.vertices[mesh.faces[faces, 0]]
    b = mesh.vertices[mesh.faces[faces, 1]]
    pts = a[:, None, :] + EDGE_POINTS[None, :, None] * (b - a)[:, None, :]
    return pts, np.outer(mesh.face_lengths[faces], EDGE_WEIGHTS)


def _call_scalar(f, pts):
    val = f(pts[..., 0], pts[..., 1])
    return np.broadcast_to(np.asarray(val, dtype=float), pts.shape[:-1])


def _call_vector(v, pts):
    vx, vy = v(pts[..., 0], pts[..., 1])
    shape = pts.shape[:-1]
    return np.stack([np.broadcast_to(np.asarray(vx, dtype=float), shape),
                     np.broadcast_to(np.asarray(vy, dtype=float), shape)], axis=-1)


def cell_averages(mesh, f):
    """Cell averages of a scalar callable ``f(x, y)``."""
    pts, w = cell_quadrature(mesh)
    return np.sum(_call_scalar(f, pts) * w, axis=1) / mesh.areas


def interp_Q(mesh, f) -> DensityField:
    """Cell-average projection onto ``Q_h``."""
    return DensityField(mesh, cell_averages(mesh, f))


def interp_Q_vector(mesh, f):
    """Cell averages of a vector callable ``f(x, y) -> (fx, fy)``, shape (nc, 2)."""
    pts, w = cell_quadrature(mesh)
    return np.einsum("cqd,cq->cd", _call_vector(f, pts), w) / mesh.areas[:, None]


def face_fluxes(mesh, v, faces=None):
    """``int_face v . nu`` on the given faces (all faces by default)."""
    if faces is None:
        faces = np.arange(mesh.n_faces)
    pts, w = face_quadrature(mesh, faces)
    vals = _call_vector(v, pts)
    vn = np.einsum("fqd,fd->fq", vals, mesh.normals[faces])
    return np.sum(vn * w, axis=1)


def interp_V(mesh, v) -> VelocityField:
    """Flux interpolation onto ``V_h``; boundary fluxes are dropped."""
    return VelocityField(mesh, face_fluxes(mesh, v, mesh.interior_faces))


def interp_W(mesh, w) -> VorticityField:
    """Vertex interpolation onto ``W_h``; boundary values are forced to zero."""
    x = mesh.vertices[mesh.interior_vertices]
    return VorticityField(mesh, _call_scalar(w, x))


# --------------------------------------------------------------------------
# pointwise evaluation


def rt0_coefficients(mesh, full_fluxes, cells=None):
    """Per-cell ``(S, P)`` with ``u(x) = (S x - P) / (2|E|)``."""
    if cells is None:
        cells = np.arange(mesh.n_cells)
    F = full_fluxes[mesh.cell_faces[cells]] * mesh.cell_face_signs[cells]   # outward fluxes
    S = F.sum(axis=1)
    P = np.einsum("ci,cid->cd", F, mesh.vertices[mesh.cells[cells]])
    return S, P


def rt0_values(mesh, full_fluxes, cells, points):
    """Evaluate an RT0 field given by all-face fluxes at points in given cells."""
    cells = np.asarray(cells)
    points = np.asarray(points, dtype=float)
    S, P = rt0_coefficients(mesh, full_fluxes, cells.ravel())
    S = S.reshape(cells.shape)
    P = P.reshape(cells.shape + (2,))
    two_a = 2.0 * mesh.areas[cells]
    return (S[..., None] * points - P) / two_a[..., None]


def _check_inside(mesh, cell, point, tol=1e-10):
    lam = mesh.barycentric(cell, point)
    if np.any(lam < -tol):
        raise ValueError(f"point {np.asarray(point).tolist()} is outside cell {cell}")


def eval_V(field: VelocityField, cell, point):
    """Value of a ``V_h`` field at a point of the given cell."""
    _check_inside(field.mesh, cell, point)
    return rt0_values(field.mesh, field.full(), np.array(cell), np.asarray(point, float))


def div_V(field: VelocityField, cell=None):
    """Cellwise divergence (all cells when ``cell`` is None)."""
    d = operators(field.mesh).B @ field.coeffs
    return d if cell is None else float(d[cell])


def eval_W(field: VorticityField, cell, point):
    """Value of a ``W_h`` field at a point of the given cell."""
    mesh = field.mesh
    _check_inside(mesh, cell, point)
    lam = mesh.barycentric(cell, point)
    return float(lam @ field.full()[mesh.cells[cell]])


def curl_W(field: VorticityField, cell=None):
    """Cellwise ``(d_y w, -d_x w)``; shape (2,) for one cell, (nc, 2) otherwise."""
    mesh = field.mesh
    grads = p1_gradients(mesh)
    g = np.einsum("ci,cid->cd", field.full()[mesh.cells], grads)
    c = np.column_stack([g[:, 1], -g[:, 0]])
    return c if cell is None else c[cell]


def curl_as_velocity(field: VorticityField) -> VelocityField:
    """The curl of a ``W_h`` field as an element of ``V_h`` (exact)."""
    return VelocityField(field.mesh, operators(field.mesh).G @ field.values)


# --------------------------------------------------------------------------
# commuting diagram


def check_commuting(mesh, v, div_v):
    """``max_E |div(Pi_V v) - Pi_Q(div v)|`` on the unconstrained RT0 space.

    ``div_v`` is the analytic divergence of ``v``; the right-hand side is a
    cell quadrature of it, independent of the face fluxes on the left.
    """
    flux = face_fluxes(mesh, v)
    lhs = operators(mesh).B_full @ flux
    rhs = cell_averages(mesh, div_v)
    return float(np.max(np.abs(lhs - rhs)))


def check_commuting_curl(mesh, psi: VorticityField):
    """``max_f |Pi_V(curl psi) - curl(Pi_W psi)|`` for ``psi`` in ``W_h``.

    The left side integrates the cellwise-constant curl of ``psi`` against
    the face normal by Gauss quadrature from the ``E-`` side; the right side
    is the vertex-difference incidence.
    """
    c = curl_W(psi)                                   # (nc, 2)
    side = mesh.face_cells[:, 0]
    lhs = np.einsum("fd,fd->f", c[side], mesh.normals) * mesh.face_lengths
    rhs = operators(mesh).G_full @ psi.full()
    return float(np.max(np.abs(lhs - rhs)))
