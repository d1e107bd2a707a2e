"""Conforming triangular meshes with globally oriented faces.

Faces are the edges of the triangulation.  Every face carries a fixed unit
normal ``nu``; on an interior face it points from the lower-indexed
neighbour ``E-`` into the higher-indexed one ``E+``, on a boundary face it
points out of the domain.  The two face vertices are stored so that the
edge runs along ``t = (-nu_y, nu_x)``; with that convention the normal
flux of the curl of a continuous P1 function through the face is simply
the difference of its two end values.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

BOUNDARY = -1
OUTSIDE = None

_BARY_TOL = 1e-12


class MeshError(ValueError):
    """Base class for invalid mesh input."""


class StructureError(MeshError):
    """Non-conforming input: hanging vertex, face shared by more than two cells."""


class GeometryError(MeshError):
    """Degenerate geometry, e.g. a zero-area cell."""


def _cross(a, b):
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


class Mesh:
    """Immutable 2D simplicial mesh.

    Attributes
    ----------
    vertices : (nv, 2) float array
    cells : (nc, 3) int array, positively oriented
    faces : (nf, 2) int array, ordered along the face tangent
    face_cells : (nf, 2) int array, ``[E-, E+]`` with ``E+ = BOUNDARY`` on the boundary
    normals : (nf, 2) unit normals
    cell_faces : (nc, 3) face opposite each local vertex
    cell_face_signs : (nc, 3) +1 where ``nu`` is the outward normal of the cell
    h : maximal cell diameter
    kappa : shape-regularity constant, ``max h_E / r_E`` over cells
    """

    def __init__(self, vertices, cells, faces, face_cells, normals, cell_faces, cell_face_signs):
        self.vertices = vertices
        self.cells = cells
        self.faces = faces
        self.face_cells = face_cells
        self.normals = normals
        self.cell_faces = cell_faces
        self.cell_face_signs = cell_face_signs
        for arr in (vertices, cells, faces, face_cells, normals, cell_faces, cell_face_signs):
            arr.flags.writeable = False

        p = vertices[cells]
        self.areas = 0.5 * _cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
        self.centroids = p.mean(axis=1)
        e = vertices[faces[:, 1]] - vertices[faces[:, 0]]
        self.face_lengths = np.hypot(e[:, 0], e[:, 1])
        self.face_midpoints = 0.5 * (vertices[faces[:, 0]] + vertices[faces[:, 1]])

        lengths = self.face_lengths[cell_faces]
        self.cell_diameters = lengths.max(axis=1)
        self.inradii = 2.0 * self.areas / lengths.sum(axis=1)
        self.h = float(self.cell_diameters.max())
        self.kappa = float((self.cell_diameters / self.inradii).max())

        self.interior_faces = np.flatnonzero(face_cells[:, 1] != BOUNDARY)
        self.boundary_faces = np.flatnonzero(face_cells[:, 1] == BOUNDARY)
        on_bnd = np.zeros(len(vertices), dtype=bool)
        on_bnd[faces[self.boundary_faces].ravel()] = True
        self.boundary_vertex_mask = on_bnd
        self.interior_vertices = np.flatnonzero(~on_bnd)
        # global face -> interior-face dof (or -1); global vertex -> W dof (or -1)
        self.face_dof = np.full(len(faces), -1)
        self.face_dof[self.interior_faces] = np.arange(len(self.interior_faces))
        self.vertex_dof = np.full(len(vertices), -1)
        self.vertex_dof[self.interior_vertices] = np.arange(len(self.interior_vertices))

    @property
    def dim(self):
        return 2

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def volume(self):
        return float(self.areas.sum())

    def summary(self):
        return {
            "dim": 2,
            "n_vertices": self.n_vertices,
            "n_cells": self.n_cells,
            "n_faces": self.n_faces,
            "n_interior_faces": len(self.interior_faces),
            "h": self.h,
            "kappa": self.kappa,
        }

    def __repr__(self):
        return f"Mesh(nv={self.n_vertices}, nc={self.n_cells}, nf={self.n_faces}, h={self.h:.4g})"

    def barycentric(self, cell, x):
        """Barycentric coordinates of points ``x`` (..., 2) in ``cell``."""
        p = self.vertices[self.cells[cell]]
        x = np.asarray(x, dtype=float)
        d = x - p[2]
        T = np.array([p[0] - p[2], p[1] - p[2]]).T
        l01 = np.linalg.solve(T, d.reshape(-1, 2).T).T.reshape(d.shape)
        return np.concatenate([l01, 1.0 - l01.sum(axis=-1, keepdims=True)], axis=-1)

    @cached_property
    def _buckets(self):
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        nb = max(1, int(np.sqrt(self.n_cells)))
        size = np.maximum((hi - lo) / nb, 1e-300)
        p = self.vertices[self.cells]
        cmin = np.floor((p.min(axis=1) - lo) / size - 1e-9).astype(int).clip(0, nb - 1)
        cmax = np.floor((p.max(axis=1) - lo) / size + 1e-9).astype(int).clip(0, nb - 1)
        pairs = []
        for c in range(self.n_cells):
            ii, jj = np.meshgrid(np.arange(cmin[c, 0], cmax[c, 0] + 1),
                                 np.arange(cmin[c, 1], cmax[c, 1] + 1), indexing="ij")
            b = (ii * nb + jj).ravel()
            pairs.append(np.column_stack([b, np.full(b.size, c)]))
        pairs = np.concatenate(pairs)
        order = np.lexsort((pairs[:, 1], pairs[:, 0]))
        pairs = pairs[order]
        counts = np.bincount(pairs[:, 0], minlength=nb * nb)
        width = counts.max()
        table = np.full((nb * nb, width), -1)
        starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
        rank = np.arange(len(pairs)) - starts[pairs[:, 0]]
        table[pairs[:, 0], rank] = pairs[:, 1]
        return lo, size, nb, table

    def locate_points(self, x):
        """Vectorized point location; returns cell indices with -1 for outside.

        A point on a shared edge or vertex is assigned to the lowest-indexed
        cell whose closure contains it.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lo, size, nb, table = self._buckets
        ij = np.floor((x - lo) / size).astype(int)
        inside_box = np.all((ij >= -1) & (ij <= nb), axis=1)
        ij = ij.clip(0, nb - 1)
        cand = table[ij[:, 0] * nb + ij[:, 1]]  # (nq, width), ascending, -1 padded
        valid = cand >= 0
        c = np.where(valid, cand, 0)
        p = self.vertices[self.cells[c]]  # (nq, w, 3, 2)
        xq = x[:, None, :]
        a2 = 2.0 * self.areas[c]
        l0 = _cross(p[..., 1, :] - xq, p[..., 2, :] - xq) / a2
        l1 = _cross(p[..., 2, :] - xq, p[..., 0, :] - xq) / a2
        l2 = 1.0 - l0 - l1
        tol = _BARY_TOL
        hit = valid & (l0 >= -tol) & (l1 >= -tol) & (l2 >= -tol)
        hit &= inside_box[:, None]
        first = np.argmax(hit, axis=1)
        found = hit[np.arange(len(x)), first]
        return np.where(found, cand[np.arange(len(x)), first], -1)


def locate_point(mesh, x):
    """Cell whose closure contains ``x``; ties go to the lowest index.

    Returns ``OUTSIDE`` (None) for points outside the mesh.
    """
    c = int(mesh.locate_points(np.asarray(x, dtype=float).reshape(1, 2))[0])
    return OUTSIDE if c < 0 else c


def build_mesh(vertices, cells) -> Mesh:
    """Validate a triangulation and resolve faces, adjacency and normals."""
    V = np.array(vertices, dtype=float)
    T = np.array(cells, dtype=np.int64)
    if V.ndim != 2 or V.shape[1] != 2:
        raise MeshError(f"vertices must have shape (n, 2), got {V.shape}")
    if T.ndim != 2 or T.shape[1] != 3:
        raise MeshError(f"cells must have shape (m, 3), got {T.shape}")
    if len(T) == 0:
        raise MeshError("mesh has no cells")
    if T.min() < 0 or T.max() >= len(V):
        raise StructureError("cell references a vertex index out of range")
    if not np.all(np.isfinite(V)):
        raise GeometryError("non-finite vertex coordinates")

    T = T.copy()
    p = V[T]
    signed = 0.5 * _cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    scale = np.max(np.ptp(V, axis=0)) ** 2
    degenerate = np.abs(signed) <= 1e-14 * scale
    if np.any(degenerate):
        raise GeometryError(f"degenerate cell(s) with zero area: {np.flatnonzero(degenerate)[:10].tolist()}")
    neg = signed < 0
    T[neg] = T[neg][:, [0, 2, 1]]

    # local face i is opposite local vertex i
    local = np.array([[1, 2], [2, 0], [0, 1]])
    edges = T[:, local]  # (nc, 3, 2)
    keys = np.sort(edges.reshape(-1, 2), axis=1)
    uniq, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.ravel()
    if counts.max() > 2:
        bad = uniq[counts > 2][0].tolist()
        raise StructureError(f"face {bad} is shared by more than two cells")
    nf = len(uniq)
    cell_faces = inverse.reshape(-1, 3)

    owner = np.repeat(np.arange(len(T)), 3)
    order = np.lexsort((owner, inverse))
    face_cells = np.full((nf, 2), BOUNDARY, dtype=np.int64)
    sorted_faces = inverse[order]
    sorted_cells = owner[order]
    first = np.ones(len(order), dtype=bool)
    first[1:] = sorted_faces[1:] != sorted_faces[:-1]
    face_cells[sorted_faces[first], 0] = sorted_cells[first]
    face_cells[sorted_faces[~first], 1] = sorted_cells[~first]

    a = V[uniq[:, 0]]
    b = V[uniq[:, 1]]
    e = b - a
    n = np.column_stack([e[:, 1], -e[:, 0]])
    n /= np.hypot(n[:, 0], n[:, 1])[:, None]
    cent = V[T].mean(axis=1)
    away = 0.5 * (a + b) - cent[face_cells[:, 0]]
    flip = np.einsum("ij,ij->i", n, away) < 0
    n[flip] *= -1.0
    # order face vertices along t = (-nu_y, nu_x)
    t = np.column_stack([-n[:, 1], n[:, 0]])
    faces = uniq.copy()
    rev = np.einsum("ij,ij->i", t, e) < 0
    faces[rev] = faces[rev][:, ::-1]

    signs = np.where(face_cells[cell_faces, 0] == np.arange(len(T))[:, None], 1, -1)

    _check_hanging(V, faces[face_cells[:, 1] == BOUNDARY])

    return Mesh(V, T, faces, face_cells, n, cell_faces, signs.astype(np.int64))


def _check_hanging(V, bfaces, chunk=256):
    """Raise if a vertex lies strictly inside a boundary face (hanging node)."""
    for s in range(0, len(bfaces), chunk):
        f = bfaces[s:s + chunk]
        a = V[f[:, 0]][:, None, :]
        e = (V[f[:, 1]] - V[f[:, 0]])[:, None, :]
        d = V[None, :, :] - a
        L2 = np.sum(e * e, axis=-1)
        s_par = np.sum(d * e, axis=-1) / L2
        dist = np.abs(_cross(e, d)) / np.sqrt(L2)
        hit = (s_par > 1e-9) & (s_par < 1 - 1e-9) & (dist <= 1e-10 * np.sqrt(L2))
        if np.any(hit):
            i, j = np.argwhere(hit)[0]
            raise StructureError(f"hanging vertex {j} lies inside face {f[i].tolist()}")


def unit_square(K: int) -> Mesh:
    """Structured ``K x K`` triangulation of the unit square (2K^2 cells)."""
    if K < 1:
        raise MeshError("K must be >= 1")
    x = np.linspace(0.0, 1.0, K + 1)
    X, Y = np.meshgrid(x, x, indexing="ij")
    V = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((K + 1) ** 2).reshape(K + 1, K + 1)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()
    v01 = idx[:-1, 1:].ravel()
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    cells = np.empty((2 * K * K, 3), dtype=np.int64)
    cells[0::2] = lower
    cells[1::2] = upper
    return build_mesh(V, cells)


def refine_uniform(mesh: Mesh) -> Mesh:
    """Split every triangle into four through its edge midpoints."""
    nv = mesh.n_vertices
    V = np.vstack([mesh.vertices, mesh.face_midpoints])
    a, b, c = mesh.cells.T
    ma, mb, mc = (nv + mesh.cell_faces).T
    children = np.stack([
        np.column_stack([a, mc, mb]),
        np.column_stack([mc, b, ma]),
        np.column_stack([mb, ma, c]),
        np.column_stack([ma, mb, mc]),
    ], axis=1).reshape(-1, 3)
    return build_mesh(V, children)
