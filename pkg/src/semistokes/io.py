"""Mesh files, VTK output, CSV tables and run manifests.

CSV floats are written with ``repr`` so that reading them back with
``float`` reproduces every value bit for bit.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os

import numpy as np

from .errors import ConfigError
from .fespace import rt0_values
from .mesh import MeshError, build_mesh
from .momentum import effective_flux, pressure


# --------------------------------------------------------------------------
# mesh files


def write_mesh(mesh, path):
    """Plain text: ``DIM 2``, ``NV n``, ``NC m``, then vertices and cells."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"DIM 2\nNV {mesh.n_vertices}\nNC {mesh.n_cells}\n")
        for x, y in mesh.vertices:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for a, b, c in mesh.cells:
            fh.write(f"{a} {b} {c}\n")


def read_mesh(path):
    with open(path, encoding="utf-8") as fh:
        lines = [ln.split("#", 1)[0].strip() for ln in fh]
    lines = [ln for ln in lines if ln]
    try:
        header = dict(ln.split() for ln in lines[:3])
        if int(header["DIM"]) != 2:
            raise MeshError(f"{path}: only DIM 2 is supported")
        nv, nc = int(header["NV"]), int(header["NC"])
        body = lines[3:]
        if len(body) != nv + nc:
            raise MeshError(f"{path}: expected {nv + nc} data lines, found {len(body)}")
        V = np.array([[float(t) for t in ln.split()] for ln in body[:nv]])
        C = np.array([[int(t) for t in ln.split()] for ln in body[nv:]], dtype=np.int64)
    except (KeyError, ValueError) as exc:
        raise MeshError(f"{path}: malformed mesh file ({exc})") from None
    if V.shape != (nv, 2) or C.shape != (nc, 3):
        raise MeshError(f"{path}: wrong number of columns")
    return build_mesh(V, C)


# --------------------------------------------------------------------------
# VTK


def write_vtk(state, path, params):
    """Legacy ASCII VTK of one state.

    Cell data: ``rho``, ``p``, ``P_eff``, ``div_u`` and the velocity at the
    centroid; point data: the vorticity ``w``.
    """
    mesh = state.mesh
    rho = state.rho
    p = pressure(rho, params).values
    peff = effective_flux(rho, state.u, params).values
    div = state.u.div()
    uc = rt0_values(mesh, state.u.full(), np.arange(mesh.n_cells), mesh.centroids)
    w = state.w.full()
    nc, nv = mesh.n_cells, mesh.n_vertices
    out = ["# vtk DataFile Version 2.0", f"semistokes state m={state.m} t={state.t!r}", "ASCII",
           "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    out += [f"{x!r} {y!r} 0.0" for x, y in mesh.vertices]
    out.append(f"CELLS {nc} {4 * nc}")
    out += [f"3 {a} {b} {c}" for a, b, c in mesh.cells]
    out.append(f"CELL_TYPES {nc}")
    out += ["5"] * nc
    out.append(f"CELL_DATA {nc}")
    for name, vals in (("rho", rho.values), ("p", p), ("P_eff", peff), ("div_u", div)):
        out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
        out += [repr(float(v)) for v in vals]
    out.append("VECTORS u double")
    out += [f"{a!r} {b!r} 0.0" for a, b in uc]
    out += [f"POINT_DATA {nv}", "SCALARS w double 1", "LOOKUP_TABLE default"]
    out += [repr(float(v)) for v in w]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


# --------------------------------------------------------------------------
# CSV


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(rows, path, columns=None):
    """Write dict rows; ``columns`` fixes the order (required for empty tables)."""
    rows = list(rows)
    if columns is None:
        if not rows:
            raise ValueError("columns must be given for an empty table")
        columns = list(rows[0])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\r\n")
        wr.writerow(columns)
        for r in rows:
            wr.writerow([_fmt(r.get(c, "")) for c in columns])


def _parse(v):
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    return v


def read_csv(path):
    """Rows as dicts; numeric fields are converted back to int or float."""
    with open(path, newline="", encoding="utf-8") as fh:
        return [{k: _parse(v) for k, v in r.items()} for r in csv.DictReader(fh)]


def read_force_csv(path, mesh, M):
    """Per-step cellwise forces from columns ``m, cell, fx, fy`` (``m = 1..M``)."""
    arr = np.full((M, mesh.n_cells, 2), np.nan)
    for lineno, r in enumerate(read_csv(path), start=2):
        try:
            m, c = int(r["m"]), int(r["cell"])
            arr[m - 1, c] = float(r["fx"]), float(r["fy"])
        except (KeyError, ValueError, IndexError, TypeError):
            raise ConfigError(f"{path}:{lineno}: bad force row {r}") from None
    if np.isnan(arr).any():
        raise ConfigError(f"{path}: force table does not cover every step and cell")
    return arr


# --------------------------------------------------------------------------
# manifest


def sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, payload, files):
    """Write ``manifest.json`` with a checksum for every listed file.

    No timestamps or absolute paths are recorded, so identical runs give
    identical manifests.
    """
    data = dict(payload)
    data["files"] = {os.path.relpath(f, out_dir): sha256(f) for f in sorted(files)}
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return path


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialize {type(o).__name__}")
