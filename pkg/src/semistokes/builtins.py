"""Named initial densities, forces and test-field families.

Densities are ``rho0(x, y)``; forces are ``f(t, x, y) -> (fx, fy)``.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError
from .fespace import interp_Q
from .hodge import solve_div

PI = np.pi

# dt = STANDARD_COUPLING * mesh.h gives dt = 1 / (2K) on unit_square(K)
STANDARD_COUPLING = 1.0 / (2.0 * math.sqrt(2.0))


def _const(v):
    return lambda x, y: np.full(np.broadcast(x, y).shape, float(v))


DENSITIES = {
    "constant": _const(1.0),
    "sine": lambda x, y: 1.0 + 0.1 * np.sin(2 * PI * x) + 0.0 * y,
    "bump": lambda x, y: 1.0 + 0.5 * np.exp(-50.0 * ((x - 0.5) ** 2 + (y - 0.5) ** 2)),
    "vacuum": lambda x, y: np.where(x < 0.25, 0.0, 1.0) + 0.0 * y,
}


def _zero_force(t, x, y):
    z = np.zeros(np.broadcast(x, y).shape)
    return z, z


FORCES = {
    "zero": _zero_force,
    "trig": lambda t, x, y: (np.sin(PI * y) * np.cos(PI * x),
                             np.cos(PI * y) * np.sin(2 * PI * x)),
    "poly": lambda t, x, y: (y * (1 - y) + 0.0 * x, x * (1 - x) + 0.0 * y),
    "swirl": lambda t, x, y: (-(y - 0.5) * (1 + t) + 0.0 * x, (x - 0.5) * (1 + t) + 0.0 * y),
}


def density(name):
    try:
        return DENSITIES[name]
    except KeyError:
        raise ConfigError(f"unknown density {name!r}; choose from {sorted(DENSITIES)}") from None


def force(name):
    try:
        return FORCES[name]
    except KeyError:
        raise ConfigError(f"unknown force {name!r}; choose from {sorted(FORCES)}") from None


# --------------------------------------------------------------------------
# fields in V_h^{0,perp}


def smooth_field(mesh):
    """``solve_div`` of the projected ``cos(pi x) cos(pi y)`` (zero mean)."""
    q = interp_Q(mesh, lambda x, y: np.cos(PI * x) * np.cos(PI * y)).values
    q = q - (mesh.areas @ q) / mesh.volume
    return solve_div(mesh, q)


def dipole_field(mesh, anchor=(0.5, 0.5), offset=(0.3, 0.1)):
    """Field whose divergence is an L2-normalized dipole on two cells.

    The cells are the one containing ``anchor + offset * h0`` (``h0`` the
    shortest edge) and its neighbour across its longest face, so the
    configuration is self-similar on a structured refinement ladder.
    """
    h0 = mesh.face_lengths.min()
    x0 = np.asarray(anchor, float) + np.asarray(offset, float) * h0
    c = int(mesh.locate_points(x0[None])[0])
    if c < 0:
        raise ValueError("dipole anchor lies outside the mesh")
    faces = mesh.cell_faces[c]
    fmax = faces[np.argmax(mesh.face_lengths[faces])]
    pair = mesh.face_cells[fmax]
    other = int(pair[0] if pair[1] == c else pair[1])
    if other < 0:
        raise ValueError("dipole anchor cell has its longest face on the boundary")
    q = np.zeros(mesh.n_cells)
    q[c] = 1.0 / mesh.areas[c]
    q[other] = -1.0 / mesh.areas[other]
    q /= math.sqrt(mesh.areas @ q**2)
    return solve_div(mesh, q)


# --------------------------------------------------------------------------
# manufactured momentum solution
#
# u = grad S + curl psi with S = cos(pi x) cos(pi y), psi = s(x) s(y),
# s(t) = sin(pi t)^3, and p = 2 + S.  Then div u = -2 pi^2 S and the scalar
# vorticity is w = -lap psi.  psi and its gradient vanish on the boundary,
# and grad S . nu = 0 there, so u . nu = 0 on the unit square.


def _s(t, k):
    sn, cs = np.sin(PI * t), np.cos(PI * t)
    if k == 0:
        return sn**3
    if k == 1:
        return 3 * PI * sn**2 * cs
    if k == 2:
        return 3 * PI**2 * sn * (2 - 3 * sn**2)
    return 3 * PI**3 * cs * (2 - 9 * sn**2)


class Manufactured:
    """Exact velocity, vorticity, pressure and force for given viscosities."""

    def __init__(self, mu=1.0, lam=0.5):
        self.mu, self.lam = mu, lam

    @staticmethod
    def velocity(x, y):
        sx, sy = np.sin(PI * x), np.sin(PI * y)
        cx, cy = np.cos(PI * x), np.cos(PI * y)
        return (-PI * sx * cy + _s(x, 0) * _s(y, 1),
                -PI * cx * sy - _s(x, 1) * _s(y, 0))

    @staticmethod
    def vorticity(x, y):
        return -(_s(x, 2) * _s(y, 0) + _s(x, 0) * _s(y, 2))

    @staticmethod
    def pressure(x, y):
        return 2.0 + np.cos(PI * x) * np.cos(PI * y)

    def force(self, x, y):
        mu, bulk = self.mu, self.mu + self.lam
        sx, sy = np.sin(PI * x), np.sin(PI * y)
        cx, cy = np.cos(PI * x), np.cos(PI * y)
        w_x = -(_s(x, 3) * _s(y, 0) + _s(x, 1) * _s(y, 2))
        w_y = -(_s(x, 2) * _s(y, 1) + _s(x, 0) * _s(y, 3))
        return (mu * w_y - bulk * 2 * PI**3 * sx * cy - PI * sx * cy,
                -mu * w_x - bulk * 2 * PI**3 * cx * sy - PI * cx * sy)
