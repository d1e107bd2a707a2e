"""Nonlinear-implicit time stepping of the coupled density/momentum scheme.

Each step looks for ``(rho^m, w^m, u^m)`` solving the upwind continuity
step and the mixed momentum system simultaneously.  For a fixed density
the momentum system is linear, and for a fixed velocity the continuity
step is linear, so a damped Picard iteration alternates the two solves.
If it stalls, the step is retried along a homotopy ``alpha = 0, 1/K, ..., 1``
that scales both the pressure and the transport flux by ``alpha``; at
``alpha = 0`` the density is frozen and the velocity solves a linear
Stokes-type problem, and each rung warm-starts the next.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, asdict
from typing import Callable

import numpy as np

from .errors import ConfigError, ConvergenceError, PreconditionError
from .fespace import (DensityField, VelocityField, VorticityField, cell_averages,
                      interp_Q_vector, operators)
from .momentum import FluidParams, momentum_identities, momentum_solver, pressure
from .transport import assemble_transport, positivity_bound, step_density

log = logging.getLogger(__name__)

# L2 velocity norms below this are treated as rounding noise in the
# convergence metric
VELOCITY_NOISE = 1e-13


@dataclass(frozen=True)
class SimConfig:
    params: FluidParams = field(default_factory=FluidParams)
    dt: float | None = 0.1
    T: float = 1.0
    c_coupling: float | None = None
    picard_tol: float = 1e-10
    picard_max: int = 50
    relaxation: float = 1.0
    continuation_steps: int = 4
    rho_floor: float = 1e-10

    def __post_init__(self):
        if not self.T > 0:
            raise ConfigError(f"final time must be positive, got {self.T}")
        if self.c_coupling is None:
            if self.dt is None or not self.dt > 0:
                raise ConfigError(f"time step must be positive, got {self.dt}")
            M = round(self.T / self.dt)
            if M < 1 or abs(M * self.dt - self.T) > 1e-9 * self.T:
                raise ConfigError(f"T={self.T} is not an integer multiple of dt={self.dt}")
        elif not self.c_coupling > 0:
            raise ConfigError(f"coupling constant must be positive, got {self.c_coupling}")
        if not self.picard_tol > 0:
            raise ConfigError("picard_tol must be positive")
        if self.picard_max < 1:
            raise ConfigError("picard_max must be at least 1")
        if not 0 < self.relaxation <= 1:
            raise ConfigError(f"relaxation must lie in (0, 1], got {self.relaxation}")
        if self.continuation_steps < 1:
            raise ConfigError("continuation_steps must be at least 1")
        if not self.rho_floor > 0:
            raise ConfigError("rho_floor must be positive")

    def time_grid(self, mesh):
        """``(dt, M)`` with ``M dt = T``; ``dt = c h`` rounded so that M is an integer."""
        if self.c_coupling is not None:
            M = max(1, math.ceil(self.T / (self.c_coupling * mesh.h) - 1e-9))
            return self.T / M, M
        M = round(self.T / self.dt)
        return self.T / M, M


@dataclass
class StepReport:
    m: int
    t: float
    picard_iterations: int
    residual: float
    mass: float
    min_density: float
    positivity_bound: float
    continuity_residual: float
    momentum_residual: float
    pairing_residual: float
    vorticity_residual: float
    continuation: bool = False
    rung_residuals: list = field(default_factory=list)

    def as_dict(self):
        return asdict(self)


@dataclass(eq=False)
class State:
    m: int
    t: float
    rho: DensityField
    w: VorticityField
    u: VelocityField

    @property
    def mesh(self):
        return self.rho.mesh


@dataclass(eq=False)
class Trajectory:
    """States ``m = 0..M``; the solution is piecewise constant on ``(t^{m-1}, t^m]``."""

    mesh: object
    config: SimConfig
    dt: float
    states: list = field(default_factory=list)
    forces: list = field(default_factory=list)     # f_h^m, (nc, 2); forces[0] unused
    reports: list = field(default_factory=list)

    @property
    def M(self):
        return len(self.states) - 1

    @property
    def times(self):
        return np.array([s.t for s in self.states])

    def at(self, t):
        """State representing time ``t`` (left-open intervals)."""
        if t <= 0:
            return self.states[0]
        m = min(self.M, max(1, math.ceil(t / self.dt - 1e-12)))
        return self.states[m]


def init_density(mesh, rho0, cfg: SimConfig) -> DensityField:
    """Cell averages of ``rho0`` clamped below by ``cfg.rho_floor``."""
    if isinstance(rho0, DensityField):
        vals = rho0.values.copy()
    elif callable(rho0):
        vals = cell_averages(mesh, rho0)
    else:
        vals = np.broadcast_to(np.asarray(rho0, dtype=float), (mesh.n_cells,)).copy()
    if np.any(vals < -1e-14 * max(1.0, np.abs(vals).max())):
        raise PreconditionError("initial density has a negative cell average")
    return DensityField(mesh, np.maximum(vals, cfg.rho_floor))


def _relative_change(new, old, norm):
    n_new, n_old = norm(new), norm(old)
    ref = max(n_new, n_old)
    return 0.0 if ref < VELOCITY_NOISE else norm(new - old) / ref


def picard_solve(rho_prev, f, dt, cfg, alpha, rho_start, u_start):
    """Damped Picard iteration at homotopy parameter ``alpha``.

    Returns ``(rho, w, u, iterations, residual, history)``; raises
    ConvergenceError when the tolerance is not met.
    """
    mesh = rho_prev.mesh
    params = cfg.params
    solver = momentum_solver(mesh, params)
    ops = operators(mesh)
    rho_norm = lambda r: math.sqrt(mesh.areas @ r**2)
    u_norm = lambda c: math.sqrt(max(c @ (ops.M_V @ c), 0.0))
    rho_k = rho_start.values
    u_old = u_start.coeffs
    history = []
    for k in range(1, cfg.picard_max + 1):
        p = alpha * params.a * rho_k**params.gamma
        w, u = solver.solve(p, f)
        u_eff = u if alpha == 1.0 else VelocityField(mesh, alpha * u.coeffs)
        rho_new = step_density(rho_prev, u_eff, dt).values
        res = (rho_norm(rho_new - rho_k) / rho_norm(rho_k)
               + _relative_change(u.coeffs, u_old, u_norm))
        history.append(res)
        if not math.isfinite(res):
            break
        if res <= cfg.picard_tol:
            return DensityField(mesh, rho_new), w, u, k, res, history
        if k > 5 and res > 1e6 * min(history):
            break
        rho_k = (1.0 - cfg.relaxation) * rho_k + cfg.relaxation * rho_new
        u_old = u.coeffs
    raise ConvergenceError(
        f"Picard iteration failed at alpha={alpha} after {len(history)} iterations",
        residual=history[-1] if history else float("nan"),
    )


def step(state: State, f_m, cfg: SimConfig, dt=None, force_continuation=False):
    """Advance one time step; returns ``(new_state, StepReport)``."""
    rho_prev = state.rho
    mesh = rho_prev.mesh
    if dt is None:
        dt, _ = cfg.time_grid(mesh)
    if np.any(rho_prev.values <= 0):
        raise PreconditionError("density must be strictly positive before a step")
    f_m = np.zeros((mesh.n_cells, 2)) if f_m is None else np.asarray(f_m, dtype=float)

    continuation = False
    rungs = []
    try:
        if force_continuation:
            raise ConvergenceError("continuation requested")
        rho, w, u, iters, res, _ = picard_solve(rho_prev, f_m, dt, cfg, 1.0, rho_prev, state.u)
    except ConvergenceError as exc:
        if not force_continuation:
            log.info("step %d: plain Picard failed (%s); switching to continuation", state.m + 1, exc)
        continuation = True
        K = cfg.continuation_steps
        rho_w, u_w = rho_prev, VelocityField.zeros(mesh)
        iters = 0
        for j in range(K + 1):
            alpha = j / K
            rho_w, w, u_w, it, res, hist = picard_solve(rho_prev, f_m, dt, cfg, alpha, rho_w, u_w)
            iters += it
            rungs.append({"alpha": alpha, "iterations": it, "residual": res, "history": hist})
        rho, u = rho_w, u_w

    if not np.all(rho.values > 0):
        raise RuntimeError("positivity lost in the continuity step")
    params = cfg.params
    solver = momentum_solver(mesh, params)
    p = pressure(rho, params).values
    A = assemble_transport(mesh, u, dt)
    cont_res = np.linalg.norm(A @ rho.values - mesh.areas * rho_prev.values) / np.linalg.norm(
        mesh.areas * rho_prev.values)
    ident = momentum_identities(w, u, rho, f_m, params)
    report = StepReport(
        m=state.m + 1,
        t=state.t + dt,
        picard_iterations=iters,
        residual=float(res),
        mass=rho.integral(),
        min_density=float(rho.values.min()),
        positivity_bound=positivity_bound(rho_prev, u, dt),
        continuity_residual=float(cont_res),
        momentum_residual=solver.residual(w, u, p, f_m),
        pairing_residual=float(ident["pairing"][2]),
        vorticity_residual=float(ident["vorticity"][2]),
        continuation=continuation,
        rung_residuals=[(r["alpha"], r["residual"]) for r in rungs],
    )
    return State(state.m + 1, state.t + dt, rho, w, u), report


def discretize_force(mesh, f, dt, M):
    """``f_h^m`` for ``m = 1..M`` as a list (index 0 is a zero placeholder).

    ``f`` may be None, a callable ``f(t, x, y) -> (fx, fy)`` averaged in time
    by the midpoint rule, or an array of shape (M, nc, 2) of given values.
    """
    zero = np.zeros((mesh.n_cells, 2))
    if f is None:
        return [zero] * (M + 1)
    if callable(f):
        out = [zero]
        for m in range(1, M + 1):
            tm = (m - 0.5) * dt
            out.append(interp_Q_vector(mesh, lambda x, y, tm=tm: f(tm, x, y)))
        return out
    arr = np.asarray(f, dtype=float)
    if arr.shape != (M, mesh.n_cells, 2):
        raise ConfigError(f"force array must have shape {(M, mesh.n_cells, 2)}, got {arr.shape}")
    return [zero] + list(arr)


def run(mesh, rho0, f, cfg: SimConfig, callback: Callable | None = None) -> Trajectory:
    """Run ``M`` steps from ``rho0``; aborts on the first convergence failure."""
    dt, M = cfg.time_grid(mesh)
    forces = discretize_force(mesh, f, dt, M)
    rho = init_density(mesh, rho0, cfg)
    state = State(0, 0.0, rho, VorticityField.zeros(mesh), VelocityField.zeros(mesh))
    traj = Trajectory(mesh, cfg, dt, [state], forces, [])
    for m in range(1, M + 1):
        state, report = step(state, forces[m], cfg, dt=dt)
        state.t = m * dt
        report.t = state.t
        traj.states.append(state)
        traj.reports.append(report)
        if callback is not None:
            callback(state, report)
    return traj
