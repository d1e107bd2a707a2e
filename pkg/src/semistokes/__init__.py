"""Finite element solver for the semi-stationary compressible Stokes system.

Density: piecewise constants with implicit upwind transport.  Velocity and
vorticity: lowest-order Raviart-Thomas and continuous P1 (the 2D Nedelec
space) in a mixed vorticity-velocity formulation.
"""

from .errors import ConfigError, ConvergenceError, InvariantViolation, PreconditionError
from .mesh import Mesh, build_mesh, locate_point, refine_uniform, unit_square
from .fespace import (DensityField, VelocityField, VorticityField, interp_Q, interp_V,
                      interp_W, operators)
from .transport import assemble_transport, step_density, upwind_split
from .momentum import FluidParams, effective_flux, pressure, solve_momentum
from .stepper import SimConfig, StepReport, Trajectory, init_density, run, step
from .hodge import decompose, poincare_constants, solve_div
from .diagnostics import (EnergyLedger, energy_ledger, flux_pairing, jump_sums,
                          negative_norm_curl, time_continuity_bound, translation_norm,
                          upwind_diffusion_bound)
from .config import parse_config

__version__ = "0.1.0"
