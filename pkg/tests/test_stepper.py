import numpy as np
import pytest

from semistokes import builtins
from semistokes.diagnostics import energy_ledger
from semistokes.errors import ConfigError, PreconditionError
from semistokes.fespace import DensityField, VelocityField, VorticityField, interp_Q_vector
from semistokes.mesh import unit_square
from semistokes.momentum import FluidParams
from semistokes.stepper import (SimConfig, State, discretize_force, init_density, picard_solve,
                                run, step)


def _state(mesh, rho):
    return State(0, 0.0, DensityField(mesh, rho), VorticityField.zeros(mesh),
                 VelocityField.zeros(mesh))


def test_init_density_clamps_and_rejects(square8):
    cfg = SimConfig(rho_floor=1e-6)
    r = init_density(square8, builtins.density("vacuum"), cfg)
    assert r.values.min() == 1e-6 and r.values.max() == 1.0
    with pytest.raises(PreconditionError):
        init_density(square8, lambda x, y: x - 0.5, cfg)
    assert np.all(init_density(square8, 2.0, cfg).values == 2.0)


def test_rest_state_converges_in_one_iteration(square8):
    new, rep = step(_state(square8, np.ones(square8.n_cells)), None, SimConfig())
    assert rep.picard_iterations == 1
    assert np.all(new.rho.values == 1.0)
    assert np.abs(new.u.coeffs).max() < 1e-12


def test_alpha_zero_freezes_density(square8):
    cfg = SimConfig()
    rho = DensityField(square8, 1 + 0.1 * np.random.default_rng(0).random(square8.n_cells))
    f = interp_Q_vector(square8, lambda x, y: builtins.force("trig")(0, x, y))
    r, w, u, it, res, _ = picard_solve(rho, f, 0.1, cfg, 0.0, rho, VelocityField.zeros(square8))
    assert np.array_equal(r.values, rho.values)
    assert it <= 2 and np.abs(u.coeffs).max() > 0


def test_single_step_run_matches_step(square8):
    cfg = SimConfig(dt=0.1, T=0.1)
    f = builtins.force("trig")
    traj = run(square8, builtins.density("sine"), f, cfg)
    assert traj.M == 1
    s0 = traj.states[0]
    new, _ = step(s0, traj.forces[1], cfg)
    assert np.array_equal(new.rho.values, traj.states[1].rho.values)
    assert np.array_equal(new.u.coeffs, traj.states[1].u.coeffs)


@pytest.fixture(scope="module")
def traj2():
    cfg = SimConfig(params=FluidParams(gamma=2.0), dt=0.05, T=0.5, picard_tol=1e-11)
    return run(unit_square(8), builtins.density("bump"), builtins.force("trig"), cfg)


def test_run_conserves_mass_and_positivity(traj2):
    m0 = traj2.states[0].rho.integral()
    for prev, rep in zip(traj2.states, traj2.reports):
        assert abs(rep.mass - m0) <= 1e-12 * m0
        assert rep.min_density >= rep.positivity_bound > 0
        assert rep.continuity_residual < 1e-12
        assert rep.pairing_residual < 1e-9 and rep.vorticity_residual < 1e-9
        assert not rep.continuation


def test_run_gamma2_energy_balance(traj2):
    led = energy_ledger(traj2)
    assert led.balance_residual().max() <= 1e-9
    assert np.all(led.time_diss >= 0) and np.all(led.face_diss >= 0)


def test_trajectory_time_lookup(traj2):
    assert traj2.at(0.0) is traj2.states[0]
    assert traj2.at(0.05) is traj2.states[1]
    assert traj2.at(0.051) is traj2.states[2]
    assert traj2.at(10.0) is traj2.states[-1]
    assert np.allclose(traj2.times, np.arange(11) * 0.05)


def test_forced_continuation(square8):
    cfg = SimConfig(continuation_steps=4)
    s = _state(square8, init_density(square8, builtins.density("sine"), cfg).values)
    f = interp_Q_vector(square8, lambda x, y: builtins.force("trig")(0.05, x, y))
    new_c, rep_c = step(s, f, cfg, force_continuation=True)
    new_p, rep_p = step(s, f, cfg)
    assert rep_c.continuation and not rep_p.continuation
    alphas = [a for a, _ in rep_c.rung_residuals]
    assert alphas == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert all(np.isfinite(r) and r <= cfg.picard_tol for _, r in rep_c.rung_residuals)
    assert np.allclose(new_c.rho.values, new_p.rho.values, rtol=1e-9)


def test_regression_fixture_iterations():
    mesh = unit_square(16)
    cfg = SimConfig(params=FluidParams(gamma=1.4), dt=0.1, T=0.3, picard_tol=1e-10, picard_max=50)
    traj = run(mesh, builtins.density("sine"), builtins.force("trig"), cfg)
    its = [r.picard_iterations for r in traj.reports]
    assert max(its) <= 50 and all(r.residual <= 1e-10 for r in traj.reports)


def test_coupled_time_grid():
    cfg = SimConfig(c_coupling=builtins.STANDARD_COUPLING, dt=None, T=0.5)
    dt, M = cfg.time_grid(unit_square(8))
    assert M == 8 and dt == pytest.approx(1 / 16)
    dt, M = SimConfig(dt=0.1, T=1.0).time_grid(unit_square(4))
    assert M == 10 and dt == pytest.approx(0.1)


@pytest.mark.parametrize("kw", [{"dt": 0.0}, {"dt": 0.3, "T": 1.0}, {"T": -1.0},
                                {"c_coupling": -1.0}, {"picard_tol": 0.0}, {"picard_max": 0},
                                {"relaxation": 1.5}, {"continuation_steps": 0}, {"rho_floor": 0.0}])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        SimConfig(**kw)


def test_discretize_force_shapes(square8):
    f = discretize_force(square8, None, 0.1, 3)
    assert len(f) == 4 and not np.any(f[2])
    arr = np.ones((3, square8.n_cells, 2))
    assert np.array_equal(discretize_force(square8, arr, 0.1, 3)[3], arr[2])
    with pytest.raises(ConfigError):
        discretize_force(square8, arr[:2], 0.1, 3)
    g = discretize_force(square8, builtins.force("swirl"), 0.1, 2)
    # swirl scales with (1 + t) evaluated at the interval midpoint
    assert np.allclose(g[2], g[1] * 1.15 / 1.05)


def test_step_rejects_nonpositive_density(square8):
    with pytest.raises(PreconditionError):
        step(_state(square8, np.zeros(square8.n_cells)), None, SimConfig())
