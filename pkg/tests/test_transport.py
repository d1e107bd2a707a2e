import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semistokes.errors import ConfigError, PreconditionError
from semistokes.fespace import DensityField, VelocityField
from semistokes.mesh import unit_square
from semistokes.transport import (Renormalizer, assemble_transport, positivity_bound,
                                  renormalized_residual, renormalized_terms, step_density,
                                  upwind_split)

from conftest import two_cell_mesh


@pytest.mark.parametrize("a, expect", [(2.0, (2.0, 0.0)), (-3.0, (0.0, -3.0)), (0.0, (0.0, 0.0))])
def test_upwind_split(a, expect):
    p, m = upwind_split(a)
    assert (p, m) == expect
    assert p + m == a and p - m == abs(a)


def test_zero_velocity_gives_mass_matrix(square8):
    A = assemble_transport(square8, VelocityField.zeros(square8), 0.3).toarray()
    assert np.array_equal(A, np.diag(square8.areas))


def test_two_cell_matrix_and_step():
    m = two_cell_mesh(np.sqrt(2.0))                  # areas (1, 1)
    u = VelocityField(m, [1.0])                      # flux q = 1 from cell 0 into cell 1
    A = assemble_transport(m, u, 0.5).toarray()
    assert np.allclose(A, [[1.5, 0.0], [-0.5, 1.0]], atol=1e-15)
    rho = step_density(DensityField(m, [1.0, 1.0]), u, 0.5)
    assert np.allclose(rho.values, [2 / 3, 4 / 3], rtol=1e-14)


def test_nonpositive_dt_is_config_error(square8):
    with pytest.raises(ConfigError):
        assemble_transport(square8, VelocityField.zeros(square8), 0.0)


def test_nonpositive_density_rejected(square8):
    with pytest.raises(PreconditionError):
        step_density(DensityField(square8, np.zeros(square8.n_cells)), VelocityField.zeros(square8), 0.1)


def test_zero_velocity_step_is_identity(square8):
    rho = DensityField(square8, np.linspace(0.5, 2.0, square8.n_cells))
    out = step_density(rho, VelocityField.zeros(square8), 0.2)
    assert np.array_equal(out.values, rho.values)


def _random_data(seed, K=6):
    rng = np.random.default_rng(seed)
    m = unit_square(K)
    u = VelocityField(m, 3 * rng.standard_normal(len(m.interior_faces)))
    rho = DensityField(m, rng.uniform(0.05, 3.0, m.n_cells))
    dt = float(rng.uniform(0.01, 2.0))
    return m, u, rho, dt


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_m_matrix_and_mass(seed):
    m, u, rho, dt = _random_data(seed)
    A = assemble_transport(m, u, dt)
    D = A.toarray()
    off = D - np.diag(np.diag(D))
    assert off.max() <= 0
    assert np.allclose(D.sum(axis=0), m.areas, rtol=0, atol=1e-13 * np.abs(D).sum(axis=0).max())
    # column diagonal dominance
    assert np.all(np.diag(D) >= np.abs(off).sum(axis=0) - 1e-13)
    new = step_density(rho, u, dt)
    assert abs(new.integral() - rho.integral()) <= 1e-12 * rho.integral()
    # a pure-outflow cell attains the bound with equality, so allow a few ulps
    assert new.values.min() >= positivity_bound(rho, u, dt) * (1 - 4 * np.finfo(float).eps)


def test_positivity_bound_arithmetic():
    m = two_cell_mesh(np.sqrt(2.0))
    u = VelocityField(m, [2.0])                     # div = +2 on cell 0, -2 on cell 1
    assert positivity_bound(DensityField(m, [1.0, 1.0]), u, 0.1) == pytest.approx(1 / 1.2)
    assert positivity_bound(DensityField(m, [0.4, 3.0]), VelocityField.zeros(m), 0.1) == 0.4


def test_quadratic_renormalization_zero_velocity(square8):
    rho = DensityField(square8, np.linspace(0.5, 2.0, square8.n_cells))
    R = Renormalizer.power(2.0)
    assert renormalized_residual(rho, rho, VelocityField.zeros(square8), 0.1, R) == 0.0


def test_quadratic_renormalization_two_cells():
    m = two_cell_mesh(np.sqrt(2.0))
    u = VelocityField(m, [1.0])
    r0 = DensityField(m, [1.0, 1.0])
    r1 = step_density(r0, u, 0.5)
    assert abs(renormalized_residual(r0, r1, u, 0.5, Renormalizer.power(2.0))) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_renormalization_random(seed):
    m, u, rho, dt = _random_data(seed)
    new = step_density(rho, u, dt)
    quad = renormalized_residual(rho, new, u, dt, Renormalizer.power(2.0))
    assert abs(quad) <= 1e-10 * (m.areas @ rho.values**2)
    R = Renormalizer.power(1.4)
    assert renormalized_residual(rho, new, u, dt, R) >= 0
    # with exact Taylor remainders the identity closes for any power
    t = renormalized_terms(rho, new, u, dt, R)
    exact = t["B_new"] + t["b_div"] + t["time"] + t["face"] - t["B_prev"]
    assert abs(exact) <= 1e-10 * t["B_prev"]
    assert t["face"] >= t["face_lower"] >= 0


def test_renormalizer_b_consistency():
    R = Renormalizer.power(1.4, scale=2.5)
    z = np.array([0.3, 1.0, 1.7])
    assert np.allclose(R.b(z), z * R.Bp(z) - R.B(z))
    assert np.allclose(R.b(z), 0.4 * 2.5 * z**1.4)


def test_centered_variant_breaks_m_matrix():
    m = two_cell_mesh()
    u = VelocityField(m, [1.0])
    C = assemble_transport(m, u, 0.5, centered=True).toarray()
    assert C[0, 1] > 0                              # positive off-diagonal
    A = assemble_transport(m, u, 0.5).toarray()
    assert A[0, 1] <= 0 and A[1, 0] <= 0
