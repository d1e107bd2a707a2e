import numpy as np
import pytest
import sympy as sym
from hypothesis import given, settings, strategies as st

from semistokes.fespace import (DensityField, VelocityField, VorticityField, check_commuting,
                                check_commuting_curl, curl_W, div_V, eval_V, eval_W, interp_Q,
                                interp_V, interp_W, operators, rt0_values, face_fluxes)
from semistokes.diagnostics import velocity_l2_error
from semistokes.mesh import build_mesh, unit_square

REF = build_mesh([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], [[0, 1, 2]])


def test_interp_Q_constant_and_linear(square8):
    m = square8
    assert np.allclose(interp_Q(m, lambda x, y: 3.5 + 0 * x).values, 3.5)
    assert np.allclose(interp_Q(m, lambda x, y: x).values, m.centroids[:, 0], atol=1e-15)


def test_interp_Q_x_squared_reference():
    x, y = sym.symbols("x y")
    avg = sym.integrate(sym.integrate(x**2, (y, 0, 1 - x)), (x, 0, 1)) / sym.Rational(1, 2)
    assert avg == sym.Rational(1, 6)
    assert interp_Q(REF, lambda x, y: x**2).values[0] == pytest.approx(float(avg), abs=1e-15)


def test_interp_V_constant_reproduced(square8):
    m = square8
    c = np.array([0.7, -1.3])
    flux = face_fluxes(m, lambda x, y: (c[0] + 0 * x, c[1] + 0 * y))
    pts = m.centroids
    vals = rt0_values(m, flux, np.arange(m.n_cells), pts)
    assert np.abs(vals - c).max() < 1e-14
    # inside every cell, also at the vertices
    for k in range(3):
        v = rt0_values(m, flux, np.arange(m.n_cells), m.vertices[m.cells[:, k]])
        assert np.abs(v - c).max() < 1e-13


def test_interp_V_commuting_example(square8):
    m = square8
    v = lambda x, y: (x / 2, y / 2)
    # on the full RT0 space the divergence is exactly 1
    assert np.allclose(operators(m).B_full @ face_fluxes(m, v), 1.0, atol=1e-13)
    assert check_commuting(m, v, lambda x, y: 1.0 + 0 * x) < 1e-13


def test_interp_V_tangential_field_is_zero(square8):
    # v . nu = 0 on every face: impossible for a nonzero field on all of them,
    # but a field vanishing on all faces interpolates to zero
    v = interp_V(square8, lambda x, y: (0 * x, 0 * y))
    assert np.all(v.coeffs == 0)


def test_interp_V_drops_boundary(square8):
    v = interp_V(square8, lambda x, y: (1 + 0 * x, 0 * y))
    assert v.coeffs.shape == (len(square8.interior_faces),)
    assert abs(square8.areas @ v.div()) < 1e-14


def test_interp_W(square8):
    m = square8
    assert np.all(interp_W(m, lambda x, y: 0 * x).values == 0)
    ones = interp_W(m, lambda x, y: 1 + 0 * x).full()
    assert np.all(ones[m.boundary_vertex_mask] == 0)
    assert np.all(ones[~m.boundary_vertex_mask] == 1)


def test_interp_W_linear_inside():
    m = unit_square(6)
    w = interp_W(m, lambda x, y: 2 * x + 3 * y)
    interior = [c for c in range(m.n_cells) if not m.boundary_vertex_mask[m.cells[c]].any()]
    for c in interior[:10]:
        p = m.centroids[c]
        assert eval_W(w, c, p) == pytest.approx(2 * p[0] + 3 * p[1], abs=1e-14)


def test_zero_fields(square8):
    m = square8
    v = VelocityField.zeros(m)
    assert np.all(eval_V(v, 3, m.centroids[3]) == 0)
    assert np.all(div_V(v) == 0)
    w = VorticityField.zeros(m)
    assert eval_W(w, 3, m.centroids[3]) == 0
    assert np.all(curl_W(w) == 0)


def test_eval_outside_cell_is_usage_error(square8):
    with pytest.raises(ValueError):
        eval_V(VelocityField.zeros(square8), 0, [0.9, 0.9])


def test_single_face_basis_divergence_reference():
    x, y = sym.symbols("x y")
    # basis with unit flux through the face opposite vertex 0: (x - p0) / (2|E|)
    phi = sym.Matrix([x, y]) / (2 * sym.Rational(1, 2))
    div = sym.diff(phi[0], x) + sym.diff(phi[1], y)
    assert div == 2                                  # = 1/|E|
    ops = operators(REF)
    B = ops.B_full.toarray()[0]
    assert np.allclose(np.abs(B), 2.0)


def test_curl_of_hat_reference():
    x, y = sym.symbols("x y")
    hat = 1 - x - y
    oracle = (float(sym.diff(hat, y)), float(-sym.diff(hat, x)))
    assert oracle == (-1.0, 1.0)
    # diamond with the origin as its only interior vertex; cell 0 is the reference triangle
    m = build_mesh([[0, 0], [1, 0], [0, 1], [-1, 0], [0, -1]],
                   [[0, 1, 2], [0, 2, 3], [0, 3, 4], [0, 4, 1]])
    w = VorticityField(m, [1.0])
    assert np.allclose(curl_W(w, 0), oracle)


def test_check_commuting_examples(square8):
    m = square8
    assert check_commuting(m, lambda x, y: (2 + 0 * x, -1 + 0 * y), lambda x, y: 0 * x) < 1e-13
    assert check_commuting(m, lambda x, y: (x**2, 0 * y), lambda x, y: 2 * x) < 1e-13


def test_check_commuting_sine_is_second_order():
    res = [check_commuting(unit_square(K), lambda x, y: (np.sin(x), 0 * y),
                           lambda x, y: np.cos(x)) for K in (4, 8, 16, 32)]
    assert all(r > 0 for r in res)
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert orders.min() > 1.8


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=6, max_size=6))
def test_commuting_degree_one(c):
    m = unit_square(4)
    v = lambda x, y: (c[0] + c[1] * x + c[2] * y, c[3] + c[4] * x + c[5] * y)
    assert check_commuting(m, v, lambda x, y: c[1] + c[5] + 0 * x) < 1e-12


def test_commuting_curl_random(square8):
    rng = np.random.default_rng(3)
    for _ in range(5):
        psi = VorticityField(square8, rng.standard_normal(len(square8.interior_vertices)))
        assert check_commuting_curl(square8, psi) < 1e-12


def test_discrete_complex(square8):
    ops = operators(square8)
    assert abs(ops.B @ ops.G).max() < 1e-12
    K = ops.G.T @ ops.M_V @ ops.G - ops.K_W
    assert abs(K).max() < 1e-12


def test_velocity_divergence_integrates_to_zero(square8):
    rng = np.random.default_rng(0)
    v = VelocityField(square8, rng.standard_normal(len(square8.interior_faces)))
    assert abs(square8.areas @ v.div()) < 1e-13


def test_interpolation_error_first_order():
    v = lambda x, y: (np.sin(np.pi * x) * np.cos(np.pi * y), -np.cos(np.pi * x) * np.sin(np.pi * y))
    errs = []
    for K in (4, 8, 16, 32):
        m = unit_square(K)
        errs.append(velocity_l2_error(m, interp_V(m, v), v))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert orders.min() > 0.9


def test_inverse_estimate_constant_stable():
    rng = np.random.default_rng(5)
    consts = []
    for K in (4, 8, 16):
        m = unit_square(K)
        ops = operators(m)
        c = 0.0
        for _ in range(5):
            w = rng.standard_normal(len(m.interior_vertices))
            c = max(c, np.sqrt((w @ ops.K_W @ w) / (w @ ops.M_W @ w)) / K)
        consts.append(c)
    assert max(consts) / min(consts) < 1.5


def test_density_field_validation(square8):
    with pytest.raises(ValueError):
        DensityField(square8, np.ones(3))
    with pytest.raises(ValueError):
        DensityField(square8, np.full(square8.n_cells, np.nan))
