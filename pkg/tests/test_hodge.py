import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semistokes.errors import PreconditionError
from semistokes.fespace import VelocityField, VorticityField, operators
from semistokes.hodge import decompose, poincare_constants, solve_div
from semistokes.mesh import build_mesh, unit_square

from conftest import two_cell_mesh

DIAMOND = dict(vertices=[[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]],
               cells=[[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])


def _mnorm(mesh, c):
    return math.sqrt(c @ (operators(mesh).M_V @ c))


def test_curl_input_has_no_perp_part(square8):
    ops = operators(square8)
    eta = np.random.default_rng(0).standard_normal(ops.M_W.shape[0])
    parts = decompose(square8, VelocityField(square8, ops.G @ eta))
    assert np.abs(parts.z.coeffs).max() <= 1e-12 * np.abs(ops.G @ eta).max()
    assert np.allclose(parts.zeta.values, eta, atol=1e-12)


def test_perp_input_has_no_curl_part(square8):
    q = np.random.default_rng(1).standard_normal(square8.n_cells)
    q -= (square8.areas @ q) / square8.volume
    v = solve_div(square8, q)
    parts = decompose(square8, v)
    assert np.abs(parts.zeta.values).max() <= 1e-12 * np.abs(v.coeffs).max()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from([4, 8]))
def test_decomposition_properties(seed, K):
    mesh = unit_square(K)
    ops = operators(mesh)
    u = np.random.default_rng(seed).standard_normal(ops.M_V.shape[0])
    parts = decompose(mesh, VelocityField(mesh, u))
    cz = parts.curl_part.coeffs
    nu = _mnorm(mesh, u)
    assert _mnorm(mesh, u - cz - parts.z.coeffs) <= 1e-12 * nu
    assert abs(cz @ (ops.M_V @ parts.z.coeffs)) <= 1e-10 * nu**2
    # the curl part is discretely divergence free, so z carries all of div u
    assert np.abs(parts.curl_part.div()).max() <= 1e-10 * np.abs(u).max() / mesh.areas.min()
    assert np.allclose(parts.z.div(), VelocityField(mesh, u).div(), atol=1e-9)


def test_solve_div_two_cell_oracle():
    m = two_cell_mesh(np.sqrt(2.0))                 # areas (1, 1), one interior face
    for mass in (1.0, -2.5, 1e-3):
        v = solve_div(m, [mass, -mass])
        assert v.coeffs == pytest.approx([mass], rel=1e-14)


def test_solve_div_zero_and_mean_error(square8):
    assert not np.any(solve_div(square8, np.zeros(square8.n_cells)).coeffs)
    with pytest.raises(PreconditionError):
        solve_div(square8, np.ones(square8.n_cells))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_solve_div_properties(seed):
    mesh = unit_square(6)
    ops = operators(mesh)
    q = np.random.default_rng(seed).standard_normal(mesh.n_cells)
    q -= (mesh.areas @ q) / mesh.volume
    v = solve_div(mesh, q)
    assert np.abs(v.div() - q).max() <= 1e-10 * np.abs(q).max()
    # weakly curl free: orthogonal to every discrete curl
    assert np.abs(ops.G.T @ (ops.M_V @ v.coeffs)).max() <= 1e-10 * np.abs(v.coeffs).max()


def test_divergence_free_field_is_a_curl(square8):
    ops = operators(square8)
    u = ops.G @ np.random.default_rng(2).standard_normal(ops.M_W.shape[0])
    assert np.abs(VelocityField(square8, u).div()).max() < 1e-11
    parts = decompose(square8, VelocityField(square8, u))
    assert _mnorm(square8, parts.z.coeffs) <= 1e-10 * _mnorm(square8, u)


def test_poincare_small_meshes():
    c_div, c_curl = poincare_constants(two_cell_mesh())
    assert 0 < c_div < np.inf and c_curl == 0.0      # no interior vertex: W_h = {0}
    c_div, c_curl = poincare_constants(build_mesh(**DIAMOND))
    assert 0 < c_div < np.inf and 0 < c_curl < np.inf


@pytest.fixture(scope="module")
def poincare_ladder():
    return {K: poincare_constants(unit_square(K)) for K in (8, 16, 32)}


def test_poincare_continuum_limit(poincare_ladder):
    c_div, c_curl = poincare_ladder[32]
    assert abs(c_curl * math.pi * math.sqrt(2) - 1) <= 0.1
    assert abs(c_div * math.pi - 1) <= 0.1


def test_poincare_stable_under_refinement(poincare_ladder):
    for i in (0, 1):
        vals = np.array([c[i] for c in poincare_ladder.values()])
        assert vals.max() / vals.min() <= 1.05


def test_zeta_lives_in_w(square8):
    parts = decompose(square8, VelocityField.zeros(square8))
    assert isinstance(parts.zeta, VorticityField)
    assert len(parts.zeta.values) == len(square8.interior_vertices)
