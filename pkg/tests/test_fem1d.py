"""Tests for the P1 discretization on (0, 1)"""
import numpy as np
import pytest
import scipy.linalg as sla

from libs.fem1d import (Mesh1D, NodalField, ObservationWindow, assemble_mass,
                        assemble_obs_mass, assemble_stiffness, h1_seminorm,
                        interpolate_nodal, l2_error_vs_exact, l2_norm, ritz_project)
from libs.utils import ConfigError, QuadratureError, StructuralError, observed_orders


def sine(x):
    return np.sin(np.pi*x)


def test_mesh_validation():
    with pytest.raises(ConfigError):
        Mesh1D(1)
    mesh = Mesh1D(4)
    assert mesh.h == 0.25
    np.testing.assert_allclose(mesh.nodes, [0.25, 0.5, 0.75])


@pytest.mark.parametrize("a", [-0.1, 0.5, 0.7])
def test_window_validation(a):
    with pytest.raises(ConfigError):
        ObservationWindow(a)


def test_field_shape():
    with pytest.raises(StructuralError):
        NodalField(Mesh1D(4), np.zeros(4))


def test_mass_single_node():
    np.testing.assert_allclose(assemble_mass(Mesh1D(2)).to_dense(), [[1./3.]])


def test_mass_row_sums():
    mesh = Mesh1D(8)
    row_sums = assemble_mass(mesh).to_dense().sum(axis=1)
    # The rows next to the boundary lose the coupling to the eliminated vertex
    row_sums[[0, -1]] += mesh.h/6.
    np.testing.assert_allclose(row_sums, mesh.h)


def test_mass_zero_action():
    np.testing.assert_array_equal(assemble_mass(Mesh1D(6)) @ np.zeros(5), np.zeros(5))


def test_stiffness_single_node():
    np.testing.assert_allclose(assemble_stiffness(Mesh1D(2)).to_dense(), [[4.]])


def test_stiffness_tridiagonal():
    mesh = Mesh1D(5)
    dense = assemble_stiffness(mesh).to_dense()
    expected = (2.*np.eye(4) - np.eye(4, k=1) - np.eye(4, k=-1))/mesh.h
    np.testing.assert_allclose(dense, expected)


def test_stiffness_positive():
    mesh = Mesh1D(10)
    field = interpolate_nodal(mesh, lambda x: x*(1. - x))
    assert field.coeffs @ (assemble_stiffness(mesh) @ field.coeffs) > 0


def test_stiffness_consistent_with_laplacian():
    mesh = Mesh1D(200)
    field = interpolate_nodal(mesh, sine)
    action = assemble_stiffness(mesh) @ field.coeffs
    mass_action = np.pi**2*(assemble_mass(mesh) @ field.coeffs)
    assert np.max(np.abs(action - mass_action)) <= 1e-3*np.max(np.abs(mass_action))


def test_obs_mass_full_window():
    mesh = Mesh1D(7)
    np.testing.assert_allclose(assemble_obs_mass(mesh, ObservationWindow(0.)).to_dense(),
                               assemble_mass(mesh).to_dense(), atol=1e-15)


def test_obs_mass_aligned_window():
    mesh = Mesh1D(10)
    obs_mass = assemble_obs_mass(mesh, ObservationWindow(0.2)).to_dense()

    expected = np.zeros((mesh.n_dofs, mesh.n_dofs))
    element = np.array([[2., 1.], [1., 2.]])*mesh.h/6.
    # Cells 2..7 make up (0.2, 0.8), the dofs of cell k are k - 1 and k
    for cell in range(2, 8):
        dofs = [cell - 1, cell]
        expected[np.ix_(dofs, dofs)] += element
    np.testing.assert_allclose(obs_mass, expected, atol=1e-15)


def test_obs_mass_cut_cells():
    mesh = Mesh1D(7)
    obs_mass = assemble_obs_mass(mesh, ObservationWindow(0.2))
    # The interior hats sum up to one on (h, 1 - h), which contains omega
    ones = np.ones(mesh.n_dofs)
    assert np.isclose(ones @ (obs_mass @ ones), 0.6, rtol=1e-12)


def test_obs_mass_disjoint_support():
    mesh = Mesh1D(10)
    coeffs = np.zeros(mesh.n_dofs)
    coeffs[0] = 1.
    obs_mass = assemble_obs_mass(mesh, ObservationWindow(0.3))
    assert coeffs @ (obs_mass @ coeffs) == 0.


def test_obs_mass_bounded_by_mass():
    mesh = Mesh1D(13)
    mass, obs_mass = assemble_mass(mesh), assemble_obs_mass(mesh, ObservationWindow(0.17))
    rng = np.random.default_rng(2)
    for _ in range(20):
        v = rng.standard_normal(mesh.n_dofs)
        assert -1e-14 <= v @ (obs_mass @ v) <= v @ (mass @ v) + 1e-14


def test_ritz_idempotent():
    mesh = Mesh1D(8)
    field = NodalField(mesh, np.random.default_rng(1).standard_normal(mesh.n_dofs))
    np.testing.assert_allclose(ritz_project(mesh, field).coeffs, field.coeffs, atol=1e-10)


def test_ritz_zero():
    np.testing.assert_allclose(ritz_project(Mesh1D(6), lambda x: 0.*x).coeffs, 0., atol=1e-14)


def test_ritz_order_two():
    errors = [l2_error_vs_exact(ritz_project(Mesh1D(cells), sine), sine)
              for cells in [25, 50, 100]]
    assert errors[-1] < 1e-4
    assert min(observed_orders([1/25, 1/50, 1/100], errors)) > 1.9


def test_ritz_exact_at_nodes():
    mesh = Mesh1D(16)
    u = lambda x: x**2*(1. - x)*np.exp(x)
    du = lambda x: (2.*x - 3.*x**2)*np.exp(x) + x**2*(1. - x)*np.exp(x)
    projection = ritz_project(mesh, u, du=du)
    # In one dimension the Ritz projection interpolates at the nodes
    np.testing.assert_allclose(projection.coeffs, u(mesh.nodes), atol=1e-10)


def test_ritz_quadrature_failure():
    with pytest.raises(QuadratureError):
        ritz_project(Mesh1D(4), sine, du=lambda x: np.full_like(x, np.nan))


def test_interpolate_sine():
    field = interpolate_nodal(Mesh1D(4), sine)
    np.testing.assert_allclose(field.coeffs, [np.sqrt(2)/2, 1., np.sqrt(2)/2])


def test_interpolate_reproduces_linears():
    mesh = Mesh1D(6)
    hat = lambda x: np.minimum(x, 1. - x)
    # Mesh nodes hit the kink at 1/2, so the interpolant is exact
    assert l2_error_vs_exact(interpolate_nodal(mesh, hat), hat) < 1e-14


def test_interpolate_zero():
    np.testing.assert_array_equal(interpolate_nodal(Mesh1D(5), lambda x: 0.*x).coeffs, 0.)


def test_l2_error_of_zero_field():
    assert np.isclose(l2_error_vs_exact(NodalField.zeros(Mesh1D(10)), sine),
                      np.sqrt(0.5), rtol=1e-10)


def test_l2_error_symmetric():
    mesh = Mesh1D(9)
    field = interpolate_nodal(mesh, lambda x: x*(1. - x))
    negated = NodalField(mesh, -field.coeffs)
    assert np.isclose(l2_error_vs_exact(field, sine),
                      l2_error_vs_exact(negated, lambda x: -sine(x)), rtol=1e-14)


def test_l2_error_of_own_interpolant():
    mesh = Mesh1D(5)
    assert l2_error_vs_exact(interpolate_nodal(mesh, lambda x: 0.*x), lambda x: 0.*x) == 0.


def test_norms_of_sine():
    mesh = Mesh1D(400)
    coeffs = interpolate_nodal(mesh, sine).coeffs
    assert np.isclose(l2_norm(mesh, coeffs), np.sqrt(0.5), rtol=1e-4)
    assert np.isclose(h1_seminorm(mesh, coeffs), np.pi*np.sqrt(0.5), rtol=1e-4)


@pytest.mark.parametrize("cells", [4, 16, 64])
def test_discrete_poincare(cells):
    mesh = Mesh1D(cells)
    eigenvalues = sla.eigh(assemble_stiffness(mesh).to_dense(),
                           assemble_mass(mesh).to_dense(), eigvals_only=True)
    assert 1./eigenvalues.min() <= 1./np.pi**2 + 0.01
