"""P1 Finite Elements on the Unit Interval

Uniform, piecewise affine finite elements on Omega = (0, 1) with homogeneous
Dirichlet conditions. The boundary nodes carry no degrees of freedom, so a mesh
of 'n_cells' cells has 'n_cells - 1' unknowns.

This file can also be imported as a module and contains the following:

    * Mesh1D - The uniform partition of (0, 1)
    * NodalField - Coefficients of a function in V_h
    * ObservationWindow - The observation interval omega = (a, 1 - a)
    * assemble_mass - The mass matrix M
    * assemble_stiffness - The stiffness matrix A
    * assemble_obs_mass - The mass matrix M_omega restricted to omega
    * ritz_project - The a(.,.)-orthogonal projection onto V_h
    * interpolate_nodal - The nodal interpolant
    * l2_error_vs_exact - The L2(0, 1)-distance to a given function

Example of usage:

    >>> import numpy as np
    >>> from libs.fem1d import Mesh1D, interpolate_nodal, l2_error_vs_exact
    >>> mesh = Mesh1D(100)
    >>> field = interpolate_nodal(mesh, lambda x: np.sin(np.pi*x))
    >>> l2_error_vs_exact(field, lambda x: np.sin(np.pi*x)) < 1e-3
    True
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .linalg import SparseSymMatrix, solve_spd_cg
from .utils import ConfigError, QuadratureError, StructuralError


SpaceFunction = Callable[[np.ndarray], np.ndarray]

ERROR_QUAD_POINTS = 5
# NOTE: Products of two linears are quadratic, so three points integrate them exactly
OBS_QUAD_POINTS = 3

MASS_ELEMENT = np.array([[2., 1.], [1., 2.]])/6.
STIFFNESS_ELEMENT = np.array([[1., -1.], [-1., 1.]])


@dataclass(frozen=True)
class Mesh1D:
    n_cells: int

    def __post_init__(self) -> None:
        if int(self.n_cells) != self.n_cells or self.n_cells < 2:
            raise ConfigError(f"A mesh needs at least two cells, got {self.n_cells}")

    @property
    def h(self) -> float:
        return 1./self.n_cells

    @property
    def n_dofs(self) -> int:
        return self.n_cells - 1

    @cached_property
    def vertices(self) -> np.ndarray:
        """All vertices including the two boundary ones"""
        return np.linspace(0., 1., self.n_cells + 1)

    @cached_property
    def nodes(self) -> np.ndarray:
        """The interior node coordinates x_i = i*h"""
        return self.vertices[1:-1]

    def cell_dofs(self) -> np.ndarray:
        """The degrees of freedom of the two vertices of each cell, -1 marking
        the eliminated boundary vertices"""
        left = np.arange(self.n_cells) - 1
        right = left + 1
        right[-1] = -1
        return np.column_stack([left, right])

    def extend(self, coeffs: np.ndarray) -> np.ndarray:
        """Pads interior coefficients with the zero boundary values"""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1] != self.n_dofs:
            raise StructuralError(f"Expected {self.n_dofs} coefficients, got {coeffs.shape[-1]}")
        padding = [(0, 0)]*(coeffs.ndim - 1) + [(1, 1)]
        return np.pad(coeffs, padding)


@dataclass(frozen=True)
class ObservationWindow:
    """The interval omega = (a, 1 - a). The value a = 0 gives the full domain"""
    a: float = 0.2

    def __post_init__(self) -> None:
        if not 0. <= self.a < 0.5:
            raise ConfigError(f"The window parameter must lie in [0, 1/2), got {self.a}")

    @property
    def bounds(self):
        return self.a, 1. - self.a


@dataclass(frozen=True)
class NodalField:
    mesh: Mesh1D
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.shape != (self.mesh.n_dofs,):
            raise StructuralError(f"A field on {self.mesh.n_cells} cells needs"
                                  f" {self.mesh.n_dofs} coefficients, got {coeffs.shape}")
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zeros(cls, mesh: Mesh1D) -> NodalField:
        return cls(mesh, np.zeros(mesh.n_dofs))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluates the piecewise affine function"""
        return np.interp(x, self.mesh.vertices, self.mesh.extend(self.coeffs))


def _assemble(mesh: Mesh1D, element_matrices: np.ndarray) -> SparseSymMatrix:
    """Adds per-cell (2x2) element matrices into the global matrix, dropping
    the rows and columns of the boundary vertices"""
    dofs = mesh.cell_dofs()
    rows = np.repeat(dofs, 2, axis=1).ravel()
    cols = np.tile(dofs, (1, 2)).ravel()
    values = element_matrices.reshape(mesh.n_cells, 4).ravel()
    keep = (rows >= 0) & (rows <= cols)
    return SparseSymMatrix(mesh.n_dofs, rows[keep], cols[keep], values[keep])


def assemble_mass(mesh: Mesh1D) -> SparseSymMatrix:
    """Assembles M_ij = int phi_i phi_j dx (tridiagonal, SPD)"""
    return _assemble(mesh, np.broadcast_to(MASS_ELEMENT*mesh.h, (mesh.n_cells, 2, 2)))


def assemble_stiffness(mesh: Mesh1D) -> SparseSymMatrix:
    """Assembles A_ij = int phi_i' phi_j' dx (2/h on the diagonal, -1/h off)"""
    return _assemble(mesh, np.broadcast_to(STIFFNESS_ELEMENT/mesh.h, (mesh.n_cells, 2, 2)))


def assemble_obs_mass(mesh: Mesh1D, window: ObservationWindow) -> SparseSymMatrix:
    """Assembles (M_omega)_ij = int_omega phi_i phi_j dx

    Cells cut by the boundary of omega are integrated over their intersection
    with omega, so 'a' need not be a multiple of h

    Parameters
    ----------
    mesh: Mesh1D
    window: ObservationWindow

    Returns
    -------
    obs_mass: SparseSymMatrix
        Positive semidefinite
    """
    lower, upper = window.bounds
    left, right = mesh.vertices[:-1], mesh.vertices[1:]
    start, stop = np.maximum(left, lower), np.minimum(right, upper)
    length = np.clip(stop - start, 0., None)

    points, weights = np.polynomial.legendre.leggauss(OBS_QUAD_POINTS)
    # Quadrature points mapped onto each intersection, shape (n_cells, n_points)
    x = start[:, None] + 0.5*(points[None, :] + 1.)*length[:, None]
    phi_right = (x - left[:, None])/mesh.h
    phi = np.stack([1. - phi_right, phi_right], axis=1)
    scaled_weights = 0.5*length[:, None]*weights[None, :]
    element_matrices = np.einsum("cip,cjp,cp->cij", phi, phi, scaled_weights)
    return _assemble(mesh, element_matrices)


def _gauss_points(mesh: Mesh1D, n_points: int):
    points, weights = np.polynomial.legendre.leggauss(n_points)
    left = mesh.vertices[:-1]
    x = left[:, None] + 0.5*mesh.h*(points[None, :] + 1.)
    return x, 0.5*mesh.h*weights


def _evaluate(u: SpaceFunction, x: np.ndarray) -> np.ndarray:
    values = np.broadcast_to(np.asarray(u(x), dtype=float), x.shape)
    if not np.all(np.isfinite(values)):
        raise QuadratureError("The function returned non-finite values at the"
                              " quadrature points")
    return values


def interpolate_nodal(mesh: Mesh1D, u: SpaceFunction) -> NodalField:
    """Interpolates u at the interior nodes, coeffs_i = u(x_i)"""
    return NodalField(mesh, np.array(np.broadcast_to(u(mesh.nodes), mesh.nodes.shape),
                                     dtype=float))


def ritz_project(mesh: Mesh1D, u: SpaceFunction,
                 du: Optional[SpaceFunction] = None,
                 tol: float = 1e-12) -> NodalField:
    """Projects u onto V_h orthogonally with respect to a(u, v) = (u', v')

    Parameters
    ----------
    mesh: Mesh1D
    u: SpaceFunction
        A function with u(0) = u(1) = 0
    du: SpaceFunction, optional
        The derivative of u. If given the right-hand side a(u, phi_i) is
        integrated with 5-point Gauss quadrature per cell. Otherwise the cell
        integrals of u' are taken from the increments of u over the cells, which
        is exact as phi_i' is constant on every cell
    tol: float, optional
        Relative tolerance of the stiffness solve

    Returns
    -------
    projection: NodalField
    """
    if du is not None:
        x, weights = _gauss_points(mesh, ERROR_QUAD_POINTS)
        cell_integrals = _evaluate(du, x) @ weights
    else:
        cell_integrals = np.diff(_evaluate(u, mesh.vertices))

    # On cell k the left vertex has slope -1/h and the right one +1/h
    load = np.zeros(mesh.n_cells + 1)
    np.add.at(load, np.arange(mesh.n_cells), -cell_integrals/mesh.h)
    np.add.at(load, np.arange(1, mesh.n_cells + 1), cell_integrals/mesh.h)

    coeffs, report = solve_spd_cg(assemble_stiffness(mesh), load[1:-1], tol=tol)
    if not report.converged:
        raise QuadratureError(f"Ritz projection solve stalled at residual"
                              f" {report.residual_norm:.3e}")
    return NodalField(mesh, coeffs)


def l2_error_vs_exact(v: NodalField, u_exact: SpaceFunction) -> float:
    """Computes ||v - u_exact||_{L2(0, 1)} with 5-point Gauss quadrature per cell"""
    x, weights = _gauss_points(v.mesh, ERROR_QUAD_POINTS)
    difference = v(x) - _evaluate(u_exact, x)
    return float(np.sqrt(np.sum((difference**2) @ weights)))


def l2_norm(mesh: Mesh1D, coeffs: np.ndarray, mass: Optional[SparseSymMatrix] = None) -> float:
    """The L2-norm of a function in V_h through its mass matrix"""
    mass = assemble_mass(mesh) if mass is None else mass
    return float(np.sqrt(max(coeffs @ (mass @ coeffs), 0.)))


def h1_seminorm(mesh: Mesh1D, coeffs: np.ndarray,
                stiffness: Optional[SparseSymMatrix] = None) -> float:
    """The norm of the gradient of a function in V_h"""
    stiffness = assemble_stiffness(mesh) if stiffness is None else stiffness
    return float(np.sqrt(max(coeffs @ (stiffness @ coeffs), 0.)))
