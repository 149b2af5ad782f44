"""Space-Time Discrete Forms

The fully discrete Lagrangian of the data assimilation problem and everything
derived from it: the bilinear forms A1 and A2, the seminorms ||.||_R, ||.||_D
and ||.||_C, and the assembled, symmetric Euler-Lagrange (KKT) system.

For u = (u^0, ..., u^N) and z = (z^1, ..., z^N) in V_h the Lagrangian reads

    L(u, z) = 1/2 gamma_M tau sum ||u^n - q^n||_omega^2 + 1/2 gamma_0 ||h grad u^0||^2
              + 1/2 gamma_1 tau sum ||tau grad d_tau u^n||^2
              + tau sum [(d_tau u^n, z^n) + a(u^n, z^n) - (f^n, z^n)]

with all sums over n = 1, ..., N and d_tau u^n = (u^n - u^{n-1})/tau.

This file can also be imported as a module and contains the following:

    * AssimConfig - Discretization and regularization parameters
    * SpaceTimeState, DualState, ProblemData - Time level containers
    * KktSystem - The assembled saddle point system with its index map
    * discrete_time_derivative, lagrangian_value, form_a1, form_a2
    * seminorm_r, norm_d, norm_c
    * assemble_kkt, kkt_residual
    * coercivity_witness, find_coercivity_alpha

Example of usage:

    >>> from libs.fem1d import Mesh1D, ObservationWindow
    >>> from libs.forms import AssimConfig, assemble_kkt, ProblemData
    >>> cfg = AssimConfig(1., 1., 0., n_steps=2, final_time=0.1, mesh=Mesh1D(4))
    >>> assemble_kkt(cfg, ProblemData.zeros(cfg)).matrix.dim
    15
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sps

from .fem1d import (Mesh1D, NodalField, ObservationWindow, assemble_mass,
                    assemble_obs_mass, assemble_stiffness)
from .linalg import SparseSymMatrix
from .utils import ConfigError, StructuralError


# NOTE: Step sizes tried for the coercivity witness, 1, 1/2, ..., 2^-10
COERCIVITY_ALPHAS = [2.**-k for k in range(11)]


@dataclass(frozen=True)
class AssimConfig:
    """The parameters of the regularized discrete problem

    Parameters
    ----------
    gamma_m: float
        Weight of the data misfit, must be positive
    gamma_0: float
        Weight of the h-scaled H1-seminorm of u^0, must be positive unless
        'allow_unregularized' is set
    gamma_1: float
        Weight of the tau-scaled gradients of the time increments, non-negative
    n_steps: int
        The number of time steps N
    final_time: float
        T, with tau = T/N
    mesh: Mesh1D
    window: ObservationWindow, optional
    allow_unregularized: bool, optional
        Permits gamma_0 = 0 to reproduce the divergence of the unregularized method
    """
    gamma_m: float
    gamma_0: float
    gamma_1: float
    n_steps: int
    final_time: float
    mesh: Mesh1D
    window: ObservationWindow = field(default_factory=ObservationWindow)
    allow_unregularized: bool = False

    def __post_init__(self) -> None:
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ConfigError(f"At least one time step is needed, got {self.n_steps}")
        if not self.final_time > 0:
            raise ConfigError(f"The final time must be positive, got {self.final_time}")
        if not self.gamma_m > 0:
            raise ConfigError(f"gamma_M must be positive, got {self.gamma_m}")
        if self.gamma_1 < 0:
            raise ConfigError(f"gamma_1 must be non-negative, got {self.gamma_1}")
        if self.gamma_0 < 0 or (self.gamma_0 == 0 and not self.allow_unregularized):
            raise ConfigError(f"gamma_0 must be positive, got {self.gamma_0}."
                              " Set 'allow_unregularized' to permit gamma_0 = 0")

    @property
    def tau(self) -> float:
        return self.final_time/self.n_steps

    @property
    def h(self) -> float:
        return self.mesh.h

    @property
    def n_dofs(self) -> int:
        return self.mesh.n_dofs

    @property
    def times(self) -> np.ndarray:
        """The time levels t_n = n*tau, n = 0, ..., N"""
        return self.tau*np.arange(self.n_steps + 1)

    @cached_property
    def mass(self) -> SparseSymMatrix:
        return assemble_mass(self.mesh)

    @cached_property
    def stiffness(self) -> SparseSymMatrix:
        return assemble_stiffness(self.mesh)

    @cached_property
    def obs_mass(self) -> SparseSymMatrix:
        return assemble_obs_mass(self.mesh, self.window)

    @cached_property
    def step_matrix(self) -> SparseSymMatrix:
        """M + tau*A, the matrix of one implicit Euler step"""
        return self.mass + self.tau*self.stiffness

    def with_gammas(self, **gammas) -> AssimConfig:
        """A copy with some of gamma_m, gamma_0 and gamma_1 replaced"""
        values = {"gamma_m": self.gamma_m, "gamma_0": self.gamma_0,
                  "gamma_1": self.gamma_1, **gammas}
        return AssimConfig(n_steps=self.n_steps, final_time=self.final_time,
                           mesh=self.mesh, window=self.window,
                           allow_unregularized=self.allow_unregularized, **values)


def _levels(values, n_levels: int, n_dofs: int, name: str) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != (n_levels, n_dofs):
        raise StructuralError(f"{name} needs shape {(n_levels, n_dofs)}, got {values.shape}")
    return values


@dataclass(frozen=True)
class SpaceTimeState:
    """The primal trajectory u = (u^0, ..., u^N), one row per time level"""
    mesh: Mesh1D
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 2:
            raise StructuralError(f"A state needs at least two time levels, got {values.shape}")
        object.__setattr__(self, "values", _levels(values, values.shape[0],
                                                   self.mesh.n_dofs, "SpaceTimeState"))

    @classmethod
    def zeros(cls, cfg: AssimConfig) -> SpaceTimeState:
        return cls(cfg.mesh, np.zeros((cfg.n_steps + 1, cfg.n_dofs)))

    @property
    def n_steps(self) -> int:
        return self.values.shape[0] - 1

    def level(self, n: int) -> NodalField:
        return NodalField(self.mesh, self.values[n])

    def increments(self) -> np.ndarray:
        """u^n - u^{n-1} for n = 1, ..., N"""
        return np.diff(self.values, axis=0)

    def __add__(self, other: SpaceTimeState) -> SpaceTimeState:
        return SpaceTimeState(self.mesh, self.values + other.values)

    def __mul__(self, scalar: float) -> SpaceTimeState:
        return SpaceTimeState(self.mesh, scalar*self.values)

    __rmul__ = __mul__


@dataclass(frozen=True)
class DualState:
    """The dual trajectory z = (z^1, ..., z^N). Row n - 1 holds z^n, z^{N+1} = 0"""
    mesh: Mesh1D
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 1:
            raise StructuralError(f"A dual state needs at least one time level, got {values.shape}")
        object.__setattr__(self, "values", _levels(values, values.shape[0],
                                                   self.mesh.n_dofs, "DualState"))

    @classmethod
    def zeros(cls, cfg: AssimConfig) -> DualState:
        return cls(cfg.mesh, np.zeros((cfg.n_steps, cfg.n_dofs)))

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    def level(self, n: int) -> NodalField:
        """z^n for n = 1, ..., N"""
        if not 1 <= n <= self.n_steps:
            raise StructuralError(f"Dual levels run from 1 to {self.n_steps}, got {n}")
        return NodalField(self.mesh, self.values[n - 1])

    def __add__(self, other: DualState) -> DualState:
        return DualState(self.mesh, self.values + other.values)

    def __mul__(self, scalar: float) -> DualState:
        return DualState(self.mesh, scalar*self.values)

    __rmul__ = __mul__


@dataclass(frozen=True)
class ProblemData:
    """Source f^n and observations q^n at t_n, n = 1, ..., N, as nodal fields.
    Row n - 1 holds level n"""
    f_levels: np.ndarray
    q_levels: np.ndarray

    def __post_init__(self) -> None:
        f_levels = np.asarray(self.f_levels, dtype=float)
        q_levels = np.asarray(self.q_levels, dtype=float)
        if f_levels.shape != q_levels.shape or f_levels.ndim != 2:
            raise StructuralError(f"Source and observations must share a two"
                                  f" dimensional shape, got {f_levels.shape} and {q_levels.shape}")
        object.__setattr__(self, "f_levels", f_levels)
        object.__setattr__(self, "q_levels", q_levels)

    @classmethod
    def zeros(cls, cfg: AssimConfig) -> ProblemData:
        empty = np.zeros((cfg.n_steps, cfg.n_dofs))
        return cls(empty, empty.copy())

    def check(self, cfg: AssimConfig) -> None:
        if self.f_levels.shape != (cfg.n_steps, cfg.n_dofs):
            raise StructuralError(f"Data of shape {self.f_levels.shape} does not match"
                                  f" {cfg.n_steps} steps on {cfg.n_dofs} unknowns")


def _check_state(cfg: AssimConfig, u: SpaceTimeState) -> np.ndarray:
    return _levels(u.values, cfg.n_steps + 1, cfg.n_dofs, "SpaceTimeState")


def _check_dual(cfg: AssimConfig, z: DualState) -> np.ndarray:
    return _levels(z.values, cfg.n_steps, cfg.n_dofs, "DualState")


def _inner(matrix: SparseSymMatrix, left: np.ndarray, right: np.ndarray) -> float:
    """Sums the matrix-weighted inner products of matching rows"""
    return float(np.sum(left*(matrix._full @ right.T).T))


def discrete_time_derivative(cfg: AssimConfig, u: SpaceTimeState, n: int) -> NodalField:
    """Computes d_tau u^n = (u^n - u^{n-1})/tau for 1 <= n <= N"""
    values = _check_state(cfg, u)
    if not 1 <= n <= cfg.n_steps:
        raise StructuralError(f"The time derivative is defined for n = 1, ..., {cfg.n_steps}, got {n}")
    return NodalField(cfg.mesh, (values[n] - values[n - 1])/cfg.tau)


def form_a1(cfg: AssimConfig, u: SpaceTimeState, w: DualState) -> float:
    """A1(u, w) = tau sum_n [(d_tau u^n, w^n) + a(u^n, w^n)]"""
    u_values, w_values = _check_state(cfg, u), _check_dual(cfg, w)
    return (_inner(cfg.mass, np.diff(u_values, axis=0), w_values)
            + cfg.tau*_inner(cfg.stiffness, u_values[1:], w_values))


def _regularization_value(cfg: AssimConfig, u_values: np.ndarray,
                          v_values: np.ndarray) -> float:
    """The symmetric part of A2, that is A2((u, 0), v)"""
    value = cfg.gamma_m*cfg.tau*_inner(cfg.obs_mass, u_values[1:], v_values[1:])
    value += cfg.gamma_0*cfg.h**2*_inner(cfg.stiffness, u_values[:1], v_values[:1])
    if cfg.gamma_1:
        value += cfg.gamma_1*cfg.tau*_inner(cfg.stiffness, np.diff(u_values, axis=0),
                                            np.diff(v_values, axis=0))
    return value


def form_a2(cfg: AssimConfig, u: SpaceTimeState, z: DualState, v: SpaceTimeState) -> float:
    """A2((u, z), v) = gamma_M tau sum (u^n, v^n)_omega + gamma_0 (h grad u^0, h grad v^0)
    + gamma_1 tau sum (tau grad d_tau u^n, tau grad d_tau v^n)
    + tau sum [(d_tau v^n, z^n) + a(v^n, z^n)]"""
    u_values, v_values = _check_state(cfg, u), _check_state(cfg, v)
    return (_regularization_value(cfg, u_values, v_values)
            + form_a1(cfg, v, z))


def lagrangian_value(cfg: AssimConfig, u: SpaceTimeState, z: DualState,
                     data: ProblemData) -> float:
    """Evaluates the Lagrangian L(u, z) for the given source and observations"""
    data.check(cfg)
    u_values = _check_state(cfg, u)
    misfit = u_values[1:] - data.q_levels
    value = 0.5*cfg.gamma_m*cfg.tau*_inner(cfg.obs_mass, misfit, misfit)
    value += 0.5*cfg.gamma_0*cfg.h**2*_inner(cfg.stiffness, u_values[:1], u_values[:1])
    if cfg.gamma_1:
        increments = np.diff(u_values, axis=0)
        value += 0.5*cfg.gamma_1*cfg.tau*_inner(cfg.stiffness, increments, increments)
    value += form_a1(cfg, u, z) - cfg.tau*_inner(cfg.mass, data.f_levels, _check_dual(cfg, z))
    return value


def seminorm_r(cfg: AssimConfig, u: SpaceTimeState) -> float:
    """||u||_R, the square root of A2((u, 0), u)"""
    u_values = _check_state(cfg, u)
    return float(np.sqrt(max(_regularization_value(cfg, u_values, u_values), 0.)))


def norm_d(cfg: AssimConfig, u: SpaceTimeState, z: DualState) -> float:
    """||u, z||_D, a norm on V_h^{2N+1}"""
    u_values, z_values = _check_state(cfg, u), _check_dual(cfg, z)
    u_increments, z_increments = np.diff(u_values, axis=0), np.diff(z_values, axis=0)
    h, tau = cfg.h, cfg.tau

    squared = _inner(cfg.mass, z_values[:1], z_values[:1])
    squared += _inner(cfg.mass, z_values[-1:], z_values[-1:])
    squared += _inner(cfg.mass, z_increments, z_increments)
    squared += tau*_inner(cfg.stiffness, z_values, z_values)
    squared += h**2*_inner(cfg.stiffness, u_values[-1:], u_values[-1:])
    squared += h**2/tau*_inner(cfg.mass, u_increments, u_increments)
    squared += h**2*_inner(cfg.stiffness, u_increments, u_increments)
    return float(np.sqrt(max(squared, 0.)))


def norm_c(cfg: AssimConfig, v: SpaceTimeState, w: DualState) -> float:
    """||v, w||_C, with ||v, w||_C^2 = ||v||_R^2 + tau sum ||w^n||^2"""
    w_values = _check_dual(cfg, w)
    squared = seminorm_r(cfg, v)**2 + cfg.tau*_inner(cfg.mass, w_values, w_values)
    return float(np.sqrt(squared))


def _time_pattern(n_levels: int, diagonals: Dict[int, np.ndarray]) -> sps.csr_matrix:
    return sps.diags(list(diagonals.values()), list(diagonals.keys()),
                     shape=(n_levels, n_levels), format="csr")


def regularization_matrix(cfg: AssimConfig) -> sps.csr_matrix:
    """The primal-primal block H, with A2((u, 0), v) = v^T H u over all levels"""
    n_levels = cfg.n_steps + 1
    mass_weights = np.full(n_levels, cfg.gamma_m*cfg.tau)
    mass_weights[0] = 0.
    initial = np.zeros(n_levels)
    initial[0] = cfg.gamma_0*cfg.h**2

    block = (sps.kron(sps.diags(mass_weights), cfg.obs_mass.to_csr())
             + sps.kron(sps.diags(initial), cfg.stiffness.to_csr()))
    if cfg.gamma_1:
        # Path graph Laplacian over the levels 0..N, from sum_n ||u^n - u^{n-1}||_A^2
        diagonal = np.full(n_levels, 2.)
        diagonal[[0, -1]] = 1.
        pattern = _time_pattern(n_levels, {0: diagonal, -1: -np.ones(n_levels - 1),
                                           1: -np.ones(n_levels - 1)})
        block = block + cfg.gamma_1*cfg.tau*sps.kron(pattern, cfg.stiffness.to_csr())
    return block.tocsr()


def constraint_matrix(cfg: AssimConfig) -> sps.csr_matrix:
    """The dual-primal block B, with A1(u, w) = w^T B u. Row block n - 1 belongs
    to w^n and reads (M + tau A) u^n - M u^{n-1}"""
    n_steps = cfg.n_steps
    current = sps.eye(n_steps, n_steps + 1, k=1, format="csr")
    previous = sps.eye(n_steps, n_steps + 1, k=0, format="csr")
    return (sps.kron(current, cfg.step_matrix.to_csr())
            - sps.kron(previous, cfg.mass.to_csr())).tocsr()


@dataclass(frozen=True)
class KktSystem:
    """The Euler-Lagrange equations as one symmetric linear system

    The unknowns are ordered time-major, node-minor: u^0, ..., u^N followed by
    z^1, ..., z^N
    """
    matrix: SparseSymMatrix
    rhs: np.ndarray
    n_steps: int
    n_dofs: int
    mesh: Mesh1D

    @property
    def n_primal(self) -> int:
        return (self.n_steps + 1)*self.n_dofs

    def index(self, variable: str, level: int, node: int) -> int:
        """The flat index of a nodal value. Primal levels run over 0..N, dual
        ones over 1..N"""
        if not 0 <= node < self.n_dofs:
            raise StructuralError(f"Node {node} outside of 0..{self.n_dofs - 1}")
        if variable == "u" and 0 <= level <= self.n_steps:
            return level*self.n_dofs + node
        if variable == "z" and 1 <= level <= self.n_steps:
            return self.n_primal + (level - 1)*self.n_dofs + node
        raise StructuralError(f"No level {level} for variable '{variable}'")

    def split(self, x: np.ndarray) -> Tuple[SpaceTimeState, DualState]:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.matrix.dim,):
            raise StructuralError(f"Expected a vector of length {self.matrix.dim}, got {x.shape}")
        u = x[:self.n_primal].reshape(self.n_steps + 1, self.n_dofs)
        z = x[self.n_primal:].reshape(self.n_steps, self.n_dofs)
        return SpaceTimeState(self.mesh, u), DualState(self.mesh, z)

    def join(self, u: SpaceTimeState, z: DualState) -> np.ndarray:
        return np.concatenate([u.values.ravel(), z.values.ravel()])


def assemble_kkt(cfg: AssimConfig, data: ProblemData) -> KktSystem:
    """Assembles the Euler-Lagrange system of the Lagrangian

        [ H  B^T ] [u]   [gamma_M tau M_omega q]
        [ B   0  ] [z] = [tau M f              ]

    The first block row holds A2((u, z), v) for every test v, the second one
    A1(u, w) for every test w

    Parameters
    ----------
    cfg: AssimConfig
    data: ProblemData

    Returns
    -------
    system: KktSystem
    """
    data.check(cfg)
    H, B = regularization_matrix(cfg), constraint_matrix(cfg)
    zero = sps.csr_matrix((cfg.n_steps*cfg.n_dofs, cfg.n_steps*cfg.n_dofs))
    matrix = sps.bmat([[H, B.T], [B, zero]], format="csr")

    obs_load = cfg.gamma_m*cfg.tau*(cfg.obs_mass._full @ data.q_levels.T).T
    source_load = cfg.tau*(cfg.mass._full @ data.f_levels.T).T
    rhs = np.concatenate([np.zeros(cfg.n_dofs), obs_load.ravel(), source_load.ravel()])
    return KktSystem(SparseSymMatrix.from_sparse(matrix), rhs,
                     cfg.n_steps, cfg.n_dofs, cfg.mesh)


def kkt_residual(system: KktSystem, u: SpaceTimeState, z: DualState) -> np.ndarray:
    """K x - rhs for x = (u, z). This is the gradient of the Lagrangian"""
    return system.matrix @ system.join(u, z) - system.rhs


def coercivity_witness(cfg: AssimConfig, u: SpaceTimeState, z: DualState,
                       alpha: float) -> Tuple[SpaceTimeState, DualState]:
    """Builds the test pair v = u + alpha*z_hat, w = -z + alpha h^2 d_tau u, where
    z_hat^0 = 0 and z_hat^n = z^n

    Parameters
    ----------
    cfg: AssimConfig
    u: SpaceTimeState
    z: DualState
    alpha: float
        Positive

    Returns
    -------
    v: SpaceTimeState
    w: DualState
    """
    if not alpha > 0:
        raise ConfigError(f"alpha must be positive, got {alpha}")
    u_values, z_values = _check_state(cfg, u), _check_dual(cfg, z)
    z_hat = np.vstack([np.zeros((1, cfg.n_dofs)), z_values])
    v = SpaceTimeState(cfg.mesh, u_values + alpha*z_hat)
    w = DualState(cfg.mesh, -z_values + alpha*cfg.h**2*np.diff(u_values, axis=0)/cfg.tau)
    return v, w


def coercivity_gap(cfg: AssimConfig, u: SpaceTimeState, z: DualState, alpha: float) -> float:
    """A1(u, w) + A2((u, z), v) - 1/2 (||u||_R^2 + alpha ||u, z||_D^2) for the
    witness (v, w). Non-negative where the coercivity bound holds"""
    v, w = coercivity_witness(cfg, u, z, alpha)
    bound = 0.5*(seminorm_r(cfg, u)**2 + alpha*norm_d(cfg, u, z)**2)
    return form_a1(cfg, u, w) + form_a2(cfg, u, z, v) - bound


def find_coercivity_alpha(cfg: AssimConfig, n_draws: int = 100,
                          rng: Optional[np.random.Generator] = None) -> Optional[float]:
    """Searches alpha over 1, 1/2, ..., 2^-10 for the largest value that
    satisfies the coercivity bound on every random draw of (u, z)

    Returns
    -------
    alpha: float | None
        None if no candidate works on all draws
    """
    rng = np.random.default_rng(0) if rng is None else rng
    draws = [(SpaceTimeState(cfg.mesh, rng.standard_normal((cfg.n_steps + 1, cfg.n_dofs))),
              DualState(cfg.mesh, rng.standard_normal((cfg.n_steps, cfg.n_dofs))))
             for _ in range(n_draws)]

    for alpha in COERCIVITY_ALPHAS:
        if all(coercivity_gap(cfg, u, z, alpha) >= 0 for u, z in draws):
            return alpha
    return None
