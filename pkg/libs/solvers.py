"""Solvers for the Regularized Assimilation Problem

Two ways to reach the stationary point of the discrete Lagrangian:

    * solve_monolithic - MINRES on the full symmetric KKT system
    * solve_gradient_descent - Forward heat sweep, backward dual sweep and a
      gradient step on the unknown initial value, repeated

and the pieces the second one is made of (forward_heat, backward_dual,
coupling_functional, descent_metric). 'solve_dense' applies the dense LU oracle to small
systems.

Example of usage:

    >>> from libs.fem1d import Mesh1D
    >>> from libs.forms import AssimConfig, ProblemData
    >>> from libs.solvers import solve_monolithic
    >>> cfg = AssimConfig(1., 1., 0., n_steps=2, final_time=0.1, mesh=Mesh1D(4))
    >>> solution = solve_monolithic(cfg, ProblemData.zeros(cfg))
    >>> float(abs(solution.u.values).max())
    0.0
"""
from __future__ import annotations

import logging

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .fem1d import NodalField
from .forms import (AssimConfig, DualState, ProblemData, SpaceTimeState,
                    assemble_kkt, lagrangian_value)
from .linalg import (DEFAULT_CG_TOL, DEFAULT_MINRES_MAXIT, DEFAULT_MINRES_TOL, SolveReport,
                     SparseSymMatrix, solve_dense_direct, solve_spd_cg, solve_sym_minres)
from .utils import ConfigError, SolverError, StructuralError


STEP_TOL = DEFAULT_CG_TOL
METRIC_TOL = DEFAULT_CG_TOL
GD_METRICS = ("regularized", "mass")


@dataclass
class AssimSolution:
    """A solution pair (u, z) and how it was reached

    Parameters
    ----------
    u: SpaceTimeState
    z: DualState
    report: SolveReport
        For gradient descent the residual is the norm of the coupling vector
    lagrangian: float
        The Lagrangian at (u, z)
    dual_history: List[float]
        ||z^1|| after every accepted gradient step, first entry at phi_0
    lagrangian_history: List[float]
        The Lagrangian along the same iterates
    stop_reason: str
        'residual', 'dual_increase', 'max_iters' or 'minres'
    """
    u: SpaceTimeState
    z: DualState
    report: SolveReport
    lagrangian: float
    dual_history: List[float] = field(default_factory=list)
    lagrangian_history: List[float] = field(default_factory=list)
    stop_reason: str = "minres"

    @property
    def converged(self) -> bool:
        return self.report.converged

    @property
    def initial_value(self) -> NodalField:
        return self.u.level(0)


@dataclass(frozen=True)
class GdOptions:
    """Options of the gradient descent on the initial value

    Parameters
    ----------
    alpha: float
        The step size, positive
    max_iters: int
    tol: float
        Stops once the coupling vector is this small
    stop_on_dual_increase: bool
        Stops once ||z^1|| grows and returns the previous iterate
    metric: str
        The inner product the gradient is taken in. 'regularized' uses
        (phi, psi) + gamma_1 tau (grad phi, grad psi), 'mass' the plain L2
        product. Both agree for gamma_1 = 0
    """
    alpha: float = 0.1
    max_iters: int = 10_000
    tol: float = 1e-10
    stop_on_dual_increase: bool = True
    metric: str = "regularized"

    def __post_init__(self) -> None:
        if self.metric not in GD_METRICS:
            raise ConfigError(f"Unknown gradient metric '{self.metric}', use one of {GD_METRICS}")
        if not self.alpha > 0:
            raise ConfigError(f"The step size must be positive, got {self.alpha}")
        if self.max_iters < 0:
            raise ConfigError(f"max_iters must be non-negative, got {self.max_iters}")
        if not self.tol > 0:
            raise ConfigError(f"The tolerance must be positive, got {self.tol}")


def solve_monolithic(cfg: AssimConfig, data: ProblemData,
                     tol: float = DEFAULT_MINRES_TOL,
                     maxit: int = DEFAULT_MINRES_MAXIT) -> AssimSolution:
    """Solves the Euler-Lagrange system in one go with MINRES from a zero
    initial guess

    Parameters
    ----------
    cfg: AssimConfig
    data: ProblemData
    tol: float, optional
        Relative residual of the KKT system
    maxit: int, optional

    Returns
    -------
    solution: AssimSolution
        Returned even if MINRES did not converge, with the report flagged
    """
    system = assemble_kkt(cfg, data)
    x, report = solve_sym_minres(system.matrix, system.rhs, tol=tol, maxit=maxit)
    u, z = system.split(x)

    if not report.converged:
        logging.warning(f"Monolithic solve (gamma_0={cfg.gamma_0}, gamma_1={cfg.gamma_1},"
                        f" h={cfg.h}, tau={cfg.tau}) did not converge")
    else:
        logging.info(f"Monolithic solve converged in {report.iterations} iterations")
    return AssimSolution(u, z, report, lagrangian_value(cfg, u, z, data))


def solve_dense(cfg: AssimConfig, data: ProblemData) -> AssimSolution:
    """Solves the Euler-Lagrange system through a dense LU factorization. Only
    meant for small systems"""
    system = assemble_kkt(cfg, data)
    x = solve_dense_direct(system.matrix, system.rhs)
    u, z = system.split(x)
    residual = float(np.linalg.norm(system.matrix @ x - system.rhs))
    return AssimSolution(u, z, SolveReport(1, residual, True),
                         lagrangian_value(cfg, u, z, data), stop_reason="direct")


def _step_solve(cfg: AssimConfig, rhs: np.ndarray, guess: np.ndarray, what: str) -> np.ndarray:
    solution, report = solve_spd_cg(cfg.step_matrix, rhs, tol=STEP_TOL, x0=guess)
    if not report.converged:
        raise SolverError(f"CG failed in the {what} at residual {report.residual_norm:.3e}")
    return solution


def forward_heat(cfg: AssimConfig, phi: NodalField, f_levels: np.ndarray) -> SpaceTimeState:
    """Runs implicit Euler from u^0 = phi

        (M + tau A) u^n = M u^{n-1} + tau M f^n,  n = 1, ..., N

    Parameters
    ----------
    cfg: AssimConfig
    phi: NodalField
        The initial value
    f_levels: np.ndarray
        The nodal source at t_1, ..., t_N, shape (N, n_dofs)

    Returns
    -------
    u: SpaceTimeState
    """
    f_levels = np.asarray(f_levels, dtype=float)
    if f_levels.shape != (cfg.n_steps, cfg.n_dofs):
        raise StructuralError(f"Source needs shape {(cfg.n_steps, cfg.n_dofs)}, got {f_levels.shape}")
    if phi.coeffs.shape != (cfg.n_dofs,):
        raise StructuralError(f"Initial value needs {cfg.n_dofs} coefficients, got {phi.coeffs.shape}")

    levels = np.zeros((cfg.n_steps + 1, cfg.n_dofs))
    levels[0] = phi.coeffs
    for n in range(1, cfg.n_steps + 1):
        rhs = cfg.mass @ (levels[n - 1] + cfg.tau*f_levels[n - 1])
        levels[n] = _step_solve(cfg, rhs, levels[n - 1], "forward sweep")
    return SpaceTimeState(cfg.mesh, levels)


def backward_dual(cfg: AssimConfig, u: SpaceTimeState, q_levels: np.ndarray) -> DualState:
    """Runs the dual recursion backwards from z^{N+1} = 0

        (M + tau A) z^n = M z^{n+1} + gamma_M tau M_omega (q^n - u^n)
                          - gamma_1 tau A ((u^n - u^{n-1}) - (u^{n+1} - u^n))

    for n = N, ..., 1, where the increment beyond level N is zero

    Parameters
    ----------
    cfg: AssimConfig
    u: SpaceTimeState
    q_levels: np.ndarray
        The nodal observations at t_1, ..., t_N

    Returns
    -------
    z: DualState
    """
    q_levels = np.asarray(q_levels, dtype=float)
    if q_levels.shape != (cfg.n_steps, cfg.n_dofs):
        raise StructuralError(f"Observations need shape {(cfg.n_steps, cfg.n_dofs)},"
                              f" got {q_levels.shape}")
    if u.values.shape != (cfg.n_steps + 1, cfg.n_dofs):
        raise StructuralError(f"State of shape {u.values.shape} does not match the configuration")

    increments = np.vstack([u.increments(), np.zeros((1, cfg.n_dofs))])
    levels = np.zeros((cfg.n_steps + 1, cfg.n_dofs))
    for n in range(cfg.n_steps, 0, -1):
        rhs = cfg.mass @ levels[n] + cfg.gamma_m*cfg.tau*(cfg.obs_mass @ (q_levels[n - 1] - u.values[n]))
        if cfg.gamma_1:
            rhs -= cfg.gamma_1*cfg.tau*(cfg.stiffness @ (increments[n - 1] - increments[n]))
        levels[n - 1] = _step_solve(cfg, rhs, levels[n], "backward sweep")
    return DualState(cfg.mesh, levels[:-1])


def coupling_functional(cfg: AssimConfig, phi: NodalField, u: SpaceTimeState,
                        z: DualState) -> np.ndarray:
    """Evaluates C(phi, psi_i) = gamma_0 (h grad phi, h grad psi_i)
    - gamma_1 tau (grad (u^1 - u^0), grad psi_i) - (z^1, psi_i) for every basis
    function psi_i. It vanishes exactly at the solution of the KKT system"""
    if phi.coeffs.shape != (cfg.n_dofs,):
        raise StructuralError(f"Initial value needs {cfg.n_dofs} coefficients, got {phi.coeffs.shape}")
    if u.values.shape != (cfg.n_steps + 1, cfg.n_dofs) or z.values.shape != (cfg.n_steps, cfg.n_dofs):
        raise StructuralError("State and dual state do not match the configuration")

    vector = cfg.gamma_0*cfg.h**2*(cfg.stiffness @ phi.coeffs) - cfg.mass @ z.values[0]
    if cfg.gamma_1:
        vector -= cfg.gamma_1*cfg.tau*(cfg.stiffness @ (u.values[1] - u.values[0]))
    return vector


def descent_metric(cfg: AssimConfig, metric: str = "regularized") -> SparseSymMatrix:
    """The Gram matrix of the inner product the gradient is taken in"""
    if metric not in GD_METRICS:
        raise ConfigError(f"Unknown gradient metric '{metric}', use one of {GD_METRICS}")
    if metric == "mass" or not cfg.gamma_1:
        return cfg.mass
    return cfg.mass + (cfg.gamma_1*cfg.tau)*cfg.stiffness


def _dual_norm(cfg: AssimConfig, z: DualState) -> float:
    first = z.values[0]
    return float(np.sqrt(max(first @ (cfg.mass @ first), 0.)))


def solve_gradient_descent(cfg: AssimConfig, data: ProblemData, phi0: NodalField,
                           opts: Optional[GdOptions] = None) -> AssimSolution:
    """Minimizes the reduced Lagrangian over the initial value by the iteration

        P phi_{m+1} = P phi_m - alpha C(phi_m)

    where every evaluation of C runs one forward and one backward sweep and P
    is the Gram matrix of the gradient metric, M + gamma_1 tau A by default.
    With opts.metric = 'mass' P is M, whose steps blow up the highest mode
    for gamma_1 > 0 unless alpha is of order h^2/(gamma_1 tau)

    Parameters
    ----------
    cfg: AssimConfig
    data: ProblemData
    phi0: NodalField
        The starting initial value
    opts: GdOptions, optional

    Returns
    -------
    solution: AssimSolution
        (U(phi), Z(phi)) at the last accepted iterate. Flagged as not converged
        if 'max_iters' ran out or if ||z^1|| grew on the first step
    """
    opts = GdOptions() if opts is None else opts
    data.check(cfg)

    def evaluate(phi: NodalField):
        u = forward_heat(cfg, phi, data.f_levels)
        z = backward_dual(cfg, u, data.q_levels)
        return u, z, coupling_functional(cfg, phi, u, z)

    phi = phi0
    u, z, coupling = evaluate(phi)
    dual_history = [_dual_norm(cfg, z)]
    lagrangian_history = [lagrangian_value(cfg, u, z, data)]

    metric = descent_metric(cfg, opts.metric)
    gradient: Optional[np.ndarray] = None
    stop_reason, iterations = "max_iters", 0
    while True:
        if np.linalg.norm(coupling) <= opts.tol:
            stop_reason = "residual"
            break
        if iterations >= opts.max_iters:
            break

        gradient, metric_report = solve_spd_cg(metric, coupling, tol=METRIC_TOL, x0=gradient)
        if not metric_report.converged:
            raise SolverError(f"Gradient solve failed at residual {metric_report.residual_norm:.3e}")
        candidate = NodalField(cfg.mesh, phi.coeffs - opts.alpha*gradient)
        next_u, next_z, next_coupling = evaluate(candidate)

        dual_norm = _dual_norm(cfg, next_z)
        if opts.stop_on_dual_increase and dual_norm > dual_history[-1]:
            stop_reason = "dual_increase"
            break

        phi, u, z, coupling = candidate, next_u, next_z, next_coupling
        iterations += 1
        dual_history.append(dual_norm)
        lagrangian_history.append(lagrangian_value(cfg, u, z, data))

    residual = float(np.linalg.norm(coupling))
    # A dual increase on the very first step leaves phi_0 untouched
    stalled = stop_reason == "dual_increase" and iterations == 0
    converged = stop_reason != "max_iters" and not stalled
    if converged:
        logging.info(f"Gradient descent stopped on '{stop_reason}' after {iterations}"
                     f" iterations, |C| = {residual:.3e}")
    elif stalled:
        logging.warning(f"Gradient descent made no step: ||z^1|| grew on the first step"
                        f" (alpha={opts.alpha}), |C| = {residual:.3e}")
    else:
        logging.warning(f"Gradient descent used up {opts.max_iters} iterations,"
                        f" |C| = {residual:.3e}")

    return AssimSolution(u, z, SolveReport(iterations, residual, converged),
                         lagrangian_history[-1], dual_history, lagrangian_history,
                         stop_reason)
