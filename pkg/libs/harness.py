"""Experiment Harness

Generates observations from a closed-form heat equation solution, runs the
solvers over grids of mesh sizes, time steps and regularization parameters
and writes the results into a (.csv)-file.

Experiments are described by an 'ExperimentSpec', which can be read from a
(.yaml)-file. The presets in 'configs/' reproduce the convergence tables, the
time step study with and without gradient regularization, the parameter study,
the divergence of the unregularized method and the perturbation study.

This file can also be imported as a module and contains the following:

    * ExactSolution - u(t, x) = exp(-pi^2 k^2 t) sin(pi k x)
    * ExperimentSpec - What to run and where to write it
    * RunRecord - One row of results
    * generate_data - Source and (noisy) observations for a configuration
    * run_convergence_h, run_convergence_tau, run_param_sweep
    * run_divergence_study, run_divergence_check, run_oracle_check
    * run_perturbation_study, fit_perturbation_constant, perturbation_constant
    * run_experiment - Dispatches on the experiment's mode
    * emit_csv - Writes records in the fixed 11 column layout

Example of usage:

    from libs.harness import ExperimentSpec, run_experiment, emit_csv

    # Load a preset and override some of its values
    spec = ExperimentSpec.preset("spatial_rate").replace(cells=[20, 40])

    records = run_experiment(spec)
    emit_csv(records, "converge_h.csv")
"""
from __future__ import annotations

import dataclasses
import logging
import time

from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .fem1d import (Mesh1D, NodalField, ObservationWindow, interpolate_nodal, l2_error_vs_exact,
                    l2_norm)
from .forms import AssimConfig, ProblemData
from .linalg import DENSE_ORACLE_CAP
from .solvers import (GD_METRICS, AssimSolution, GdOptions, solve_dense,
                      solve_gradient_descent, solve_monolithic)
from .utils import (ConfigError, SingularMatrixError, SolverError, fit_order, load_yaml,
                    observed_orders)


CONFIG_DIR = Path(__file__).parent.parent / "configs"

MODES = ("converge_h", "converge_tau", "param_sweep", "single_solve",
         "oracle_check", "diverge_check", "perturbation")
SOLVERS = ("minres", "graddesc", "direct")

CSV_COLUMNS = ["mode", "solver", "h", "tau", "gamma_m", "gamma_0", "gamma_1",
               "error", "order", "iterations", "wall_time_s"]

DIVERGENCE_FACTOR = 10.
DIVERGENCE_GAMMAS = (1., 0., 1e-6)
ORACLE_TOL = 1e-6


@dataclass(frozen=True)
class ExactSolution:
    """The source-free solution u(t, x) = exp(-pi^2 k^2 t) sin(pi k x), which
    vanishes at x = 0 and x = 1"""
    k: int = 1

    def __post_init__(self) -> None:
        if int(self.k) != self.k or self.k < 1:
            raise ConfigError(f"The frequency must be a positive integer, got {self.k}")

    def __call__(self, t: float, x: np.ndarray) -> np.ndarray:
        return np.exp(-(np.pi*self.k)**2*t)*np.sin(np.pi*self.k*np.asarray(x))

    def at(self, t: float) -> Callable[[np.ndarray], np.ndarray]:
        """The profile x -> u(t, x)"""
        return lambda x: self(t, x)


@dataclass(frozen=True)
class ExperimentSpec:
    """Describes one experiment

    Parameters
    ----------
    mode: str
        One of 'converge_h', 'converge_tau', 'param_sweep', 'single_solve',
        'oracle_check', 'diverge_check' and 'perturbation'
    solver: str
        One of 'minres', 'graddesc' and 'direct'
    cells: List[int]
        Numbers of mesh cells, refined in 'converge_h'
    steps: List[int]
        Numbers of time steps, refined in 'converge_tau'
    final_time: float
    freq_k: int
        The frequency of the exact solution
    gamma_m: float
    gamma_0: List[float]
    gamma_1: List[float]
        Every pair of gamma_0 and gamma_1 is run
    window_a: float
        The observation window is (a, 1 - a)
    noise: float
        The L2(omega)-size of the noise added to every observation
    noise_levels: List[float]
        The noise sizes of the 'perturbation' mode, 0 among them
    source_noise: float
        The L2-size of the noise added to every source level
    seed: int
    alpha: float
        Gradient descent step size
    max_iters: int
    gd_tol: float
    stop_on_dual_increase: bool
    gd_metric: str
        'regularized' or 'mass', see GdOptions
    minres_tol: float
    minres_maxit: int
    allow_unregularized: bool
    timings: bool
        If unset the wall times are left blank in the output
    out: Path, optional
    """
    mode: str = "single_solve"
    solver: str = "minres"
    cells: List[int] = field(default_factory=lambda: [50])
    steps: List[int] = field(default_factory=lambda: [16])
    final_time: float = 0.02
    freq_k: int = 2
    gamma_m: float = 1.
    gamma_0: List[float] = field(default_factory=lambda: [1.])
    gamma_1: List[float] = field(default_factory=lambda: [0.])
    window_a: float = 0.2
    noise: float = 0.
    noise_levels: List[float] = field(default_factory=lambda: [0., 1e-3, 1e-2, 1e-1])
    source_noise: float = 0.
    seed: int = 0
    alpha: float = 0.1
    max_iters: int = 10_000
    gd_tol: float = 1e-10
    stop_on_dual_increase: bool = True
    gd_metric: str = "regularized"
    minres_tol: float = 1e-8
    minres_maxit: int = 50_000
    allow_unregularized: bool = False
    timings: bool = True
    out: Optional[Path] = None

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"Unknown mode '{self.mode}', choose from {MODES}")
        if self.solver not in SOLVERS:
            raise ConfigError(f"Unknown solver '{self.solver}', choose from {SOLVERS}")
        if self.gd_metric not in GD_METRICS:
            raise ConfigError(f"Unknown gradient metric '{self.gd_metric}', choose from {GD_METRICS}")
        for name in ["cells", "steps", "gamma_0", "gamma_1", "noise_levels"]:
            values = getattr(self, name)
            values = [values] if np.isscalar(values) else list(values)
            if not values:
                raise ConfigError(f"The range '{name}' must not be empty")
            object.__setattr__(self, name, values)
        if self.noise < 0 or self.source_noise < 0 or min(self.noise_levels) < 0:
            raise ConfigError("Noise magnitudes must be non-negative")
        if self.out is not None:
            object.__setattr__(self, "out", Path(self.out))

    @classmethod
    def from_dict(cls, content: Dict[str, Any]) -> ExperimentSpec:
        names = {spec_field.name for spec_field in dataclasses.fields(cls)}
        unknown = set(content) - names
        if unknown:
            raise ConfigError(f"Unknown experiment keys: {sorted(unknown)}")
        return cls(**content)

    @classmethod
    def from_yaml(cls, yaml_path: Path) -> ExperimentSpec:
        """Reads an experiment from a (.yaml)-file, keys as the fields"""
        return cls.from_dict(load_yaml(yaml_path))

    @classmethod
    def preset(cls, name: str) -> ExperimentSpec:
        """Loads one of the experiments shipped in 'configs/'"""
        yaml_path = CONFIG_DIR / f"{name}.yaml"
        if not yaml_path.exists():
            available = sorted(path.stem for path in CONFIG_DIR.glob("*.yaml"))
            raise ConfigError(f"No preset '{name}', available are {available}")
        return cls.from_yaml(yaml_path)

    def replace(self, **changes) -> ExperimentSpec:
        return dataclasses.replace(self, **changes)

    def gd_options(self) -> GdOptions:
        return GdOptions(alpha=self.alpha, max_iters=self.max_iters, tol=self.gd_tol,
                         stop_on_dual_increase=self.stop_on_dual_increase,
                         metric=self.gd_metric)


@dataclass
class RunRecord:
    """One solve and its final time error ||u(T) - u_h^N||_{L2}

    'reference_gap' is the L2-distance of u_h^N to the final state of a
    reference solve of the same problem, where a mode computes one. It is not
    part of the (.csv)-output
    """
    mode: str
    solver: str
    h: float
    tau: float
    gamma_m: float
    gamma_0: float
    gamma_1: float
    error: float
    iterations: int
    wall_time_s: float
    converged: bool = True
    lagrangian: float = float("nan")
    order: float = float("nan")
    flagged: bool = False
    reference_gap: float = float("nan")

    def to_row(self, timings: bool = True) -> Dict[str, Any]:
        row = {column: getattr(self, column) for column in CSV_COLUMNS}
        if not timings:
            row["wall_time_s"] = float("nan")
        return row

    def sort_key(self) -> Tuple:
        return (self.mode, self.solver, self.gamma_m, self.gamma_0,
                self.gamma_1, -self.h, -self.tau)


def generate_data(cfg: AssimConfig, solution: ExactSolution,
                  noise: float = 0., seed: int = 0,
                  source_noise: float = 0.) -> ProblemData:
    """Builds source and observations from the exact solution

    The source vanishes and q^n is the nodal interpolant of u(t_n). Noise is
    drawn uniformly in [-1, 1] at every node whose basis function meets omega
    and rescaled to the requested L2(omega)-size per time level

    Parameters
    ----------
    cfg: AssimConfig
    solution: ExactSolution
    noise: float, optional
        The L2(omega)-norm of the perturbation of every q^n
    seed: int, optional
    source_noise: float, optional
        The L2-norm of the perturbation of every f^n

    Returns
    -------
    data: ProblemData
    """
    if noise < 0 or source_noise < 0:
        raise ConfigError("Noise magnitudes must be non-negative")

    nodes = cfg.mesh.nodes
    q_levels = np.array([solution(t, nodes) for t in cfg.times[1:]])
    f_levels = np.zeros_like(q_levels)
    rng = np.random.default_rng(seed)

    if noise > 0:
        observed = cfg.obs_mass.diagonal() > 0
        for level in q_levels:
            perturbation = rng.uniform(-1., 1., cfg.n_dofs)*observed
            size = np.sqrt(perturbation @ (cfg.obs_mass @ perturbation))
            if size == 0:
                raise ConfigError("The observation window holds no unknowns to perturb")
            level += noise/size*perturbation

    if source_noise > 0:
        for level in f_levels:
            perturbation = rng.uniform(-1., 1., cfg.n_dofs)
            level += source_noise/np.sqrt(perturbation @ (cfg.mass @ perturbation))*perturbation

    return ProblemData(f_levels, q_levels)


def perturbed_initial_value(cfg: AssimConfig, solution: ExactSolution) -> NodalField:
    """The interpolant of u(0) plus h*sin(pi x), the starting guess of the
    gradient descent"""
    start = interpolate_nodal(cfg.mesh, solution.at(0.))
    return NodalField(cfg.mesh, start.coeffs + cfg.h*np.sin(np.pi*cfg.mesh.nodes))


def _config(spec: ExperimentSpec, cells: int, steps: int,
            gamma_0: float, gamma_1: float, **overrides) -> AssimConfig:
    values = dict(gamma_m=spec.gamma_m, gamma_0=gamma_0, gamma_1=gamma_1,
                  n_steps=steps, final_time=spec.final_time, mesh=Mesh1D(cells),
                  window=ObservationWindow(spec.window_a),
                  allow_unregularized=spec.allow_unregularized)
    values.update(overrides)
    return AssimConfig(**values)


def _solve(spec: ExperimentSpec, solver: str, cfg: AssimConfig, data: ProblemData,
           solution: ExactSolution) -> AssimSolution:
    if solver == "minres":
        return solve_monolithic(cfg, data, tol=spec.minres_tol, maxit=spec.minres_maxit)
    if solver == "direct":
        return solve_dense(cfg, data)
    return solve_gradient_descent(cfg, data, perturbed_initial_value(cfg, solution),
                                  spec.gd_options())


def _run_case(spec: ExperimentSpec, cfg: AssimConfig, mode: Optional[str] = None,
              solver: Optional[str] = None,
              noise: Optional[float] = None) -> Tuple[RunRecord, Optional[AssimSolution]]:
    """Solves one configuration. Solver failures are logged and recorded as a
    not converged row"""
    mode, solver = mode or spec.mode, solver or spec.solver
    noise = spec.noise if noise is None else noise
    exact = ExactSolution(spec.freq_k)
    record = RunRecord(mode, solver, cfg.h, cfg.tau, cfg.gamma_m, cfg.gamma_0,
                       cfg.gamma_1, float("nan"), 0, float("nan"), converged=False)

    start_time = time.perf_counter()
    try:
        data = generate_data(cfg, exact, noise=noise, seed=spec.seed,
                             source_noise=spec.source_noise)
        assim = _solve(spec, solver, cfg, data, exact)
    except SolverError:
        logging.error(f"Skipped run: {mode}/{solver} at h={cfg.h}, tau={cfg.tau},"
                      f" gamma_0={cfg.gamma_0}, gamma_1={cfg.gamma_1}", exc_info=True)
        print(f"ERROR: Skipped run at h={cfg.h:.4g}, tau={cfg.tau:.4g} -- Check the log-file")
        record.wall_time_s = time.perf_counter() - start_time
        return record, None

    record.wall_time_s = time.perf_counter() - start_time
    record.error = l2_error_vs_exact(assim.u.level(cfg.n_steps), exact.at(cfg.final_time))
    record.iterations = assim.report.iterations
    record.converged = bool(assim.converged)
    record.lagrangian = assim.lagrangian

    logging.info(f"{mode}/{solver}: h={cfg.h:.4g}, tau={cfg.tau:.4g}, gamma_0={cfg.gamma_0},"
                 f" gamma_1={cfg.gamma_1}, error={record.error:.6e},"
                 f" iterations={record.iterations}, converged={record.converged}")
    print(f"Finished h={cfg.h:.4g}, tau={cfg.tau:.4g}, gamma_0={cfg.gamma_0:g},"
          f" gamma_1={cfg.gamma_1:g}: error {record.error:.4e}")
    return record, assim


def _attach_orders(records: List[RunRecord], step: Callable[[RunRecord], float]) -> None:
    """Fills in the observed orders of a refinement sequence, coarse to fine"""
    orders = observed_orders([step(record) for record in records],
                             [record.error for record in records])
    for record, order in zip(records[1:], orders):
        record.order = order


def _gamma_pairs(spec: ExperimentSpec) -> List[Tuple[float, float]]:
    return sorted(product(spec.gamma_0, spec.gamma_1))


def run_convergence_h(spec: ExperimentSpec) -> List[RunRecord]:
    """Refines the mesh over 'spec.cells' at the first number of time steps,
    for every pair of gammas, and computes the observed orders in h"""
    records = []
    for gamma_0, gamma_1 in _gamma_pairs(spec):
        study = [_run_case(spec, _config(spec, cells, spec.steps[0], gamma_0, gamma_1),
                           mode="converge_h")[0]
                 for cells in sorted(spec.cells)]
        _attach_orders(study, lambda record: record.h)
        records.extend(study)
    print("-------------------------------------------------------------------")
    return sorted(records, key=RunRecord.sort_key)


def run_convergence_tau(spec: ExperimentSpec) -> List[RunRecord]:
    """Refines the time step over 'spec.steps' on the first mesh, for every pair
    of gammas, and computes the observed orders in tau"""
    records = []
    for gamma_0, gamma_1 in _gamma_pairs(spec):
        study = [_run_case(spec, _config(spec, spec.cells[0], steps, gamma_0, gamma_1),
                           mode="converge_tau")[0]
                 for steps in sorted(spec.steps)]
        _attach_orders(study, lambda record: record.tau)
        records.extend(study)
    print("-------------------------------------------------------------------")
    return sorted(records, key=RunRecord.sort_key)


def fitted_orders(records: Sequence[RunRecord], by: str = "tau") -> Dict[Tuple[float, float], float]:
    """The least-squares convergence order of every (gamma_0, gamma_1)-group of
    a refinement study, over 'h' or 'tau'"""
    groups: Dict[Tuple[float, float], List[RunRecord]] = {}
    for record in records:
        groups.setdefault((record.gamma_0, record.gamma_1), []).append(record)
    return {gammas: fit_order([getattr(record, by) for record in group],
                              [record.error for record in group])
            for gammas, group in groups.items()}


def run_param_sweep(spec: ExperimentSpec) -> List[RunRecord]:
    """Runs every pair of gammas on the first mesh and number of time steps

    For every gamma_1 the row of the largest gamma_0 is flagged as over
    regularized if its error exceeds the median error of the interior gamma_0
    values. Needs at least three values of gamma_0 to flag anything
    """
    records = [_run_case(spec, _config(spec, spec.cells[0], spec.steps[0], gamma_0, gamma_1),
                         mode="param_sweep")[0]
               for gamma_0, gamma_1 in _gamma_pairs(spec)]

    gamma_0_values = sorted(set(spec.gamma_0))
    if len(gamma_0_values) >= 3:
        for gamma_1 in set(spec.gamma_1):
            row = {record.gamma_0: record for record in records if record.gamma_1 == gamma_1}
            interior = [row[gamma_0].error for gamma_0 in gamma_0_values[1:-1]]
            largest = row[gamma_0_values[-1]]
            if largest.error > np.nanmedian(interior):
                largest.flagged = True
                logging.info(f"Over regularization at gamma_0={largest.gamma_0},"
                             f" gamma_1={gamma_1}: error {largest.error:.4e}")
    print("-------------------------------------------------------------------")
    return sorted(records, key=RunRecord.sort_key)


def _diverged(record: RunRecord, baseline: RunRecord) -> bool:
    """A row diverged if it failed, if its error is ten times the baseline's or
    if its final state is further from the direct solve of the same system
    than the baseline is from the exact solution"""
    return bool(not record.converged or not np.isfinite(record.error)
                or record.error >= DIVERGENCE_FACTOR*baseline.error
                or record.reference_gap > baseline.error)


def _direct_gap(cfg: AssimConfig, data: ProblemData, assim: AssimSolution) -> float:
    """The L2-distance of the final state to the dense LU solution. Infinite if
    the LU factorization finds the system singular, NaN above the dense cap"""
    if (2*cfg.n_steps + 1)*cfg.n_dofs > DENSE_ORACLE_CAP:
        logging.info(f"No direct reference above {DENSE_ORACLE_CAP} unknowns")
        return float("nan")
    try:
        reference = solve_dense(cfg, data)
    except SingularMatrixError:
        logging.warning(f"KKT system at gamma_0={cfg.gamma_0} is singular", exc_info=True)
        return float("inf")
    return l2_norm(cfg.mesh, assim.u.values[-1] - reference.u.values[-1], cfg.mass)


def run_divergence_study(spec: ExperimentSpec) -> List[RunRecord]:
    """Runs the first configuration at gamma_0 = 1 (the baseline), gamma_0 = 0
    and gamma_0 = 1e-6 and compares every iterative solution with the dense LU
    solution of the same system

    Without regularization the KKT matrix is singular or nearly so, and MINRES
    may converge in the residual to a state the data do not determine. The rows
    other than the baseline are flagged when their solve fails, when their
    error is at least ten times the baseline's or when they are further from
    the direct solution than the baseline is from the exact one
    """
    spec = spec.replace(allow_unregularized=True)
    exact = ExactSolution(spec.freq_k)
    records = []
    for gamma_0 in DIVERGENCE_GAMMAS:
        cfg = _config(spec, spec.cells[0], spec.steps[0], gamma_0, spec.gamma_1[0])
        record, assim = _run_case(spec, cfg, mode="diverge_check")
        if assim is not None:
            data = generate_data(cfg, exact, noise=spec.noise, seed=spec.seed,
                                 source_noise=spec.source_noise)
            record.reference_gap = _direct_gap(cfg, data, assim)
        records.append(record)

    baseline = records[0]
    for record in records[1:]:
        record.flagged = _diverged(record, baseline)
        logging.info(f"gamma_0={record.gamma_0}: converged={record.converged},"
                     f" error={record.error:.4e}, gap to the direct solve"
                     f" {record.reference_gap:.4e}, baseline {baseline.error:.4e},"
                     f" diverged={record.flagged}")
    print("-------------------------------------------------------------------")
    return records


def run_divergence_check(spec: ExperimentSpec) -> RunRecord:
    """The gamma_0 = 0 row of 'run_divergence_study'"""
    return run_divergence_study(spec)[1]


def run_oracle_check(spec: ExperimentSpec) -> List[RunRecord]:
    """Solves every combination of meshes, time steps and gammas with MINRES,
    the dense direct solve and gradient descent, and flags the iterative rows
    that differ from the direct solution by more than 1e-6 at any node"""
    spec = spec.replace(stop_on_dual_increase=False)
    records = []
    for cells, steps, (gamma_0, gamma_1) in product(sorted(spec.cells), sorted(spec.steps),
                                                    _gamma_pairs(spec)):
        cfg = _config(spec, cells, steps, gamma_0, gamma_1)
        reference_record, reference = _run_case(spec, cfg, mode="oracle_check", solver="direct")
        records.append(reference_record)
        for solver in ["minres", "graddesc"]:
            record, candidate = _run_case(spec, cfg, mode="oracle_check", solver=solver)
            if candidate is None or reference is None:
                record.flagged = True
            else:
                difference = max(np.abs(candidate.u.values - reference.u.values).max(),
                                 np.abs(candidate.z.values - reference.z.values).max())
                record.flagged = bool(difference > ORACLE_TOL)
                if record.flagged:
                    logging.warning(f"{solver} deviates from the direct solve by {difference:.3e}")
            records.append(record)
    print("-------------------------------------------------------------------")
    return sorted(records, key=RunRecord.sort_key)


def run_single(spec: ExperimentSpec) -> List[RunRecord]:
    """Solves the first configuration of the experiment"""
    cfg = _config(spec, spec.cells[0], spec.steps[0], spec.gamma_0[0], spec.gamma_1[0])
    return [_run_case(spec, cfg)[0]]


def run_perturbation_study(spec: ExperimentSpec,
                           magnitudes: Optional[Sequence[float]] = None) -> List[RunRecord]:
    """Solves the first configuration once per observation noise magnitude,
    'spec.noise_levels' unless given, with the same noise direction throughout

    Every row carries the L2-distance of its final state to the noise-free one
    as 'reference_gap'. The solution depends affinely on the data, so the gap
    grows linearly in the magnitude and bounds the growth of the error

    Returns
    -------
    records: List[RunRecord]
        In the order of the magnitudes
    """
    magnitudes = list(spec.noise_levels if magnitudes is None else magnitudes)
    if 0. not in magnitudes or min(magnitudes) < 0:
        raise ConfigError(f"Noise magnitudes must be non-negative and contain 0, got {magnitudes}")
    cfg = _config(spec, spec.cells[0], spec.steps[0], spec.gamma_0[0], spec.gamma_1[0])
    runs = [_run_case(spec, cfg, mode="perturbation", noise=magnitude) for magnitude in magnitudes]

    _, clean = runs[magnitudes.index(0.)]
    for magnitude, (record, assim) in zip(magnitudes, runs):
        if clean is not None and assim is not None:
            record.reference_gap = l2_norm(cfg.mesh, assim.u.values[-1] - clean.u.values[-1],
                                           cfg.mass)
        logging.info(f"Noise {magnitude:g}: error={record.error:.6e},"
                     f" shift of u_h^N {record.reference_gap:.6e}")
    records = [record for record, _ in runs]
    constant = fit_perturbation_constant(magnitudes, [record.error for record in records])
    logging.info(f"Perturbation constant C = {constant:.4e}")
    print(f"Perturbation constant C = {constant:.4e}")
    print("-------------------------------------------------------------------")
    return records


def perturbation_constant(records: Sequence[RunRecord], magnitudes: Sequence[float]) -> float:
    """The constant C with ||u_h^N(eps) - u_h^N(0)|| = C*eps, taken from the
    smallest positive magnitude of a perturbation study"""
    positive = [(magnitude, record) for magnitude, record in zip(magnitudes, records)
                if magnitude > 0]
    if not positive:
        raise ConfigError("Need a positive noise magnitude")
    magnitude, record = min(positive, key=lambda pair: pair[0])
    return record.reference_gap/magnitude


def fit_perturbation_constant(magnitudes: Sequence[float], errors: Sequence[float]) -> float:
    """The smallest C >= 0 with error(eps) - error(0) <= C*eps for all given eps

    Parameters
    ----------
    magnitudes: Sequence[float]
        Must contain 0
    errors: Sequence[float]

    Returns
    -------
    constant: float
    """
    magnitudes, errors = np.asarray(magnitudes, dtype=float), np.asarray(errors, dtype=float)
    if magnitudes.shape != errors.shape or not np.any(magnitudes == 0):
        raise ConfigError("Need matching magnitudes and errors including eps = 0")
    baseline = errors[magnitudes == 0][0]
    positive = magnitudes > 0
    if not np.any(positive):
        return 0.
    return float(max(0., np.max((errors[positive] - baseline)/magnitudes[positive])))


RUNNERS = {"converge_h": run_convergence_h, "converge_tau": run_convergence_tau,
           "param_sweep": run_param_sweep, "single_solve": run_single,
           "oracle_check": run_oracle_check, "diverge_check": run_divergence_study,
           "perturbation": run_perturbation_study}


def run_experiment(spec: ExperimentSpec) -> List[RunRecord]:
    """Runs the experiment its mode names"""
    logging.info(f"Running '{spec.mode}' with solver '{spec.solver}'")
    return RUNNERS[spec.mode](spec)


def emit_csv(records: Sequence[RunRecord], path: Path, timings: bool = True) -> None:
    """Writes one row per record below a header of the 11 columns

        mode, solver, h, tau, gamma_m, gamma_0, gamma_1, error, order,
        iterations, wall_time_s

    Undefined values (the order of the coarsest run, for instance) stay empty

    Parameters
    ----------
    records: Sequence[RunRecord]
    path: Path
    timings: bool, optional
        If unset the wall times are left empty, so that repeated runs give
        identical files
    """
    path = Path(path)
    frame = pd.DataFrame([record.to_row(timings) for record in records],
                         columns=CSV_COLUMNS)
    try:
        frame.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    except OSError as error:
        raise IOError(f"Could not write the results to '{path}'") from error
    logging.info(f"Wrote {len(records)} records to '{path}'")
