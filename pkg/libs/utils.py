"""Shared helpers: exceptions, logging setup, YAML loading and rate fitting

This file can also be imported as a module and contains the following:

    * HeatAssimError and its subclasses - The error types raised by the library
    * setup_logging - Points the root logger to 'libs/logs/<name>.log'
    * load_yaml - Loads a (.yaml)-file into a dictionary
    * observed_orders - Pairwise convergence orders from a refinement study
    * fit_order - Least-squares slope of log(error) against log(step)
"""
from __future__ import annotations

import os
import logging

from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np
import yaml


LOG_DIR = Path(__file__).parent / "logs"


class HeatAssimError(Exception):
    pass


class StructuralError(HeatAssimError, ValueError):
    """Raised on dimension or shape mismatches and indices out of range"""


class ConfigError(HeatAssimError, ValueError):
    """Raised on invalid discretization or regularization parameters"""


class QuadratureError(HeatAssimError, ValueError):
    """Raised if a quadrature rule produces non-finite values"""


class SolverError(HeatAssimError, RuntimeError):
    """Raised if an inner solve fails where the caller cannot recover"""


class SingularMatrixError(SolverError):
    """Raised if a direct factorization meets a vanishing pivot"""


def setup_logging(name: str, log_dir: Path = LOG_DIR) -> Path:
    """Sets the root logger up to write into a fresh '<name>.log'-file

    Parameters
    ----------
    name: str
        The stem of the log file
    log_dir: Path, optional
        The folder the log file is put in. Defaults to 'libs/logs'

    Returns
    -------
    log_path: Path
    """
    log_path = Path(log_dir) / f"{name}.log"

    if log_path.exists():
        os.remove(log_path)
    else:
        log_path.parent.mkdir(parents=True, exist_ok=True)
    log_path.touch()

    for handler in logging.root.handlers[:]:
        logging.root.removeHandler(handler)

    logging.basicConfig(filename=log_path, filemode='w',
                        format='%(asctime)s - %(message)s', level=logging.INFO)
    return log_path


def load_yaml(yaml_path: Path) -> Dict:
    """Loads a (.yaml)-file into a dictionary

    Parameters
    ----------
    yaml_path: Path

    Returns
    -------
    content: Dict
    """
    yaml_path = Path(yaml_path)
    if not yaml_path.exists():
        raise FileNotFoundError(f"File {yaml_path} was not found/does not exist!")

    with open(yaml_path, "r") as yaml_file:
        content = yaml.safe_load(yaml_file)
    return content if content is not None else {}


def observed_orders(steps: Sequence[float], errors: Sequence[float]) -> List[float]:
    """Computes the pairwise observed orders log(e_i/e_{i+1})/log(r_i), with
    r_i = steps[i]/steps[i+1] the actual refinement ratio

    Parameters
    ----------
    steps: Sequence[float]
        The mesh sizes or time steps of the study, coarse to fine
    errors: Sequence[float]
        The corresponding errors

    Returns
    -------
    orders: List[float]
        One entry less than the inputs. Not-a-number where an error vanishes

    Examples
    --------
    >>> observed_orders([0.1, 0.05], [4e-2, 1e-2])
    [2.0]
    >>> observed_orders([0.3, 0.1], [0.9, 0.3])
    [1.0]
    """
    if len(steps) != len(errors):
        raise StructuralError("Steps and errors must have the same length")

    orders = []
    for (step, next_step), (error, next_error) in zip(zip(steps, steps[1:]),
                                                      zip(errors, errors[1:])):
        if error <= 0 or next_error <= 0:
            orders.append(float("nan"))
            continue
        order = np.log(error/next_error)/np.log(step/next_step)
        orders.append(round(float(order), 12))
    return orders


def fit_order(steps: Sequence[float], errors: Sequence[float]) -> float:
    """Fits the slope of log(error) over log(step) in the least-squares sense

    Parameters
    ----------
    steps: Sequence[float]
    errors: Sequence[float]

    Returns
    -------
    order: float

    Examples
    --------
    >>> round(fit_order([0.4, 0.2, 0.1, 0.05], [0.16, 0.04, 0.01, 0.0025]), 10)
    2.0
    """
    steps, errors = np.asarray(steps, dtype=float), np.asarray(errors, dtype=float)
    if steps.size < 2 or steps.size != errors.size:
        raise StructuralError("At least two matching steps and errors are needed")
    if np.any(errors <= 0):
        raise ValueError("The errors must be positive to fit an order")
    slope, _ = np.polyfit(np.log(steps), np.log(errors), 1)
    return float(slope)


if __name__ == "__main__":
    print(observed_orders([0.02, 0.01, 0.005], [0.224, 0.119, 0.043]))
