"""Final state reconstruction for the heat equation from interior observations

Runs the experiments of 'libs/harness.py' from the command line and writes
their results into a (.csv)-file. Every subcommand starts from a preset in
'configs/', which can be swapped with '--config' and adjusted with the flags.

Example of usage:

    $ python heatassim.py converge-h --out converge_h.csv
    $ python heatassim.py converge-tau --config configs/gradient_regularization.yaml
    $ python heatassim.py solve --cells 100 --steps 16 --gamma-1 1 --solver graddesc
    $ python heatassim.py perturb-check --noise-levels 0 0.001 0.01
"""
import argparse
import sys

from pathlib import Path
from typing import List, Optional

import numpy as np

from libs.harness import CSV_COLUMNS, ExperimentSpec, RunRecord, emit_csv, run_experiment
from libs.utils import ConfigError, StructuralError, setup_logging


COMMANDS = {"solve": ("single_solve", None),
            "converge-h": ("converge_h", "spatial_rate"),
            "converge-tau": ("converge_tau", "temporal_rate"),
            "param-sweep": ("param_sweep", "parameter_sweep"),
            "diverge-check": ("diverge_check", "divergence"),
            "oracle-check": ("oracle_check", "oracle"),
            "perturb-check": ("perturbation", "perturbation")}

# Flag destination to experiment field
OVERRIDES = {"gamma_m": "gamma_m", "gamma_0": "gamma_0", "gamma_1": "gamma_1",
             "cells": "cells", "steps": "steps", "final_time": "final_time",
             "freq_k": "freq_k", "solver": "solver", "alpha": "alpha",
             "noise": "noise", "noise_levels": "noise_levels", "seed": "seed"}

EPILOG = ("The results are written as a (.csv)-file with a header and one row per run,\n"
          "in the columns\n\n    " + ", ".join(CSV_COLUMNS) + "\n\n"
          "'error' is the L2-norm of u(T) - u_h^N, 'order' the observed convergence order\n"
          "against the previous row (empty for the coarsest one) and 'wall_time_s' the\n"
          "seconds a run took (empty with '--no-timing').\n\n"
          "'perturb-check' writes one row per '--noise-levels' entry, in that order, and\n"
          "prints the fitted constant C of error(eps) <= error(0) + C*eps.")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="(.yaml)-file replacing the preset")
    common.add_argument("--gamma-m", dest="gamma_m", type=float)
    common.add_argument("--gamma-0", dest="gamma_0", type=float, nargs="+")
    common.add_argument("--gamma-1", dest="gamma_1", type=float, nargs="+")
    common.add_argument("--cells", type=int, nargs="+", help="numbers of mesh cells")
    common.add_argument("--steps", type=int, nargs="+", help="numbers of time steps")
    common.add_argument("--final-time", dest="final_time", type=float)
    common.add_argument("--freq-k", dest="freq_k", type=int,
                        help="frequency of the exact solution")
    common.add_argument("--solver", choices=["minres", "graddesc", "direct"])
    common.add_argument("--alpha", type=float, help="gradient descent step size")
    common.add_argument("--noise", type=float, help="L2(omega)-size of the data noise")
    common.add_argument("--noise-levels", dest="noise_levels", type=float, nargs="+",
                        help="noise sizes of perturb-check, 0 among them")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", type=Path, help="the (.csv)-file to write")
    common.add_argument("--no-timing", dest="timings", action="store_false",
                        help="leave the wall times empty")

    parser = argparse.ArgumentParser(
        description="Data assimilation for the heat equation with a stabilized"
                    " finite element method",
        epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        subparsers.add_parser(command, parents=[common], epilog=EPILOG,
                              formatter_class=argparse.RawDescriptionHelpFormatter)
    return parser


def make_spec(args: argparse.Namespace) -> ExperimentSpec:
    """Builds the experiment from the preset or '--config' and the flags"""
    mode, preset = COMMANDS[args.command]
    if args.config is not None:
        spec = ExperimentSpec.from_yaml(args.config)
    elif preset is not None:
        spec = ExperimentSpec.preset(preset)
    else:
        spec = ExperimentSpec()

    changes = {field: getattr(args, flag) for flag, field in OVERRIDES.items()
               if getattr(args, flag) is not None}
    out = args.out if args.out is not None else spec.out
    out = out if out is not None else Path(f"{mode}.csv")
    return spec.replace(mode=mode, timings=args.timings and spec.timings,
                        out=out, **changes)


def print_records(records: List[RunRecord]) -> None:
    print("-------------------------------------------------------------------")
    print(f"{'solver':>8} {'h':>8} {'tau':>8} {'gamma_0':>8} {'gamma_1':>8}"
          f" {'error':>11} {'order':>6}")
    for record in records:
        order = "" if np.isnan(record.order) else f"{record.order:.2f}"
        flag = " *" if record.flagged else ""
        print(f"{record.solver:>8} {record.h:8.4g} {record.tau:8.4g} {record.gamma_0:8.3g}"
              f" {record.gamma_1:8.3g} {record.error:11.4e} {order:>6}{flag}")
    print("-------------------------------------------------------------------")


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    log_path = setup_logging("heatassim")

    try:
        spec = make_spec(args)
    except (ConfigError, StructuralError, FileNotFoundError) as error:
        print(f"ERROR: {error}", file=sys.stderr)
        return 2

    print(f"Running '{args.command}' with solver '{spec.solver}'!")
    print("-------------------------------------------------------------------")
    try:
        records = run_experiment(spec)
    except (ConfigError, StructuralError) as error:
        print(f"ERROR: {error} -- Check '{log_path}'", file=sys.stderr)
        return 2

    print_records(records)
    if spec.mode == "diverge_check":
        unregularized = next(record for record in records if record.gamma_0 == 0)
        print(f"Distance to the direct solve without regularization:"
              f" {unregularized.reference_gap:.4e}")
        print(f"Diverged without regularization: {unregularized.flagged}")

    try:
        emit_csv(records, spec.out, timings=spec.timings)
    except IOError as error:
        print(f"ERROR: {error}", file=sys.stderr)
        return 1
    print(f"Results written to '{spec.out}'")
    return 0


if __name__ == "__main__":
    sys.exit(main())
