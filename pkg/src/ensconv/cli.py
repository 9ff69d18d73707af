"""Command-line front end: ``python -m ensconv <experiment> [options]``."""

from __future__ import annotations

import argparse
import logging
import sys

from . import experiments
from .config import Experiment, RunConfig
from .ensemble import SolverError, StabilityError
from .linsolve import SingularMatrixError
from .perturb import BreedingError

_FLAGS = {
    "m": "mesh cells per side",
    "dt0": "initial timestep",
    "t_final": "final time",
    "tolerance": "steady-state tolerance on relative increments",
    "Pr": "Prandtl number",
    "Ra": "Rayleigh number(s), comma separated",
    "kappa_f": "fluid conductivity",
    "kappa_s": "solid conductivity",
    "J": "ensemble size",
    "scheme": "thin or thick",
    "include_u1_source": "true/false",
    "formulation": "decomposed or physical (benchmark)",
    "solid_cells": "solid frame thickness in cells (thick wall)",
    "bv_delta_t": "bred-vector reinitialization interval",
    "bv_k_star": "bred-vector cycles",
    "seed": "seed for the perturbation magnitudes",
    "eps": "three perturbation magnitudes, overrides the seed",
    "mms_eps": "member scaling for convergence runs",
    "m_list": "mesh sizes for spatial convergence",
    "dt_list": "timesteps for temporal convergence (fractions allowed, e.g. 1/8)",
    "max_steps": "step cap for steady runs",
    "gamma_window": "window of the growth-rate curve",
    "delta_max": "largest tolerance in the horizon sweep",
    "symmetric_energy": "use |T|^2/2 in the energy",
    "vtk": "write VTK snapshots",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ensconv", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for exp in Experiment:
        p = sub.add_parser(exp.value)
        p.add_argument("--config", help="key = value file applied before the flags")
        p.add_argument("--outdir", default=None, help="output directory")
        for key, text in _FLAGS.items():
            p.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None, metavar="V", help=text)
    return parser


def config_from_args(args) -> RunConfig:
    cfg = RunConfig.defaults(args.experiment)
    if args.config:
        cfg = RunConfig.from_file(args.config, base=cfg)
    overrides = {k: getattr(args, k) for k in _FLAGS if getattr(args, k) is not None}
    if args.outdir is not None:
        overrides["outdir"] = args.outdir
    return cfg.with_overrides(overrides)


def run(cfg: RunConfig):
    if cfg.experiment is Experiment.BENCHMARK:
        return experiments.run_benchmark(cfg)
    if cfg.experiment is Experiment.PREDICTABILITY:
        return experiments.run_predictability(cfg)
    return experiments.run_convergence(cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
        run(cfg)
    except (ValueError, KeyError) as exc:
        print(f"ensconv: configuration error: {exc}", file=sys.stderr)
        return 2
    except (StabilityError, SolverError, SingularMatrixError, BreedingError) as exc:
        print(f"ensconv: run aborted: {exc}", file=sys.stderr)
        return 1
    print(f"results written to {cfg.outdir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
