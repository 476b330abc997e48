"""Command-line entry point: ``ife2d --mode interp --element q1 ...``.

Exit codes: 0 success, 1 stage or configuration error, 2 verification failure.
"""
from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from .config import FORMATS, MODES, RunConfig

EXIT_OK, EXIT_STAGE, EXIT_VERIFY = 0, 1, 2


def _mesh_sizes(text: str) -> list[int]:
    return [int(v) for v in text.replace(",", " ").split()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ife2d", description="Immersed finite element convergence studies and identity checks.")
    p.add_argument("--config", help="flat JSON configuration file; flags override its keys")
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--element", choices=["p1", "cr", "q1", "rq1"])
    p.add_argument("--beta-minus", type=float, dest="beta_minus")
    p.add_argument("--beta-plus", type=float, dest="beta_plus")
    p.add_argument("--mesh-sizes", type=_mesh_sizes, dest="mesh_sizes", help="cells per axis, e.g. 40,80,160")
    p.add_argument("--sigma", type=float, help="penalty parameter (default 10*max(beta))")
    p.add_argument("--epsilon", type=float, help="mesh proportion parameter of the mesh-size condition")
    p.add_argument("--kappa-bar", type=float, dest="kappa_bar")
    p.add_argument("--lambda", type=float, dest="lam", help="rotated-Q1 unisolvence parameter")
    p.add_argument("--quad-degree", type=int, dest="quad_degree", help="Gauss points per direction")
    p.add_argument("--seed", type=int)
    p.add_argument("--verify-samples", type=int, dest="verify_samples", help="random elements per verify suite")
    p.add_argument("--output", help="report file (default: stdout)")
    p.add_argument("--format", choices=FORMATS)
    p.add_argument("--no-precondition-check", action="store_false", dest="check_preconditions", default=None,
                   help="build IFE spaces even when the family's unisolvence precondition fails")
    p.add_argument("--dump", help="write the mesh classification and IFE coefficients of the finest mesh here")
    p.add_argument("--solution-csv", dest="solution_csv", help="solve mode: write node id, x, y, value of the finest solution")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {k: v for k, v in vars(args).items()
                 if v is not None and k not in ("config", "dump", "solution_csv")}
    if args.config:
        return RunConfig.load(args.config, overrides)
    return RunConfig.from_dict(overrides)


def _write_dump(config: RunConfig, path: str) -> None:
    from .convergence import build_space
    from .ife import dump_bases
    from .mesh import dump_classification

    space = build_space(config, config.mesh_sizes[-1])
    with open(path, "w") as fh:
        dump_classification(space.cls, fh)
        dump_bases(space, fh)


def _write_solution(config: RunConfig, path: str) -> None:
    from .convergence import build_space, problem_for
    from .solver import PenaltyParams, solve_interface_problem

    space = build_space(config, config.mesh_sizes[-1])
    res = solve_interface_problem(space, problem_for(config), PenaltyParams(config.penalty_sigma(), config.symmetry),
                                  config.quad_degree, config.cg_tol)
    data = np.column_stack([np.arange(space.n_dofs), space.nodes, res.u])
    np.savetxt(path, data, delimiter=",", header="node,x,y,value", comments="", fmt=["%d", "%.17g", "%.17g", "%.17g"])


def main(argv: list[str] | None = None) -> int:
    from .convergence import StageError, emit_report, run_convergence, run_verify

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = config_from_args(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE

    if config.mode == "verify":
        summary = run_verify(config)
        text = summary.text()
        if config.output:
            Path(config.output).write_text(text)
        sys.stdout.write(text)
        return EXIT_OK if summary.passed else EXIT_VERIFY

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            report = run_convergence(config)
        text = emit_report(report, config.output, config.format)
        if args.dump:
            _write_dump(config, args.dump)
        if args.solution_csv and config.mode == "solve":
            _write_solution(config, args.solution_csv)
    except (StageError, ValueError, ArithmeticError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    for note in report.warnings:
        print(f"warning: {note}", file=sys.stderr)
    if not config.output:
        sys.stdout.write(text)
    print(f"wall time {report.wall_time:.1f} s", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
