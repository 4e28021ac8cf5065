import argparse
import csv
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from heatbem.config import RunConfig, build_geometry, build_scheme, grid_points, load_config
from heatbem.cq import ContourParameters, convolution_weights
from heatbem.errors import ConfigError, HeatBemError
from heatbem.operators import OperatorAssembler, build_norm_operators
from heatbem.point_filter import PointFilter
from heatbem.run_monitor import RunMonitor
from heatbem.solver import (TransmissionProblem, circle_sources, evaluate_fields, run_demo_simulation,
                            solve_transmission, source_field, steps_for_times)
from heatbem.trace_spaces import NORM_HHALF, NORM_HMINUSHALF, Y_SPACE, discrete_norm
from heatbem.verification import (ERROR_NAMES, estimate_rates, expected_rates, make_manufactured,
                                  run_convergence_study)

logger = logging.getLogger("heatbem.app")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

COMMANDS = ("solve", "convergence", "fields", "weights-dump")


def configure_logging() -> None:
    level = os.environ.get("HEATBEM_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


def fmt(value: float) -> str:
    return f"{value:.17g}"


def write_csv(path: Path, header: Sequence[str], rows: List[Sequence[Any]]) -> Path:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    logger.info("Wrote %s (%d rows)", path, len(rows))
    return path


def build_problem(config: RunConfig):
    """Manufactured point-source problem, or the exterior-source problem of the demo"""
    polygon = build_geometry(config)
    if config.manufactured:
        exact = make_manufactured(config.x_sc, config.m, config.t_lag, polygon, kappa=config.kappa)
        return exact.problem(polygon, config.T)
    field_src = source_field(circle_sources(config.sources.count, config.sources.center, config.sources.radius),
                             t_lag=config.t_lag)
    return TransmissionProblem(polygon=polygon, rho=config.rho, kappa=config.kappa,
                               beta0=field_src.beta0, beta1=field_src.beta1, T=config.T)


def dump_weights(config: RunConfig, out_dir: Path, contour_points: Optional[int] = None) -> Path:
    """CQ weights of the first diagonal entry of V, one row per step (and stage pair for RK)"""
    scheme = build_scheme(config)
    spaces = config.build_spaces(build_geometry(config))
    assembler = OperatorAssembler(spaces)
    contour = ContourParameters.for_steps(scheme.n_steps, contour_points)
    weights = convolution_weights(lambda s: assembler.single_layer(s)[0, 0], scheme, contour)
    rows = []
    for n, w in enumerate(weights):
        if np.ndim(w) == 0:
            rows.append([n, 0, 0, fmt(w.real), fmt(w.imag)])
        else:
            for i in range(w.shape[0]):
                for j in range(w.shape[1]):
                    rows.append([n, i, j, fmt(w[i, j].real), fmt(w[i, j].imag)])
    return write_csv(out_dir / "weights.csv", ["n", "stage_i", "stage_j", "re_omega", "im_omega"], rows)


def cmd_solve(config: RunConfig, out_dir: Path, workers: int = 1, contour_points: Optional[int] = None,
              dump: bool = False, monitor: Optional[RunMonitor] = None) -> Dict[str, Any]:
    monitor = monitor or RunMonitor("solve")
    problem = build_problem(config)
    scheme = build_scheme(config)
    spaces = config.build_spaces(problem.polygon)
    contour = ContourParameters.for_steps(scheme.n_steps, contour_points or config.contour_points)
    with monitor.phase("solve"):
        densities = solve_transmission(problem, spaces, scheme, contour, workers)
    monitor.count("frequencies", contour.n_zeta // 2 + 1)

    norms = build_norm_operators(spaces)
    rows = []
    for n, t in enumerate(scheme.step_times()):
        lam_norm = discrete_norm(densities.step_lambda()[n], NORM_HMINUSHALF, norms)
        phi_norm = discrete_norm(densities.step_phi()[n], NORM_HHALF, norms, space=Y_SPACE)
        rows.append([n + 1, fmt(t), fmt(lam_norm), fmt(phi_norm)])
    files = [write_csv(out_dir / "solve_summary.csv", ["step", "time", "lambda_hminushalf", "phi_hhalf"], rows)]

    if config.snapshot_times:
        with monitor.phase("fields"):
            files += _write_snapshots(config, problem, densities, out_dir, workers, monitor)
    if dump:
        files.append(dump_weights(config, out_dir, contour_points or config.contour_points))
    return {'files': [str(f) for f in files], 'rows': len(rows)}


def cmd_convergence(config: RunConfig, out_dir: Path, workers: int = 1, contour_points: Optional[int] = None,
                    monitor: Optional[RunMonitor] = None) -> Dict[str, Any]:
    if config.levels < 3:
        raise ConfigError("levels", f"a convergence study needs at least 3 levels, got {config.levels}")
    if not config.manufactured:
        raise ConfigError("manufactured", "a convergence study needs the manufactured solution")
    monitor = monitor or RunMonitor("convergence")
    polygon = build_geometry(config)
    exact = make_manufactured(config.x_sc, config.m, config.t_lag, polygon, kappa=config.kappa)
    scheme = build_scheme(config)
    with monitor.phase("study"):
        record = run_convergence_study(polygon, exact, scheme, config.p, config.h, config.T, config.levels,
                                       workers=workers, contour_points=contour_points or config.contour_points,
                                       monitor=monitor)
    rates = estimate_rates(record)
    rows = [[lvl.level, fmt(lvl.k), fmt(lvl.h)] + [fmt(e) for e in lvl.errors.as_tuple()] for lvl in record.levels]
    rows.append(["rate", "", ""] + [fmt(rates[name].rate) for name in ERROR_NAMES])
    path = write_csv(out_dir / "convergence.csv", ["level", "k", "h"] + list(ERROR_NAMES), rows)
    logger.info("Observed rates %s; expected %s",
                {name: round(rates[name].rate, 3) for name in ERROR_NAMES}, expected_rates(scheme))
    return {'files': [str(path)], 'rates': {name: rates[name].rate for name in ERROR_NAMES}}


def _snapshot_rows(snapshot) -> List[List[str]]:
    return [[fmt(x), fmt(y), region, fmt(u)]
            for (x, y), region, u in zip(snapshot.points, snapshot.regions, snapshot.u)]


def _write_snapshots(config, problem, densities, out_dir, workers, monitor) -> List[Path]:
    points = grid_points(config.grid)
    screened = PointFilter(densities.spaces.mesh).filter_points(points)
    if screened["reasons"]:
        monitor.record_excluded(screened["reasons"])
    steps = steps_for_times(config.snapshot_times, densities.scheme)
    snapshots = evaluate_fields(densities, problem, screened["points"], steps, workers)
    return [write_csv(out_dir / f"fields_{i:02d}.csv", ["x", "y", "region", "u_value"], _snapshot_rows(snap))
            for i, snap in enumerate(snapshots)]


def cmd_fields(config: RunConfig, out_dir: Path, workers: int = 1, contour_points: Optional[int] = None,
               monitor: Optional[RunMonitor] = None) -> Dict[str, Any]:
    monitor = monitor or RunMonitor("fields")
    if not config.snapshot_times:
        logger.info("No snapshot times requested")
        return {'files': []}
    if contour_points:
        config.contour_points = contour_points
    with monitor.phase("fields"):
        if config.manufactured:
            problem = build_problem(config)
            scheme = build_scheme(config)
            spaces = config.build_spaces(problem.polygon)
            contour = ContourParameters.for_steps(scheme.n_steps, config.contour_points)
            densities = solve_transmission(problem, spaces, scheme, contour, workers)
            files = _write_snapshots(config, problem, densities, out_dir, workers, monitor)
        else:
            snapshots = run_demo_simulation(config, workers, monitor=monitor)
            files = [write_csv(out_dir / f"fields_{i:02d}.csv", ["x", "y", "region", "u_value"],
                               _snapshot_rows(snap))
                     for i, snap in enumerate(snapshots)]
    return {'files': [str(f) for f in files]}


def cmd_weights_dump(config: RunConfig, out_dir: Path, workers: int = 1, contour_points: Optional[int] = None,
                     monitor: Optional[RunMonitor] = None) -> Dict[str, Any]:
    path = dump_weights(config, out_dir, contour_points or config.contour_points)
    return {'files': [str(path)]}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heatbem",
                                     description="CQ-BEM solver for 2D heat transmission problems")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    parser.add_argument("--workers", type=int, default=1, help="parallel frequencies")
    parser.add_argument("--contour-points", type=int, default=None, help="override N_zeta")
    parser.add_argument("--dump-weights", action="store_true", help="also write CQ weights (solve)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Command-line entry point; returns the exit status"""
    configure_logging()
    args = build_parser().parse_args(argv)

    try:
        config = load_config(args.config)
        if args.workers < 1:
            raise ConfigError("workers", f"must be at least 1, got {args.workers}")
        if args.contour_points is not None and args.contour_points < config.n_steps + 1:
            raise ConfigError("contour_points", f"must be at least N + 1 = {config.n_steps + 1}")
        out_dir = Path(args.out or config.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    except ConfigError as e:
        logger.error("Configuration error: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    monitor = RunMonitor(args.command)
    try:
        with monitor:
            if args.command == "solve":
                result = cmd_solve(config, out_dir, args.workers, args.contour_points, args.dump_weights, monitor)
            elif args.command == "convergence":
                result = cmd_convergence(config, out_dir, args.workers, args.contour_points, monitor)
            elif args.command == "fields":
                result = cmd_fields(config, out_dir, args.workers, args.contour_points, monitor)
            else:
                result = cmd_weights_dump(config, out_dir, args.workers, args.contour_points, monitor)
        logger.info("Command %s wrote %d files", args.command, len(result['files']))
        return EXIT_OK
    except ConfigError as e:
        logger.error("Configuration error: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (HeatBemError, np.linalg.LinAlgError) as e:
        logger.error("Numerical failure: %s", e)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    finally:
        monitor.write(out_dir)
