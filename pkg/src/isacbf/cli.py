"""Command-line front end.

Exit codes: 0 success, 1 validation failure, 2 unreadable or malformed
input, 3 infeasible problem, 4 solver or IRM non-convergence.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .experiments import (
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    EXIT_PARSE_ERROR,
    EXIT_VALIDATION_FAILED,
    ExperimentError,
    ExperimentSpec,
    RunRecord,
    angle_sets,
    emit_plot_script,
    exit_code_for,
    load_experiment,
    load_run_config,
    run_scenario,
    sweep_antennas,
    sweep_distance,
    validate_record,
    write_sweep,
)
from .irm import IRMParams
from .metrics import format_number, to_dbm
from .scene import ScenarioError
from .sdp import SolverOptions


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("-c", "--config", required=True, help="scenario or experiment YAML file")
    p.add_argument("-o", "--out", default="out", help="output directory (default: ./out)")
    p.add_argument("-j", "--workers", type=int, default=1, help="parallel runs for sweeps")
    p.add_argument("--gap-tol", type=float, default=1e-8)
    p.add_argument("--feas-tol", type=float, default=1e-8)
    p.add_argument("--max-solver-iterations", type=int, default=200)
    p.add_argument("--max-irm-iterations", type=int, default=50)
    p.add_argument("--rank-threshold", type=float, default=1e-7)
    p.add_argument("--absolute-stopping", action="store_true",
                   help="stop on r**2 instead of (r / lambda1)**2")
    p.add_argument("--backend", default="ipm", help="SDP backend: ipm (default) or cvxpy")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="isacbf", description="Minimum-power ISAC beamforming.")
    sub = ap.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("solve", help="solve one scenario"))
    s = sub.add_parser("sweep-antennas", help="power versus number of antennas")
    _common(s)
    s.add_argument("--antennas", help="comma-separated N list (overrides the experiment file)")
    s = sub.add_parser("sweep-distance", help="power versus user/target distance")
    _common(s)
    _common(sub.add_parser("angle-sets", help="user/target angle configurations"))
    v = sub.add_parser("validate", help="re-check a run record")
    v.add_argument("record", help="record.json written by 'solve'")
    v.add_argument("--feas-tol", type=float, default=1e-8)
    pl = sub.add_parser("plot", help="write a matplotlib script for CSV outputs")
    pl.add_argument("csv", nargs="+")
    pl.add_argument("-o", "--out", default="plot.py", help="script path")
    pl.add_argument("--image", default="figure.png", help="image the script will save")
    return ap


def _options(args) -> tuple[IRMParams, SolverOptions]:
    params = IRMParams(max_iterations=args.max_irm_iterations, rank_threshold=args.rank_threshold,
                       stopping="absolute" if args.absolute_stopping else "relative")
    options = SolverOptions(gap_tol=args.gap_tol, feas_tol=args.feas_tol,
                            max_iterations=args.max_solver_iterations, backend=args.backend)
    return params, options


def _err(msg: str) -> None:
    print(f"isacbf: {msg}", file=sys.stderr)


def _sweep_exit(records) -> int:
    codes = [exit_code_for(r.status) if isinstance(r, RunRecord) else EXIT_NOT_CONVERGED for r in records]
    return max(codes) if codes else EXIT_OK


def _load_spec(args, kind: str) -> ExperimentSpec:
    spec = load_experiment(args.config)
    if spec.kind != kind:
        raise ExperimentError(f"{args.config}: expected an experiment of kind {kind!r}, got {spec.kind!r}")
    return spec


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            try:
                record = RunRecord.load(args.record)
            except (OSError, ExperimentError) as exc:
                _err(str(exc))
                return EXIT_PARSE_ERROR
            report = validate_record(record, feas_tol=args.feas_tol)
            sys.stdout.write(report.text())
            return EXIT_OK if report.passed else EXIT_VALIDATION_FAILED

        if args.command == "plot":
            path = emit_plot_script(args.csv, args.out, image=args.image)
            print(path)
            return EXIT_OK

        params, options = _options(args)
        out = Path(args.out)

        if args.command == "solve":
            scenario = load_run_config(args.config)
            record, paths = run_scenario(scenario, out, params, options)
            print(f"status={record.status} iterations={record.iterations} "
                  f"sdr_power_dBm={format_number(to_dbm(record.sdr_power_mw))} "
                  f"power_dBm={format_number(to_dbm(record.final_power_mw))}")
            for name, p in paths.items():
                print(f"{name}: {p}")
            return exit_code_for(record.status)

        if args.command == "sweep-antennas":
            spec = _load_spec(args, "antenna_sweep")
            ns = spec.antennas
            if args.antennas:
                ns = tuple(int(x) for x in args.antennas.split(","))
            res = sweep_antennas(spec.scenario, ns, params, options, args.workers)
            write_sweep(res, out, "antennas.csv")
        elif args.command == "sweep-distance":
            spec = _load_spec(args, "distance_sweep")
            res = sweep_distance(spec.scenario, spec.distances_m, spec.deltas_deg,
                                 spec.fixed_distance_m, params, options, args.workers)
            write_sweep(res, out, "distance.csv")
        else:
            spec = _load_spec(args, "angle_sets")
            res = angle_sets(spec.scenario, spec.sets, params, options, args.workers)
            write_sweep(res, out, "angle_sets.csv")
        sys.stdout.write(res.csv)
        return _sweep_exit(res.records)
    except (ScenarioError, ExperimentError, OSError) as exc:
        _err(str(exc))
        return EXIT_PARSE_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())

