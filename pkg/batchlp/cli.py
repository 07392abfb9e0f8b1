from __future__ import annotations

import argparse
import logging
import sys
import time
from contextlib import contextmanager
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError

from batchlp.__version__ import __version__
from batchlp.config import ObbtConfig, SolverConfig, get_settings
from batchlp.exceptions import (
    BatchLpException,
    InvalidMatrix,
    InvalidProblem,
    InvalidRequest,
    MpsFormatError,
    OracleTooLarge,
)
from batchlp.formats.generators import DEFAULT_SIZES, Family, generate_instance, parse_sizes
from batchlp.formats.mps import read_mps, write_mps
from batchlp.formats.report import (
    BenchRow,
    PhaseTimings,
    ProblemRecord,
    RunReport,
    dumps_report,
    write_bench_csv,
    write_tune_csv,
)
from batchlp.model import LpProblem, SolveStatus
from batchlp.obbt import domain_reduction_stats, run_obbt
from batchlp.oracle import oracle_solve
from batchlp.pdhg import matrix_norm, solve
from batchlp.strong_branching import FsbRequest, run_fsb
from batchlp.tuner import DEFAULT_WIDTHS, tune

_log = logging.getLogger("batchlp-cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_ITERATION_LIMIT = 3

DEFAULT_BENCH_BRANCHES = 10


class UsageError(Exception):
    """Bad command line arguments."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


@contextmanager
def _output(target: str):
    if target == "-":
        yield sys.stdout
        return
    with open(target, "w", newline="") as f:
        yield f


def _emit_report(report: RunReport, target: Optional[str]):
    if target is None:
        return
    with _output(target) as out:
        out.write(dumps_report(report))
        out.write("\n")


def _load(path: str) -> Tuple[LpProblem, float]:
    started = time.perf_counter()
    problem = read_mps(path)
    return problem, time.perf_counter() - started


def _solver_config(args) -> SolverConfig:
    return SolverConfig(
        eps_opt=args.eps,
        max_iterations=args.max_iter,
        termination_check_period=args.check_period,
    )


def _widths(text: str) -> List[int]:
    try:
        widths = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"widths must be comma separated integers, got {text!r}") from None
    if not widths or any(w < 1 for w in widths):
        raise UsageError("widths must be positive")
    return widths


def _read_point(path: str, n: int) -> np.ndarray:
    text = Path(path).read_text().replace(",", " ").replace("[", " ").replace("]", " ")
    try:
        values = np.array([float(v) for v in text.split()])
    except ValueError as e:
        raise InvalidRequest(f"cannot read x_rel from {path}: {e}") from None
    if values.size != n:
        raise InvalidRequest(f"{path} holds {values.size} values, the problem has {n} variables")
    return values


def cmd_solve(args) -> int:
    problem, load_seconds = _load(args.file)
    config = _solver_config(args)

    started = time.perf_counter()
    norm = matrix_norm(problem.A)
    norm_seconds = time.perf_counter() - started

    started = time.perf_counter()
    result = solve(problem, config, norm=norm)
    solve_seconds = time.perf_counter() - started

    report = RunReport(
        command="solve",
        problem=problem.name or args.file,
        problems=[
            ProblemRecord(
                index=0,
                status=result.status.value,
                objective=result.objective,
                iterations=result.iterations,
                primal_residual=result.primal_residual,
                dual_residual=result.dual_residual,
                relative_gap=result.relative_gap,
            )
        ],
        timings=PhaseTimings(load=load_seconds, norm_estimate=norm_seconds, solve=solve_seconds),
        config=config.dict(),
        driver={"restarts": result.restarts, "restarts_by_reason": result.restarts_by_reason},
    )

    if args.json is None:
        print(f"{result.status.value} objective={result.objective:.10g} iterations={result.iterations}")
    _emit_report(report, args.json)

    if result.status is SolveStatus.ITERATION_LIMIT:
        return EXIT_ITERATION_LIMIT
    return EXIT_OK


def _root_point(problem: LpProblem) -> np.ndarray:
    root = oracle_solve(problem)
    if not root.is_optimal:
        raise InvalidRequest(f"the root relaxation is {root.status.value}, there is no point to branch from")
    return root.x


def cmd_fsb(args) -> int:
    problem, load_seconds = _load(args.file)
    config = _solver_config(args)

    x_rel = _root_point(problem) if args.from_root_oracle else _read_point(args.xrel, problem.n)
    candidates = problem.integer_columns or range(problem.n)
    req = FsbRequest.from_point(problem, x_rel, candidates, tolerance=args.tolerance)

    started = time.perf_counter()
    norm = matrix_norm(problem.A)
    norm_seconds = time.perf_counter() - started

    outcome = run_fsb(req, config, norm=norm)
    records = []
    for b in outcome.branches:
        records.append(
            ProblemRecord(
                index=len(records), status=b.up_status.value, objective=b.up_objective, iterations=b.up_iterations
            )
        )
    for b in outcome.branches:
        records.append(
            ProblemRecord(
                index=len(records),
                status=b.down_status.value,
                objective=b.down_objective,
                iterations=b.down_iterations,
            )
        )

    report = RunReport(
        command="fsb",
        problem=problem.name or args.file,
        problems=records,
        timings=PhaseTimings(load=load_seconds, norm_estimate=norm_seconds, solve=outcome.solve_seconds),
        config=config.dict(),
        driver={
            "root_objective": outcome.root_objective,
            "branches": outcome.branches,
            "ranking": [{"variable": v, "score": s} for v, s in outcome.ranked()],
        },
    )

    if args.json is None:
        for variable, score in outcome.ranked():
            print(f"x{variable} score={score:.6g}")
    _emit_report(report, args.json)

    if outcome.branches and all(r.status == SolveStatus.ITERATION_LIMIT.value for r in records):
        return EXIT_ITERATION_LIMIT
    return EXIT_OK


def cmd_obbt(args) -> int:
    problem, load_seconds = _load(args.file)
    config = ObbtConfig(
        eps_opt=args.eps,
        eps_dual=args.eps_dual,
        min_improvement=args.min_improvement,
        max_iterations=args.max_iter,
        termination_check_period=args.check_period,
        cutoff=args.cutoff,
        lenient=args.lenient,
    )

    outcome = run_obbt(problem, config)
    changed, mean_reduction = domain_reduction_stats(outcome)

    report = RunReport(
        command="obbt",
        problem=problem.name or args.file,
        problems=[
            ProblemRecord(index=j, status=status.value) for j, status in enumerate(outcome.statuses)
        ],
        timings=PhaseTimings(load=load_seconds, solve=outcome.solve_seconds),
        config=config.dict(),
        driver={
            "changed": [
                {"variable": u.variable, "side": u.side, "old": u.old, "new": u.new, "margin": u.margin}
                for u in outcome.updates
            ],
            "solved": outcome.solved,
            "subproblems": len(outcome.statuses),
            "variables_changed": changed,
            "mean_reduction_percent": mean_reduction,
        },
    )

    if args.json is None:
        for u in outcome.updates:
            print(f"{problem.col_names[u.variable]} {u.side} {u.old:.10g} -> {u.new:.10g}")
        print(f"{changed} variables changed, mean reduction {mean_reduction:.2f}%")
    _emit_report(report, args.json)

    if outcome.statuses and outcome.solved == 0:
        return EXIT_ITERATION_LIMIT
    return EXIT_OK


def cmd_tune(args) -> int:
    problem, _ = _load(args.file)
    report = tune(problem.A, _widths(args.widths), args.repetitions, args.seed)
    with _output(args.csv) as out:
        write_tune_csv(report, out)
    return EXIT_OK


def _bench_one(family: Family, sizes: dict, seed: int, args) -> BenchRow:
    problem = generate_instance(family, sizes, seed)
    config = _solver_config(args)

    started = time.perf_counter()
    root = solve(problem, config)
    branches = 0
    iterations = 0
    if root.is_optimal:
        req = FsbRequest.from_point(problem, root.x, problem.integer_columns)
        if req.p > args.max_branches:
            req = FsbRequest(
                problem=problem,
                x_rel=root.x,
                tolerance=req.tolerance,
                fractional_indices=req.fractional_indices[: args.max_branches],
            )
        outcome = run_fsb(req, config)
        branches = 2 * req.p
        iterations = outcome.iterations
    else:
        _log.warning(f"root relaxation of {problem.name} is {root.status.value}, no branching")

    return BenchRow(
        family=family.value,
        instance=problem.name,
        m=problem.m,
        n=problem.n,
        nnz=problem.A.nnz,
        S=branches,
        runtime_s=time.perf_counter() - started,
        iters=iterations,
    )


def cmd_bench(args) -> int:
    families = [Family(f) for f in (args.family or [f.value for f in Family])]
    sizes = parse_sizes(args.sizes or [])

    rows = []
    for family in families:
        family_sizes = {k: v for k, v in sizes.items() if k in DEFAULT_SIZES[family]}
        rows.append(_bench_one(family, family_sizes, args.seed, args))

    with _output(args.csv) as out:
        write_bench_csv(rows, out)
    return EXIT_OK


def cmd_gen(args) -> int:
    problem = generate_instance(Family(args.family), parse_sizes(args.sizes or []), args.seed)
    with _output(args.out) as out:
        out.write(write_mps(problem))
    return EXIT_OK


def _add_solver_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--eps", type=float, default=1e-4, help="relative optimality tolerance")
    parser.add_argument("--max-iter", type=int, default=100_000, help="iteration cap")
    parser.add_argument("--check-period", type=int, default=64, help="iterations between termination checks")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="batchlp", description="Batched PDHG for LPs sharing one matrix.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help="logging level, defaults to BATCHLP_LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("solve", help="solve one MPS file")
    p.add_argument("file")
    _add_solver_flags(p)
    p.add_argument("--json", default=None, metavar="OUT", help="write the JSON report, - for stdout")
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("fsb", help="full strong branching around a relaxation point")
    p.add_argument("file")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--xrel", metavar="FILE", help="file holding the relaxation optimum")
    source.add_argument("--from-root-oracle", action="store_true", help="compute x_rel with the exact oracle")
    p.add_argument("--tolerance", type=float, default=1e-6, help="integrality tolerance")
    _add_solver_flags(p)
    p.add_argument("--json", default=None, metavar="OUT")
    p.set_defaults(handler=cmd_fsb)

    p = sub.add_parser("obbt", help="tighten variable bounds")
    p.add_argument("file")
    _add_solver_flags(p)
    p.add_argument("--eps-dual", type=float, default=1e-8, help="dual feasibility tolerance")
    p.add_argument("--min-improvement", type=float, default=1e-4)
    p.add_argument("--cutoff", type=float, default=None, help="objective cutoff row c^T x <= A")
    p.add_argument("--lenient", action="store_true", help="use certified duals of unfinished columns")
    p.add_argument("--json", default=None, metavar="OUT")
    p.set_defaults(handler=cmd_obbt)

    p = sub.add_parser("tune", help="time SpMM over candidate batch widths")
    p.add_argument("file")
    p.add_argument("--widths", default=",".join(str(w) for w in DEFAULT_WIDTHS))
    p.add_argument("--repetitions", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", default="-", metavar="OUT")
    p.set_defaults(handler=cmd_tune)

    p = sub.add_parser("bench", help="strong branching on generated instances")
    p.add_argument("--family", action="append", choices=[f.value for f in Family])
    p.add_argument("--sizes", nargs="*", metavar="KEY=VALUE")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-branches", type=int, default=DEFAULT_BENCH_BRANCHES)
    _add_solver_flags(p)
    p.add_argument("--csv", default="-", metavar="OUT")
    p.set_defaults(handler=cmd_bench)

    p = sub.add_parser("gen", help="write a generated instance as MPS")
    p.add_argument("--family", required=True, choices=[f.value for f in Family])
    p.add_argument("--sizes", nargs="*", metavar="KEY=VALUE")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(handler=cmd_gen)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"batchlp: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE

    level = (args.log_level or get_settings().log_level).upper()
    if not isinstance(logging.getLevelName(level), int):
        print(f"batchlp: usage error: unknown log level {level!r}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=level)

    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    try:
        return args.handler(args)
    except UsageError as e:
        print(f"batchlp: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except MpsFormatError as e:
        print(f"batchlp: {args.file}: {e}", file=sys.stderr)
        return EXIT_INPUT
    except InvalidProblem as e:
        print(f"batchlp: invalid problem: {e}", file=sys.stderr)
        for diagnostic in e.diagnostics:
            print(f"  {diagnostic}", file=sys.stderr)
        return EXIT_INPUT
    except (InvalidMatrix, InvalidRequest, OracleTooLarge, ValidationError) as e:
        print(f"batchlp: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (OSError, ValueError) as e:
        print(f"batchlp: {e}", file=sys.stderr)
        return EXIT_INPUT
    except BatchLpException as e:
        _log.exception("unexpected solver error")
        print(f"batchlp: {e}", file=sys.stderr)
        return EXIT_INPUT


def run():
    sys.exit(main())
