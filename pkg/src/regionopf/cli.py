"""Command-line front end: partition a case, solve DC or AC OPF over the regions, validate.

Exit codes: 0 ok, 1 usage or I/O error, 2 validation failure, 3 no feasible
partition, 4 ADMM not converged, 5 solver failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

from .admm import AdmmConfig
from .case import read_case, renumber_buses
from .errors import (CaseFormatError, CentralizedSolveError, DisconnectedGraph,
                     NoFeasiblePartition, NonconvexCost, NotConverged, PiecewiseCostUnsupported,
                     RegionOpfError, RegionWithoutGenerator, SchemaMismatch, SubproblemFailure)
from .partition import partition_case
from .regions import export_regions, extract_regions, import_regions, merge_regions, verify_integrity
from .solution import OpfSolution
from .validation import emit_convergence_artifacts, validate_solution

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_PARTITION, EXIT_NOT_CONVERGED, EXIT_SOLVER = range(6)
PROGRESS_EVERY = 50

log = logging.getLogger("regionopf")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _positive(kind):
    def parse(text):
        try:
            value = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
        if not value > 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return value
    return parse


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="regionopf", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    part = sub.add_parser("partition", help="split a MATPOWER case into regions")
    part.add_argument("case", type=Path)
    part.add_argument("-k", "--regions", type=int, required=True)
    part.add_argument("--restarts", type=_positive(int), default=10)
    part.add_argument("--seed", type=int, default=0)
    part.add_argument("-o", "--out", type=Path, default=Path("."))
    part.add_argument("--workers", type=_positive(int), default=os.cpu_count() or 1)

    for mode in ("dc", "ac"):
        s = sub.add_parser(f"solve-{mode}", help=f"distributed {mode.upper()} OPF over a partition")
        s.add_argument("directory", type=Path)
        s.add_argument("--rho", type=_positive(float), default=1000.0)
        s.add_argument("--tol", type=_positive(float), default=1e-4)
        s.add_argument("--max-iters", type=_positive(int), default=2000 if mode == "dc" else 3000)
        s.add_argument("--centralized", action="store_true",
                       help="also solve the whole network to report the optimality gap")
        s.add_argument("-o", "--out", type=Path, default=None,
                       help="artifact directory (default: the partition directory)")
        s.add_argument("--workers", type=_positive(int), default=os.cpu_count() or 1)
        if mode == "ac":
            s.add_argument("--conventional-mva-limit", action="store_true",
                           help="use S^2 <= rate_a^2 instead of p^2 + q^2 <= 2 rate_a^2")

    val = sub.add_parser("validate", help="re-check a stored solution")
    val.add_argument("directory", type=Path)
    val.add_argument("--solution", type=Path, default=None,
                     help="solution file (default: solution_dc.json / solution_ac.json in the directory)")
    return p


def cmd_partition(args) -> int:
    if args.regions < 2:
        raise UsageError("-k/--regions must be at least 2")
    try:
        case = read_case(args.case)
    except (OSError, CaseFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    work, mapping = renumber_buses(case)
    if any(old != new for old, new in mapping.items()):
        print(f"renumbered {len(mapping)} buses to 1..{len(mapping)} in file order")
    try:
        p = partition_case(work, args.regions, restarts=args.restarts, seed=args.seed,
                           workers=args.workers)
        mrc = extract_regions(work, p, source_name=args.case.stem)
    except (NoFeasiblePartition, RegionWithoutGenerator, DisconnectedGraph) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARTITION
    report = verify_integrity(work, mrc)
    try:
        written = export_regions(mrc, args.out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    n_gen = sum(len(r.case.generators) for r in mrc.regions)
    internal = sum(1 for r in mrc.regions for br in r.case.branches if br.in_service)
    print(f"{mrc.source_name}: {mrc.k} regions, {len(mrc.tie_lines)} tie-lines "
          f"(restart seed {p.restart_seed}, {p.strategy})")
    for reg in mrc.regions:
        print(f"  region {reg.region_id}: {reg.case.n_buses} buses, "
              f"{len(reg.case.generators)} generators")
    print(f"slack region: {mrc.slack_region}")
    verdict = "confirmed" if report.overall else "FAILED"
    print(f"conservation {verdict}: {work.n_buses} buses, {internal + len(mrc.tie_lines)} branches, "
          f"{n_gen} generators")
    print(report.table())
    print(f"wrote {written[0].parent}")
    return EXIT_OK if report.overall else EXIT_VALIDATION


def _centralized_cost(mrc, mode, args):
    from .acopf import solve_ac_centralized
    from .dcopf import solve_dc_centralized

    whole = merge_regions(mrc)
    if mode == "dc":
        sol = solve_dc_centralized(whole)
    else:
        sol = solve_ac_centralized(whole, conventional_mva_limit=args.conventional_mva_limit)
    return sol.total_cost


def cmd_solve(args, mode: str) -> int:
    from .acopf import solve_ac_distributed
    from .dcopf import solve_dc_distributed

    try:
        mrc = import_regions(args.directory)
    except (OSError, SchemaMismatch, CaseFormatError, KeyError, ValueError) as exc:
        print(f"error: cannot load partition directory {args.directory}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    out = args.out or args.directory

    central = None
    if args.centralized:
        try:
            central = _centralized_cost(mrc, mode, args)
        except (CentralizedSolveError, PiecewiseCostUnsupported, NonconvexCost) as exc:
            print(f"error: centralized solve failed: {exc}", file=sys.stderr)
            return EXIT_SOLVER
        print(f"centralized {mode.upper()} cost: {central:.6f}")
        if not central > 0:
            print("centralized cost is not positive; gap column left empty")
            central = None

    cfg = AdmmConfig(rho=args.rho, tolerance=args.tol, max_iters=args.max_iters,
                     centralized_cost=central, workers=args.workers,
                     progress_every=PROGRESS_EVERY)
    t0 = time.perf_counter()
    code = EXIT_OK
    try:
        if mode == "dc":
            solution, state = solve_dc_distributed(mrc, cfg)
        else:
            solution, state = solve_ac_distributed(
                mrc, cfg, conventional_mva_limit=args.conventional_mva_limit)
    except NotConverged as exc:
        solution, state = exc.solution, exc.state
        print(f"not converged: {exc}", file=sys.stderr)
        code = EXIT_NOT_CONVERGED
    except SubproblemFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.state is not None and exc.state.iteration > 0:
            emit_convergence_artifacts(exc.state, out, f"convergence_{mode}")
        return EXIT_SOLVER
    except (PiecewiseCostUnsupported, NonconvexCost, RegionOpfError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    elapsed = time.perf_counter() - t0

    try:
        paths = emit_convergence_artifacts(state, out, f"convergence_{mode}")
        Path(out).mkdir(parents=True, exist_ok=True)
        paths.append(solution.save(Path(out) / f"solution_{mode}.json"))
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    status = "converged" if solution.converged else "stopped"
    print(f"{status} after {solution.iterations} iterations in {elapsed:.2f} s; "
          f"worst residual {solution.residual:.3e}; total cost {solution.total_cost:.6f}")
    if central is not None:
        print(f"optimality gap: {abs(solution.total_cost - central) / central:.3e}")
    report = validate_solution(solution, mrc)
    print(report.table())
    for p in paths:
        print(f"wrote {p}")
    if code == EXIT_OK and not report.overall:
        code = EXIT_VALIDATION
    return code


def cmd_validate(args) -> int:
    try:
        mrc = import_regions(args.directory)
    except (OSError, SchemaMismatch, CaseFormatError, KeyError, ValueError) as exc:
        print(f"error: cannot load partition directory {args.directory}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.solution is not None:
        files = [args.solution]
    else:
        files = [f for f in (args.directory / "solution_dc.json", args.directory / "solution_ac.json")
                 if f.is_file()]
        if not files:
            print(f"error: no solution file in {args.directory}", file=sys.stderr)
            return EXIT_USAGE
    ok = True
    for f in files:
        try:
            solution = OpfSolution.load(f)
            report = validate_solution(solution, mrc)
        except (OSError, ValueError, KeyError, IndexError, SchemaMismatch) as exc:
            print(f"error: cannot validate {f}: {exc}", file=sys.stderr)
            return EXIT_USAGE
        print(f"{f}:")
        print(report.table())
        for c in report.failed():
            print(f"failed check: {c.name}")
        ok = ok and report.overall
    return EXIT_OK if ok else EXIT_VALIDATION


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        if args.command == "partition":
            return cmd_partition(args)
        if args.command == "validate":
            return cmd_validate(args)
        return cmd_solve(args, args.command.split("-")[1])
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
