"""Command-line entry point.

Subcommands:
  optimize       run the evolutionary search and write archive/manifest/stats
  evaluate       score a single module sequence against a task
  pareto-report  check an archive for dominated rows and emit plot columns

Exit codes: 0 success, 2 input parse error, 3 no feasible solution found,
4 invalid assembly, 5 dominated archive row.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import fileio
from .catalog import assembly_valid
from .evaluation import CONSTRAINT_NAMES, OBJECTIVE_NAMES, evaluate_candidate
from .optimizer import GAConfig, run
from .planning import max_joint_adjustment, replan_trajectory

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_NO_FEASIBLE = 3
EXIT_INVALID_ASSEMBLY = 4
EXIT_DOMINATED = 5


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modsynth",
        description="Search catalogs of robot modules for task-optimal compositions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    opt = sub.add_parser("optimize", help="run the evolutionary search")
    opt.add_argument("--task", required=True, help="task file (YAML)")
    opt.add_argument("--catalog", default=None,
                     help="module catalog file (YAML); bundled default if omitted")
    opt.add_argument("--config", default=None, help="optimizer configuration file")
    opt.add_argument("--seed", type=int, default=None, help="master RNG seed")
    opt.add_argument("--out-dir", default=".", help="output directory")
    opt.add_argument("--generations", type=int, default=None)
    opt.add_argument("--population", type=int, default=None)
    opt.add_argument("--workers", type=int, default=1,
                     help="parallel evaluation processes")
    opt.set_defaults(func=cmd_optimize)

    ev = sub.add_parser("evaluate", help="score one module sequence")
    ev.add_argument("--task", required=True)
    ev.add_argument("--catalog", default=None)
    ev.add_argument("--config", default=None)
    ev.add_argument("--seed", type=int, default=0, help="master RNG seed")
    ev.add_argument("--out-dir", default=".", help="where trajectory.txt goes")
    ev.add_argument("--sequence", required=True,
                    help="module ids joined by ';' (or ','), base first")
    ev.set_defaults(func=cmd_evaluate)

    rep = sub.add_parser("pareto-report", help="audit an archive file")
    rep.add_argument("archive", help="archive.csv produced by optimize")
    rep.set_defaults(func=cmd_pareto_report)
    return parser


def _load_inputs(args):
    task = fileio.load_task(args.task)
    if args.catalog is None:
        catalog_path = fileio.resource_path("default_catalog.yaml")
        catalog = fileio.load_catalog(catalog_path)
    else:
        catalog_path = args.catalog
        catalog = fileio.load_catalog(catalog_path)
    ga, planner, error_mode = GAConfig(), None, "worst"
    if args.config is not None:
        ga, planner, error_mode = fileio.load_run_config(args.config)
    return task, catalog, catalog_path, ga, planner, error_mode


def _apply_overrides(ga: GAConfig, args) -> GAConfig:
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["rng_seed"] = args.seed
    if getattr(args, "generations", None) is not None:
        updates["generations"] = args.generations
    if getattr(args, "population", None) is not None:
        updates["population_size"] = args.population
    if not updates:
        return ga
    from dataclasses import replace

    return replace(ga, **updates)


def cmd_optimize(args) -> int:
    try:
        task, catalog, catalog_path, ga, planner, error_mode = _load_inputs(args)
        ga = _apply_overrides(ga, args)
    except (fileio.FileFormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    archive, history = run(
        task,
        catalog,
        config=ga,
        workers=args.workers,
        planner_config=planner,
        error_mode=error_mode,
        stats_sink=lambda line: print(line, flush=True),
    )
    wall = time.perf_counter() - t0
    fileio.write_archive(archive, out_dir / "archive.csv")
    fileio.write_stats(history, out_dir / "stats.csv")
    fileio.write_manifest(out_dir / "manifest.txt", args.task, catalog_path, ga,
                          error_mode, args.workers, wall)
    print(f"archive: {out_dir / 'archive.csv'} ({len(archive)} rows)")
    if not archive:
        print("no feasible composition found", file=sys.stderr)
        return EXIT_NO_FEASIBLE
    return EXIT_OK


def cmd_evaluate(args) -> int:
    try:
        task, catalog, _, _, planner, error_mode = _load_inputs(args)
    except (fileio.FileFormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    seq = fileio.sequence_from_string(args.sequence)
    ok, reason = assembly_valid(seq, catalog)
    if not ok:
        print(f"invalid assembly: {reason}", file=sys.stderr)
        return EXIT_INVALID_ASSEMBLY
    rec = evaluate_candidate(seq, task, catalog, master_seed=args.seed,
                             config=planner, error_mode=error_mode)
    print(f"sequence: {';'.join(seq.ids)}")
    print(f"plan_seed: {rec.plan_seed}")
    for name, value in zip(CONSTRAINT_NAMES, rec.constraints.values):
        print(f"{name}: {repr(value)}")
    for name, value in zip(OBJECTIVE_NAMES, rec.objectives.values):
        print(f"{name}: {repr(value)}")
    print(f"feasible: {'yes' if rec.feasible else 'no'}")
    outcome = rec.outcome
    if rec.feasible and outcome is not None and outcome.trajectory is not None:
        delta = rec.objectives.values[1]
        shift = tuple(delta * float(v) for v in task.robustness_envelope)
        adjusted = replan_trajectory(outcome, task, shift, config=planner)
        eps = (max_joint_adjustment(outcome.trajectory, adjusted)
               if adjusted is not None else float("nan"))
        print(f"robustness_delta: {repr(delta)}")
        print(f"max_joint_adjustment_rad: {repr(eps)}")
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        traj_path = out_dir / "trajectory.txt"
        fileio.write_trajectory(outcome.trajectory, traj_path)
        print(f"trajectory: {traj_path} ({len(outcome.trajectory)} samples)")
    return EXIT_OK


def _dominates_row(a, b) -> bool:
    return all(x >= y for x, y in zip(a, b)) and any(x > y for x, y in zip(a, b))


def cmd_pareto_report(args) -> int:
    try:
        records = fileio.read_archive(args.archive)
    except (fileio.FileFormatError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    violations = []
    for i, a in enumerate(records):
        for j, b in enumerate(records):
            if i != j and _dominates_row(b.objectives, a.objectives):
                violations.append((i, j))
                break
    print("normalized_compactness,robustness")
    for r in records:
        print(f"{repr(r.normalized_compactness)},{repr(r.objectives[1])}")
    print()
    print("robustness,reconfig_time_s")
    for r in records:
        print(f"{repr(r.objectives[1])},{repr(-r.objectives[2])}")
    if violations:
        for i, j in violations:
            print(
                f"dominated: row {i + 2} ({';'.join(records[i].sequence)}) "
                f"is dominated by row {j + 2}",
                file=sys.stderr,
            )
        return EXIT_DOMINATED
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
