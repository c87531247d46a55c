"""Command-line interface.

Usage:
    pushplan plan task.json --out plans/box.json
    pushplan batch box --count 20 --seed 0 --out-csv results/box.csv --jobs 4
    pushplan stats --preset tee --export-sdpa tee.dat-s

Exit codes: 0 on success, 1 on input errors, 2 when no feasible plan is found.
"""

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from .conic import export_sdpa, program_stats
from .gcs import build_relaxation, dump_graph
from .planner import PlanResult, build_mode_graph, plan
from .render import render_plan
from .tasks import load_task, preset_task, sample_task
from .types import (
    NoFeasiblePlan,
    PlannerSettings,
    PushPlanError,
    RoundingSettings,
    SolverSettings,
    UnreachableTarget,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NO_PLAN = 2

BATCH_COLUMNS = [
    "instance",
    "seed",
    "success",
    "c_relax",
    "c_round",
    "gap",
    "relax_time_s",
    "round_time_s",
    "refine_time_s",
]

# Sizes reported for the box slider with three knots; printed for orientation only.
BOX_REFERENCE_STATS = {"num_constraints": 48846, "num_scalar_variables": 8854, "num_psd_blocks": 88}


def _settings(args) -> PlannerSettings:
    solver = SolverSettings.from_dict()
    if getattr(args, "solver_tol", None) is not None:
        solver = solver.with_tolerance(args.solver_tol)
    rounding = RoundingSettings.from_dict()
    if getattr(args, "rounding_attempts", None) is not None:
        rounding = RoundingSettings(attempts=args.rounding_attempts, flow_threshold=rounding.flow_threshold)
    return PlannerSettings(solver=solver, rounding=rounding)


def _write(path: str | None, text: str) -> None:
    if path is None:
        print(text)
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


# =============================================================================
# plan
# =============================================================================


def cmd_plan(args) -> int:
    task_file = load_task(args.task)
    task = task_file.task
    overrides = {}
    if args.knots is not None:
        overrides["num_knots"] = args.knots
    if args.timestep is not None:
        overrides["h"] = args.timestep
    if overrides:
        task = replace(task, **overrides)
    seed = task_file.seed if args.seed is None else args.seed

    try:
        result = plan(task, seed=seed, settings=_settings(args))
    except (NoFeasiblePlan, UnreachableTarget) as e:
        print(f"No feasible plan for '{task.name}': {e}", file=sys.stderr)
        diagnostics = getattr(e, "diagnostics", {})
        if diagnostics:
            print(json.dumps(diagnostics, indent=2, default=str), file=sys.stderr)
        return EXIT_NO_PLAN

    document = {"task": task.to_dict(), **result.to_dict(include_timings=not args.no_timings)}
    _write(args.out, json.dumps(document, indent=2))
    svg_path = args.svg or (str(Path(args.out).with_suffix(".svg")) if args.out else None)
    if svg_path:
        render_plan(result, task, svg_path)
    if args.dump_graph:
        _write(args.dump_graph, result.graph_json)
    if args.out:
        print(
            f"Saved plan with {len(result.segments)} segments to {args.out} "
            f"(C_relax {result.c_relax:.4f}, C_round {result.c_round:.4f}, gap {100 * result.gap:.2f}%)"
        )
    return EXIT_OK


# =============================================================================
# batch
# =============================================================================


def _run_instance(job: tuple[str, int, int, int | None, PlannerSettings, bool]) -> dict:
    preset, index, seed, knots, settings, timings = job
    row = dict.fromkeys(BATCH_COLUMNS, np.nan)
    row.update(instance=index, seed=seed, success=False)
    try:
        task = sample_task(preset, np.random.default_rng(seed), name=f"{preset}-{index}", num_knots=knots)
        result: PlanResult = plan(task, seed=seed, settings=settings)
    except PushPlanError as e:
        logger.warning("Instance %d (seed %d) failed: %s", index, seed, e)
        return row
    row.update(
        success=result.max_residual <= settings.refinement.quadratic_tol,
        c_relax=result.c_relax,
        c_round=result.c_round,
        gap=result.gap,
        relax_time_s=result.timings["relaxation"] if timings else 0.0,
        round_time_s=result.timings["rounding"] if timings else 0.0,
        refine_time_s=result.timings["refinement"] if timings else 0.0,
    )
    return row


def summarize(frame: pd.DataFrame) -> pd.DataFrame:
    """Mean and median rows over the instance rows; failed instances have NaN costs and drop out."""
    values = frame[BATCH_COLUMNS[2:]].astype(float)
    summary = pd.DataFrame([values.mean(), values.median()])
    summary.insert(0, "seed", np.nan)
    summary.insert(0, "instance", ["mean", "median"])
    return summary[BATCH_COLUMNS]


def run_batch(
    preset: str,
    count: int,
    seed: int = 0,
    jobs: int = 1,
    knots: int | None = None,
    settings: PlannerSettings | None = None,
    timings: bool = True,
) -> pd.DataFrame:
    """Plan ``count`` random instances; instance i uses seed ``seed + i``.

    Rows come back in instance order whatever the completion order.
    """
    settings = settings or PlannerSettings()
    work = [(preset, i, seed + i, knots, settings, timings) for i in range(count)]
    if jobs > 1 and count > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_instance, work))
    else:
        rows = [_run_instance(job) for job in work]
    return pd.DataFrame(rows, columns=BATCH_COLUMNS)


def cmd_batch(args) -> int:
    frame = run_batch(
        args.preset,
        args.count,
        seed=args.seed,
        jobs=args.jobs,
        knots=args.knots,
        settings=_settings(args),
        timings=not args.no_timings,
    )
    report = pd.concat([frame, summarize(frame)], ignore_index=True) if len(frame) else frame
    text = report.to_csv(index=False)
    if args.out_csv:
        _write(args.out_csv, text.rstrip("\n"))
        successes = int(frame["success"].sum()) if len(frame) else 0
        print(f"Saved {len(frame)} instances to {args.out_csv} ({successes} succeeded)")
    else:
        print(report.to_string(index=False))
    return EXIT_OK


# =============================================================================
# stats
# =============================================================================


def cmd_stats(args) -> int:
    if args.task:
        task = load_task(args.task).task
    else:
        task = preset_task(args.preset)
    if args.knots is not None:
        task = replace(task, num_knots=args.knots)
    graph = build_mode_graph(task)
    program = build_relaxation(graph.gcs).program
    stats = program_stats(program).to_dict()
    stats["graph"] = {
        "vertices": len(graph.gcs.vertices),
        "edges": len(graph.gcs.edges),
        "interior_vertices": graph.interior_vertex_count(),
    }
    if args.preset == "box" and task.num_knots == 3:
        stats["reference"] = {**BOX_REFERENCE_STATS, "note": "reference only, block layout differs"}
    _write(args.out, json.dumps(stats, indent=2, sort_keys=True))
    if args.export_sdpa:
        export_sdpa(program, args.export_sdpa)
    if args.dump_graph:
        _write(args.dump_graph, dump_graph(graph.gcs))
    return EXIT_OK


# =============================================================================
# Entry point
# =============================================================================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pushplan",
        description="Plan planar pushing trajectories with certified optimality gaps",
    )
    parser.add_argument("--verbose", "-v", action="count", default=0, help="Repeat for more detail")
    sub = parser.add_subparsers(dest="command", required=True)

    def solver_options(p):
        p.add_argument("--knots", type=int, help="Knots per mode (default from defaults.yml)")
        p.add_argument("--rounding-attempts", type=int, help="Randomized rounding traversals")
        p.add_argument("--solver-tol", type=float, help="Conic solver feasibility and gap tolerance")
        p.add_argument("--no-timings", action="store_true", help="Leave wall-clock times out of the output")

    p_plan = sub.add_parser("plan", help="Plan a single task file")
    p_plan.add_argument("task", help="Path to the task JSON file")
    p_plan.add_argument("--seed", type=int, help="Rounding seed (default: the task file's seed)")
    p_plan.add_argument("--timestep", type=float, help="Timestep h in seconds")
    p_plan.add_argument("--out", "-o", help="Plan JSON path (stdout if omitted); the SVG goes next to it")
    p_plan.add_argument("--svg", help="SVG path (default: --out with .svg suffix)")
    p_plan.add_argument("--dump-graph", help="Write the graph with relaxed flows as JSON")
    solver_options(p_plan)
    p_plan.set_defaults(func=cmd_plan)

    p_batch = sub.add_parser("batch", help="Plan random instances and report statistics")
    p_batch.add_argument("preset", choices=["box", "tee"], help="Slider preset")
    p_batch.add_argument("--count", type=int, default=20, help="Number of instances (default: 20)")
    p_batch.add_argument("--seed", type=int, default=0, help="Seed of the first instance")
    p_batch.add_argument("--jobs", "-j", type=int, default=1, help="Worker processes")
    p_batch.add_argument("--out-csv", help="CSV path (table on stdout if omitted)")
    solver_options(p_batch)
    p_batch.set_defaults(func=cmd_batch)

    p_stats = sub.add_parser("stats", help="Report the size of the assembled relaxation")
    source = p_stats.add_mutually_exclusive_group(required=True)
    source.add_argument("task", nargs="?", help="Path to the task JSON file")
    source.add_argument("--preset", choices=["box", "tee"], help="Use a stationary task on a preset slider")
    p_stats.add_argument("--knots", type=int, help="Knots per mode")
    p_stats.add_argument("--out", "-o", help="Stats JSON path (stdout if omitted)")
    p_stats.add_argument("--export-sdpa", help="Write the relaxation in SDPA sparse format")
    p_stats.add_argument("--dump-graph", help="Write the graph structure as JSON")
    p_stats.set_defaults(func=cmd_stats)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (PushPlanError, FileNotFoundError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
