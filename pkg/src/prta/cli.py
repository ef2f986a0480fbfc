"""Command line entry point: ``prta {generate,analyze,experiment,simulate,compare}``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

from .analysis import Method, analyze
from .harness import (
    ALL_TASKS,
    LOWEST,
    AxesSpec,
    ExperimentConfig,
    compare_ratios,
    compare_values,
    emit_scatter_svg,
    read_csv,
    run_experiment,
    runtime_summary,
    taskset_seed,
)
from .simulator import empirical_dfp, random_arrivals, sample_executions, simulate
from .taskset import WCET_MODES, WCET_UTILIZATION, GeneratorConfig, TaskSet, generate_taskset, load_taskset, save_taskset
from .taskset import rng_stream


def _int_list(s: str) -> list[int]:
    return [int(x) for x in s.split(",") if x]


def _float_list(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x]


def _methods(s: str) -> list[Method]:
    return [Method(x.strip().upper()) for x in s.split(",") if x.strip()]


def _target(s: str):
    if s in ("lowest", LOWEST):
        return LOWEST
    if s in ("all", ALL_TASKS):
        return ALL_TASKS
    return int(s)


def _single_target(ts: TaskSet, target) -> int | None:
    if target == LOWEST:
        return None
    if target == ALL_TASKS:
        raise SystemExit("this command analyzes a single target; use an id or 'lowest'")
    return target


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma-us", type=float, default=1.0, help="grid resolution in microseconds")


def cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for n in args.n:
        for u in args.utilization:
            for i in range(args.sets):
                cfg = GeneratorConfig(
                    n_tasks=n,
                    total_utilization=u,
                    gamma=args.gamma_us * 1e-6,
                    wcet_mode=args.wcet_mode,
                    seed=taskset_seed(args.seed, n, u, i),
                )
                path = out / f"taskset-n{n}-u{u:g}-s{i}.json"
                save_taskset(generate_taskset(cfg), path)
                print(path)
    return 0


def cmd_analyze(args) -> int:
    ts = load_taskset(args.taskset)
    target = _single_target(ts, args.target)
    kwargs = {"samples": args.mc_samples, "seed": args.seed} if args.method is Method.MC else {}
    res = analyze(ts, args.method, target, **kwargs)
    json.dump(res.to_dict(), sys.stdout, indent=2)
    print()
    return 0


def cmd_experiment(args) -> int:
    cfg = ExperimentConfig(
        cardinalities=args.n,
        utilizations=args.utilization,
        sets_per_cell=args.sets,
        methods=args.methods,
        mc_samples=args.mc_samples,
        seed=args.seed,
        gamma=args.gamma_us * 1e-6,
        target_policy=args.target,
        output_dir=Path(args.out),
        wcet_mode=args.wcet_mode,
        repeat=args.repeat,
    )
    table = run_experiment(cfg)
    failed = sum(r.failed for r in table.rows)
    print(f"{len(table)} rows ({failed} failed) -> {args.out}")
    print(json.dumps(runtime_summary(table), indent=2))
    return 0


def cmd_simulate(args) -> int:
    ts = load_taskset(args.taskset)
    target = _single_target(ts, args.target)
    est = empirical_dfp(ts, target, args.scenarios, args.seed, synchronous=args.synchronous)
    tk = ts.lowest_priority() if target is None else ts.task(target)
    report = {"target": tk.id, "empirical": asdict(est), "bounds": {}}
    for m in args.methods:
        res = analyze(ts, m, tk.id)
        report["bounds"][str(m)] = {
            "wcdfp": res.wcdfp,
            "dominates": est.rate - est.ci_halfwidth <= res.wcdfp,
        }
    if args.trace_out:
        # dump the first scenario's schedule for inspection
        tasks = [t for t in ts.tasks if t.priority >= tk.priority]
        rng = rng_stream(args.seed, 0)
        xi = random_arrivals(tasks, 2 * max(t.period for t in tasks), rng, args.synchronous)
        trace = simulate(TaskSet(tuple(tasks), gamma=ts.gamma), xi, sample_executions(tasks, xi, rng))
        trace.dump_jsonl(args.trace_out)
    json.dump(report, sys.stdout, indent=2)
    print()
    return 0


def cmd_compare(args) -> int:
    table = read_csv(args.csv)
    ratios = compare_ratios(table, args.baseline, args.contender)
    values = compare_values(table, args.baseline, args.contender)
    report = {
        "baseline": ratios.baseline,
        "contender": ratios.contender,
        "points": len(ratios.points),
        "quadrants": ratios.quadrants,
        "flagged": len(ratios.flagged),
        "faster": ratios.faster,
        "time_pairs": len(ratios.time_ratios),
        "above_identity": values.above,
        "below_identity": values.below,
    }
    if args.out:
        emit_scatter_svg(
            [(p.wcdfp_ratio, p.time_ratio) for p in ratios.points],
            AxesSpec(f"WCDFP ratio {ratios.contender}/{ratios.baseline}",
                     f"time ratio {ratios.contender}/{ratios.baseline}"),
            args.out,
        )
    json.dump(report, sys.stdout, indent=2)
    print()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prta", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write synthetic task-set JSON files")
    _add_common(p)
    p.add_argument("--n", type=_int_list, default=[10])
    p.add_argument("--utilization", type=_float_list, default=[0.65])
    p.add_argument("--sets", type=int, default=1)
    p.add_argument("--wcet-mode", choices=WCET_MODES, default=WCET_UTILIZATION)
    p.add_argument("--out", default="tasksets")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("analyze", help="one task set, one method, JSON result on stdout")
    p.add_argument("taskset")
    p.add_argument("--method", type=lambda s: Method(s.upper()), default=Method.AC_IMP)
    p.add_argument("--target", type=_target, default=LOWEST)
    p.add_argument("--mc-samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("experiment", help="run the comparison matrix to CSV and SVG")
    _add_common(p)
    p.add_argument("--n", type=_int_list, default=[10, 20, 30, 40, 50, 60, 70, 80, 90, 100])
    p.add_argument("--utilization", type=_float_list, default=[0.60, 0.65, 0.70])
    p.add_argument("--sets", type=int, default=50)
    p.add_argument("--methods", type=_methods, default=list(Method))
    p.add_argument("--mc-samples", type=int, default=100_000)
    p.add_argument("--target", type=_target, default=LOWEST)
    p.add_argument("--repeat", type=int, default=1, help="median of k timed runs per row")
    p.add_argument("--wcet-mode", choices=WCET_MODES, default=WCET_UTILIZATION)
    p.add_argument("--out", default="results")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("simulate", help="empirical deadline-failure rate versus analytical bounds")
    p.add_argument("taskset")
    p.add_argument("--target", type=_target, default=LOWEST)
    p.add_argument("--scenarios", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--synchronous", action="store_true", help="release all tasks at tick 0")
    p.add_argument("--methods", type=_methods, default=[Method.AC_IMP, Method.BE])
    p.add_argument("--trace-out", help="write the first scenario's job records as JSON lines")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="ratio and quadrant summary from a results CSV")
    p.add_argument("--csv", required=True)
    p.add_argument("--baseline", type=lambda s: Method(s.upper()), default=Method.SC)
    p.add_argument("--contender", type=lambda s: Method(s.upper()), default=Method.AC_IMP)
    p.add_argument("--out", help="optional SVG scatter of the ratios")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
