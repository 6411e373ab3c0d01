"""Command line entry point: ``adaptive-bsp <command> [options]``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .errors import ConsistencyViolation
from .harness import (
    GIVEN_TREE_PLANNERS,
    MCTS_PLANNERS,
    bounds_study,
    emit_results,
    particle_speedup,
    run_consistency_experiment,
    run_trials,
    time_speedup,
    write_bounds_study,
)
from .scenarios import PRESETS, ScenarioConfig, default_config

BASELINE = {"sith": "ss", "lazy": "ss", "sith-pft": "pft-dpw"}


def _load_config(args) -> ScenarioConfig:
    config = ScenarioConfig.from_file(args.config) if args.config else default_config(args.scenario)
    if args.planner:
        config = replace(config, planner=args.planner)
    return config


def _seeds(args) -> list[int]:
    return list(range(args.seed, args.seed + args.trials))


def _summary(results) -> None:
    for r in results:
        ledger = r.ledger
        print(f"{r.planner:>9} seed={r.seed:<4} actions={','.join(r.action_names)} "
              f"return={r.total_return:.4f} motion_calls={ledger.motion_calls} "
              f"obs_calls={ledger.obs_calls} "
              f"particle_speedup={particle_speedup(ledger.final_levels, r.n_x):.2f}%")


def _plan(args, allowed) -> int:
    config = _load_config(args)
    if config.planner not in allowed:
        print(f"planner must be one of {allowed}", file=sys.stderr)
        return 2
    results = run_trials(config, config.planner, _seeds(args), args.workers)
    _summary(results)
    if args.out:
        for path in emit_results(results, args.out, beacons=config.beacons):
            print(f"wrote {path}")
    return 0


def cmd_plan_given_tree(args) -> int:
    return _plan(args, GIVEN_TREE_PLANNERS)


def cmd_plan_mcts(args) -> int:
    return _plan(args, MCTS_PLANNERS)


def cmd_consistency_check(args) -> int:
    config = _load_config(args)
    other = config.planner
    if other not in BASELINE:
        print(f"planner must be one of {sorted(BASELINE)}", file=sys.stderr)
        return 2
    try:
        report = run_consistency_experiment(config, (BASELINE[other], other), args.trials,
                                            args.seed, args.workers)
    except ConsistencyViolation as exc:
        print(f"consistency violation: {exc}", file=sys.stderr)
        return 1
    for t in report.trials:
        timing = "n/a" if t.time_speedup is None else f"{t.time_speedup:.2f}%"
        print(f"seed={t.seed:<4} identical={t.identical} "
              f"particle_speedup={t.particle_speedup:.2f}% time_speedup={timing} "
              f"motion_calls={t.motion_calls[0]}->{t.motion_calls[1]}")
    print(f"{report.passed}/{len(report.trials)} trials identical")
    if args.out:
        emit_results(report.results, args.out, beacons=config.beacons)
    return 0


def cmd_benchmark(args) -> int:
    config = _load_config(args)
    family = MCTS_PLANNERS if config.planner in MCTS_PLANNERS else GIVEN_TREE_PLANNERS
    seeds = _seeds(args)
    results, totals = [], {}
    for planner in family:
        runs = run_trials(config, planner, seeds, args.workers)
        results.extend(runs)
        levels = [lv for r in runs for lv in r.ledger.final_levels]
        totals[planner] = (sum(r.ledger.wall_ms for r in runs),
                           sum(r.ledger.motion_calls for r in runs),
                           particle_speedup(levels, config.n_x),
                           sum(r.total_return for r in runs) / len(runs))
    base_time = totals[family[0]][0]
    for planner, (wall, calls, pspeed, ret) in totals.items():
        tspeed = time_speedup(base_time, wall) if wall > 0 and base_time > 0 else 0.0
        print(f"{planner:>9} mean_return={ret:.4f} motion_calls={calls} "
              f"particle_speedup={pspeed:.2f}% time_speedup={tspeed:.2f}% wall_ms={wall:.0f}")
    if args.out:
        emit_results(results, args.out, beacons=config.beacons)
    return 0


def cmd_bounds_study(args) -> int:
    rows = bounds_study(args.study, args.n_x, seed=args.seed)
    for r in rows:
        widths = " ".join(f"{n}:{hi - lo:.4f}" for n, (lo, hi) in sorted(r.bounds.items()))
        print(f"step={r.step:<3} H={r.boers:.4f} kde={r.kde:.4f} "
              f"kalman={r.kalman:.4f} discrete={r.discrete:.4f} widths {widths}")
    if args.out:
        for path in write_bounds_study(rows, args.out):
            print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaptive-bsp",
                                     description="Belief space planning with adaptive "
                                                 "reward simplification.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, trials=1):
        p.add_argument("--config", help="scenario JSON file")
        p.add_argument("--scenario", default="light_dark", choices=sorted(PRESETS),
                       help="preset used when --config is absent")
        p.add_argument("--seed", type=int, default=0, help="first seed")
        p.add_argument("--trials", type=int, default=trials)
        p.add_argument("--out", help="directory for CSV and SVG output")
        p.add_argument("--planner", help="overrides the planner in the config")
        p.add_argument("--workers", type=int, default=1, help="threads for trials")

    for name, func, trials in (("plan-given-tree", cmd_plan_given_tree, 1),
                               ("plan-mcts", cmd_plan_mcts, 1),
                               ("consistency-check", cmd_consistency_check, 10),
                               ("benchmark", cmd_benchmark, 5)):
        p = sub.add_parser(name)
        common(p, trials)
        p.set_defaults(func=func)

    p = sub.add_parser("bounds-study")
    p.add_argument("--study", type=int, default=1, choices=(1, 2),
                   help="which fixed action sequence to follow")
    p.add_argument("--n-x", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bounds_study)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
