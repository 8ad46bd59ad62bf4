"""Command-line harness: simulate, sweep-no, compare, dump-matrices."""

from __future__ import annotations

import argparse
import os
import sys

from . import harness
from .config import ConfigError, Scenario, default_config, load_config

EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _load(args) -> "RunConfig":
    if args.config:
        return load_config(args.config)
    return default_config()


def _pick_scenarios(cfg, names):
    if not names:
        return list(cfg.scenarios)
    return [cfg.scenario(name) for name in names]


def _out(args, filename: str) -> str:
    os.makedirs(args.out_dir, exist_ok=True)
    return os.path.join(args.out_dir, filename)


def cmd_simulate(args) -> int:
    cfg = _load(args)
    scenario = cfg.scenario(args.scenario) if args.scenario else cfg.scenarios[0]
    if args.seed is not None:
        scenario = Scenario(
            name=scenario.name, n0=scenario.n0,
            queue_init_fraction=scenario.queue_init_fraction,
            demand=scenario.demand, horizon_steps=scenario.horizon_steps,
            seed=args.seed,
        )
    traj, metrics = harness.simulate_scenario(
        cfg, scenario, policy_name=args.policy, n_o=args.no
    )
    base = f"{scenario.name}-{args.policy}"
    harness.write_trajectory_csv(traj, _out(args, f"{base}-trajectory.csv"))
    harness.write_diagnostics_csv(traj, _out(args, f"{base}-diagnostics.csv"))
    row = {"scenario": scenario.name, "policy": args.policy,
           "n_o": args.no or cfg.control.horizon, "error": ""}
    row.update(metrics.as_row())
    harness.write_metrics_csv([row], _out(args, f"{base}-metrics.csv"))
    print(f"{scenario.name} [{args.policy}] "
          f"tts_pn={metrics.tts_network:.1f} veh.h "
          f"tts_gates_avg={metrics.tts_gates_avg:.1f} veh.h "
          f"rqb={metrics.rqb:.0f} veh served={metrics.served:.0f} veh "
          f"gridlock_events={metrics.gridlock_events}")
    return 0


def cmd_sweep_no(args) -> int:
    cfg = _load(args)
    scenarios = _pick_scenarios(cfg, args.scenario)
    horizons = tuple(args.no) if args.no else harness.DEFAULT_HORIZONS
    rows = harness.sweep_no(cfg, scenarios, horizons)
    path = _out(args, "sweep-no.csv")
    harness.write_metrics_csv(rows, path)
    failures = [r for r in rows if r["error"]]
    print(f"{len(rows)} cells -> {path} ({len(failures)} failed)")
    return 0 if not failures else EXIT_SOLVER


def cmd_compare(args) -> int:
    cfg = _load(args)
    scenarios = _pick_scenarios(cfg, args.scenario)
    policies = tuple(args.policy) if args.policy else harness.POLICIES
    rows = harness.compare_policies(cfg, scenarios, policies)
    path = _out(args, "compare.csv")
    harness.write_metrics_csv(rows, path)
    failures = [r for r in rows if r["error"]]
    print(f"{len(rows)} runs -> {path} ({len(failures)} failed)")
    return 0 if not failures else EXIT_SOLVER


def cmd_dump_matrices(args) -> int:
    cfg = _load(args)
    directory = os.path.join(args.out_dir, "matrices")
    harness.dump_matrices(cfg, args.no, directory)
    print(f"matrices -> {directory}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gateflow",
        description="Perimeter flow control experiments on a protected "
                    "urban network",
    )
    parser.add_argument("--config", help="run configuration JSON "
                        "(default: bundled San Francisco case study)")
    parser.add_argument("--out-dir", default="out", help="output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one scenario closed loop")
    p_sim.add_argument("--scenario", help="scenario name (default: first)")
    p_sim.add_argument("--policy", default="mgc", choices=harness.POLICIES)
    p_sim.add_argument("--no", type=int, help="optimisation horizon override")
    p_sim.add_argument("--seed", type=int, help="disturbance seed override")
    p_sim.set_defaults(func=cmd_simulate)

    p_sweep = sub.add_parser("sweep-no", help="scenario x horizon sweep")
    p_sweep.add_argument("--scenario", action="append",
                         help="restrict to named scenarios (repeatable)")
    p_sweep.add_argument("--no", type=int, action="append",
                         help="horizon values (repeatable)")
    p_sweep.set_defaults(func=cmd_sweep_no)

    p_cmp = sub.add_parser("compare", help="policy comparison table")
    p_cmp.add_argument("--scenario", action="append",
                       help="restrict to named scenarios (repeatable)")
    p_cmp.add_argument("--policy", action="append", choices=harness.POLICIES,
                       help="policies to include (repeatable)")
    p_cmp.set_defaults(func=cmd_compare)

    p_dump = sub.add_parser("dump-matrices",
                            help="write condensed QP matrices as CSV")
    p_dump.add_argument("--no", type=int, help="optimisation horizon override")
    p_dump.set_defaults(func=cmd_dump_matrices)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RuntimeError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
