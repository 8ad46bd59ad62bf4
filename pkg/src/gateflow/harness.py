"""Scenario execution, sweeps, policy comparison, and CSV persistence.

Outputs are plain CSV with fixed column sets so downstream plotting stays
schema-stable across runs:

    trajectory: k, t_hours, n, l_1..l_m, v_1..v_m, q_1..q_m, d_n, exit_flow
        (flow columns of row k cover the interval [k, k+1); the final state
        row carries zeros there)
    metrics:    scenario, policy, n_o, tts_pn, tts_gates_avg, rqb,
                served, gridlock_events
    diagnostics: k, status, iterations, stationarity, primal,
                complementarity, active, fallback, clipped
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, replace

import numpy as np

from .config import RunConfig, Scenario
from .controller import (
    AllocationPolicy,
    MgcConfig,
    MgcController,
    MgcPolicy,
    NoControlPolicy,
    SisoController,
    Trajectory,
    run_rolling_horizon,
)
from .metrics import RunMetrics, compute_metrics
from .plant import Plant

__all__ = [
    "POLICIES",
    "DEFAULT_HORIZONS",
    "build_plant",
    "build_policy",
    "simulate_scenario",
    "sweep_no",
    "compare_policies",
    "write_trajectory_csv",
    "write_metrics_csv",
    "write_diagnostics_csv",
    "dump_matrices",
]

POLICIES = ("mgc", "cap", "oap", "none")
DEFAULT_HORIZONS = (1, 2, 3, 5, 8, 9, 10, 12, 15, 20, 25)

METRIC_COLUMNS = ("scenario", "policy", "n_o", "tts_pn", "tts_gates_avg",
                  "rqb", "served", "gridlock_events")


def build_plant(cfg: RunConfig) -> Plant:
    return Plant(
        nfd=cfg.nfd,
        bank=cfg.bank,
        overflow_fraction=cfg.overflow_fraction,
        period=cfg.control.period,
        substeps=cfg.substeps,
    )


def build_policy(name: str, cfg: RunConfig, demand_table: np.ndarray,
                 control: MgcConfig | None = None):
    """Instantiate a policy by name: mgc | cap | oap | none."""
    control = control or cfg.control
    bank = cfg.bank
    if name == "mgc":
        return MgcPolicy(MgcController(cfg.nfd, bank, control), demand_table)
    if name in ("cap", "oap"):
        return AllocationPolicy(SisoController(cfg.nfd, bank, control), name)
    if name == "none":
        return NoControlPolicy(bank)
    raise ValueError(f"unknown policy {name!r}; expected one of {POLICIES}")


def simulate_scenario(
    cfg: RunConfig,
    scenario: Scenario,
    policy_name: str = "mgc",
    n_o: int | None = None,
    policy=None,
) -> tuple[Trajectory, RunMetrics]:
    """Run one scenario closed loop and compute its metrics.

    A pre-built policy may be passed to reuse controller factorisations
    across scenarios; it must match the configuration.
    """
    control = cfg.control if n_o is None else replace(cfg.control, horizon=n_o)
    demand_table = cfg.demand_table(scenario, extra_rows=control.horizon)
    if policy is None:
        policy = build_policy(policy_name, cfg, demand_table, control)
    elif isinstance(policy, MgcPolicy):
        policy.demand_table = demand_table
    plant = build_plant(cfg)
    state = plant.initial_state(scenario.n0, scenario.queue_init_fraction)
    traj = run_rolling_horizon(
        plant,
        policy,
        state,
        demand_table,
        steps=scenario.horizon_steps,
        disturbance=cfg.disturbance,
        seed=scenario.seed,
    )
    return traj, compute_metrics(traj, cfg.bank, cfg.nfd.n_max)


def sweep_no(
    cfg: RunConfig,
    scenarios: list[Scenario] | None = None,
    horizons: tuple[int, ...] = DEFAULT_HORIZONS,
) -> list[dict]:
    """Run every (scenario x optimisation horizon) cell under the MGC.

    Returns one row per cell with the metric columns plus a best_n_o flag
    on each scenario's lowest-TTS cell.  Failures are recorded per cell and
    the sweep continues.
    """
    if not horizons:
        raise ValueError("at least one horizon is required")
    scenarios = list(cfg.scenarios if scenarios is None else scenarios)
    if not scenarios:
        raise ValueError("at least one scenario is required")

    rows: list[dict] = []
    for n_o in horizons:
        control = replace(cfg.control, horizon=int(n_o))
        controller = MgcController(cfg.nfd, cfg.bank, control)
        for scenario in scenarios:
            demand_table = cfg.demand_table(scenario, extra_rows=control.horizon)
            policy = MgcPolicy(controller, demand_table)
            row = {"scenario": scenario.name, "policy": "mgc", "n_o": int(n_o)}
            try:
                traj, metrics = simulate_scenario(
                    cfg, scenario, "mgc", n_o=int(n_o), policy=policy
                )
            except Exception as exc:  # keep sweeping, report the cell
                row.update({c: "" for c in METRIC_COLUMNS if c not in row})
                row["error"] = f"{type(exc).__name__}: {exc}"
                rows.append(row)
                continue
            row.update(metrics.as_row())
            row["tts"] = metrics.tts_total
            row["error"] = ""
            rows.append(row)

    for scenario in scenarios:
        cells = [r for r in rows if r["scenario"] == scenario.name
                 and not r["error"]]
        if not cells:
            continue
        best = min(cells, key=lambda r: r["tts"])
        for r in cells:
            r["best_n_o"] = r is best
    return rows


def compare_policies(
    cfg: RunConfig,
    scenarios: list[Scenario] | None = None,
    policies: tuple[str, ...] = POLICIES,
) -> list[dict]:
    """Run every (scenario x policy) pair at the configured horizon."""
    unknown = set(policies) - set(POLICIES)
    if unknown:
        raise ValueError(f"unknown policies: {sorted(unknown)}")
    scenarios = list(cfg.scenarios if scenarios is None else scenarios)
    rows: list[dict] = []
    for scenario in scenarios:
        for name in policies:
            row = {"scenario": scenario.name, "policy": name,
                   "n_o": cfg.control.horizon}
            try:
                _, metrics = simulate_scenario(cfg, scenario, name)
            except Exception as exc:
                row.update({c: "" for c in METRIC_COLUMNS if c not in row})
                row["error"] = f"{type(exc).__name__}: {exc}"
                rows.append(row)
                continue
            row.update(metrics.as_row())
            row["error"] = ""
            rows.append(row)
    return rows


def write_trajectory_csv(traj: Trajectory, path: str) -> None:
    m = traj.queues.shape[1]
    header = (["k", "t_hours", "n"]
              + [f"l_{o + 1}" for o in range(m)]
              + [f"v_{o + 1}" for o in range(m)]
              + [f"q_{o + 1}" for o in range(m)]
              + ["d_n", "exit_flow"])
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for k in range(traj.steps + 1):
            flows = traj.released[k] if k < traj.steps else np.zeros(m)
            d_n = traj.disturbance[k] if k < traj.steps else 0.0
            exit_flow = traj.exit_flow[k] if k < traj.steps else 0.0
            writer.writerow(
                [k, f"{k * traj.period:.6f}", f"{traj.accumulation[k]:.6f}"]
                + [f"{x:.6f}" for x in traj.queues[k]]
                + [f"{x:.6f}" for x in traj.virtual[k]]
                + [f"{x:.6f}" for x in flows]
                + [f"{d_n:.6f}", f"{exit_flow:.6f}"]
            )


def write_metrics_csv(rows: list[dict], path: str) -> None:
    columns = list(METRIC_COLUMNS)
    extra = [c for c in ("tts", "best_n_o", "error") if any(c in r for r in rows)]
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns + extra,
                                extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def write_diagnostics_csv(traj: Trajectory, path: str) -> None:
    header = ["k", "status", "iterations", "stationarity", "primal",
              "complementarity", "active", "fallback", "clipped"]
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        for k, diag in enumerate(traj.diagnostics):
            writer.writerow([
                k, diag.status, diag.iterations, f"{diag.stationarity:.3e}",
                f"{diag.primal:.3e}", f"{diag.complementarity:.3e}",
                diag.n_active, int(diag.fallback), int(diag.clipped),
            ])


def dump_matrices(cfg: RunConfig, n_o: int | None, directory: str) -> None:
    """Write the condensed prediction/cost matrices as CSV for debugging."""
    control = cfg.control if n_o is None else replace(cfg.control, horizon=n_o)
    controller = MgcController(cfg.nfd, cfg.bank, control)
    cq = controller.condensed
    os.makedirs(directory, exist_ok=True)
    for name, arr in (("a", controller.model.a), ("b", controller.model.b),
                      ("c", controller.model.c), ("phi", cq.phi),
                      ("gamma", cq.gamma), ("z", cq.zmat), ("hess", cq.hess),
                      ("fmap", cq.fmap), ("gmap", cq.gmap),
                      ("l_rows", cq.l_rows)):
        np.savetxt(os.path.join(directory, f"{name}.csv"),
                   np.atleast_2d(arr), delimiter=",")
