"""Evaluation criteria for closed-loop runs.

Total time spent (TTS) integrates every vehicle in the system over the run:
accumulation, gate queues, and virtual upstream queues (vehicles denied
entry to a full link still wait and are charged their delay):

    TTS = T * sum_k ( n(k) + sum_o (l_o(k) + v_o(k)) )     [veh h]

The relative queue balance (RQB) penalises unbalanced occupancies:

    RQB = sum_k ( sum_o l_o(k)^2 / l_max_o  +  n(k)^2 / n_max )   [veh]

Both sums run over k = 0..K inclusive (both endpoints counted once).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .controller import Trajectory
from .gates import GateBank

__all__ = ["RunMetrics", "tts", "tts_network", "tts_gates", "rqb", "served",
           "compute_metrics"]


def tts(traj: Trajectory) -> float:
    """Total time spent in the whole system [veh h]."""
    per_step = traj.accumulation + traj.queues.sum(axis=1) + traj.virtual.sum(axis=1)
    return float(traj.period * per_step.sum())


def tts_network(traj: Trajectory) -> float:
    """Time spent inside the protected network only [veh h]."""
    return float(traj.period * traj.accumulation.sum())


def tts_gates(traj: Trajectory) -> np.ndarray:
    """Per-gate time spent waiting (real plus virtual queue) [veh h]."""
    return traj.period * (traj.queues + traj.virtual).sum(axis=0)


def rqb(traj: Trajectory, bank: GateBank, n_max: float) -> float:
    """Relative queue balance [veh]; lower is more balanced."""
    queue_part = (traj.queues ** 2 / bank.storage).sum()
    acc_part = (traj.accumulation ** 2).sum() / n_max
    return float(queue_part + acc_part)


def served(traj: Trajectory) -> float:
    """Vehicles that completed trips (integrated exit flow) [veh]."""
    return float(traj.period * traj.exit_flow.sum())


@dataclass(frozen=True)
class RunMetrics:
    """Summary of one closed-loop run."""

    tts_total: float
    tts_network: float
    tts_gates: np.ndarray
    tts_gates_avg: float
    rqb: float
    served: float
    gridlock_events: int
    clamp_mass: float

    def as_row(self) -> dict:
        return {
            "tts_total": self.tts_total,
            "tts_pn": self.tts_network,
            "tts_gates_avg": self.tts_gates_avg,
            "rqb": self.rqb,
            "served": self.served,
            "gridlock_events": self.gridlock_events,
        }


def compute_metrics(traj: Trajectory, bank: GateBank, n_max: float) -> RunMetrics:
    gates_breakdown = tts_gates(traj)
    return RunMetrics(
        tts_total=tts(traj),
        tts_network=tts_network(traj),
        tts_gates=gates_breakdown,
        tts_gates_avg=float(gates_breakdown.mean()),
        rqb=rqb(traj, bank, n_max),
        served=served(traj),
        gridlock_events=traj.gridlock_events,
        clamp_mass=traj.clamp_mass,
    )
