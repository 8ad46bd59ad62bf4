"""Nonlinear plant: protected-network accumulation plus gated entrance queues.

State and dynamics (vehicles and hours throughout):

    n'    = sum_o q_o(t - tau_o) - min(exit_cap, O(n)) + d_n
    l_o'  = d_o - q_o

where the realised release flow of each gate follows the protected plant
rule: q_o = q_min when the accumulation has reached the overflow threshold
c*n_max, otherwise min{d_o + l_o/T_l, command, q_max}.  The d_o term is
extended by the queue content drainable in one sub-step so stored vehicles
can discharge when instantaneous demand is zero.

Queues integrate with a fast sub-step T_l = T / substeps; the accumulation
integrates once per controller period T.  Queue content beyond the link
storage spills into a virtual upstream queue that flows back as space
frees.  Released flows reach the accumulation after a per-gate whole-period
delay, realised as a FIFO buffer.  Releases never exceed the vehicles
actually present, so every run satisfies vehicle conservation exactly up to
explicitly counted accumulation clamp events.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nfd as nfd_mod
from .gates import Gate, GateBank
from .nfd import NfdParams

__all__ = ["NetworkState", "PlantStepRecord", "Plant", "gate_outflow"]


@dataclass
class NetworkState:
    """Plant state: accumulation, real and virtual queues, in-transit flows.

    in_transit holds, per gate, the release flows [veh/h] of the last
    delay_steps controller periods (oldest first); each entry represents
    flow * T vehicles travelling toward the protected network.
    """

    n: float
    queue: np.ndarray
    virtual: np.ndarray
    in_transit: tuple[tuple[float, ...], ...]

    def copy(self) -> "NetworkState":
        return NetworkState(
            self.n, self.queue.copy(), self.virtual.copy(), self.in_transit
        )

    def total_vehicles(self, period: float) -> float:
        """Vehicles in the whole system, counting in-transit flow buffers."""
        buffered = sum(sum(fifo) for fifo in self.in_transit) * period
        return float(self.n + self.queue.sum() + self.virtual.sum() + buffered)


@dataclass
class PlantStepRecord:
    """Per-step diagnostics emitted by Plant.step."""

    released: np.ndarray          # realised release flow per gate [veh/h]
    arrivals: np.ndarray          # flow reaching the accumulation [veh/h]
    exit_flow: float              # realised exit flow [veh/h]
    disturbance: float            # applied d_n [veh/h]
    forced_min: bool              # overflow protection active this step
    gridlock_events: int = 0      # accumulation clamped at n_max
    clamp_mass: float = 0.0       # vehicles lost/gained through clamping [veh]


def gate_outflow(
    command: float,
    demand: float,
    queue: float,
    gate: Gate,
    accumulation: float,
    overflow_fraction: float,
    n_max: float,
    substep_h: float,
) -> float:
    """Realised release flow [veh/h] of a single gate over one sub-step.

    Returns q_min under overflow protection (accumulation >= c*n_max),
    otherwise min{demand + queue/T_l, command, q_max}, never negative and
    never more than the vehicles actually available.
    """
    if not 0.0 < overflow_fraction < 1.0:
        raise ValueError("overflow_fraction must lie in (0, 1)")
    available = demand + queue / substep_h
    if accumulation >= overflow_fraction * n_max:
        return min(gate.min_flow, available)
    return max(0.0, min(available, command, gate.max_flow))


class Plant:
    """Simulator owning the model constants; state is passed explicitly."""

    def __init__(
        self,
        nfd: NfdParams,
        bank: GateBank,
        overflow_fraction: float = 0.9,
        period: float = 0.05,
        substeps: int = 10,
    ):
        if not 0.0 < overflow_fraction < 1.0:
            raise ValueError("overflow_fraction must lie in (0, 1)")
        if period <= 0:
            raise ValueError("period must be positive")
        if substeps < 1:
            raise ValueError("substeps must be >= 1")
        self.nfd = nfd
        self.bank = bank
        self.overflow_fraction = overflow_fraction
        self.period = period
        self.substeps = substeps

    def initial_state(self, n0: float, queue_fraction: float = 0.0) -> NetworkState:
        """State with accumulation n0 and queues at a fraction of storage."""
        if not 0.0 <= n0 <= self.nfd.n_max:
            raise ValueError("n0 outside [0, n_max]")
        if not 0.0 <= queue_fraction <= 1.0:
            raise ValueError("queue_fraction outside [0, 1]")
        queue = queue_fraction * self.bank.storage
        fifos = tuple(
            (0.0,) * int(k) for k in self.bank.delay_steps
        )
        return NetworkState(float(n0), queue, np.zeros(self.bank.size), fifos)

    def step(
        self,
        state: NetworkState,
        commands: np.ndarray,
        gate_demands: np.ndarray,
        disturbance: float = 0.0,
    ) -> tuple[NetworkState, PlantStepRecord]:
        """Advance the plant by one controller period.

        commands must lie within [min_flow, max_flow] per gate; demands are
        held constant over the period's sub-steps.
        """
        bank = self.bank
        commands = np.asarray(commands, dtype=float)
        gate_demands = np.asarray(gate_demands, dtype=float)
        if commands.shape != (bank.size,) or gate_demands.shape != (bank.size,):
            raise ValueError("commands/demands must have one entry per gate")
        tol = 1e-6 * np.maximum(1.0, bank.max_flow)
        if np.any(commands < bank.min_flow - tol) or np.any(
            commands > bank.max_flow + tol
        ):
            raise ValueError("commands outside [min_flow, max_flow]")
        if np.any(gate_demands < 0.0):
            raise ValueError("demands must be >= 0")

        t_sub = self.period / self.substeps
        forced_min = state.n >= self.overflow_fraction * self.nfd.n_max
        queue = state.queue.copy()
        virtual = state.virtual.copy()
        released_veh = np.zeros(bank.size)

        for _ in range(self.substeps):
            if forced_min:
                flow = bank.min_flow
            else:
                flow = np.minimum(commands, bank.max_flow)
                flow = np.maximum(flow, 0.0)
            # vehicles leaving this sub-step, capped by what is present
            out_veh = np.minimum(t_sub * flow, queue + t_sub * gate_demands)
            combined = queue + t_sub * gate_demands - out_veh + virtual
            queue = np.minimum(combined, bank.storage)
            virtual = combined - queue
            np.maximum(queue, 0.0, out=queue)
            released_veh += out_veh

        released = released_veh / self.period

        # shift per-gate delay buffers and collect the flows arriving now
        arrivals = np.empty(bank.size)
        fifos = []
        for o, fifo in enumerate(state.in_transit):
            if fifo:
                arrivals[o] = fifo[0]
                fifos.append(fifo[1:] + (float(released[o]),))
            else:
                arrivals[o] = released[o]
                fifos.append(fifo)

        exit_nominal = nfd_mod.capped_outflow(self.nfd, state.n)
        inflow = float(arrivals.sum()) + disturbance
        exit_flow = min(exit_nominal, max(0.0, state.n / self.period + inflow))
        n_new = state.n + self.period * (inflow - exit_flow)

        events = 0
        clamp_mass = 0.0
        if n_new > self.nfd.n_max:
            clamp_mass = n_new - self.nfd.n_max
            n_new = self.nfd.n_max
            events = 1
        elif n_new < 0.0:
            clamp_mass = -n_new
            n_new = 0.0
            events = 1

        record = PlantStepRecord(
            released=released,
            arrivals=arrivals,
            exit_flow=float(exit_flow),
            disturbance=float(disturbance),
            forced_min=bool(forced_min),
            gridlock_events=events,
            clamp_mass=float(clamp_mass),
        )
        return NetworkState(float(n_new), queue, virtual, tuple(fifos)), record
