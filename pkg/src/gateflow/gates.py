"""Entrance links (controlled gates) at the periphery of the protected network.

A gate is a signalised origin link described by its vehicle storage and the
fixed-time signal plan that maps green times to permissible release flows via
q = g * S / C (saturation flow S, cycle C).  The minimum flow is kept
strictly positive so restricted gates still trickle and queues cannot be
locked in place forever.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["Gate", "GateBank"]


@dataclass(frozen=True)
class Gate:
    """One entrance link and its controlled gate.

    Attributes:
        id: 1-based gate index
        storage: maximum vehicle storage of the link [veh]
        saturation_flow: discharge rate during green [veh/h]
        cycle_s: signal cycle length [s]
        g_min_s, g_nom_s, g_max_s: minimum / nominal / maximum green [s]
        delay_steps: travel-time delay to the protected network, in whole
            controller periods (0 means released vehicles arrive immediately)
    """

    id: int
    storage: float
    saturation_flow: float
    cycle_s: float
    g_min_s: float
    g_nom_s: float
    g_max_s: float
    delay_steps: int = 0

    def __post_init__(self):
        if self.storage <= 0:
            raise ValueError(f"gate {self.id}: storage must be positive")
        if self.saturation_flow <= 0:
            raise ValueError(f"gate {self.id}: saturation_flow must be positive")
        if self.cycle_s <= 0:
            raise ValueError(f"gate {self.id}: cycle_s must be positive")
        if not 0 < self.g_min_s <= self.g_nom_s <= self.g_max_s <= self.cycle_s:
            raise ValueError(
                f"gate {self.id}: greens must satisfy "
                "0 < g_min <= g_nom <= g_max <= cycle"
            )
        if self.delay_steps < 0 or self.delay_steps != int(self.delay_steps):
            raise ValueError(f"gate {self.id}: delay_steps must be an integer >= 0")

    def _flow(self, green_s: float) -> float:
        return green_s * self.saturation_flow / self.cycle_s

    @property
    def min_flow(self) -> float:
        """Minimum permissible release flow g_min*S/C [veh/h], > 0."""
        return self._flow(self.g_min_s)

    @property
    def nominal_flow(self) -> float:
        """Nominal release flow g_nom*S/C [veh/h]."""
        return self._flow(self.g_nom_s)

    @property
    def max_flow(self) -> float:
        """Maximum permissible release flow g_max*S/C [veh/h]."""
        return self._flow(self.g_max_s)

    def green_for_flow(self, flow: float) -> float:
        """Green time [s] realising a release flow, via g = q*C/S."""
        return flow * self.cycle_s / self.saturation_flow


class GateBank:
    """Array view over an ordered gate collection for vectorised dynamics."""

    def __init__(self, gates: list[Gate]):
        if not gates:
            raise ValueError("at least one gate is required")
        self.gates = tuple(gates)
        self.size = len(gates)
        self.storage = np.array([g.storage for g in gates], dtype=float)
        self.saturation_flow = np.array(
            [g.saturation_flow for g in gates], dtype=float
        )
        self.cycle_s = np.array([g.cycle_s for g in gates], dtype=float)
        self.min_flow = np.array([g.min_flow for g in gates], dtype=float)
        self.nominal_flow = np.array([g.nominal_flow for g in gates], dtype=float)
        self.max_flow = np.array([g.max_flow for g in gates], dtype=float)
        self.delay_steps = np.array([g.delay_steps for g in gates], dtype=int)

    def __len__(self) -> int:
        return self.size

    def __iter__(self):
        return iter(self.gates)

    def greens_for_flows(self, flows: np.ndarray) -> np.ndarray:
        """Convert a release-flow vector to green times [s] via g = q*C/S."""
        return np.asarray(flows, dtype=float) * self.cycle_s / self.saturation_flow
