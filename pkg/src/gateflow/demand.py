"""Demand profiles at entrance links and the congested-regime disturbance.

Gate demands follow a trapezoidal pattern: a linear ramp from zero up to a
plateau expressed as a fraction of the gate saturation flow, a constant
stretch, a linear ramp back to zero, then zeros to the end of the horizon.

The protected-network disturbance d_n models the uncertainty of the
fundamental diagram in the congested regime: zero at or below a threshold
accumulation, otherwise a uniform draw from [-half_range, +half_range]
taken from a stream seeded per (seed, step) so runs replay bit-identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gates import Gate

__all__ = ["DisturbanceSpec", "make_disturbance", "make_trapezoid"]


@dataclass(frozen=True)
class DisturbanceSpec:
    """Specification of the accumulation disturbance d_n.

    mode is "zero" or "congested-random"; in the latter case draws are
    uniform on [-half_range, half_range] whenever accumulation exceeds
    the threshold.
    """

    mode: str = "zero"
    half_range: float = 5000.0
    threshold: float = 6000.0

    def __post_init__(self):
        if self.mode not in ("zero", "congested-random"):
            raise ValueError(f"unknown disturbance mode {self.mode!r}")
        if self.half_range < 0:
            raise ValueError("half_range must be >= 0")


def make_disturbance(spec: DisturbanceSpec, seed: int, step: int, accumulation: float) -> float:
    """Disturbance flow d_n [veh/h] for one controller step.

    Deterministic in (seed, step): the same pair always yields the same
    draw, independent of how many draws other steps consumed.
    """
    if spec.mode == "zero" or spec.half_range == 0.0:
        return 0.0
    if accumulation <= spec.threshold:
        return 0.0
    rng = np.random.default_rng([int(seed), int(step)])
    return float(rng.uniform(-spec.half_range, spec.half_range))


def make_trapezoid(
    gate: Gate,
    ramp_up: int,
    plateau: int,
    ramp_down: int,
    level: float,
    horizon: int,
) -> np.ndarray:
    """Trapezoidal demand series [veh/h] over `horizon` controller steps.

    Rises linearly from 0 to level*S over `ramp_up` steps, holds for
    `plateau` steps, falls back to 0 over `ramp_down` steps, and is
    zero-padded to the horizon.  `level` is a fraction of the gate's
    saturation flow in [0, 1].
    """
    if min(ramp_up, plateau, ramp_down) < 0:
        raise ValueError("ramp_up, plateau and ramp_down must be >= 0")
    if ramp_up + plateau + ramp_down > horizon:
        raise ValueError("trapezoid does not fit in the horizon")
    if not 0.0 <= level <= 1.0:
        raise ValueError("level must lie in [0, 1]")
    peak = level * gate.saturation_flow
    up = np.linspace(0.0, peak, ramp_up, endpoint=False)
    flat = np.full(plateau, peak)
    down = np.linspace(0.0, peak, ramp_down, endpoint=False)[::-1]
    series = np.concatenate([up, flat, down])
    return np.concatenate([series, np.zeros(horizon - series.size)])
