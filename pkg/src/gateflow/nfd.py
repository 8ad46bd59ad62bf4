"""Network fundamental diagram (NFD) of the protected network.

The circulating flow is modelled as a third-order polynomial of the vehicle
accumulation n (veh):

    O_c(n) = a3*n^3 + a2*n^2 + a1*n        [veh/h]

with no constant term, so O_c(0) = 0 by construction.  The trip-completion
(output) flow scales the circulating flow by the ratio of average link length
to average trip length:

    O(n) = (l / L) * O_c(n)                [veh/h]

An optional exit cap limits the realised outflow to min(exit_cap, O(n)).
All quantities use vehicles and hours; slopes are per hour.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NfdParams",
    "circulating_flow",
    "output",
    "capped_outflow",
    "slope",
    "critical_accumulation",
]


@dataclass(frozen=True)
class NfdParams:
    """Coefficients and geometry of the network fundamental diagram.

    Attributes:
        a3: cubic coefficient [veh/h per veh^3]
        a2: quadratic coefficient [veh/h per veh^2] (carries its sign)
        a1: linear coefficient [1/h]
        n_max: maximum vehicle accumulation, upper end of the fit domain [veh]
        trip_length_km: average trip length L [km]
        link_length_km: average link length l [km], 0 < l <= L
        exit_cap: maximum exit flow [veh/h]; infinite when unbounded
    """

    a3: float
    a2: float
    a1: float
    n_max: float
    trip_length_km: float
    link_length_km: float
    exit_cap: float = math.inf

    def __post_init__(self):
        if self.n_max <= 0:
            raise ValueError("n_max must be positive")
        if self.trip_length_km <= 0:
            raise ValueError("trip_length_km must be positive")
        if not 0 < self.link_length_km <= self.trip_length_km:
            raise ValueError("link_length_km must lie in (0, trip_length_km]")
        if not self.exit_cap > 0:
            raise ValueError("exit_cap must be positive (use inf for unbounded)")

    @property
    def length_ratio(self) -> float:
        """Scaling l/L from circulating flow to trip-completion flow."""
        return self.link_length_km / self.trip_length_km


def _check_domain(params: NfdParams, n) -> np.ndarray:
    arr = np.asarray(n, dtype=float)
    if np.any(arr < 0) or np.any(arr > params.n_max):
        raise ValueError(
            f"accumulation outside NFD domain [0, {params.n_max}]: {n!r}"
        )
    return arr


def circulating_flow(params: NfdParams, n):
    """Total network circulating flow O_c(n) in veh/h.

    Accepts a scalar or array accumulation; raises ValueError outside
    [0, n_max] because the polynomial is a fit valid only on its domain.
    """
    arr = _check_domain(params, n)
    flow = ((params.a3 * arr + params.a2) * arr + params.a1) * arr
    return flow if flow.ndim else float(flow)


def output(params: NfdParams, n):
    """Trip-completion (output) flow O(n) = (l/L) * O_c(n) in veh/h."""
    flow = params.length_ratio * np.asarray(circulating_flow(params, n))
    return flow if flow.ndim else float(flow)


def capped_outflow(params: NfdParams, n):
    """Realised exit flow min(exit_cap, O(n)) in veh/h."""
    flow = np.minimum(params.exit_cap, np.asarray(output(params, n)))
    return flow if flow.ndim else float(flow)


def slope(params: NfdParams, n):
    """Derivative of the output function with respect to n, in 1/h.

    d/dn O(n) = (l/L) * (3*a3*n^2 + 2*a2*n + a1).  The caller is
    responsible for not evaluating on an active exit cap (there the
    realised outflow is constant and its slope is zero).
    """
    arr = _check_domain(params, n)
    grad = params.length_ratio * (
        (3.0 * params.a3 * arr + 2.0 * params.a2) * arr + params.a1
    )
    return grad if grad.ndim else float(grad)


def critical_accumulation(params: NfdParams) -> float:
    """Accumulation at which the circulating flow peaks, in veh.

    Solves 3*a3*n^2 + 2*a2*n + a1 = 0 and returns the smaller real root
    inside (0, n_max).  Raises ValueError when the polynomial has no
    interior maximum on the domain.
    """
    a = 3.0 * params.a3
    b = 2.0 * params.a2
    c = params.a1
    if a == 0.0:
        if b >= 0.0:
            raise ValueError("fundamental diagram has no interior maximum")
        root = -c / b
    else:
        disc = b * b - 4.0 * a * c
        if disc <= 0.0:
            raise ValueError("fundamental diagram has no interior maximum")
        sq = math.sqrt(disc)
        roots = sorted(((-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)))
        root = next((r for r in roots if 0.0 < r < params.n_max), None)
        if root is None:
            raise ValueError("no stationary point inside (0, n_max)")
    if not 0.0 < root < params.n_max:
        raise ValueError("no stationary point inside (0, n_max)")
    return root
