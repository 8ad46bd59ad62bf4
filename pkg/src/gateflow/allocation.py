"""Split a global perimeter-ordered flow across the entrance gates.

Two practical policies plus the uncontrolled baseline:

* capacity-based (CAP): portions proportional to link storage,
  q_o = q_hat_o + r_o * (q_G - sum q_hat), then clipped to the permissible
  flow box; clipped amounts are reported as wasted (above) or deficit
  (below) flow.
* optimisation-based (OAP): minimise 1/2 * sum (q_o - q_hat_o)^2 / q_hat_o
  subject to sum q_o = q_G and the flow box.  With no bound active this has
  the closed form q_o = q_hat_o * q_G / sum q_hat (proportional scaling);
  otherwise the equality-plus-box program is solved through the QP core.
* no control: every gate is ordered its maximum permissible flow; the
  plant-side release rule still applies downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import qp
from .gates import GateBank

__all__ = ["AllocationResult", "cap_ratios", "cap_allocate", "oap_allocate",
           "no_control"]

_BOUND_TOL = 1e-9


@dataclass(frozen=True)
class AllocationResult:
    """Per-gate ordered flows plus unallocatable flow accounting.

    wasted is ordered flow that could not be assigned because upper bounds
    clipped (veh/h, >= 0); deficit is flow the gates must release above the
    order because lower bounds clipped (veh/h, >= 0).
    """

    flows: np.ndarray
    wasted: float
    deficit: float
    policy: str


def cap_ratios(bank: GateBank) -> np.ndarray:
    """Storage-capacity ratios r_o = storage_o / total storage.

    The last component is closed so the ratios sum to exactly one.
    """
    ratios = bank.storage / bank.storage.sum()
    ratios[-1] = 1.0 - ratios[:-1].sum()
    return ratios


def _result(flows: np.ndarray, ordered: float, policy: str) -> AllocationResult:
    total = float(flows.sum())
    return AllocationResult(
        flows=flows,
        wasted=max(0.0, ordered - total),
        deficit=max(0.0, total - ordered),
        policy=policy,
    )


def cap_allocate(ordered_flow: float, bank: GateBank) -> AllocationResult:
    """Capacity-based split of the global ordered flow [veh/h]."""
    if ordered_flow < 0:
        raise ValueError("ordered flow must be >= 0")
    ratios = cap_ratios(bank)
    surplus = ordered_flow - bank.nominal_flow.sum()
    raw = bank.nominal_flow + ratios * surplus
    flows = np.clip(raw, bank.min_flow, bank.max_flow)
    return _result(flows, ordered_flow, "cap")


def oap_allocate(ordered_flow: float, bank: GateBank,
                 tol: float = 1e-10) -> AllocationResult:
    """Optimisation-based split of the global ordered flow [veh/h].

    Requires strictly positive nominal flows (they weight the deviations).
    When the ordered flow lies outside [sum q_min, sum q_max] the equality
    cannot hold; all gates are pinned to the violated bound and the gap is
    reported as wasted/deficit.
    """
    if ordered_flow < 0:
        raise ValueError("ordered flow must be >= 0")
    nominal = bank.nominal_flow
    if np.any(nominal <= 0):
        raise ValueError("OAP requires positive nominal flows")

    if ordered_flow < bank.min_flow.sum() - _BOUND_TOL:
        return _result(bank.min_flow.copy(), ordered_flow, "oap")
    if ordered_flow > bank.max_flow.sum() + _BOUND_TOL:
        return _result(bank.max_flow.copy(), ordered_flow, "oap")

    proportional = nominal * (ordered_flow / nominal.sum())
    if np.all(proportional >= bank.min_flow - _BOUND_TOL) and np.all(
        proportional <= bank.max_flow + _BOUND_TOL
    ):
        return _result(proportional, ordered_flow, "oap")

    m = bank.size
    problem = qp.QpProblem(
        hess=np.diag(1.0 / nominal),
        grad=-np.ones(m),
        l_rows=np.vstack([np.eye(m), -np.eye(m)]),
        w=np.concatenate([bank.max_flow, -bank.min_flow]),
        a_eq=np.ones((1, m)),
        b_eq=np.array([ordered_flow]),
    )
    solution = qp.solve(problem, tol=tol)
    if solution.status != "optimal":
        raise RuntimeError(f"OAP allocation QP returned {solution.status}")
    flows = np.clip(solution.u, bank.min_flow, bank.max_flow)
    return _result(flows, ordered_flow, "oap")


def no_control(bank: GateBank) -> AllocationResult:
    """Uncontrolled baseline: order the maximum permissible flow everywhere."""
    flows = bank.max_flow.copy()
    return _result(flows, float(flows.sum()), "none")
