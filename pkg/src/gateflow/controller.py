"""Rolling-horizon perimeter controllers and the closed-loop runner.

The multi-gated controller (MGC) measures the full state (accumulation plus
gate queues), assembles the condensed QP for the current deviation state
and predicted demands, solves it, and applies the first input block.  The
single-region controller regulates the accumulation alone and emits one
global flow, which the allocation policies split across gates.

When the QP is infeasible (e.g. the measured state already violates a state
bound for every admissible input) the controller re-solves with the state
rows removed, keeping the hard input bounds, and flags the step: input
bounds are physical signal limits while state bounds are soft targets the
plant protects on its own.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .demand import DisturbanceSpec, make_disturbance
from .gates import GateBank
from .nfd import NfdParams
from .plant import Plant, NetworkState
from .prediction import Bounds, CondensedQp, SetPoint, augment_delays, condense, linearize
from .qp import DenseQpSolver

__all__ = [
    "MgcConfig",
    "StepDiagnostics",
    "MgcController",
    "SisoController",
    "MgcPolicy",
    "AllocationPolicy",
    "NoControlPolicy",
    "Trajectory",
    "run_rolling_horizon",
]


@dataclass(frozen=True)
class MgcConfig:
    """Controller tuning; defaults follow the case-study design.

    weight_accumulation is the scale w in the state weight 1/w on the
    accumulation deviation (queue deviations are weighted 1/storage);
    weight_control is the diagonal of R.  accumulation_ceiling optionally
    tightens the controller-side upper bound on predicted accumulation
    below n_max.  slope_override replaces the NFD-derived slope in the
    accumulation row of the linear model.
    """

    horizon: int = 15
    period: float = 0.05
    set_point_accumulation: float = 4000.0
    weight_accumulation: float = 2000.0
    weight_control: float = 1e-5
    tol: float = 1e-8
    accumulation_ceiling: float | None = None
    slope_override: float | None = None
    warm_start: bool = True

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.period <= 0:
            raise ValueError("period must be positive")
        if self.weight_accumulation <= 0 or self.weight_control <= 0:
            raise ValueError("weights must be positive")


@dataclass
class StepDiagnostics:
    """Per-step solver health emitted alongside each command."""

    status: str
    iterations: int
    stationarity: float
    primal: float
    complementarity: float
    n_active: int
    fallback: bool = False
    clipped: bool = False


class MgcController:
    """Multi-gated rolling-horizon controller over the condensed QP."""

    def __init__(
        self,
        nfd: NfdParams,
        bank: GateBank,
        config: MgcConfig,
        bounds: Bounds | None = None,
    ):
        self.nfd = nfd
        self.bank = bank
        self.config = config
        set_point = SetPoint.nominal(bank, config.set_point_accumulation)
        model = linearize(nfd, bank, set_point, config.period,
                          slope_override=config.slope_override)
        if np.any(bank.delay_steps > 0):
            model = augment_delays(model, bank.delay_steps)
        self.model = model
        if bounds is None:
            bounds = Bounds.network(nfd, bank, config.accumulation_ceiling)
        self.bounds = bounds

        q_diag = np.zeros(model.dim)
        q_diag[0] = 1.0 / config.weight_accumulation
        q_diag[1:model.n_phys] = 1.0 / bank.storage
        r_diag = np.full(bank.size, config.weight_control)
        self.condensed: CondensedQp = condense(
            model, q_diag, r_diag, config.horizon, config.horizon, bounds
        )
        self._solver = DenseQpSolver(self.condensed.hess, self.condensed.l_rows)
        n_state = self.condensed.n_state_rows
        self._input_solver = DenseQpSolver(
            self.condensed.hess, self.condensed.l_rows[n_state:]
        )
        self._n_state_rows = n_state
        self._warm: tuple[int, ...] = ()
        self._chains = [
            [0.0] * int(k) for k in bank.delay_steps
        ]  # past applied input deviations, head = most recent

    def reset(self) -> None:
        """Forget warm starts and delay-chain history between runs."""
        self._warm = ()
        self._chains = [[0.0] * int(k) for k in self.bank.delay_steps]

    def _deviation_state(self, accumulation: float, queues: np.ndarray) -> np.ndarray:
        sp = self.model.set_point
        parts = [
            np.concatenate(([accumulation - sp.accumulation], queues - sp.queues))
        ]
        for chain in self._chains:
            # chain order in the model is oldest input deepest in the chain:
            # z_1 holds u(k-1) ... z_kappa holds u(k-kappa)
            if chain:
                parts.append(np.asarray(chain))
        return np.concatenate(parts) if len(parts) > 1 else parts[0]

    def step(
        self,
        accumulation: float,
        queues: np.ndarray,
        demand_forecast: np.ndarray,
    ) -> tuple[np.ndarray, StepDiagnostics]:
        """Compute the command vector [veh/h] for the current measurement.

        demand_forecast has shape (horizon, 1 + gates) in absolute units
        with columns [d_n, d_1, ..., d_m].
        """
        cfg = self.config
        cq = self.condensed
        horizon = cfg.horizon
        forecast = np.asarray(demand_forecast, dtype=float)
        if forecast.shape != (horizon, 1 + self.bank.size):
            raise ValueError("demand forecast must cover the horizon")
        dd = (forecast - self.model.set_point.disturbances).ravel()
        dx0 = self._deviation_state(accumulation, queues)

        grad = cq.gradient(dx0, dd)
        w = cq.w_vector(dx0, dd)
        warm = self._warm if cfg.warm_start else ()
        sol = self._solver.solve(grad, w, tol=cfg.tol, warm_active=warm)
        fallback = False
        if sol.status != "optimal":
            sol = self._input_solver.solve(
                grad, w[self._n_state_rows:], tol=cfg.tol
            )
            fallback = True
            if sol.status != "optimal":
                raise RuntimeError(
                    f"control QP failed even without state rows: {sol.status}"
                )
            self._warm = ()
        elif cfg.warm_start:
            self._warm = sol.active

        du = sol.u[: self.bank.size]
        commands = self.model.set_point.flows + du
        clipped_cmd = np.clip(commands, self.bank.min_flow, self.bank.max_flow)
        clipped = bool(np.max(np.abs(clipped_cmd - commands)) > 1e-7 * max(
            1.0, float(np.max(self.bank.max_flow))
        ))
        diag = StepDiagnostics(
            status=sol.status,
            iterations=sol.iterations,
            stationarity=sol.stationarity,
            primal=sol.primal,
            complementarity=sol.complementarity,
            n_active=len(sol.active),
            fallback=fallback,
            clipped=clipped,
        )
        applied_du = clipped_cmd - self.model.set_point.flows
        for o, chain in enumerate(self._chains):
            if chain:
                chain.insert(0, float(applied_du[o]))
                chain.pop()
        return clipped_cmd, diag


class SisoController:
    """Single-region rolling-horizon controller producing one global flow."""

    def __init__(self, nfd: NfdParams, bank: GateBank, config: MgcConfig):
        self.nfd = nfd
        self.bank = bank
        self.config = config
        from . import nfd as nfd_mod

        period = config.period
        n_hat = config.set_point_accumulation
        grad = (config.slope_override if config.slope_override is not None
                else nfd_mod.slope(nfd, n_hat))
        self.n_hat = n_hat
        self.u_hat = float(bank.nominal_flow.sum())
        horizon = config.horizon
        a = np.array([[1.0 - grad * period]])
        b = np.array([[period]])
        ceiling = (nfd.n_max if config.accumulation_ceiling is None
                   else config.accumulation_ceiling)

        a_pow = [np.eye(1)]
        for _ in range(horizon):
            a_pow.append(a @ a_pow[-1])
        self._phi = np.vstack([a_pow[i + 1] for i in range(horizon)])
        gamma = np.zeros((horizon, horizon))
        for i in range(horizon):
            for j in range(i + 1):
                gamma[i, j] = a_pow[i - j][0, 0] * period
        self._gamma = gamma
        q = 1.0 / config.weight_accumulation
        hess = (gamma.T * q) @ gamma + config.weight_control * np.eye(horizon)
        self._hess = 0.5 * (hess + hess.T)
        self._fmap = (gamma.T * q) @ self._phi
        self._l_rows = np.vstack([gamma, -gamma, np.eye(horizon), -np.eye(horizon)])
        self._w_state_hi = np.full(horizon, ceiling - n_hat)
        self._w_state_lo = np.full(horizon, n_hat)
        self._w_input = np.concatenate([
            np.full(horizon, bank.max_flow.sum() - self.u_hat),
            np.full(horizon, self.u_hat - bank.min_flow.sum()),
        ])
        self._solver = DenseQpSolver(self._hess, self._l_rows)
        self._input_solver = DenseQpSolver(self._hess, self._l_rows[2 * horizon:])
        self._warm: tuple[int, ...] = ()

    def reset(self) -> None:
        self._warm = ()

    def step(self, accumulation: float) -> tuple[float, StepDiagnostics]:
        """Global ordered flow q_G [veh/h] for the measured accumulation."""
        cfg = self.config
        dn0 = np.array([accumulation - self.n_hat])
        grad = self._fmap @ dn0
        free = (self._phi @ dn0).ravel()
        w = np.concatenate([
            self._w_state_hi - free,
            free + self._w_state_lo,
            self._w_input,
        ])
        warm = self._warm if cfg.warm_start else ()
        sol = self._solver.solve(grad, w, tol=cfg.tol, warm_active=warm)
        fallback = False
        horizon = cfg.horizon
        if sol.status != "optimal":
            sol = self._input_solver.solve(grad, w[2 * horizon:], tol=cfg.tol)
            fallback = True
            if sol.status != "optimal":
                raise RuntimeError(f"single-region QP failed: {sol.status}")
            self._warm = ()
        elif cfg.warm_start:
            self._warm = sol.active
        flow = self.u_hat + sol.u[0]
        lo = float(self.bank.min_flow.sum())
        hi = float(self.bank.max_flow.sum())
        clipped = not lo - 1e-9 <= flow <= hi + 1e-9
        flow = min(max(flow, lo), hi)
        diag = StepDiagnostics(
            status=sol.status,
            iterations=sol.iterations,
            stationarity=sol.stationarity,
            primal=sol.primal,
            complementarity=sol.complementarity,
            n_active=len(sol.active),
            fallback=fallback,
            clipped=clipped,
        )
        return float(flow), diag


# ---------------------------------------------------------------------------
# closed-loop policies and runner


class MgcPolicy:
    """Closed-loop wrapper: MGC commands from the measured plant state."""

    name = "mgc"

    def __init__(self, controller: MgcController, demand_table: np.ndarray):
        self.controller = controller
        self.demand_table = np.asarray(demand_table, dtype=float)

    def reset(self) -> None:
        self.controller.reset()

    def commands(self, state: NetworkState, k: int) -> tuple[np.ndarray, StepDiagnostics]:
        horizon = self.controller.config.horizon
        gates = self.controller.bank.size
        window = np.zeros((horizon, 1 + gates))
        rows = self.demand_table[k:k + horizon]
        window[: rows.shape[0], 1:] = rows  # d_n forecast stays zero
        return self.controller.step(state.n, state.queue, window)


class AllocationPolicy:
    """Single-region control plus CAP or OAP gate allocation."""

    def __init__(self, siso: SisoController, scheme: str):
        if scheme not in ("cap", "oap"):
            raise ValueError("scheme must be 'cap' or 'oap'")
        from . import allocation

        self.siso = siso
        self.scheme = scheme
        self.name = scheme
        self._allocate = (allocation.cap_allocate if scheme == "cap"
                          else allocation.oap_allocate)

    def reset(self) -> None:
        self.siso.reset()

    def commands(self, state: NetworkState, k: int) -> tuple[np.ndarray, StepDiagnostics]:
        flow, diag = self.siso.step(state.n)
        result = self._allocate(flow, self.siso.bank)
        return result.flows, diag


class NoControlPolicy:
    """Fixed-time baseline: maximum permissible flow at every gate."""

    name = "none"

    def __init__(self, bank: GateBank):
        from . import allocation

        self._flows = allocation.no_control(bank).flows

    def reset(self) -> None:
        pass

    def commands(self, state: NetworkState, k: int) -> tuple[np.ndarray, StepDiagnostics]:
        diag = StepDiagnostics("fixed", 0, 0.0, 0.0, 0.0, 0)
        return self._flows.copy(), diag


@dataclass
class Trajectory:
    """Closed-loop run record; row k of flow arrays covers [k, k+1)."""

    period: float
    accumulation: np.ndarray        # (K+1,)
    queues: np.ndarray              # (K+1, m)
    virtual: np.ndarray             # (K+1, m)
    commands: np.ndarray            # (K, m)
    released: np.ndarray            # (K, m)
    exit_flow: np.ndarray           # (K,)
    disturbance: np.ndarray         # (K,)
    forced_min: np.ndarray          # (K,) bool
    diagnostics: list[StepDiagnostics] = field(default_factory=list)
    gridlock_events: int = 0
    clamp_mass: float = 0.0
    demand: np.ndarray | None = None  # (K, m) applied gate demands

    @property
    def steps(self) -> int:
        return self.exit_flow.size


def run_rolling_horizon(
    plant: Plant,
    policy,
    initial_state: NetworkState,
    demand_table: np.ndarray,
    steps: int,
    disturbance: DisturbanceSpec | None = None,
    seed: int = 0,
) -> Trajectory:
    """Simulate the closed loop: measure, solve, apply the first move.

    demand_table holds the per-gate demands [veh/h], one row per step (rows
    beyond `steps` serve only as prediction padding).  The accumulation
    disturbance is drawn per (seed, step) and enters the plant only; the
    controllers forecast it as zero.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    demand_table = np.asarray(demand_table, dtype=float)
    if demand_table.ndim != 2 or demand_table.shape[0] < steps:
        raise ValueError("demand_table must cover every simulated step")
    spec = disturbance or DisturbanceSpec()
    m = plant.bank.size

    policy.reset()
    state = initial_state.copy()
    acc = np.empty(steps + 1)
    queues = np.empty((steps + 1, m))
    virtual = np.empty((steps + 1, m))
    commands = np.empty((steps, m))
    released = np.empty((steps, m))
    exits = np.empty(steps)
    dists = np.empty(steps)
    forced = np.zeros(steps, dtype=bool)
    diags: list[StepDiagnostics] = []
    gridlock = 0
    clamp = 0.0

    acc[0] = state.n
    queues[0] = state.queue
    virtual[0] = state.virtual
    for k in range(steps):
        try:
            cmd, diag = policy.commands(state, k)
        except Exception as exc:
            raise RuntimeError(f"policy {policy.name!r} failed at step {k}") from exc
        d_n = make_disturbance(spec, seed, k, state.n)
        state, rec = plant.step(state, cmd, demand_table[k], d_n)
        acc[k + 1] = state.n
        queues[k + 1] = state.queue
        virtual[k + 1] = state.virtual
        commands[k] = cmd
        released[k] = rec.released
        exits[k] = rec.exit_flow
        dists[k] = rec.disturbance
        forced[k] = rec.forced_min
        gridlock += rec.gridlock_events
        clamp += rec.clamp_mass
        diags.append(diag)

    return Trajectory(
        period=plant.period,
        accumulation=acc,
        queues=queues,
        virtual=virtual,
        commands=commands,
        released=released,
        exit_flow=exits,
        disturbance=dists,
        forced_min=forced,
        diagnostics=diags,
        gridlock_events=gridlock,
        clamp_mass=clamp,
        demand=demand_table[:steps].copy(),
    )
