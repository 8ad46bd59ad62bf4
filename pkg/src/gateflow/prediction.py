"""Discrete-time linear prediction model and its horizon condensation.

The plant is linearised around a set point and discretised with a first
order Euler scheme at sample period T (hours).  With m gates the physical
state is x = [n, l_1, ..., l_m]:

    A = diag(1 - slope(n_hat)*T, 1, ..., 1)
    B = T * [ 1_(1 x m) ; -I_m ]
    C = T * I_(1+m)          (disturbance order: [d_n, d_1, ..., d_m])

Per-gate whole-period input delays are recast into shift chains of
auxiliary states: the input feeds the head of the chain and the tail feeds
the accumulation row, leaving the queue rows undelayed.

Condensation stacks the recursion over a horizon N into

    DX = Phi dx0 + Gamma DU + Z DD

and produces the quadratic-program data H, F, G plus the inequality rows L
with a right-hand side W(dx0, DD) encoding state and input box bounds at
every step (state bounds on physical states only; delay-chain states are
images of already-bounded inputs and are excluded).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nfd as nfd_mod
from .gates import GateBank
from .nfd import NfdParams

__all__ = ["SetPoint", "LinearModel", "Bounds", "CondensedQp", "linearize",
           "augment_delays", "condense"]


@dataclass(frozen=True)
class SetPoint:
    """Operating point (x_hat, u_hat, d_hat) the model is built around."""

    accumulation: float
    queues: np.ndarray       # l_hat per gate [veh]
    flows: np.ndarray        # q_hat per gate [veh/h]
    disturbances: np.ndarray  # d_hat, length 1 + gates [veh/h]

    @property
    def x_hat(self) -> np.ndarray:
        return np.concatenate(([self.accumulation], self.queues))

    @classmethod
    def nominal(cls, bank: GateBank, accumulation: float) -> "SetPoint":
        """Set point at nominal gate flows with empty queues."""
        return cls(
            accumulation=float(accumulation),
            queues=np.zeros(bank.size),
            flows=bank.nominal_flow.copy(),
            disturbances=np.zeros(bank.size + 1),
        )


@dataclass(frozen=True)
class LinearModel:
    """Discrete-time model dx(k+1) = A dx(k) + B du(k) + C dd(k)."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    period: float
    set_point: SetPoint
    delay_steps: tuple[int, ...]
    n_phys: int

    @property
    def dim(self) -> int:
        return self.a.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.b.shape[1]

    @property
    def n_dist(self) -> int:
        return self.c.shape[1]

    @property
    def x_hat_full(self) -> np.ndarray:
        """Set-point vector extended over delay-chain states (chains hold
        past inputs, so their set point is the nominal flow)."""
        parts = [self.set_point.x_hat]
        for o, k in enumerate(self.delay_steps):
            if k:
                parts.append(np.full(k, self.set_point.flows[o]))
        return np.concatenate(parts)


def linearize(
    nfd: NfdParams,
    bank: GateBank,
    set_point: SetPoint,
    period: float,
    slope_override: float | None = None,
) -> LinearModel:
    """Build the linear model around a set point interior to all bounds.

    slope_override replaces the NFD-derived output slope (per hour) in the
    accumulation row; by default the slope is evaluated from the diagram.
    """
    if period <= 0:
        raise ValueError("period must be positive")
    m = bank.size
    n_hat = set_point.accumulation
    if not 0.0 < n_hat < nfd.n_max:
        raise ValueError("set-point accumulation must be interior to (0, n_max)")
    if nfd_mod.output(nfd, n_hat) >= nfd.exit_cap:
        raise ValueError("set point lies on the exit-flow cap; slope undefined")
    if np.any(set_point.queues < 0) or np.any(set_point.queues > bank.storage):
        raise ValueError("set-point queues outside [0, storage]")
    if np.any(set_point.flows < bank.min_flow - 1e-9) or np.any(
        set_point.flows > bank.max_flow + 1e-9
    ):
        raise ValueError("set-point flows outside [min_flow, max_flow]")

    grad = slope_override if slope_override is not None else nfd_mod.slope(nfd, n_hat)
    dim = 1 + m
    a = np.eye(dim)
    a[0, 0] = 1.0 - grad * period
    b = np.zeros((dim, m))
    b[0, :] = period
    b[1:, :] = -period * np.eye(m)
    c = period * np.eye(dim)
    return LinearModel(
        a=a, b=b, c=c, period=period, set_point=set_point,
        delay_steps=(0,) * m, n_phys=dim,
    )


def augment_delays(model: LinearModel, delay_steps) -> LinearModel:
    """Insert shift chains realising per-gate whole-period input delays.

    Gates with zero delay keep their direct input path.  For a gate with
    kappa > 0 the input enters the chain head, the chain tail replaces the
    input in the accumulation row, and the queue row keeps the undelayed
    input.  Returns the model unchanged when every delay is zero.
    """
    kappa = tuple(int(k) for k in delay_steps)
    m = model.n_inputs
    if len(kappa) != m:
        raise ValueError("one delay per gate required")
    if any(k < 0 for k in kappa):
        raise ValueError("delays must be >= 0")
    if model.delay_steps != (0,) * m:
        raise ValueError("model is already delay-augmented")
    if not any(kappa):
        return model

    p = model.n_phys
    dim = p + sum(kappa)
    a = np.zeros((dim, dim))
    a[:p, :p] = model.a
    b = np.zeros((dim, m))
    b[:p, :] = model.b
    c = np.zeros((dim, model.n_dist))
    c[:p, :] = model.c

    offset = p
    for o, k in enumerate(kappa):
        if k == 0:
            continue
        # accumulation row consumes the chain tail instead of the input
        a[0, offset + k - 1] = b[0, o]
        b[0, o] = 0.0
        b[offset, o] = 1.0            # chain head stores the current input
        for j in range(1, k):
            a[offset + j, offset + j - 1] = 1.0
        offset += k

    return LinearModel(
        a=a, b=b, c=c, period=model.period, set_point=model.set_point,
        delay_steps=kappa, n_phys=p,
    )


@dataclass(frozen=True)
class Bounds:
    """Box bounds on physical states and inputs, in absolute units."""

    x_min: np.ndarray
    x_max: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray

    def __post_init__(self):
        if self.x_min.shape != self.x_max.shape:
            raise ValueError("x_min/x_max shape mismatch")
        if self.u_min.shape != self.u_max.shape:
            raise ValueError("u_min/u_max shape mismatch")
        if np.any(self.x_min > self.x_max) or np.any(self.u_min > self.u_max):
            raise ValueError("lower bounds exceed upper bounds")

    @classmethod
    def network(cls, nfd: NfdParams, bank: GateBank,
                accumulation_ceiling: float | None = None) -> "Bounds":
        """Standard bounds: 0 <= x <= x_max and q_min <= u <= q_max.

        accumulation_ceiling tightens the accumulation upper bound below
        n_max (e.g. to the plant's overflow-protection threshold).
        """
        ceiling = nfd.n_max if accumulation_ceiling is None else accumulation_ceiling
        return cls(
            x_min=np.zeros(1 + bank.size),
            x_max=np.concatenate(([ceiling], bank.storage)),
            u_min=bank.min_flow.copy(),
            u_max=bank.max_flow.copy(),
        )


@dataclass(frozen=True)
class CondensedQp:
    """Stacked prediction, cost, and constraint data over one horizon.

    The decision vector is DU (input deviations over the horizon).  The
    cost is 1/2 DU' H DU + DU' (F dx0 + G DD); predictions follow
    DX = Phi dx0 + Gamma DU + Z DD.  Inequalities are L DU <= W(dx0, DD)
    with rows ordered [state upper; state lower; input upper; input lower].
    """

    phi: np.ndarray
    gamma: np.ndarray
    zmat: np.ndarray
    hess: np.ndarray
    fmap: np.ndarray
    gmap: np.ndarray
    l_rows: np.ndarray
    n_o: int
    n_p: int
    model: LinearModel
    bounds: Bounds
    _w_state_upper: np.ndarray
    _w_state_lower: np.ndarray
    _w_input: np.ndarray
    _phi_phys: np.ndarray
    _z_phys: np.ndarray

    @property
    def n_state_rows(self) -> int:
        return self._w_state_upper.size + self._w_state_lower.size

    def predict(self, dx0: np.ndarray, du: np.ndarray, dd: np.ndarray) -> np.ndarray:
        """Stacked state deviations DX for given dx0, DU, DD."""
        return self.phi @ dx0 + self.gamma @ du + self.zmat @ dd

    def gradient(self, dx0: np.ndarray, dd: np.ndarray) -> np.ndarray:
        """Linear cost term F dx0 + G DD."""
        return self.fmap @ dx0 + self.gmap @ dd

    def w_vector(self, dx0: np.ndarray, dd: np.ndarray) -> np.ndarray:
        """Right-hand side of L DU <= W for the current initial state."""
        free = self._phi_phys @ dx0 + self._z_phys @ dd
        return np.concatenate([
            self._w_state_upper - free,
            free - self._w_state_lower,
            self._w_input,
        ])


def condense(
    model: LinearModel,
    q_diag: np.ndarray,
    r_diag: np.ndarray,
    n_o: int,
    n_p: int,
    bounds: Bounds,
) -> CondensedQp:
    """Condense the model over the horizon into QP matrices.

    q_diag weights the full (possibly augmented) state, r_diag the inputs;
    both must be nonnegative and r_diag strictly positive so the Hessian is
    positive definite.  The stage cost sums states k = 1..N_o and inputs
    k = 0..N_o-1.
    """
    if n_o != n_p:
        raise ValueError("optimisation and prediction horizons must match")
    if n_o < 1:
        raise ValueError("horizon must be >= 1")
    q_diag = np.asarray(q_diag, dtype=float)
    r_diag = np.asarray(r_diag, dtype=float)
    if q_diag.shape != (model.dim,):
        raise ValueError("q_diag must weight every model state")
    if r_diag.shape != (model.n_inputs,):
        raise ValueError("r_diag must weight every input")
    if np.any(q_diag < 0):
        raise ValueError("state weights must be >= 0")
    if np.any(r_diag <= 0):
        raise ValueError("input weights must be > 0")
    p = model.n_phys
    if bounds.x_min.shape != (p,) or bounds.u_min.shape != (model.n_inputs,):
        raise ValueError("bounds do not match the model dimensions")

    dim, m, d = model.dim, model.n_inputs, model.n_dist
    a_pow = [np.eye(dim)]
    for _ in range(n_o):
        a_pow.append(model.a @ a_pow[-1])

    phi = np.vstack([a_pow[i + 1] for i in range(n_o)])
    gamma = np.zeros((n_o * dim, n_o * m))
    zmat = np.zeros((n_o * dim, n_o * d))
    for i in range(n_o):
        for j in range(i + 1):
            blk = a_pow[i - j]
            gamma[i * dim:(i + 1) * dim, j * m:(j + 1) * m] = blk @ model.b
            zmat[i * dim:(i + 1) * dim, j * d:(j + 1) * d] = blk @ model.c

    q_bar = np.tile(q_diag, n_o)
    r_bar = np.tile(r_diag, n_o)
    gq = gamma.T * q_bar
    hess = gq @ gamma + np.diag(r_bar)
    hess = 0.5 * (hess + hess.T)
    fmap = gq @ phi
    gmap = gq @ zmat

    phys = np.concatenate([np.arange(p) + i * dim for i in range(n_o)])
    gamma_phys = gamma[phys]
    x_hat = model.x_hat_full[:p]
    u_hat = model.set_point.flows

    l_rows = np.vstack([
        gamma_phys,
        -gamma_phys,
        np.eye(n_o * m),
        -np.eye(n_o * m),
    ])
    return CondensedQp(
        phi=phi, gamma=gamma, zmat=zmat, hess=hess, fmap=fmap, gmap=gmap,
        l_rows=l_rows, n_o=n_o, n_p=n_p, model=model, bounds=bounds,
        _w_state_upper=np.tile(bounds.x_max - x_hat, n_o),
        _w_state_lower=np.tile(bounds.x_min - x_hat, n_o),
        _w_input=np.concatenate([
            np.tile(bounds.u_max - u_hat, n_o),
            np.tile(u_hat - bounds.u_min, n_o),
        ]),
        _phi_phys=phi[phys],
        _z_phys=zmat[phys],
    )
