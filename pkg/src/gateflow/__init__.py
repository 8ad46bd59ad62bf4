"""Multi-gated perimeter flow control for a protected urban network.

Subpackages by concern: `nfd` (fundamental diagram), `plant` (nonlinear
simulator), `prediction` (linear model and condensation), `qp` (dense QP
solver), `controller` (rolling-horizon control), `allocation` (global-flow
split policies), `metrics`/`harness`/`config`/`cli` (experiments).
"""

from .allocation import AllocationResult, cap_allocate, cap_ratios, no_control, oap_allocate
from .config import RunConfig, Scenario, default_config, load_config
from .controller import MgcConfig, MgcController, SisoController, Trajectory, run_rolling_horizon
from .demand import DisturbanceSpec, make_disturbance, make_trapezoid
from .gates import Gate, GateBank
from .metrics import RunMetrics, compute_metrics, rqb, tts
from .nfd import NfdParams, capped_outflow, circulating_flow, critical_accumulation, output, slope
from .plant import NetworkState, Plant, gate_outflow
from .prediction import Bounds, CondensedQp, LinearModel, SetPoint, augment_delays, condense, linearize
from .qp import DenseQpSolver, QpProblem, QpSolution, solve, solve_unconstrained

__version__ = "0.1.0"
