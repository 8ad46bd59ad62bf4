"""Run configuration: NFD, gates, controller tuning, and scenarios.

One JSON file describes a whole study.  Keys:

    nfd:      a3, a2, a1, n_max, trip_length_km, link_length_km,
              exit_cap (null = unbounded)
    control:  sample_time_s, substeps, horizon, set_point_accumulation,
              weight_accumulation, weight_control, overflow_fraction,
              accumulation_ceiling (null = n_max), slope_override (null =
              derive from the diagram), tol
    demand:   per-tag trapezoid shapes {tag: {ramp_up, plateau, ramp_down,
              level}}; level is a fraction of each gate's saturation flow
    disturbance: mode, half_range, threshold
    gates:    list of {id, storage, saturation_flow, cycle_s, g_min_s,
              g_nom_s, g_max_s, delay_steps}
    scenarios: list of {name, n0, queue_init_fraction, demand, horizon_steps,
              seed}

A bundled configuration for the San Francisco-style case study ships with
the package.  Its gate table is synthetic: the published study's link data
are not machine-readable, so storages follow the documented capacity-ratio
vector scaled to a configurable total, and signal plans are chosen so the
nominal flows sum near the diagram output at the set point.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .controller import MgcConfig
from .demand import DisturbanceSpec, make_trapezoid
from .gates import Gate, GateBank
from .nfd import NfdParams

__all__ = ["Scenario", "RunConfig", "load_config", "default_config",
           "default_config_path", "ConfigError"]

DEMAND_TAGS = ("none", "medium", "high")


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration."""


@dataclass(frozen=True)
class Scenario:
    """One closed-loop experiment."""

    name: str
    n0: float
    queue_init_fraction: float
    demand: str
    horizon_steps: int
    seed: int

    def __post_init__(self):
        if self.demand not in DEMAND_TAGS:
            raise ConfigError(f"scenario {self.name}: unknown demand tag "
                              f"{self.demand!r}")
        if not 0 <= self.queue_init_fraction <= 1:
            raise ConfigError(f"scenario {self.name}: queue_init_fraction "
                              "outside [0, 1]")
        if self.horizon_steps < 1:
            raise ConfigError(f"scenario {self.name}: horizon_steps must be >= 1")


@dataclass
class RunConfig:
    """Everything needed to reproduce a study."""

    nfd: NfdParams
    gates: list[Gate]
    control: MgcConfig
    overflow_fraction: float
    substeps: int
    demand_shapes: dict[str, dict]
    disturbance: DisturbanceSpec
    scenarios: list[Scenario] = field(default_factory=list)

    def __post_init__(self):
        if not 0 < self.overflow_fraction < 1:
            raise ConfigError("overflow_fraction must lie in (0, 1)")
        if self.substeps < 1:
            raise ConfigError("substeps must be >= 1")
        for s in self.scenarios:
            if not 0 <= s.n0 <= self.nfd.n_max:
                raise ConfigError(f"scenario {s.name}: n0 outside [0, n_max]")

    @property
    def bank(self) -> GateBank:
        return GateBank(self.gates)

    def scenario(self, name: str) -> Scenario:
        for s in self.scenarios:
            if s.name == name:
                return s
        raise ConfigError(f"no scenario named {name!r}")

    def demand_table(self, scenario: Scenario, extra_rows: int = 0) -> np.ndarray:
        """Per-gate demand series (rows = horizon + padding) [veh/h]."""
        rows = scenario.horizon_steps + extra_rows
        table = np.zeros((rows, len(self.gates)))
        if scenario.demand != "none":
            shape = self.demand_shapes[scenario.demand]
            for o, gate in enumerate(self.gates):
                table[:, o] = make_trapezoid(
                    gate,
                    ramp_up=int(shape["ramp_up"]),
                    plateau=int(shape["plateau"]),
                    ramp_down=int(shape["ramp_down"]),
                    level=float(shape["level"]),
                    horizon=rows,
                )
        return table


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ConfigError(f"{context}: missing required key {key!r}")
    return mapping[key]


def _build(raw: dict) -> RunConfig:
    nfd_raw = _require(raw, "nfd", "config")
    cap = nfd_raw.get("exit_cap")
    try:
        nfd = NfdParams(
            a3=float(_require(nfd_raw, "a3", "nfd")),
            a2=float(_require(nfd_raw, "a2", "nfd")),
            a1=float(_require(nfd_raw, "a1", "nfd")),
            n_max=float(_require(nfd_raw, "n_max", "nfd")),
            trip_length_km=float(_require(nfd_raw, "trip_length_km", "nfd")),
            link_length_km=float(_require(nfd_raw, "link_length_km", "nfd")),
            exit_cap=math.inf if cap is None else float(cap),
        )
    except ValueError as exc:
        raise ConfigError(f"nfd: {exc}") from exc

    gates = []
    for i, g in enumerate(_require(raw, "gates", "config")):
        ctx = f"gates[{i}]"
        try:
            gate = Gate(
                id=int(_require(g, "id", ctx)),
                storage=float(_require(g, "storage", ctx)),
                saturation_flow=float(_require(g, "saturation_flow", ctx)),
                cycle_s=float(_require(g, "cycle_s", ctx)),
                g_min_s=float(_require(g, "g_min_s", ctx)),
                g_nom_s=float(_require(g, "g_nom_s", ctx)),
                g_max_s=float(_require(g, "g_max_s", ctx)),
                delay_steps=int(g.get("delay_steps", 0)),
            )
        except ValueError as exc:
            raise ConfigError(f"{ctx}: {exc}") from exc
        for key in ("q_min", "q_nom", "q_max"):
            if key in g:
                expected = {"q_min": gate.min_flow, "q_nom": gate.nominal_flow,
                            "q_max": gate.max_flow}[key]
                if not math.isclose(float(g[key]), expected, rel_tol=1e-9):
                    raise ConfigError(
                        f"{ctx}: {key}={g[key]} inconsistent with greens "
                        f"(g*S/C = {expected})"
                    )
        gates.append(gate)

    ctrl = _require(raw, "control", "config")
    period = float(_require(ctrl, "sample_time_s", "control")) / 3600.0
    ceiling = ctrl.get("accumulation_ceiling")
    slope_override = ctrl.get("slope_override")
    try:
        control = MgcConfig(
            horizon=int(ctrl.get("horizon", 15)),
            period=period,
            set_point_accumulation=float(
                _require(ctrl, "set_point_accumulation", "control")
            ),
            weight_accumulation=float(ctrl.get("weight_accumulation", 2000.0)),
            weight_control=float(ctrl.get("weight_control", 1e-5)),
            tol=float(ctrl.get("tol", 1e-8)),
            accumulation_ceiling=None if ceiling is None else float(ceiling),
            slope_override=None if slope_override is None else float(slope_override),
        )
    except ValueError as exc:
        raise ConfigError(f"control: {exc}") from exc

    shapes = raw.get("demand", {})
    for tag in ("medium", "high"):
        if tag not in shapes:
            raise ConfigError(f"demand: missing trapezoid shape for {tag!r}")
        for key in ("ramp_up", "plateau", "ramp_down", "level"):
            _require(shapes[tag], key, f"demand.{tag}")

    dist_raw = raw.get("disturbance", {})
    disturbance = DisturbanceSpec(
        mode=dist_raw.get("mode", "congested-random"),
        half_range=float(dist_raw.get("half_range", 5000.0)),
        threshold=float(dist_raw.get("threshold", 6000.0)),
    )

    scenarios = []
    for i, s in enumerate(raw.get("scenarios", [])):
        ctx = f"scenarios[{i}]"
        scenarios.append(Scenario(
            name=str(_require(s, "name", ctx)),
            n0=float(_require(s, "n0", ctx)),
            queue_init_fraction=float(s.get("queue_init_fraction", 0.7)),
            demand=str(s.get("demand", "none")),
            horizon_steps=int(s.get("horizon_steps", 40)),
            seed=int(s.get("seed", 0)),
        ))
    names = [s.name for s in scenarios]
    if len(set(names)) != len(names):
        raise ConfigError("scenario names must be unique")

    return RunConfig(
        nfd=nfd,
        gates=gates,
        control=control,
        overflow_fraction=float(ctrl.get("overflow_fraction", 0.9)),
        substeps=int(ctrl.get("substeps", 10)),
        demand_shapes=shapes,
        disturbance=disturbance,
        scenarios=scenarios,
    )


def load_config(path: str) -> RunConfig:
    """Parse and validate a JSON run configuration."""
    try:
        with open(path) as handle:
            raw = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
    return _build(raw)


def default_config_path() -> str:
    """Filesystem path of the bundled San Francisco-style configuration."""
    return str(resources.files("gateflow.data").joinpath("san_francisco.json"))


def default_config() -> RunConfig:
    """Load the bundled San Francisco-style configuration."""
    return load_config(default_config_path())
