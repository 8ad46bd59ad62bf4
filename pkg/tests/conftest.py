import numpy as np
import pytest

from gateflow.gates import Gate, GateBank
from gateflow.nfd import NfdParams


@pytest.fixture
def sf_nfd() -> NfdParams:
    """Case-study diagram: cubic fit over [0, 13000] veh, l/L = 1/7."""
    return NfdParams(
        a3=4.128e-7, a2=-0.0136, a1=113.264,
        n_max=13000.0, trip_length_km=1.75, link_length_km=0.25,
    )


def make_gate(gate_id=1, storage=400.0, sat=3600.0, cycle=90.0,
              g_min=10.0, g_nom=45.0, g_max=80.0, delay=0) -> Gate:
    return Gate(
        id=gate_id, storage=storage, saturation_flow=sat, cycle_s=cycle,
        g_min_s=g_min, g_nom_s=g_nom, g_max_s=g_max, delay_steps=delay,
    )


@pytest.fixture
def two_gate_bank() -> GateBank:
    return GateBank([
        make_gate(1, storage=300.0, sat=3600.0, g_nom=15.0),   # q_nom = 600
        make_gate(2, storage=300.0, sat=3600.0, g_nom=10.0),   # q_nom = 400
    ])


@pytest.fixture
def small_bank() -> GateBank:
    """Three heterogeneous gates for plant and controller tests."""
    return GateBank([
        make_gate(1, storage=250.0, sat=3600.0, cycle=90.0,
                  g_min=8.0, g_nom=40.0, g_max=75.0),
        make_gate(2, storage=400.0, sat=5400.0, cycle=90.0,
                  g_min=8.0, g_nom=35.0, g_max=70.0),
        make_gate(3, storage=150.0, sat=3600.0, cycle=60.0,
                  g_min=5.0, g_nom=20.0, g_max=45.0),
    ])
