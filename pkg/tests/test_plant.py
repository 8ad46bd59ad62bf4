"""Nonlinear plant: release rule, multi-rate integration, conservation."""

import numpy as np
import pytest
from scipy.optimize import brentq

from gateflow import nfd as nfd_mod
from gateflow.gates import GateBank
from gateflow.plant import NetworkState, Plant, gate_outflow

from conftest import make_gate


def total_inflow_outflow(traj_records, demands, period):
    """Net vehicles added over a run: T * sum(demand + d_n - exit)."""
    net = 0.0
    for rec, dem in zip(traj_records, demands):
        net += period * (dem.sum() + rec.disturbance - rec.exit_flow)
    return net


def run_plant(plant, state, commands_list, demands_list, disturbances=None):
    records = []
    disturbances = disturbances or [0.0] * len(commands_list)
    for cmd, dem, d_n in zip(commands_list, demands_list, disturbances):
        state, rec = plant.step(state, cmd, dem, d_n)
        records.append(rec)
    return state, records


class TestGateOutflow:
    def test_forced_minimum_when_network_saturated(self, sf_nfd):
        gate = make_gate()
        flow = gate_outflow(
            command=gate.max_flow, demand=0.0, queue=300.0, gate=gate,
            accumulation=0.95 * sf_nfd.n_max, overflow_fraction=0.9,
            n_max=sf_nfd.n_max, substep_h=0.005,
        )
        assert flow == pytest.approx(gate.min_flow)

    def test_nothing_to_release(self, sf_nfd):
        gate = make_gate()
        flow = gate_outflow(
            command=gate.max_flow, demand=0.0, queue=0.0, gate=gate,
            accumulation=1000.0, overflow_fraction=0.9,
            n_max=sf_nfd.n_max, substep_h=0.005,
        )
        assert flow == 0.0

    def test_huge_queue_saturates_at_max_flow(self, sf_nfd):
        gate = make_gate()
        flow = gate_outflow(
            command=2 * gate.max_flow, demand=0.0, queue=1e6, gate=gate,
            accumulation=1000.0, overflow_fraction=0.9,
            n_max=sf_nfd.n_max, substep_h=0.005,
        )
        assert flow == pytest.approx(gate.max_flow)

    def test_command_binds_between(self, sf_nfd):
        gate = make_gate()
        flow = gate_outflow(
            command=800.0, demand=100.0, queue=200.0, gate=gate,
            accumulation=1000.0, overflow_fraction=0.9,
            n_max=sf_nfd.n_max, substep_h=0.005,
        )
        assert flow == pytest.approx(800.0)

    def test_overflow_fraction_validated(self, sf_nfd):
        gate = make_gate()
        with pytest.raises(ValueError):
            gate_outflow(100.0, 0.0, 0.0, gate, 0.0, 1.5, sf_nfd.n_max, 0.005)


class TestStep:
    def test_euler_queue_update(self, sf_nfd):
        # queue 100, demand 500, command 300, one sub-step of 0.05 h
        gate = make_gate(storage=1000.0, g_min=2.0)   # q_min = 80 < command
        plant = Plant(sf_nfd, GateBank([gate]), period=0.05, substeps=1)
        state = plant.initial_state(n0=1000.0)
        state.queue[0] = 100.0
        new, rec = plant.step(state, np.array([300.0]), np.array([500.0]))
        assert new.queue[0] == pytest.approx(110.0)
        assert rec.released[0] == pytest.approx(300.0)

    def test_pure_emptying_without_demand(self, sf_nfd):
        gate = make_gate()
        plant = Plant(sf_nfd, GateBank([gate]), period=0.05, substeps=10)
        state = plant.initial_state(n0=4000.0)
        new, rec = plant.step(state, np.array([gate.min_flow]), np.array([0.0]))
        expected = 4000.0 - 0.05 * nfd_mod.output(sf_nfd, 4000.0)
        assert new.n == pytest.approx(expected)
        assert rec.released[0] == 0.0
        np.testing.assert_array_equal(new.queue, 0.0)

    def test_queue_bounds_and_virtual_spillover(self, sf_nfd):
        gate = make_gate(storage=50.0)
        plant = Plant(sf_nfd, GateBank([gate]), period=0.05, substeps=5)
        state = plant.initial_state(n0=1000.0)
        state.queue[0] = 45.0
        # heavy demand, minimum release: the link must spill upstream
        new, _ = plant.step(state, np.array([gate.min_flow]),
                            np.array([4000.0]))
        assert new.queue[0] <= 50.0 + 1e-12
        assert new.virtual[0] > 0.0

    def test_virtual_queue_flows_back_when_space_frees(self, sf_nfd):
        gate = make_gate(storage=50.0)
        plant = Plant(sf_nfd, GateBank([gate]), period=0.05, substeps=5)
        state = plant.initial_state(n0=1000.0)
        state.queue[0] = 50.0
        state.virtual[0] = 30.0
        new, _ = plant.step(state, np.array([gate.max_flow]), np.array([0.0]))
        # release frees space; upstream vehicles take it
        assert new.virtual[0] < 30.0
        assert new.queue[0] <= 50.0 + 1e-12

    def test_forced_minimum_overrides_commands(self, sf_nfd, small_bank):
        plant = Plant(sf_nfd, small_bank, overflow_fraction=0.9,
                      period=0.05, substeps=10)
        state = plant.initial_state(n0=0.95 * sf_nfd.n_max, queue_fraction=0.7)
        _, rec = plant.step(state, small_bank.max_flow,
                            np.zeros(small_bank.size))
        assert rec.forced_min
        np.testing.assert_allclose(rec.released, small_bank.min_flow)

    def test_commands_validated(self, sf_nfd, small_bank):
        plant = Plant(sf_nfd, small_bank)
        state = plant.initial_state(n0=1000.0)
        with pytest.raises(ValueError):
            plant.step(state, small_bank.max_flow * 2.0,
                       np.zeros(small_bank.size))

    def test_accumulation_clamped_at_n_max_counts_gridlock(self, sf_nfd):
        gate = make_gate(storage=5000.0, sat=20 * 3600.0)
        bank = GateBank([gate])
        plant = Plant(sf_nfd, bank, overflow_fraction=0.93,
                      period=0.05, substeps=1)
        state = plant.initial_state(n0=12000.0)
        state.queue[0] = 5000.0
        new, rec = plant.step(state, bank.max_flow, np.array([0.0]))
        assert new.n == sf_nfd.n_max
        assert rec.gridlock_events == 1
        assert rec.clamp_mass > 0.0


class TestConservation:
    def test_identity_on_random_runs(self, sf_nfd, small_bank):
        rng = np.random.default_rng(42)
        plant = Plant(sf_nfd, small_bank, period=0.05, substeps=10)
        for trial in range(5):
            state = plant.initial_state(
                n0=rng.uniform(500.0, 9000.0),
                queue_fraction=rng.uniform(0.0, 0.9),
            )
            before = state.total_vehicles(plant.period)
            commands, demands, records = [], [], []
            for _ in range(30):
                cmd = rng.uniform(small_bank.min_flow, small_bank.max_flow)
                dem = rng.uniform(0.0, 0.4 * small_bank.saturation_flow)
                state, rec = plant.step(state, cmd, dem)
                demands.append(dem)
                records.append(rec)
            after = state.total_vehicles(plant.period)
            net = total_inflow_outflow(records, demands, plant.period)
            assert sum(r.gridlock_events for r in records) == 0
            assert after - before == pytest.approx(net, rel=1e-6, abs=1e-6)

    def test_identity_with_delays(self, sf_nfd):
        gates = [make_gate(1, delay=2), make_gate(2, delay=1),
                 make_gate(3, delay=0)]
        bank = GateBank(gates)
        plant = Plant(sf_nfd, bank, period=0.05, substeps=10)
        rng = np.random.default_rng(7)
        state = plant.initial_state(n0=3000.0, queue_fraction=0.5)
        before = state.total_vehicles(plant.period)
        records, demands = [], []
        for _ in range(25):
            cmd = rng.uniform(bank.min_flow, bank.max_flow)
            dem = rng.uniform(0.0, 800.0, size=3)
            state, rec = plant.step(state, cmd, dem)
            records.append(rec)
            demands.append(dem)
        after = state.total_vehicles(plant.period)
        net = total_inflow_outflow(records, demands, plant.period)
        assert after - before == pytest.approx(net, rel=1e-6, abs=1e-6)

    def test_delayed_release_arrives_after_one_step(self, sf_nfd):
        gate = make_gate(delay=1, storage=500.0)
        bank = GateBank([gate])
        plant = Plant(sf_nfd, bank, period=0.05, substeps=1)
        state = plant.initial_state(n0=1000.0)
        state.queue[0] = 400.0
        cmd = np.array([gate.max_flow])
        state1, rec1 = plant.step(state, cmd, np.array([0.0]))
        assert rec1.released[0] > 0.0
        assert rec1.arrivals[0] == 0.0          # still in transit
        state2, rec2 = plant.step(state1, cmd, np.array([0.0]))
        assert rec2.arrivals[0] == pytest.approx(rec1.released[0])


class TestEquilibrium:
    def test_accumulation_fixed_point_at_nominal_flows(self, sf_nfd, small_bank):
        # choose the accumulation whose output balances the nominal flows;
        # steady demand equal to the nominal flows keeps queues empty, so
        # released flow equals the command and n stays put
        target = float(small_bank.nominal_flow.sum())
        n_crit = nfd_mod.critical_accumulation(sf_nfd)
        n_star = brentq(lambda n: nfd_mod.output(sf_nfd, n) - target, 1.0, n_crit)
        plant = Plant(sf_nfd, small_bank, period=0.05, substeps=10)
        state = plant.initial_state(n0=n_star)
        cmd = small_bank.nominal_flow
        for _ in range(5):
            state, _ = plant.step(state, cmd, small_bank.nominal_flow)
            assert state.n == pytest.approx(n_star, abs=1e-9 * n_star)
            np.testing.assert_allclose(state.queue, 0.0, atol=1e-9)


class TestDeterminism:
    def test_bit_identical_replay(self, sf_nfd, small_bank):
        from gateflow.controller import NoControlPolicy, run_rolling_horizon
        from gateflow.demand import DisturbanceSpec

        plant = Plant(sf_nfd, small_bank, period=0.05, substeps=10)
        spec = DisturbanceSpec(mode="congested-random")
        table = np.tile(0.3 * small_bank.saturation_flow, (40, 1))

        def run():
            return run_rolling_horizon(
                plant, NoControlPolicy(small_bank),
                plant.initial_state(9000.0, 0.7), table, steps=40,
                disturbance=spec, seed=123,
            )

        first, second = run(), run()
        np.testing.assert_array_equal(first.accumulation, second.accumulation)
        np.testing.assert_array_equal(first.queues, second.queues)
        np.testing.assert_array_equal(first.exit_flow, second.exit_flow)
        np.testing.assert_array_equal(first.disturbance, second.disturbance)
