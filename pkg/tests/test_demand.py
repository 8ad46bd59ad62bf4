"""Trapezoidal demand construction and the congested-regime disturbance."""

import numpy as np
import pytest

from gateflow.demand import DisturbanceSpec, make_disturbance, make_trapezoid

from conftest import make_gate


class TestTrapezoid:
    def test_zero_level_gives_zero_series(self):
        gate = make_gate()
        series = make_trapezoid(gate, 3, 5, 3, level=0.0, horizon=20)
        assert series.shape == (20,)
        assert np.all(series == 0.0)

    def test_plateau_at_quarter_saturation(self):
        gate = make_gate(sat=1800.0)
        series = make_trapezoid(gate, 2, 4, 2, level=0.25, horizon=12)
        assert series.max() == pytest.approx(450.0)
        np.testing.assert_allclose(series[2:6], 450.0)

    def test_rectangular_pulse_without_ramps(self):
        gate = make_gate(sat=3600.0)
        series = make_trapezoid(gate, 0, 5, 0, level=0.5, horizon=10)
        np.testing.assert_allclose(series[:5], 1800.0)
        np.testing.assert_allclose(series[5:], 0.0)

    def test_starts_at_zero_and_returns_to_zero(self):
        gate = make_gate()
        series = make_trapezoid(gate, 4, 3, 4, level=0.3, horizon=15)
        assert series[0] == 0.0
        assert series[10] == 0.0          # last ramp-down step
        assert np.all(np.diff(series[:4]) > 0)
        assert np.all(np.diff(series[7:11]) < 0)

    def test_shape_must_fit_horizon(self):
        gate = make_gate()
        with pytest.raises(ValueError):
            make_trapezoid(gate, 5, 5, 5, level=0.2, horizon=10)
        with pytest.raises(ValueError):
            make_trapezoid(gate, 1, 1, 1, level=1.5, horizon=10)


class TestDisturbance:
    def test_zero_below_threshold(self):
        spec = DisturbanceSpec(mode="congested-random")
        assert make_disturbance(spec, seed=7, step=3, accumulation=3000.0) == 0.0
        assert make_disturbance(spec, seed=7, step=3, accumulation=6000.0) == 0.0

    def test_range_and_reproducibility_above_threshold(self):
        spec = DisturbanceSpec(mode="congested-random")
        draws = [make_disturbance(spec, seed=11, step=k, accumulation=7000.0)
                 for k in range(200)]
        assert all(-5000.0 <= d <= 5000.0 for d in draws)
        assert len(set(draws)) > 100       # genuinely varying
        again = [make_disturbance(spec, seed=11, step=k, accumulation=7000.0)
                 for k in range(200)]
        assert draws == again

    def test_different_seeds_differ(self):
        spec = DisturbanceSpec(mode="congested-random")
        a = make_disturbance(spec, seed=1, step=0, accumulation=9000.0)
        b = make_disturbance(spec, seed=2, step=0, accumulation=9000.0)
        assert a != b

    def test_zero_half_range(self):
        spec = DisturbanceSpec(mode="congested-random", half_range=0.0)
        assert make_disturbance(spec, seed=5, step=9, accumulation=12000.0) == 0.0

    def test_zero_mode(self):
        spec = DisturbanceSpec(mode="zero")
        assert make_disturbance(spec, seed=5, step=9, accumulation=12000.0) == 0.0

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            DisturbanceSpec(mode="gaussian")
