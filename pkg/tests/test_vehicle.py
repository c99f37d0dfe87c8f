import math

import numpy as np
import pytest

from aerobridge.aero import GRAVITY, Disturbance
from aerobridge.vehicle import (
    EmptyTrace,
    IntegralState,
    SetpointCommand,
    TrajectoryKind,
    UnreachableTarget,
    VehicleParams,
    VehicleState,
    WindModel,
    displacement_metric,
    plan_trajectory,
    position_hold_command,
    step,
)

PARAMS = VehicleParams(mass=2.6)
DT = 0.01


def simulate(state, setpoint, yaw, params, seconds, wind=None,
             disturbance=None, use_integral=True):
    wind = np.zeros(3) if wind is None else wind
    disturbance = Disturbance.none() if disturbance is None else disturbance
    integral = IntegralState()
    for _ in range(int(seconds / DT)):
        i = integral.update(state, setpoint, DT, params) if use_integral \
            else np.zeros(3)
        state = step(state, SetpointCommand(setpoint, yaw, i), disturbance,
                     wind, DT, params)
    return state


class TestStep:
    def test_equilibrium_hold(self):
        sp = np.array([1.0, -2.0, 3.0])
        state = VehicleState(position=sp.copy())
        state = simulate(state, sp, 0.0, PARAMS, 10.0, use_integral=False)
        assert float(np.linalg.norm(state.position - sp)) < 1e-3

    def test_hover_thrust_equals_weight(self):
        sp = np.array([0.0, 0.0, 5.0])
        state = VehicleState(position=sp + np.array([0.2, 0, -0.3]))
        state = simulate(state, sp, 0.0, PARAMS, 10.0)
        expected_gf = PARAMS.mass * 1000.0
        assert abs(state.commanded_thrust_gf - expected_gf) / expected_gf < 0.01

    def test_thrust_deficit_causes_descent_then_recovery(self):
        sp = np.array([0.0, 0.0, 5.0])
        state = VehicleState(position=sp.copy())
        hit = Disturbance(np.zeros(3), 200.0)
        dipped = simulate(VehicleState(position=sp.copy()), sp, 0.0, PARAMS, 1.0,
                          disturbance=hit, use_integral=False)
        assert dipped.position[2] < sp[2] - 0.005
        recovered = simulate(state, sp, 0.0, PARAMS, 20.0, disturbance=hit)
        assert abs(recovered.position[2] - sp[2]) < 0.01  # integral trims it out

    def test_settles_within_two_cm_in_five_seconds(self):
        # contract on the PD law itself (integral trim disabled)
        sp = np.array([0.0, 0.0, 5.0])
        state = VehicleState(position=sp + np.array([1.0, 0, 0]))
        state = simulate(state, sp, 0.0, PARAMS, 5.0, use_integral=False)
        assert float(np.linalg.norm(state.position - sp)) < 0.02

    def test_climb_command_sign(self):
        state = VehicleState(position=np.zeros(3))
        force = position_hold_command(state, np.array([0, 0, 1.0]), PARAMS)
        assert force[2] > PARAMS.mass * GRAVITY

    def test_hover_feedforward_at_setpoint(self):
        state = VehicleState(position=np.array([1.0, 1.0, 1.0]))
        force = position_hold_command(state, state.position, PARAMS)
        assert np.allclose(force, [0, 0, PARAMS.mass * GRAVITY])

    def test_thrust_saturation(self):
        state = VehicleState(position=np.zeros(3))
        force = position_hold_command(state, np.array([0, 0, 100.0]), PARAMS)
        assert float(np.linalg.norm(force)) <= PARAMS.max_lift_n() + 1e-9
        after = step(state, SetpointCommand(np.array([0, 0, 100.0])),
                     Disturbance.none(), np.zeros(3), DT, PARAMS)
        assert after.commanded_thrust_gf <= PARAMS.max_lift_kgf * 1000.0 + 1e-6

    def test_determinism(self):
        def run():
            state = VehicleState(position=np.array([0.5, 0.5, 2.0]))
            return simulate(state, np.array([0, 0, 2.0]), 0.3, PARAMS, 3.0,
                            wind=np.array([1.0, 0, 0]))
        a, b = run(), run()
        assert np.array_equal(a.position, b.position)
        assert np.array_equal(a.velocity, b.velocity)
        assert a.yaw == b.yaw

    def test_yaw_follows_command(self):
        state = VehicleState(position=np.zeros(3))
        state = simulate(state, np.zeros(3), 1.2, PARAMS, 5.0)
        assert abs(state.yaw - 1.2) < 0.01

    def test_mass_over_lift_rejected(self):
        with pytest.raises(ValueError):
            VehicleParams(mass=5.0).validate()


class TestPlanTrajectory:
    def test_vertical_then_horizontal_example(self):
        wps = plan_trajectory(TrajectoryKind.V_H, np.array([0.0, 0, 10.0]),
                              np.array([5.0, 0, 8.0]))
        assert len(wps) == 2
        assert np.allclose(wps[0], [0, 0, 8.5])
        assert np.allclose(wps[1], [4.5, 0, 8.5])

    def test_horizontal_first_is_level(self):
        start = np.array([0.0, 0, 10.0])
        wps = plan_trajectory(TrajectoryKind.H_H, start, np.array([5.0, 0, 8.0]))
        assert wps[0][2] == start[2]

    def test_degenerate_start_at_dock(self):
        target = np.array([5.0, 0, 8.0])
        dock = np.array([4.5, 0, 8.5])
        wps = plan_trajectory(TrajectoryKind.V_H, dock, target)
        assert len(wps) == 1
        assert np.allclose(wps[0], dock)

    def test_below_ground_rejected(self):
        with pytest.raises(UnreachableTarget):
            plan_trajectory(TrajectoryKind.V_H, np.array([0, 0, 5.0]),
                            np.array([1.0, 0, -1.0]))

    def test_all_kinds_end_at_standoff(self):
        start = np.array([2.0, 1.0, 4.0])
        target = np.array([0.0, 0.0, 2.0])
        for kind in TrajectoryKind:
            wps = plan_trajectory(kind, start, target)
            end = wps[-1]
            assert end[2] == pytest.approx(2.5)
            assert math.hypot(end[0], end[1]) == pytest.approx(0.5)


class TestDisplacementMetric:
    def test_constant_trace(self):
        ref = np.array([1.0, 1.0, 2.0])
        assert displacement_metric([ref.copy() for _ in range(5)], ref) == 0.0

    def test_single_excursion(self):
        ref = np.zeros(3)
        trace = [np.zeros(3), np.array([0.3, 0, 0]), np.zeros(3)]
        assert displacement_metric(trace, ref) == pytest.approx(0.3)

    def test_vertical_motion_ignored(self):
        ref = np.zeros(3)
        assert displacement_metric([np.array([0, 0, 5.0])], ref) == 0.0

    def test_empty_trace(self):
        with pytest.raises(EmptyTrace):
            displacement_metric([], np.zeros(3))


class TestWind:
    def test_constant_ambient(self):
        model = WindModel(ambient=np.array([4.0, 0, 0]))
        gust = model.initial_gust()
        rng = np.random.default_rng(0)
        gust = model.step_gust(gust, DT, rng)
        assert np.allclose(model.sample(gust), [4.0, 0, 0])

    def test_cap(self):
        model = WindModel(ambient=np.array([6.0, 0, 0]), cap=4.0)
        assert float(np.linalg.norm(model.sample(model.initial_gust()))) <= 4.0

    def test_gusts_deterministic_per_seed(self):
        model = WindModel(ambient=np.zeros(3), gust_sigma=1.0)
        def run():
            rng = np.random.default_rng(7)
            g = model.initial_gust()
            for _ in range(100):
                g = model.step_gust(g, DT, rng)
            return g
        assert np.array_equal(run(), run())
