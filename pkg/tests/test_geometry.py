import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aerobridge.geometry import (
    EARTH_RADIUS_M,
    EulerAngles,
    FrameTransform,
    GpsCoordinate,
    PitchSingularity,
    compose_global_position,
    euler_rates_to_body_rates,
    gps_to_ecef,
    integrate_attitude,
    quat_from_axis_angle,
    quat_from_yaw,
    quat_identity,
    quat_multiply,
    quat_rotate,
    quat_to_matrix,
    quat_to_yaw,
    quaternion_derivative,
    rotation_z,
    transform_point,
)

angles = st.floats(-1.4, 1.4)
rates = st.floats(-3.0, 3.0)


def rotation_from_rates_oracle(omega: np.ndarray, t_total: float, dt: float) -> np.ndarray:
    """Independent attitude propagation: per-step Rodrigues rotation product."""
    r = np.eye(3)
    steps = int(round(t_total / dt))
    for _ in range(steps):
        angle = float(np.linalg.norm(omega)) * dt
        if angle < 1e-15:
            continue
        axis = omega / np.linalg.norm(omega)
        k = np.array([
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ])
        r = r @ (np.eye(3) + math.sin(angle) * k + (1 - math.cos(angle)) * (k @ k))
    return r


def rotation_angle_between(a: np.ndarray, b: np.ndarray) -> float:
    c = (np.trace(a.T @ b) - 1.0) / 2.0
    return math.acos(max(-1.0, min(1.0, c)))


class TestEulerRates:
    def test_identity_attitude_roll_only(self):
        out = euler_rates_to_body_rates(EulerAngles(0, 0, 0), EulerAngles(0.1, 0, 0))
        assert np.allclose(out, [0.1, 0, 0])

    def test_zero_rates(self):
        out = euler_rates_to_body_rates(EulerAngles(0, 0, 0), EulerAngles(0, 0, 0))
        assert np.allclose(out, [0, 0, 0])

    def test_pitched_yaw_rate(self):
        out = euler_rates_to_body_rates(EulerAngles(0, 0.5, 0), EulerAngles(0, 0, 1))
        assert np.allclose(out, [-math.sin(0.5), 0.0, math.cos(0.5)], atol=1e-12)

    def test_pitch_singularity(self):
        with pytest.raises(PitchSingularity):
            euler_rates_to_body_rates(EulerAngles(0, math.pi / 2, 0),
                                      EulerAngles(0, 0, 1))

    @given(roll=angles, yaw=angles, r_roll=rates, r_pitch=rates, r_yaw=rates)
    def test_identity_map_at_zero_attitude(self, roll, yaw, r_roll, r_pitch, r_yaw):
        out = euler_rates_to_body_rates(EulerAngles(0.0, 0.0, 0.0),
                                        EulerAngles(r_roll, r_pitch, r_yaw))
        assert np.allclose(out, [r_roll, r_pitch, r_yaw], atol=1e-12)
        del roll, yaw


class TestQuaternionKinematics:
    def test_zero_rate_derivative(self):
        assert np.allclose(quaternion_derivative(quat_identity(), np.zeros(3)), 0.0)

    def test_axis_aligned_derivative(self):
        p = 0.37
        dq = quaternion_derivative(quat_identity(), np.array([p, 0, 0]))
        assert np.allclose(dq, [0.0, p / 2.0, 0.0, 0.0])

    def test_quarter_turn_integration(self):
        q = quat_identity()
        omega = np.array([0.0, 0.0, math.pi / 2.0])
        for _ in range(100):
            q = integrate_attitude(q, omega, 0.01)
        expected = np.array([math.cos(math.pi / 4), 0, 0, math.sin(math.pi / 4)])
        assert np.allclose(q, expected, atol=1e-9)
        assert abs(quat_to_yaw(q) - math.pi / 2.0) < 1e-6

    def test_integration_matches_rotation_matrix_oracle(self):
        omega = np.array([0.7, -1.3, 0.9])  # |omega| < 2 rad/s
        dt, t_total = 0.01, 10.0
        q = quat_identity()
        for _ in range(int(t_total / dt)):
            q = integrate_attitude(q, omega, dt)
        r_oracle = rotation_from_rates_oracle(omega, t_total, dt)
        assert rotation_angle_between(quat_to_matrix(q), r_oracle) < 1e-6

    def test_norm_drift_long_run(self):
        q = quat_from_axis_angle(np.array([1.0, 2.0, -1.0]), 0.3)
        omega = np.array([0.5, -0.2, 1.1])
        for _ in range(100_000):
            q = integrate_attitude(q, omega, 0.001)
        assert abs(float(np.linalg.norm(q)) - 1.0) < 1e-9

    def test_zero_rate_leaves_attitude(self):
        q = quat_from_yaw(0.8)
        q2 = integrate_attitude(q, np.zeros(3), 0.01)
        assert np.allclose(q, q2, atol=1e-15)

    def test_dt_bounds(self):
        with pytest.raises(ValueError):
            integrate_attitude(quat_identity(), np.zeros(3), 0.5)


class TestTransforms:
    def test_identity(self):
        tf = FrameTransform(np.eye(3), np.zeros(3))
        assert np.allclose(transform_point(tf, np.array([1, 2, 3])), [1, 2, 3])

    def test_pure_translation(self):
        tf = FrameTransform(np.eye(3), np.array([1.0, 2.0, 3.0]))
        assert np.allclose(transform_point(tf, np.zeros(3)), [1, 2, 3])

    def test_quarter_turn(self):
        tf = FrameTransform(rotation_z(math.pi / 2), np.zeros(3))
        assert np.allclose(transform_point(tf, np.array([1.0, 0, 0])), [0, 1, 0],
                           atol=1e-12)

    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3),
           st.floats(-3, 3), st.floats(-1.5, 1.5))
    def test_inverse_round_trip(self, x, y, z, tx, angle):
        tf = FrameTransform(rotation_z(angle) @ quat_to_matrix(
            quat_from_axis_angle(np.array([1.0, 0.3, -0.2]), angle * 0.7)),
            np.array([tx, -tx, tx / 2]))
        p = np.array([x, y, z])
        assert np.allclose(tf.inverse().apply(tf.apply(p)), p, atol=1e-12)

    def test_validate_rejects_scaled_rotation(self):
        with pytest.raises(ValueError):
            FrameTransform(np.eye(3) * 1.01, np.zeros(3)).validate()


class TestGps:
    def test_equator_prime_meridian(self):
        out = gps_to_ecef(GpsCoordinate(0.0, 0.0, 0.0))
        assert np.allclose(out, [EARTH_RADIUS_M, 0, 0])

    def test_pole(self):
        out = gps_to_ecef(GpsCoordinate(math.pi / 2, 0.7, 0.0))
        assert np.allclose(out, [0, 0, EARTH_RADIUS_M], atol=1e-3)

    def test_mid_latitude(self):
        out = gps_to_ecef(GpsCoordinate(math.pi / 4, math.pi / 4, 0.0))
        assert abs(out[0] - 3_185_500.0) < 1.0
        assert abs(out[1] - 3_185_500.0) < 1.0
        assert abs(out[2] - 4_504_977.0) < 1.0

    @given(st.floats(-math.pi / 2, math.pi / 2), st.floats(-3.1, 3.1),
           st.floats(0, 5000))
    def test_norm_is_radius_plus_altitude(self, lat, lon, alt):
        out = gps_to_ecef(GpsCoordinate(lat, lon, alt))
        expected = EARTH_RADIUS_M + alt
        assert abs(float(np.linalg.norm(out)) - expected) / expected < 1e-9

    def test_invalid_latitude(self):
        with pytest.raises(ValueError):
            gps_to_ecef(GpsCoordinate(2.0, 0.0, 0.0))

    def test_compose_zero_offset(self):
        anchor = GpsCoordinate(0.3, -1.1, 12.0)
        out = compose_global_position(anchor, quat_identity(), np.zeros(3))
        assert np.allclose(out, gps_to_ecef(anchor))

    def test_compose_identity_attitude(self):
        anchor = GpsCoordinate(0.0, 0.0, 0.0)
        out = compose_global_position(anchor, quat_identity(), np.array([1.0, 0, 0]))
        assert np.allclose(out, [EARTH_RADIUS_M + 1.0, 0, 0])

    def test_compose_rotated_offset(self):
        anchor = GpsCoordinate(0.0, 0.0, 0.0)
        out = compose_global_position(anchor, quat_from_yaw(math.pi / 2),
                                      np.array([1.0, 0, 0]))
        assert np.allclose(out, [EARTH_RADIUS_M, 1.0, 0], atol=1e-9)


@given(st.floats(-math.pi, math.pi), st.floats(-2, 2), st.floats(-2, 2),
       st.floats(-2, 2))
@settings(max_examples=50)
def test_quat_rotate_matches_matrix(yaw, x, y, z):
    q = quat_from_yaw(yaw)
    v = np.array([x, y, z])
    assert np.allclose(quat_rotate(q, v), quat_to_matrix(q) @ v, atol=1e-12)


def test_quat_multiply_composes_rotations():
    qa = quat_from_axis_angle(np.array([1.0, 0, 0]), 0.4)
    qb = quat_from_axis_angle(np.array([0, 1.0, 0]), -0.9)
    v = np.array([0.3, -0.7, 1.1])
    assert np.allclose(quat_rotate(quat_multiply(qa, qb), v),
                       quat_rotate(qa, quat_rotate(qb, v)), atol=1e-12)
