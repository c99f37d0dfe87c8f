"""Frames, attitude kinematics, and geodetic composition.

Conventions used across the simulator:

- World frame is right-handed with z up; yaw is a rotation about +z.
- Quaternions are Hamilton convention, scalar-first ``[w, x, y, z]``, and
  map body vectors into the world frame (``v_world = q * v_body * q^-1``).
- Euler angles are roll (about body x), pitch (body y), yaw (body z).
- The spherical-Earth ECEF frame appears only in the GPS helpers; all
  flight dynamics happen in the local z-up world frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

EARTH_RADIUS_M = 6_371_000.0

_PITCH_MARGIN = 1e-6


class PitchSingularity(ValueError):
    """Pitch too close to +-90 deg for the Euler-rate kinematic map."""


def vec3(x: float, y: float, z: float) -> np.ndarray:
    return np.array([x, y, z], dtype=float)


# ---------------------------------------------------------------------------
# Quaternions
# ---------------------------------------------------------------------------

def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    n = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    if n < 1e-12:
        raise ValueError("cannot normalize a near-zero quaternion")
    return q / n


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector ``v`` by quaternion ``q`` (body -> world for poses)."""
    qv = np.array([0.0, v[0], v[1], v[2]])
    out = quat_multiply(quat_multiply(q, qv), quat_conjugate(q))
    return out[1:]


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = float(np.linalg.norm(axis))
    if n < 1e-12:
        return quat_identity()
    half = 0.5 * angle
    s = math.sin(half) / n
    return np.array([math.cos(half), axis[0] * s, axis[1] * s, axis[2] * s])


def quat_from_yaw(yaw: float) -> np.ndarray:
    return np.array([math.cos(0.5 * yaw), 0.0, 0.0, math.sin(0.5 * yaw)])


def quat_to_yaw(q: np.ndarray) -> float:
    w, x, y, z = q
    return math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    xx, yy, zz = x * x, y * y, z * z
    wx, wy, wz = w * x, w * y, w * z
    xy, xz, yz = x * y, x * z, y * z
    return np.array(
        [
            [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
            [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
            [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
        ]
    )


# ---------------------------------------------------------------------------
# Euler-rate kinematics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EulerAngles:
    """Roll/pitch/yaw in radians; also reused for angle rates (rad/s)."""

    roll: float
    pitch: float
    yaw: float


def euler_rates_to_body_rates(angles: EulerAngles, rates: EulerAngles) -> np.ndarray:
    """Map Euler-angle rates to body angular rates (p, q, r).

    Standard kinematic map:
        p = roll_dot - yaw_dot * sin(pitch)
        q = pitch_dot * cos(roll) + yaw_dot * cos(pitch) * sin(roll)
        r = yaw_dot * cos(pitch) * cos(roll) - pitch_dot * sin(roll)

    Raises PitchSingularity near +-90 deg pitch where the inverse map
    degenerates.
    """
    if abs(angles.pitch) >= math.pi / 2.0 - _PITCH_MARGIN:
        raise PitchSingularity(f"pitch {angles.pitch:.6f} rad is too close to +-pi/2")
    sr, cr = math.sin(angles.roll), math.cos(angles.roll)
    sp, cp = math.sin(angles.pitch), math.cos(angles.pitch)
    p = rates.roll - rates.yaw * sp
    q = rates.pitch * cr + rates.yaw * cp * sr
    r = rates.yaw * cp * cr - rates.pitch * sr
    return np.array([p, q, r])


def quaternion_derivative(q: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Quaternion kinematic derivative 0.5 * Omega(omega) * q.

    ``omega`` is the body angular rate; equivalent to 0.5 * q (x) (0, omega)
    in Hamilton convention.
    """
    wx, wy, wz = omega
    w, x, y, z = q
    return 0.5 * np.array(
        [
            -wx * x - wy * y - wz * z,
            wx * w + wz * y - wy * z,
            wy * w - wz * x + wx * z,
            wz * w + wy * x - wx * y,
        ]
    )


def integrate_attitude(q: np.ndarray, omega: np.ndarray, dt: float) -> np.ndarray:
    """Advance attitude one step under constant body rate ``omega``.

    Uses the exact axis-angle exponential (not a first-order Euler step),
    then renormalizes, so norm drift stays at float rounding level.
    """
    if not 0.0 < dt <= 0.1:
        raise ValueError(f"dt must be in (0, 0.1], got {dt}")
    wx, wy, wz = float(omega[0]), float(omega[1]), float(omega[2])
    angle = math.sqrt(wx * wx + wy * wy + wz * wz) * dt
    if angle < 1e-14:
        return quat_normalize(np.asarray(q, dtype=float).copy())
    dq = quat_from_axis_angle(np.array([wx, wy, wz]), angle)
    return quat_normalize(quat_multiply(np.asarray(q, dtype=float), dq))


# ---------------------------------------------------------------------------
# Rigid transforms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FrameTransform:
    """Rotation + translation mapping points between frames: R p + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def validate(self, tol: float = 1e-9) -> None:
        r = self.rotation
        if not np.allclose(r.T @ r, np.eye(3), atol=tol):
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > tol:
            raise ValueError("rotation determinant is not +1")

    def apply(self, p: np.ndarray) -> np.ndarray:
        return self.rotation @ p + self.translation

    def inverse(self) -> "FrameTransform":
        rt = self.rotation.T
        return FrameTransform(rt, -(rt @ self.translation))

    def compose(self, other: "FrameTransform") -> "FrameTransform":
        """Transform applying ``other`` first, then ``self``."""
        return FrameTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )


def identity_transform() -> FrameTransform:
    return FrameTransform(np.eye(3), np.zeros(3))


def rotation_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def transform_point(tf: FrameTransform, p: np.ndarray) -> np.ndarray:
    return tf.apply(np.asarray(p, dtype=float))


# ---------------------------------------------------------------------------
# Poses
# ---------------------------------------------------------------------------

@dataclass
class Pose:
    """Position plus attitude quaternion in the world frame."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    attitude: np.ndarray = field(default_factory=quat_identity)

    def yaw(self) -> float:
        return quat_to_yaw(self.attitude)

    def to_world(self, p_body: np.ndarray) -> np.ndarray:
        return quat_rotate(self.attitude, p_body) + self.position

    def to_body(self, p_world: np.ndarray) -> np.ndarray:
        return quat_rotate(quat_conjugate(self.attitude), p_world - self.position)


# ---------------------------------------------------------------------------
# Spherical-Earth GPS helpers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GpsCoordinate:
    """Latitude/longitude in radians, altitude in meters above the sphere."""

    latitude: float
    longitude: float
    altitude: float = 0.0

    def validate(self) -> None:
        if not -math.pi / 2.0 <= self.latitude <= math.pi / 2.0:
            raise ValueError(f"latitude {self.latitude} outside [-pi/2, pi/2]")
        if not -math.pi < self.longitude <= math.pi:
            raise ValueError(f"longitude {self.longitude} outside (-pi, pi]")


def gps_to_ecef(g: GpsCoordinate, earth_radius: float = EARTH_RADIUS_M) -> np.ndarray:
    """Spherical-Earth ECEF position of a GPS fix."""
    g.validate()
    r = earth_radius + g.altitude
    cla, sla = math.cos(g.latitude), math.sin(g.latitude)
    clo, slo = math.cos(g.longitude), math.sin(g.longitude)
    return np.array([r * cla * clo, r * cla * slo, r * sla])


def compose_global_position(
    anchor: GpsCoordinate,
    attitude: np.ndarray,
    relative_offset: np.ndarray,
    earth_radius: float = EARTH_RADIUS_M,
) -> np.ndarray:
    """Global position of a point given a GPS anchor and a body-frame offset.

    Reduces to ``gps_to_ecef(anchor)`` when the offset is zero.
    """
    return gps_to_ecef(anchor, earth_radius) + quat_rotate(
        np.asarray(attitude, dtype=float), np.asarray(relative_offset, dtype=float)
    )
