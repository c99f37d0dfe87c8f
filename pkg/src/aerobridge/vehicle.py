"""Reduced quadrotor dynamics: point mass with yaw, PD(+I) position hold.

The attitude transients of a real quad are irrelevant to the handoff
claims being reproduced (position displacement and alignment), so each
vehicle is a point mass driven by a saturated thrust vector, with yaw
following its command through a first-order lag. Physics run at a fixed
100 Hz step with semi-implicit Euler integration, which keeps runs
bit-reproducible for a given config and seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .aero import GRAVITY, Disturbance
from .geometry import Pose, quat_from_yaw


class UnreachableTarget(ValueError):
    """Trajectory target below ground."""


class EmptyTrace(ValueError):
    """Metric requested on an empty trace."""


@dataclass(frozen=True)
class VehicleParams:
    mass: float                     # kg, must stay below max lift
    frame_size: float = 0.695       # m
    max_lift_kgf: float = 4.8
    pos_p: float = 2.0              # s^-2
    pos_d: float = 2.8              # s^-1
    pos_i: float = 0.5              # s^-3, steady wind rejection
    integral_limit: float = 2.0     # m s, anti-windup clamp
    yaw_p: float = 2.0              # s^-1
    drag_coef: float = 0.30         # N per m/s of relative airspeed
    battery_drain: float = 0.02     # percent per second

    def validate(self) -> None:
        if self.mass >= self.max_lift_kgf:
            raise ValueError(f"mass {self.mass} kg exceeds max lift {self.max_lift_kgf} kgf")

    def max_lift_n(self) -> float:
        return self.max_lift_kgf * GRAVITY


@dataclass
class VehicleState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw: float = 0.0
    yaw_rate: float = 0.0
    commanded_thrust_gf: float = 0.0
    battery_level: float = 100.0

    def pose(self) -> Pose:
        return Pose(self.position.copy(), quat_from_yaw(self.yaw))

    def body_rates(self) -> np.ndarray:
        return np.array([0.0, 0.0, self.yaw_rate])


@dataclass(frozen=True)
class SetpointCommand:
    """Outer-loop command: hold this point at this yaw.

    ``integral`` is the accumulated position-error integral owned by the
    caller (zero disables integral action and leaves a pure PD law).
    ``velocity_ff`` shifts the damping reference so a moving setpoint is
    tracked without the proportional standing lag.
    """

    setpoint: np.ndarray
    yaw: float = 0.0
    integral: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity_ff: np.ndarray = field(default_factory=lambda: np.zeros(3))


def position_hold_command(state: VehicleState, setpoint: np.ndarray,
                          params: VehicleParams,
                          integral: np.ndarray | None = None,
                          velocity_ff: np.ndarray | None = None) -> np.ndarray:
    """PD position law with gravity feedforward; returns world force (N).

    Output is saturated to the vehicle's maximum lift; the vertical
    component is floored at zero (rotors cannot push down).
    """
    ex = float(setpoint[0] - state.position[0])
    ey = float(setpoint[1] - state.position[1])
    ez = float(setpoint[2] - state.position[2])
    ix = iy = iz = 0.0
    if integral is not None:
        ix, iy, iz = float(integral[0]), float(integral[1]), float(integral[2])
    vfx = vfy = vfz = 0.0
    if velocity_ff is not None:
        vfx, vfy, vfz = float(velocity_ff[0]), float(velocity_ff[1]), float(velocity_ff[2])
    m = params.mass
    fx = m * (params.pos_p * ex + params.pos_i * ix
              + params.pos_d * (vfx - float(state.velocity[0])))
    fy = m * (params.pos_p * ey + params.pos_i * iy
              + params.pos_d * (vfy - float(state.velocity[1])))
    fz = m * (params.pos_p * ez + params.pos_i * iz
              + params.pos_d * (vfz - float(state.velocity[2])))
    fz += m * GRAVITY
    fz = max(0.0, fz)
    norm = math.sqrt(fx * fx + fy * fy + fz * fz)
    limit = params.max_lift_n()
    if norm > limit:
        scale = limit / norm
        fx, fy, fz = fx * scale, fy * scale, fz * scale
    return np.array([fx, fy, fz])


def step(state: VehicleState, command: SetpointCommand, disturbance: Disturbance,
         wind: np.ndarray, dt: float, params: VehicleParams) -> VehicleState:
    """One semi-implicit Euler step of the point-mass dynamics.

    Forces: commanded thrust (deficit-reduced on the vertical channel),
    gravity, linear drag against the air mass (which carries the wind),
    and the lateral downwash push.
    """
    if not 0.0 < dt <= 0.02:
        raise ValueError(f"dt must be in (0, 0.02], got {dt}")
    force = position_hold_command(state, command.setpoint, params,
                                  command.integral, command.velocity_ff)
    thrust_gf = float(np.linalg.norm(force)) / GRAVITY * 1000.0
    deficit_n = disturbance.thrust_deficit_gf * GRAVITY / 1000.0
    fx, fy = float(force[0]), float(force[1])
    fz = max(0.0, float(force[2]) - deficit_n)

    vx, vy, vz = float(state.velocity[0]), float(state.velocity[1]), float(state.velocity[2])
    c = params.drag_coef
    fx += c * (float(wind[0]) - vx) + float(disturbance.force_n[0])
    fy += c * (float(wind[1]) - vy) + float(disturbance.force_n[1])
    fz += c * (float(wind[2]) - vz) + float(disturbance.force_n[2])
    fz -= params.mass * GRAVITY

    inv_m = 1.0 / params.mass
    vx += fx * inv_m * dt
    vy += fy * inv_m * dt
    vz += fz * inv_m * dt

    yaw_err = _wrap_pi(command.yaw - state.yaw)
    yaw_rate = params.yaw_p * yaw_err
    return VehicleState(
        position=np.array([
            float(state.position[0]) + vx * dt,
            float(state.position[1]) + vy * dt,
            float(state.position[2]) + vz * dt,
        ]),
        velocity=np.array([vx, vy, vz]),
        yaw=_wrap_pi(state.yaw + yaw_rate * dt),
        yaw_rate=yaw_rate,
        commanded_thrust_gf=thrust_gf,
        battery_level=max(0.0, state.battery_level - params.battery_drain * dt),
    )


def _wrap_pi(angle: float) -> float:
    return math.atan2(math.sin(angle), math.cos(angle))


# ---------------------------------------------------------------------------
# Approach trajectories
# ---------------------------------------------------------------------------

class TrajectoryKind(Enum):
    H_V = "H-V"   # horizontal alignment first, then vertical
    H_H = "H-H"   # both alignment movements horizontal (altitude pre-matched)
    V_V = "V-V"   # vertical only (horizontal standoff pre-achieved)
    V_H = "V-H"   # vertical alignment first, then horizontal


def plan_trajectory(kind: TrajectoryKind, start: np.ndarray, target: np.ndarray,
                    vertical_standoff: float = 0.5,
                    horizontal_standoff: float = 0.5) -> list[np.ndarray]:
    """Two-leg waypoint plan toward the diagonal dock standoff.

    ``target`` is the receiver hover position; the plan ends at the point
    ``vertical_standoff`` above it and ``horizontal_standoff`` short of it
    along the approach direction. Horizontal-first kinds fly the lateral
    leg at the start altitude; vertical-first kinds descend in place and
    then close laterally at the dock altitude.
    """
    start = np.asarray(start, dtype=float)
    target = np.asarray(target, dtype=float)
    if target[2] < 0.0:
        raise UnreachableTarget(f"target altitude {target[2]:.2f} m is below ground")
    if start[2] < 0.0:
        raise UnreachableTarget(f"start altitude {start[2]:.2f} m is below ground")

    dock_alt = target[2] + vertical_standoff
    away = start[:2] - target[:2]
    dist = float(np.linalg.norm(away))
    if dist < 1e-9:
        direction = np.array([1.0, 0.0])
    else:
        direction = away / dist
    dock_xy = target[:2] + horizontal_standoff * direction
    dock = np.array([dock_xy[0], dock_xy[1], dock_alt])

    if np.allclose(start, dock, atol=1e-9):
        return [dock]

    if kind in (TrajectoryKind.H_V, TrajectoryKind.H_H):
        legs = [np.array([dock_xy[0], dock_xy[1], start[2]]), dock]
    else:
        legs = [np.array([start[0], start[1], dock_alt]), dock]
    # drop a degenerate first leg (start already on it)
    if np.allclose(legs[0], start, atol=1e-9):
        legs = legs[1:]
    if len(legs) == 2 and np.allclose(legs[0], legs[1], atol=1e-9):
        legs = legs[1:]
    return legs


def displacement_metric(trace: list[np.ndarray], reference: np.ndarray) -> float:
    """Max horizontal deviation of a position trace from a hold point."""
    if not len(trace):
        raise EmptyTrace("displacement metric needs a non-empty trace")
    rx, ry = float(reference[0]), float(reference[1])
    worst = 0.0
    for p in trace:
        d = math.hypot(float(p[0]) - rx, float(p[1]) - ry)
        if d > worst:
            worst = d
    return worst


# ---------------------------------------------------------------------------
# Wind
# ---------------------------------------------------------------------------

@dataclass
class WindModel:
    """Constant ambient vector plus Ornstein-Uhlenbeck gusts, norm-capped."""

    ambient: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gust_sigma: float = 0.0
    gust_tau: float = 2.0
    cap: float = 4.0

    def initial_gust(self) -> np.ndarray:
        return np.zeros(3)

    def step_gust(self, gust: np.ndarray, dt: float, rng: np.random.Generator) -> np.ndarray:
        if self.gust_sigma <= 0.0:
            return gust
        decay = math.exp(-dt / self.gust_tau)
        scale = self.gust_sigma * math.sqrt(max(0.0, 1.0 - decay * decay))
        return gust * decay + scale * rng.standard_normal(3)

    def sample(self, gust: np.ndarray) -> np.ndarray:
        wind = self.ambient + gust
        norm = float(np.linalg.norm(wind))
        if norm > self.cap > 0.0:
            wind = wind * (self.cap / norm)
        return wind


@dataclass
class IntegralState:
    """Anti-windup position-error integral for one vehicle.

    Conditional integration: an axis accumulates only while its error is
    already small, so large setpoint steps are flown by the PD law alone
    and the integral only trims steady offsets (wind, constant pushes).
    """

    value: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gate: float = 0.35

    def update(self, state: VehicleState, setpoint: np.ndarray, dt: float,
               params: VehicleParams) -> np.ndarray:
        if params.pos_i <= 0.0:
            return self.value
        err = np.asarray(setpoint, dtype=float) - state.position
        active = np.abs(err) <= self.gate
        lim = params.integral_limit
        self.value = np.clip(self.value + err * active * dt, -lim, lim)
        return self.value
