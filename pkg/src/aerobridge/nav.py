"""Docking navigation: coarse search, fine alignment, position lock.

Three-phase state machine driven at camera rate. SEARCH flies an
expanding-square pattern (with a slow spin so the tilted camera sweeps
all bearings) until the large center marker is seen. ALIGN closes on the
dock standoff behind the receiver with proportional velocity commands,
correcting altitude before horizontal distance when both are far off.
LOCK requires the alignment errors to stay below thresholds for a run of
consecutive frames; losing detections for a full second falls back to
SEARCH through LOST.

Commands are body-frame velocities (x forward, y left, z up) plus a yaw
rate, each saturated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .perception import AlignmentErrors, CameraMount, FusedEstimate, MarkerObservation


class NavPhase(Enum):
    SEARCH = "SEARCH"
    ALIGN = "ALIGN"
    LOCK = "LOCK"
    LOST = "LOST"


@dataclass(frozen=True)
class NavConfig:
    lock_e_max: float = 0.02            # m
    lock_alpha_max_deg: float = 2.0
    lock_frames: int = 10
    target_back_offset: float = 0.5     # m behind the receiver, along -x body
    target_up_offset: float = 0.5       # m above the receiver
    align_gain: float = 0.5             # s^-1; keeps the cascade with the
                                        # position loop well damped
    yaw_gain: float = 1.0               # s^-1
    vertical_first_gate: float = 0.2    # m; both-axis error beyond this
    lost_timeout: float = 1.0           # s without any center detection
    vel_limit: float = 1.0              # m/s per axis
    yaw_rate_limit: float = 0.5         # rad/s
    search_speed: float = 0.5           # m/s along the pattern
    search_leg_growth: float = 0.5      # m added per lap
    search_spin_rate: float = 0.3       # rad/s camera sweep during search


@dataclass(frozen=True)
class NavCommand:
    vel_x: float = 0.0
    vel_y: float = 0.0
    vel_z: float = 0.0
    yaw_rate: float = 0.0

    def clamped(self, cfg: NavConfig) -> "NavCommand":
        v = cfg.vel_limit
        return NavCommand(
            vel_x=max(-v, min(v, self.vel_x)),
            vel_y=max(-v, min(v, self.vel_y)),
            vel_z=max(-v, min(v, self.vel_z)),
            yaw_rate=max(-cfg.yaw_rate_limit, min(cfg.yaw_rate_limit, self.yaw_rate)),
        )


@dataclass
class NavState:
    phase: NavPhase = NavPhase.SEARCH
    consecutive_good_frames: int = 0
    time: float = 0.0
    last_detection_time: float | None = None
    search_elapsed: float = 0.0
    search_yaw: float = 0.0
    last_estimate: FusedEstimate | None = None
    last_errors: AlignmentErrors | None = None


def lock_check(errors: AlignmentErrors, nav: NavState, cfg: NavConfig) -> bool:
    """Lock iff this frame is in tolerance and the good-frame run is long enough."""
    frame_good = errors.e_m <= cfg.lock_e_max and errors.alpha_deg <= cfg.lock_alpha_max_deg
    return frame_good and nav.consecutive_good_frames >= cfg.lock_frames


def search_pattern(elapsed: float, anchor: np.ndarray,
                   speed: float = 0.5, leg_growth: float = 0.5,
                   max_leg: float = 4.0) -> np.ndarray:
    """Setpoint on an expanding square around the anchor, altitude fixed.

    Legs come in pairs that grow by ``leg_growth`` per lap; the pattern is
    traversed at constant ``speed`` and never descends below the anchor.
    Once the legs reach ``max_leg`` (past which the markers would be out of
    detection range anyway) the spiral restarts from the anchor.
    """
    anchor = np.asarray(anchor, dtype=float)
    pairs = max(1, int(max_leg / leg_growth))
    cycle_path = leg_growth * pairs * (pairs + 1)
    remaining = (max(0.0, elapsed) * speed) % cycle_path
    x, y = 0.0, 0.0
    directions = ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0))
    k = 0
    while remaining > 0.0:
        leg = leg_growth * ((k // 2) + 1)
        dx, dy = directions[k % 4]
        run = min(leg, remaining)
        x += dx * run
        y += dy * run
        remaining -= run
        k += 1
    return np.array([anchor[0] + x, anchor[1] + y, anchor[2]])


def _receiver_in_body(fused: FusedEstimate, mount: CameraMount) -> np.ndarray:
    r_cb = mount.rotation_body_to_camera().T
    return r_cb @ fused.position + mount.offset


def _relative_geometry(fused: FusedEstimate, mount: CameraMount, cfg: NavConfig,
                       ) -> tuple[np.ndarray, AlignmentErrors, float]:
    """Target-offset error vector in the body frame, plus errors and bearing."""
    p_rec = _receiver_in_body(fused, mount)
    r_cb = mount.rotation_body_to_camera().T
    if fused.heading is not None:
        h = r_cb @ fused.heading
        hxy = h[:2]
        alpha = abs(math.degrees(math.atan2(h[1], h[0])))
    else:
        hxy = None
        alpha = 180.0  # undefined heading can never satisfy the lock
    radial = -p_rec[:2]
    norm = float(np.linalg.norm(radial))
    r_hat = radial / norm if norm > 1e-9 else np.array([-1.0, 0.0])
    if hxy is not None and float(np.linalg.norm(hxy)) > 1e-9:
        back = -hxy / float(np.linalg.norm(hxy))
    else:
        back = r_hat  # heading unknown: dock on the current approach side
    target = p_rec + np.array([
        cfg.target_back_offset * back[0],
        cfg.target_back_offset * back[1],
        cfg.target_up_offset,
    ])
    errors = AlignmentErrors(e_m=float(np.linalg.norm(target)), alpha_deg=alpha)
    bearing = math.atan2(p_rec[1], p_rec[0])
    return target, errors, bearing, r_hat, back


def _search_command(nav: NavState, dt: float, cfg: NavConfig) -> NavCommand:
    p0 = search_pattern(nav.search_elapsed, np.zeros(3), cfg.search_speed,
                        cfg.search_leg_growth)
    p1 = search_pattern(nav.search_elapsed + dt, np.zeros(3), cfg.search_speed,
                        cfg.search_leg_growth)
    v_world = (p1 - p0) / dt
    c, s = math.cos(-nav.search_yaw), math.sin(-nav.search_yaw)
    return NavCommand(
        vel_x=c * v_world[0] - s * v_world[1],
        vel_y=s * v_world[0] + c * v_world[1],
        vel_z=0.0,
        yaw_rate=cfg.search_spin_rate,
    ).clamped(cfg)


def nav_step(nav: NavState, observations: list[MarkerObservation],
             fused: FusedEstimate | None, dt: float,
             cfg: NavConfig, mount: CameraMount) -> tuple[NavState, NavCommand]:
    """Advance the navigation machine one camera frame."""
    nav = replace_shallow(nav)
    nav.time += dt
    detected = fused is not None
    if detected:
        nav.last_detection_time = nav.time
        nav.last_estimate = fused

    since_detection = (math.inf if nav.last_detection_time is None
                       else nav.time - nav.last_detection_time)

    if nav.phase is NavPhase.LOST:
        nav.phase = NavPhase.SEARCH
        nav.search_elapsed = 0.0
        nav.search_yaw = 0.0
        nav.consecutive_good_frames = 0

    if nav.phase is NavPhase.SEARCH:
        if detected:
            nav.phase = NavPhase.ALIGN
            nav.consecutive_good_frames = 0
        else:
            cmd = _search_command(nav, dt, cfg)
            nav.search_elapsed += dt
            nav.search_yaw += cfg.search_spin_rate * dt
            nav.last_errors = None
            return nav, cmd

    if nav.phase in (NavPhase.ALIGN, NavPhase.LOCK) and not detected:
        if since_detection > cfg.lost_timeout:
            nav.phase = NavPhase.LOST
            nav.consecutive_good_frames = 0
        # brief dropouts: hold position, keep the phase
        return nav, NavCommand()

    target, errors, bearing, r_hat, back = _relative_geometry(fused, mount, cfg)
    nav.last_errors = errors
    frame_good = (errors.e_m <= cfg.lock_e_max
                  and errors.alpha_deg <= cfg.lock_alpha_max_deg)
    nav.consecutive_good_frames = nav.consecutive_good_frames + 1 if frame_good else 0

    if nav.phase is NavPhase.LOCK and not frame_good:
        nav.phase = NavPhase.ALIGN
    elif nav.phase is NavPhase.ALIGN and lock_check(errors, nav, cfg):
        nav.phase = NavPhase.LOCK
    # LOCK keeps servoing the same correction law; it vanishes at the target

    p_rec = _receiver_in_body(fused, mount)
    ez = float(target[2])
    exy = math.hypot(float(target[0]), float(target[1]))
    v_sep = -float(p_rec[2])
    h_sep = math.hypot(float(p_rec[0]), float(p_rec[1]))
    u_in = p_rec[:2] / h_sep if h_sep > 1e-6 else np.array([1.0, 0.0])
    if abs(ez) > cfg.vertical_first_gate and exy > cfg.vertical_first_gate:
        # vertical-then-horizontal ordering: close altitude first, holding the
        # horizontal offset on the camera's 45-degree view cone (never closer
        # than the dock standoff, never overhead) so the markers stay in frame
        cone_h = max(cfg.target_back_offset, v_sep)
        radial = cfg.align_gain * (h_sep - cone_h)
        vel = np.array([radial * float(u_in[0]), radial * float(u_in[1]),
                        cfg.align_gain * ez])
    else:
        # altitude matched: cylindrical closure about the receiver. Hold the
        # standoff radius, orbit toward the back azimuth no faster than the
        # saturated yaw can track (backing off as the bearing error grows,
        # so the markers never sweep out of the horizontal field of view),
        # and trim altitude with the remaining axis.
        delta = math.atan2(float(r_hat[0] * back[1] - r_hat[1] * back[0]),
                           float(np.dot(r_hat, back)))
        t_hat = np.array([-r_hat[1], r_hat[0]])
        budget = 0.8 * cfg.yaw_rate_limit * h_sep \
            * max(0.0, 1.0 - abs(bearing) / 0.35)
        v_tan = max(-budget, min(budget, cfg.align_gain * h_sep * delta))
        v_rad = cfg.align_gain * (h_sep - cfg.target_back_offset)
        vel = np.array([
            v_rad * float(u_in[0]) + v_tan * float(t_hat[0]),
            v_rad * float(u_in[1]) + v_tan * float(t_hat[1]),
            cfg.align_gain * ez,
        ])
    cmd = NavCommand(
        vel_x=float(vel[0]),
        vel_y=float(vel[1]),
        vel_z=float(vel[2]),
        yaw_rate=cfg.yaw_gain * bearing,
    ).clamped(cfg)
    return nav, cmd


def replace_shallow(nav: NavState) -> NavState:
    return replace(nav)
