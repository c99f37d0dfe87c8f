"""Deterministic end-to-end scenario orchestration.

One fixed-step clock drives everything: physics at 100 Hz, camera frames
quantized onto physics ticks at the configured fps, and protocol events
(message deliveries, timers, actuator completions) from a deterministic
event queue ordered by (time, insertion sequence). All randomness flows
from named child streams of the run seed, so a (config, seed) pair maps
to byte-identical outputs.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import aero, protocol, transfer
from .config import (
    ScenarioConfig,
    make_battery_spec,
    make_downwash_table,
    make_intrinsics,
    make_latch_tolerances,
    make_layout,
    make_link,
    make_mount,
    make_nav_config,
    make_propeller_spec,
    make_protocol_config,
    make_slide_geometry,
    make_vehicle_params,
    make_wind,
    serialize_config,
)
from .geometry import EARTH_RADIUS_M, GpsCoordinate, Pose, quat_from_yaw, rotation_z
from .nav import NavCommand, NavPhase, NavState, nav_step, search_pattern
from .perception import MARKER_IDS, fuse_marker_poses, observe_markers
from .protocol import (
    ArrivedAtAnchor,
    BatteryCase,
    BatteryLow,
    CancelTimer,
    CloseSlides,
    Dispense,
    DispenseDone,
    DispenseFailed,
    EbsState,
    EngageHold,
    IrBatteryArrived,
    LatchFailed,
    MsgEvent,
    MsgKind,
    NavPhaseEvent,
    NoFullSlot,
    OpenSlides,
    ProtocolMessage,
    ReceiverState,
    ResumeMission,
    ReturnHome,
    Send,
    SlideClosed,
    SlideOpened,
    StartNav,
    StartTimer,
    TimerEvent,
    dispenser_step,
    ebs_fsm_step,
    link_transmit,
    receiver_fsm_step,
)
from .transfer import latch_check, slide_time
from .vehicle import IntegralState, SetpointCommand, VehicleState, step


# ---------------------------------------------------------------------------
# Local world <-> GPS mapping (spherical Earth, small-angle around an origin)
# ---------------------------------------------------------------------------

def world_to_gps(pos: np.ndarray, origin_lat: float, origin_lon: float) -> GpsCoordinate:
    lat = origin_lat + float(pos[1]) / EARTH_RADIUS_M
    lon = origin_lon + float(pos[0]) / (EARTH_RADIUS_M * math.cos(origin_lat))
    return GpsCoordinate(latitude=lat, longitude=lon, altitude=float(pos[2]))


def gps_to_world(gps: GpsCoordinate, origin_lat: float, origin_lon: float) -> np.ndarray:
    y = (gps.latitude - origin_lat) * EARTH_RADIUS_M
    x = (gps.longitude - origin_lon) * EARTH_RADIUS_M * math.cos(origin_lat)
    return np.array([x, y, gps.altitude])


# ---------------------------------------------------------------------------
# Run report
# ---------------------------------------------------------------------------

_TRACE_SCHEMA = "# schema: trace-v1"
_EVENTS_SCHEMA = "# schema: events-v1"


def _fmt(v: float) -> str:
    return format(v, ".10g")


@dataclass
class RunReport:
    seed: int
    rows: list[tuple] = field(default_factory=list)
    events: list[tuple[float, str, str]] = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    config_text: str = ""

    def trace_csv(self) -> str:
        lines = [_TRACE_SCHEMA, "t,x,y,z,e_cm,alpha_deg,phase,ebs_state,rec_state"]
        for r in self.rows:
            (t, ex, ey, ez, _rx, _ry, _rz, e_cm, alpha, phase, ebs_s, rec_s) = r
            lines.append(
                f"{_fmt(t)},{_fmt(ex)},{_fmt(ey)},{_fmt(ez)},"
                f"{_fmt(e_cm)},{_fmt(alpha)},{phase},{ebs_s},{rec_s}")
        return "\n".join(lines) + "\n"

    def events_csv(self) -> str:
        lines = [_EVENTS_SCHEMA, "t,event,detail"]
        for t, name, detail in self.events:
            lines.append(f"{_fmt(t)},{name},{detail}")
        return "\n".join(lines) + "\n"

    def summary_json(self) -> str:
        return json.dumps(self.summary, sort_keys=True, indent=2) + "\n"

    def receiver_positions(self) -> list[np.ndarray]:
        return [np.array([r[4], r[5], r[6]]) for r in self.rows]

    def write(self, outdir: str | Path, fmt: str = "csv") -> None:
        out = Path(outdir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "summary.json").write_text(self.summary_json())
        if fmt == "json":
            payload = {
                "trace": [list(r[:9]) + [r[9], r[10], r[11]] for r in self.rows],
                "events": [[t, n, d] for t, n, d in self.events],
            }
            (out / "trace.json").write_text(
                json.dumps(payload, sort_keys=True) + "\n")
        else:
            (out / "trace.csv").write_text(self.trace_csv())
            (out / "events.csv").write_text(self.events_csv())
        if self.config_text:
            (out / "config.txt").write_text(self.config_text)


# ---------------------------------------------------------------------------
# Full handoff simulation
# ---------------------------------------------------------------------------

_NAV_ACTIVE = (EbsState.SEARCHING, EbsState.ALIGNING, EbsState.LOCKED,
               EbsState.SLIDES_OPENING, EbsState.TRANSFERRING, EbsState.CLOSING)


class _HandoffSim:
    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        self.dt = cfg.run.physics_dt
        self.pcfg = make_protocol_config(cfg)
        self.nav_cfg = make_nav_config(cfg)
        self.intrinsics = make_intrinsics(cfg)
        self.mount = make_mount(cfg)
        self.layout = make_layout(cfg)
        self.table = make_downwash_table(cfg)
        self.prop = make_propeller_spec(cfg)
        self.link = make_link(cfg)
        self.geometry = make_slide_geometry(cfg)
        self.battery = make_battery_spec(cfg)
        self.latch_tol = make_latch_tolerances(cfg)
        self.wind_model = make_wind(cfg)
        self.ebs_params = make_vehicle_params(cfg, cfg.vehicle.ebs_mass)
        self.rec_params = make_vehicle_params(cfg, cfg.vehicle.receiver_mass)

        ss = np.random.SeedSequence(cfg.run.seed)
        kids = ss.spawn(4)
        self.rng_link = np.random.default_rng(kids[0])
        self.rng_gps = np.random.default_rng(kids[1])
        self.rng_camera = np.random.default_rng(kids[2])
        self.rng_wind = np.random.default_rng(kids[3])

        p = cfg.placement
        self.origin_lat = math.radians(p.origin_latitude_deg)
        self.origin_lon = math.radians(p.origin_longitude_deg)
        self.rec_hold = np.array([p.receiver_x, p.receiver_y, p.receiver_alt])
        self.rec_yaw = p.receiver_yaw
        self.home = np.array([p.ebs_home_x, p.ebs_home_y, p.ebs_home_alt])

        self.ebs = VehicleState(position=self.home.copy(), yaw=0.0)
        self.rec = VehicleState(position=self.rec_hold.copy(), yaw=self.rec_yaw,
                                battery_level=p.receiver_start_battery)
        self.ebs_integral = IntegralState()
        self.rec_integral = IntegralState()
        self.ebs_setpoint = self.home.copy()
        self.ebs_yaw_sp = 0.0
        self.ebs_vel_ff = np.zeros(3)
        self.gust = self.wind_model.initial_gust()

        self.ebs_ctx = protocol.EbsCtx()
        self.rec_ctx = protocol.ReceiverCtx()
        self.nav = NavState()
        self.nav_cmd = NavCommand()

        self.t = 0.0
        self.queue: list = []
        self.evseq = 0
        self.timer_gen: dict = {}
        self.msg_seq = {"ebs": 0, "receiver": 0}
        self.events: list[tuple[float, str, str]] = []
        self.rows: list[tuple] = []
        self.case = BatteryCase()

        self.anchor: np.ndarray | None = None
        self.arrived_sent = False
        self.battery_low_sent = False
        self.frame_idx = 0
        self.battery_in_transit = False
        self.latch_engaged = False
        self.open_commanded_at: float | None = None
        self.closed_at: float | None = None
        self.lock_time: float | None = None
        self.end_reason: str | None = None
        self.abort_reason: str | None = None

    # -- event plumbing ----------------------------------------------------

    def _log(self, name: str, detail: str = "") -> None:
        self.events.append((self.t, name, detail))

    def _schedule(self, when: float, kind: str, payload) -> None:
        heapq.heappush(self.queue, (when, self.evseq, kind, payload))
        self.evseq += 1

    def _start_timer(self, side: str, name: str, duration: float) -> None:
        key = (side, name)
        gen = self.timer_gen.get(key, 0) + 1
        self.timer_gen[key] = gen
        self._schedule(self.t + duration, "timer", (side, name, gen))

    def _cancel_timer(self, side: str, name: str) -> None:
        key = (side, name)
        self.timer_gen[key] = self.timer_gen.get(key, 0) + 1

    def _transmit(self, sender: str, send: Send) -> None:
        self.msg_seq[sender] += 1
        msg = ProtocolMessage(kind=send.kind, sender=sender,
                              seq=self.msg_seq[sender], payload=send.payload,
                              send_time=self.t)
        deliver_at = link_transmit(self.link, msg, self.t, self.rng_link)
        if deliver_at is None:
            self._log("msg_dropped", f"{sender}:{send.kind.value}")
            return
        self._log("msg_sent", f"{sender}:{send.kind.value}")
        self._schedule(deliver_at, "deliver", msg)

    # -- FSM wiring --------------------------------------------------------

    def _ebs_event(self, event) -> None:
        before = self.ebs_ctx.state
        self.ebs_ctx, actions = ebs_fsm_step(self.ebs_ctx, event, self.pcfg)
        if self.ebs_ctx.state is not before:
            self._log("ebs_state", f"{before.value}->{self.ebs_ctx.state.value}")
        self._apply_actions("ebs", actions)

    def _rec_event(self, event) -> None:
        before = self.rec_ctx.state
        self.rec_ctx, actions = receiver_fsm_step(self.rec_ctx, event, self.pcfg)
        if self.rec_ctx.state is not before:
            self._log("rec_state", f"{before.value}->{self.rec_ctx.state.value}")
        self._apply_actions("receiver", actions)

    def _apply_actions(self, side: str, actions) -> None:
        for act in actions:
            if isinstance(act, Send):
                self._transmit(side, act)
            elif isinstance(act, StartTimer):
                self._start_timer(side, act.name, act.duration)
            elif isinstance(act, CancelTimer):
                self._cancel_timer(side, act.name)
            elif isinstance(act, OpenSlides):
                if side == "ebs":
                    self.open_commanded_at = self.t
                    self._log("slides_open_commanded", "ebs")
                    self._schedule(self.t + self.geometry.actuation_time,
                                   "ebs_slide_opened", None)
                else:
                    self._log("slides_open_commanded", "receiver")
                    self._schedule(self.t + self.geometry.actuation_time,
                                   "rec_slide_opened", None)
            elif isinstance(act, CloseSlides):
                if side == "ebs" and self.open_commanded_at is not None \
                        and self.closed_at is None:
                    self._log("slides_close_commanded", "ebs")
                    self._schedule(self.t + self.geometry.actuation_time,
                                   "ebs_slide_closed", None)
            elif isinstance(act, Dispense):
                self._do_dispense()
            elif isinstance(act, EngageHold):
                self._log("position_hold_engaged", "receiver")
            elif isinstance(act, StartNav):
                self._begin_enroute(act.anchor)
            elif isinstance(act, ReturnHome):
                self._log("returning_home", "ebs")
            elif isinstance(act, ResumeMission):
                self._log("mission_resumed", "receiver")

    def _begin_enroute(self, gps_payload: tuple) -> None:
        lat, lon, alt = gps_payload
        reported = gps_to_world(GpsCoordinate(lat, lon, alt),
                                self.origin_lat, self.origin_lon)
        self.anchor = reported + np.array([0.0, 0.0, self.cfg.placement.anchor_height])
        self.arrived_sent = False
        direction = self.anchor - self.ebs.position
        if np.linalg.norm(direction[:2]) > 1e-6:
            self.ebs_yaw_sp = math.atan2(direction[1], direction[0])
        self._log("enroute", f"anchor=({self.anchor[0]:.2f},{self.anchor[1]:.2f},"
                             f"{self.anchor[2]:.2f})")

    def _do_dispense(self) -> None:
        if not latch_check(self._latch_pose(), self.latch_tol):
            self._log("latch_failed_at_release", "")
            self._ebs_event(LatchFailed("latch lost before release"))
            return
        try:
            self.case, released = dispenser_step(self.case, "dispense")
        except NoFullSlot:
            self._log("dispense_failed", "no full slot")
            self._ebs_event(DispenseFailed())
            return
        if released:
            self.latch_engaged = True
            self._log("battery_dispensed", f"slot={self.case.servo_position}")
            self._schedule(self.t + self.cfg.transfer.dispense_delay,
                           "dispense_done", None)

    def _latch_pose(self) -> "transfer.FrameTransform":
        from .geometry import FrameTransform
        back = np.array([-math.cos(self.rec.yaw), -math.sin(self.rec.yaw), 0.0])
        nominal = self.rec.position + self.nav_cfg.target_back_offset * back \
            + np.array([0.0, 0.0, self.nav_cfg.target_up_offset])
        dyaw = self.ebs.yaw - self.rec.yaw
        return FrameTransform(rotation_z(dyaw), self.ebs.position - nominal)

    # -- queue processing ----------------------------------------------------

    def _process_due_events(self) -> None:
        while self.queue and self.queue[0][0] <= self.t + 1e-9:
            _, _, kind, payload = heapq.heappop(self.queue)
            if kind == "deliver":
                msg: ProtocolMessage = payload
                self._log("msg_delivered", f"{msg.sender}:{msg.kind.value}")
                if msg.sender == "ebs":
                    self._rec_event(MsgEvent(msg))
                else:
                    self._ebs_event(MsgEvent(msg))
            elif kind == "timer":
                side, name, gen = payload
                if self.timer_gen.get((side, name)) != gen:
                    continue
                if side == "ebs":
                    self._ebs_event(TimerEvent(name))
                else:
                    self._rec_event(TimerEvent(name))
            elif kind == "ebs_slide_opened":
                self._log("ebs_slide_open", "")
                self._ebs_event(SlideOpened())
            elif kind == "rec_slide_opened":
                self._log("rec_slide_open", "")
                self._rec_event(SlideOpened())
            elif kind == "ebs_slide_closed":
                self.closed_at = self.t
                self._log("ebs_slide_closed", "")
                self._ebs_event(SlideClosed())
            elif kind == "dispense_done":
                self.battery_in_transit = True
                self._log("battery_released", "")
                self._schedule(self.t + slide_time(self.geometry, self.battery),
                               "ir_arrival", None)
                self._ebs_event(DispenseDone())
            elif kind == "ir_arrival":
                if self.battery_in_transit:
                    self.battery_in_transit = False
                    self._log("ir_arrival", "")
                    self.rec = VehicleState(
                        position=self.rec.position, velocity=self.rec.velocity,
                        yaw=self.rec.yaw, yaw_rate=self.rec.yaw_rate,
                        commanded_thrust_gf=self.rec.commanded_thrust_gf,
                        battery_level=100.0)
                    self._rec_event(IrBatteryArrived())

    # -- per-tick dynamics ---------------------------------------------------

    def _camera_due(self) -> bool:
        period = 1.0 / self.intrinsics.fps
        if self.t + 1e-9 >= self.frame_idx * period:
            self.frame_idx += 1
            return True
        return False

    def _run_camera_frame(self) -> None:
        obs = observe_markers(self.ebs.pose(), self.mount, self.rec.pose(),
                              self.layout, self.intrinsics,
                              self.cfg.camera.noise_sigma, self.rng_camera)
        fused = None
        if any(o.detected and o.marker_id == "center" for o in obs):
            try:
                fused = fuse_marker_poses(obs, self.layout, self.intrinsics)
            except Exception:
                fused = None
        before = self.nav.phase
        self.nav, self.nav_cmd = nav_step(self.nav, obs, fused,
                                          1.0 / self.intrinsics.fps,
                                          self.nav_cfg, self.mount)
        if self.nav.phase is not before:
            self._log("nav_phase", f"{before.value}->{self.nav.phase.value}")
            if self.nav.phase is NavPhase.LOCK and self.lock_time is None:
                self.lock_time = self.t
            # drop any stale setpoint offset carried over from the old phase
            self.ebs_setpoint = self.ebs.position.copy()
            self.ebs_yaw_sp = self.ebs.yaw
            self._ebs_event(NavPhaseEvent(self.nav.phase.value))

    def _update_ebs_setpoint(self) -> None:
        state = self.ebs_ctx.state
        if state in (EbsState.IDLE, EbsState.VERIFYING):
            self._slew_setpoint(self.home, 1.5)
        elif state is EbsState.ENROUTE and self.anchor is not None:
            self._slew_setpoint(self.anchor, 1.5)
            if not self.arrived_sent and \
                    float(np.linalg.norm(self.ebs.position - self.anchor)) < 0.3 \
                    and float(np.linalg.norm(self.ebs.velocity)) < 0.3:
                self.arrived_sent = True
                self._log("arrived_at_anchor", "")
                self.ebs_setpoint = self.anchor.copy()
                self._ebs_event(ArrivedAtAnchor())
        elif state in _NAV_ACTIVE:
            cmd = self.nav_cmd
            if (self.nav.phase is NavPhase.SEARCH and self.anchor is not None):
                # fly the expanding square around the anchor in position mode
                pattern = search_pattern(self.nav.search_elapsed, self.anchor,
                                         self.nav_cfg.search_speed,
                                         self.nav_cfg.search_leg_growth)
                self._slew_setpoint(pattern, 1.0)
            else:
                c, s = math.cos(self.ebs.yaw), math.sin(self.ebs.yaw)
                vx = c * cmd.vel_x - s * cmd.vel_y
                vy = s * cmd.vel_x + c * cmd.vel_y
                self.ebs_vel_ff = np.array([vx, vy, cmd.vel_z])
                self.ebs_setpoint = self.ebs_setpoint + self.ebs_vel_ff * self.dt
                # leash: never let the setpoint run ahead of the vehicle
                delta = self.ebs_setpoint - self.ebs.position
                dist = float(np.linalg.norm(delta))
                if dist > 0.5:
                    self.ebs_setpoint = self.ebs.position + delta * (0.5 / dist)
            self.ebs_yaw_sp += cmd.yaw_rate * self.dt
        else:  # RETURNING_HOME or ABORTED
            self._slew_setpoint(self.home, 1.5)

    def _slew_setpoint(self, target: np.ndarray, rate: float) -> None:
        delta = target - self.ebs_setpoint
        dist = float(np.linalg.norm(delta))
        max_step = rate * self.dt
        if dist <= max_step:
            self.ebs_setpoint = target.copy()
        else:
            self.ebs_setpoint = self.ebs_setpoint + delta * (max_step / dist)

    def _watch_latch(self) -> None:
        # the magnets engage once the slides are deployed; until then there is
        # nothing to lose, and the release gate re-checks the envelope anyway
        if self.battery_in_transit and not latch_check(self._latch_pose(),
                                                       self.latch_tol):
            self.battery_in_transit = False
            self._log("latch_lost_in_transit", "battery lost")
            self._ebs_event(LatchFailed("latch lost in transit"))

    def _physics(self) -> None:
        self.gust = self.wind_model.step_gust(self.gust, self.dt, self.rng_wind)
        wind = self.wind_model.sample(self.gust)

        dz = float(self.ebs.position[2] - self.rec.position[2])
        if 0.0 < dz < 0.10:
            # closer than the model floor: clamp to the nearest defined row
            ebs_probe = self.ebs.position.copy()
            ebs_probe[2] = self.rec.position[2] + 0.10
            disturbance = aero.disturbance_on_receiver(
                ebs_probe, self.rec.position, self.table, self.prop)
        else:
            disturbance = aero.disturbance_on_receiver(
                self.ebs.position, self.rec.position, self.table, self.prop)

        ei = self.ebs_integral.update(self.ebs, self.ebs_setpoint, self.dt,
                                      self.ebs_params)
        self.ebs = step(self.ebs,
                        SetpointCommand(self.ebs_setpoint, self.ebs_yaw_sp, ei,
                                        self.ebs_vel_ff),
                        aero.Disturbance.none(), wind, self.dt, self.ebs_params)
        self.ebs_vel_ff = np.zeros(3)
        ri = self.rec_integral.update(self.rec, self.rec_hold, self.dt,
                                      self.rec_params)
        self.rec = step(self.rec,
                        SetpointCommand(self.rec_hold, self.rec_yaw, ri),
                        disturbance, wind, self.dt, self.rec_params)

    def _trace(self) -> None:
        err = self.nav.last_errors
        e_cm = err.e_m * 100.0 if err is not None else float("nan")
        alpha = err.alpha_deg if err is not None else float("nan")
        self.rows.append((
            self.t,
            float(self.ebs.position[0]), float(self.ebs.position[1]),
            float(self.ebs.position[2]),
            float(self.rec.position[0]), float(self.rec.position[1]),
            float(self.rec.position[2]),
            e_cm, alpha,
            self.nav.phase.value, self.ebs_ctx.state.value, self.rec_ctx.state.value,
        ))

    def _check_battery_low(self) -> None:
        if not self.battery_low_sent and \
                self.rec.battery_level <= self.cfg.placement.battery_threshold:
            self.battery_low_sent = True
            true_gps = world_to_gps(self.rec.position, self.origin_lat, self.origin_lon)
            noise_xy = self.rng_gps.normal(0.0, self.cfg.placement.gps_sigma_horizontal, 2)
            noise_z = self.rng_gps.normal(0.0, self.cfg.placement.gps_sigma_vertical)
            reported = world_to_gps(
                self.rec.position + np.array([noise_xy[0], noise_xy[1], noise_z]),
                self.origin_lat, self.origin_lon)
            self._log("battery_low", f"level={self.rec.battery_level:.2f}")
            del true_gps
            self._rec_event(BatteryLow(
                gps=(reported.latitude, reported.longitude, reported.altitude)))

    def _finished(self) -> bool:
        if self.ebs_ctx.state is EbsState.ABORTED \
                or self.rec_ctx.state is ReceiverState.ABORTED:
            self.end_reason = "aborted"
            return True
        if self.ebs_ctx.state is EbsState.RETURNING_HOME and self.rec_ctx.has_battery:
            self.end_reason = "transfer_done"
            return True
        return False

    def run(self) -> RunReport:
        n_ticks = int(round(self.cfg.run.duration / self.dt))
        for tick in range(n_ticks):
            self.t = tick * self.dt
            self._process_due_events()
            self._check_battery_low()
            if self.ebs_ctx.state in _NAV_ACTIVE and self._camera_due():
                self._run_camera_frame()
            self._watch_latch()
            self._update_ebs_setpoint()
            self._physics()
            self._trace()
            if self._finished():
                break
        if self.end_reason is None:
            self.end_reason = "duration_cap"
        return self._report()

    def _report(self) -> RunReport:
        from .vehicle import displacement_metric
        rec_positions = [np.array([r[4], r[5], r[6]]) for r in self.rows]
        max_disp = displacement_metric(rec_positions, self.rec_hold) if rec_positions else 0.0
        transfer_duration = None
        if self.open_commanded_at is not None and self.closed_at is not None:
            transfer_duration = self.closed_at - self.open_commanded_at
        abort_reason = None
        for _, name, detail in self.events:
            if name == "msg_sent" and "abort" in detail:
                abort_reason = detail
                break
        summary = {
            "seed": self.cfg.run.seed,
            "end_reason": self.end_reason,
            "success": self.end_reason == "transfer_done",
            "sim_time_end": round(self.t, 6),
            "ebs_final_state": self.ebs_ctx.state.value,
            "rec_final_state": self.rec_ctx.state.value,
            "lock_time": None if self.lock_time is None else round(self.lock_time, 4),
            "slides_open_time": None if self.open_commanded_at is None
            else round(self.open_commanded_at, 4),
            "slides_closed_time": None if self.closed_at is None
            else round(self.closed_at, 4),
            "transfer_duration": None if transfer_duration is None
            else round(transfer_duration, 4),
            "max_receiver_displacement_m": round(max_disp, 6),
            "batteries_dispensed": self.case.dispensed_count,
            "abort_reason": abort_reason,
            "n_trace_rows": len(self.rows),
        }
        report = RunReport(seed=self.cfg.run.seed, rows=self.rows,
                           events=self.events, summary=summary,
                           config_text=serialize_config(self.cfg))
        return report


def run_scenario(cfg: ScenarioConfig) -> RunReport:
    """Run the full battery-handoff scenario described by the config."""
    return _HandoffSim(cfg).run()


# ---------------------------------------------------------------------------
# Lightweight closed-loop alignment run (no protocol, no link)
# ---------------------------------------------------------------------------

@dataclass
class AlignRunResult:
    lock_time: float | None
    est_errors: list[tuple[float, float]]        # (e_m, alpha_deg) per frame
    steady_est_errors: list[tuple[float, float]]  # frames after lock + settle
    true_errors: list[tuple[float, float]]
    reached_lock: bool


def run_align_loop(cfg: ScenarioConfig, seed: int,
                   visible_ids: tuple[str, ...] = MARKER_IDS,
                   noise_sigma: float | None = None,
                   duration: float | None = None,
                   settle_after_lock: float = 3.0,
                   start_range: tuple[float, float] = (1.0, 0.7),
                   start_azimuth_offset: float = 0.0,
                   wind_off: bool = True) -> AlignRunResult:
    """Closed-loop align/lock run starting inside the visibility envelope.

    The EBS begins at the given (horizontal, vertical) offsets from the
    receiver, rotated ``start_azimuth_offset`` radians away from the back
    axis, facing the receiver so the first frame can detect; it then flies
    the perception-nav loop to LOCK. Estimated and true alignment errors
    are recorded per camera frame.
    """
    dt = cfg.run.physics_dt
    nav_cfg = make_nav_config(cfg)
    intrinsics = make_intrinsics(cfg)
    mount = make_mount(cfg)
    layout = make_layout(cfg)
    table = make_downwash_table(cfg)
    prop = make_propeller_spec(cfg)
    ebs_params = make_vehicle_params(cfg, cfg.vehicle.ebs_mass)
    rec_params = make_vehicle_params(cfg, cfg.vehicle.receiver_mass)
    wind_model = make_wind(cfg)
    sigma = cfg.camera.noise_sigma if noise_sigma is None else noise_sigma
    duration = duration if duration is not None else cfg.experiment.cmp_duration

    ss = np.random.SeedSequence([cfg.run.seed, seed])
    kids = ss.spawn(2)
    rng_camera = np.random.default_rng(kids[0])
    rng_wind = np.random.default_rng(kids[1])

    rec_hold = np.array([0.0, 0.0, 2.0])
    rec_yaw = 0.4 + 0.1 * seed - 0.05 * (seed % 3)
    az = rec_yaw + math.pi + start_azimuth_offset
    h, v = start_range
    ebs_start = rec_hold + np.array([h * math.cos(az), h * math.sin(az), v])
    back = np.array([-math.cos(rec_yaw), -math.sin(rec_yaw), 0.0])
    ebs_yaw0 = math.atan2(rec_hold[1] - ebs_start[1], rec_hold[0] - ebs_start[0])

    rec = VehicleState(position=rec_hold.copy(), yaw=rec_yaw)
    ebs = VehicleState(position=ebs_start.copy(), yaw=ebs_yaw0)
    ebs_integral, rec_integral = IntegralState(), IntegralState()
    ebs_setpoint = ebs_start.copy()
    ebs_yaw_sp = ebs_yaw0
    gust = wind_model.initial_gust()

    nav = NavState()
    nav_cmd = NavCommand()
    vel_ff = np.zeros(3)
    frame_idx = 0
    lock_time = None
    est_errors: list[tuple[float, float]] = []
    steady: list[tuple[float, float]] = []
    true_errors: list[tuple[float, float]] = []

    n_ticks = int(round(duration / dt))
    for tick in range(n_ticks):
        t = tick * dt
        period = 1.0 / intrinsics.fps
        if t + 1e-9 >= frame_idx * period:
            frame_idx += 1
            obs = observe_markers(ebs.pose(), mount, rec.pose(), layout,
                                  intrinsics, sigma, rng_camera,
                                  visible_ids=visible_ids)
            fused = None
            if any(o.detected and o.marker_id == "center" for o in obs):
                try:
                    fused = fuse_marker_poses(obs, layout, intrinsics)
                except Exception:
                    fused = None
            phase_before = nav.phase
            nav, nav_cmd = nav_step(nav, obs, fused, period, nav_cfg, mount)
            if nav.phase is not phase_before:
                ebs_setpoint = ebs.position.copy()
                ebs_yaw_sp = ebs.yaw
            if nav.phase is NavPhase.LOCK and lock_time is None:
                lock_time = t
            if nav.last_errors is not None:
                pair = (nav.last_errors.e_m, nav.last_errors.alpha_deg)
                est_errors.append(pair)
                if lock_time is not None and t >= lock_time + settle_after_lock:
                    steady.append(pair)
                    target_true = rec.position + nav_cfg.target_back_offset * back \
                        + np.array([0.0, 0.0, nav_cfg.target_up_offset])
                    e_true = float(np.linalg.norm(ebs.position - target_true))
                    a_true = math.degrees(abs(math.atan2(
                        math.sin(ebs.yaw - rec_yaw), math.cos(ebs.yaw - rec_yaw))))
                    true_errors.append((e_true, a_true))

        c, s = math.cos(ebs.yaw), math.sin(ebs.yaw)
        vx = c * nav_cmd.vel_x - s * nav_cmd.vel_y
        vy = s * nav_cmd.vel_x + c * nav_cmd.vel_y
        vel_ff = np.array([vx, vy, nav_cmd.vel_z])
        ebs_setpoint = ebs_setpoint + vel_ff * dt
        delta = ebs_setpoint - ebs.position
        dist = float(np.linalg.norm(delta))
        if dist > 0.5:
            ebs_setpoint = ebs.position + delta * (0.5 / dist)
        ebs_yaw_sp += nav_cmd.yaw_rate * dt

        if not wind_off:
            gust = wind_model.step_gust(gust, dt, rng_wind)
            wind = wind_model.sample(gust)
        else:
            wind = np.zeros(3)
        disturbance = aero.disturbance_on_receiver(ebs.position, rec.position,
                                                   table, prop)
        ei = ebs_integral.update(ebs, ebs_setpoint, dt, ebs_params)
        ebs = step(ebs, SetpointCommand(ebs_setpoint, ebs_yaw_sp, ei, vel_ff),
                   aero.Disturbance.none(), wind, dt, ebs_params)
        vel_ff = np.zeros(3)
        ri = rec_integral.update(rec, rec_hold, dt, rec_params)
        rec = step(rec, SetpointCommand(rec_hold, rec_yaw, ri),
                   disturbance, wind, dt, rec_params)

    return AlignRunResult(lock_time=lock_time, est_errors=est_errors,
                          steady_est_errors=steady, true_errors=true_errors,
                          reached_lock=lock_time is not None)
