"""Scenario configuration: flat dotted-key text, strictly parsed.

One ``section.field = value`` pair per line, ``#`` comments allowed.
Unknown keys are errors so typos cannot silently fall back to defaults.
``parse -> serialize -> parse`` is the identity.

Downwash table cells can be overridden with keys like::

    aero.cell.15.50.delta_thrust_gf = 200.0

where the segments are alt in centimeters (15/30/45/60), overlap percent
(0/50/100), and the sample field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .aero import (
    DEFAULT_LATERAL_COEF,
    DownwashSample,
    DownwashTable,
    PropellerSpec,
)
from .nav import NavConfig
from .perception import CameraIntrinsics, CameraMount, CmpLayout
from .protocol import LinkModel, ProtocolConfig
from .transfer import BatterySpec, LatchTolerances, SlideGeometry
from .vehicle import VehicleParams, WindModel


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass
class RunSection:
    seed: int = 42
    duration: float = 180.0
    physics_dt: float = 0.01


@dataclass
class VehicleSection:
    ebs_mass: float = 3.2
    receiver_mass: float = 2.6
    frame_size: float = 0.695
    max_lift_kgf: float = 4.8
    pos_p: float = 2.0
    pos_d: float = 2.8
    pos_i: float = 0.5
    integral_limit: float = 2.0
    yaw_p: float = 2.0
    drag_coef: float = 0.30
    battery_drain: float = 0.02


@dataclass
class AeroSection:
    prop_diameter: float = 0.3302
    rpm: float = 5000.0
    nominal_thrust_gf: float = 1200.0
    nominal_airflow: float = 9.6
    lateral_coef: float = DEFAULT_LATERAL_COEF
    cell_overrides: dict[tuple[int, int, str], float] = field(default_factory=dict)


@dataclass
class CameraSection:
    fx: float = 600.0
    fy: float = 600.0
    skew: float = 0.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480
    fps: float = 30.0
    noise_sigma: float = 0.5
    mount_tilt_deg: float = 45.0
    mount_offset_x: float = 0.0
    mount_offset_y: float = 0.0
    mount_offset_z: float = 0.0


@dataclass
class LayoutSection:
    center_side: float = 0.070
    satellite_side: float = 0.030
    satellite_offset: float = 0.12


@dataclass
class NavSection:
    lock_e_max: float = 0.02
    lock_alpha_max_deg: float = 2.0
    lock_frames: int = 10
    target_back_offset: float = 0.5
    target_up_offset: float = 0.5
    align_gain: float = 0.5
    yaw_gain: float = 1.0
    vertical_first_gate: float = 0.2
    lost_timeout: float = 1.0
    vel_limit: float = 1.0
    yaw_rate_limit: float = 0.5
    search_speed: float = 0.5
    search_leg_growth: float = 0.5
    search_spin_rate: float = 0.4


@dataclass
class LinkSection:
    loss_probability: float = 0.05
    base_latency: float = 0.020
    jitter: float = 0.010


@dataclass
class ProtocolSection:
    retransmit_interval: float = 0.5
    max_attempts: int = 5
    retransmission_enabled: bool = True
    verification_timeout: float = 3.0
    lock_timeout: float = 120.0
    slide_ack_timeout: float = 2.0
    transfer_timeout: float = 3.0


@dataclass
class WindSection:
    ambient_x: float = 4.0
    ambient_y: float = 0.0
    ambient_z: float = 0.0
    gust_sigma: float = 0.0
    gust_tau: float = 2.0
    cap: float = 4.0


@dataclass
class TransferSection:
    ebs_slide_length: float = 0.230
    receiver_slide_length: float = 0.210
    incline_deg: float = 45.0
    actuation_time: float = 1.5
    battery_mass: float = 0.4
    friction_mu: float = 0.2
    latch_max_lateral: float = 0.03
    latch_max_angle_deg: float = 10.0
    dispense_delay: float = 0.01


@dataclass
class PlacementSection:
    receiver_x: float = 0.0
    receiver_y: float = 0.0
    receiver_alt: float = 2.5
    receiver_yaw: float = 0.7
    ebs_home_x: float = 4.0
    ebs_home_y: float = -3.0
    ebs_home_alt: float = 1.0
    battery_threshold: float = 20.0
    receiver_start_battery: float = 20.02
    gps_sigma_horizontal: float = 1.5
    gps_sigma_vertical: float = 0.5
    anchor_height: float = 1.0
    origin_latitude_deg: float = -33.77
    origin_longitude_deg: float = 151.11


@dataclass
class ExperimentSection:
    trajectory_iterations: int = 50
    trajectory_separation: float = 1.5
    trajectory_gps_sigma: float = 0.25
    trajectory_duration: float = 25.0
    cmp_iterations: int = 20
    cmp_duration: float = 25.0
    protocol_loss_budget: int = 2
    protocol_depth: int = 400


@dataclass
class ScenarioConfig:
    run: RunSection = field(default_factory=RunSection)
    vehicle: VehicleSection = field(default_factory=VehicleSection)
    aero: AeroSection = field(default_factory=AeroSection)
    camera: CameraSection = field(default_factory=CameraSection)
    layout: LayoutSection = field(default_factory=LayoutSection)
    nav: NavSection = field(default_factory=NavSection)
    link: LinkSection = field(default_factory=LinkSection)
    protocol: ProtocolSection = field(default_factory=ProtocolSection)
    wind: WindSection = field(default_factory=WindSection)
    transfer: TransferSection = field(default_factory=TransferSection)
    placement: PlacementSection = field(default_factory=PlacementSection)
    experiment: ExperimentSection = field(default_factory=ExperimentSection)


def default_config() -> ScenarioConfig:
    return ScenarioConfig()


_ALT_CM = (15, 30, 45, 60)
_OVERLAP_PCT = (0, 50, 100)
_CELL_FIELDS = ("delta_thrust_gf", "airflow_pos_a", "airflow_pos_b", "lateral_push_n")


def _parse_scalar(path: str, raw: str, target_type: type):
    raw = raw.strip()
    try:
        if target_type is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from None


def _set_cell_override(cfg: ScenarioConfig, parts: list[str], raw: str, path: str) -> None:
    if len(parts) != 5:
        raise ConfigError(path, "cell keys look like aero.cell.<alt_cm>.<overlap>.<field>")
    try:
        alt_cm, overlap = int(parts[2]), int(parts[3])
    except ValueError:
        raise ConfigError(path, "alt and overlap segments must be integers") from None
    if alt_cm not in _ALT_CM:
        raise ConfigError(path, f"alt {alt_cm} cm is not a grid row {_ALT_CM}")
    if overlap not in _OVERLAP_PCT:
        raise ConfigError(path, f"overlap {overlap}% is not a grid column {_OVERLAP_PCT}")
    if parts[4] not in _CELL_FIELDS:
        raise ConfigError(path, f"unknown cell field {parts[4]!r}")
    cfg.aero.cell_overrides[(alt_cm, overlap, parts[4])] = _parse_scalar(path, raw, float)


def parse_config(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    cfg = base or default_config()
    sections = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {stripped!r}")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        parts = key.split(".")
        if parts[0] == "aero" and len(parts) > 2 and parts[1] == "cell":
            _set_cell_override(cfg, parts, raw, key)
            continue
        if len(parts) != 2:
            raise ConfigError(key, "expected section.field")
        section_name, field_name = parts
        section = sections.get(section_name)
        if section is None:
            raise ConfigError(key, f"unknown section {section_name!r}")
        section_fields = {f.name: f for f in fields(section)}
        if field_name not in section_fields:
            raise ConfigError(key, f"unknown field {field_name!r} in section {section_name!r}")
        target_type = type(getattr(section, field_name))
        setattr(section, field_name, _parse_scalar(key, raw, target_type))
    return cfg


def _format_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: ScenarioConfig) -> str:
    lines = ["# aerobridge scenario config (schema v1)"]
    for section_field in fields(cfg):
        section = getattr(cfg, section_field.name)
        for f in fields(section):
            if f.name == "cell_overrides":
                continue
            value = getattr(section, f.name)
            lines.append(f"{section_field.name}.{f.name} = {_format_scalar(value)}")
    for (alt_cm, overlap, name), value in sorted(cfg.aero.cell_overrides.items()):
        lines.append(f"aero.cell.{alt_cm}.{overlap}.{name} = {_format_scalar(value)}")
    return "\n".join(lines) + "\n"


def load_config(path: str | Path) -> ScenarioConfig:
    return parse_config(Path(path).read_text())


def save_config(cfg: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(serialize_config(cfg))


# ---------------------------------------------------------------------------
# Builders: config sections -> model objects
# ---------------------------------------------------------------------------

def make_propeller_spec(cfg: ScenarioConfig) -> PropellerSpec:
    a = cfg.aero
    return PropellerSpec(diameter=a.prop_diameter, rpm=a.rpm,
                         nominal_thrust_gf=a.nominal_thrust_gf,
                         nominal_airflow=a.nominal_airflow)


def make_downwash_table(cfg: ScenarioConfig) -> DownwashTable:
    spec = make_propeller_spec(cfg)
    overrides: dict[tuple[float, float], DownwashSample] = {}
    by_cell: dict[tuple[int, int], dict[str, float]] = {}
    for (alt_cm, overlap, name), value in cfg.aero.cell_overrides.items():
        by_cell.setdefault((alt_cm, overlap), {})[name] = value
    base = DownwashTable.default(spec=spec, lateral_coef=cfg.aero.lateral_coef)
    for (alt_cm, overlap), patch in by_cell.items():
        key = (alt_cm / 100.0, float(overlap))
        current = base.cells[key]
        overrides[key] = DownwashSample(
            delta_thrust_gf=patch.get("delta_thrust_gf", current.delta_thrust_gf),
            airflow_pos_a=patch.get("airflow_pos_a", current.airflow_pos_a),
            airflow_pos_b=patch.get("airflow_pos_b", current.airflow_pos_b),
            lateral_push_n=patch.get("lateral_push_n", current.lateral_push_n),
        )
    if not overrides:
        return base
    return DownwashTable.default(spec=spec, lateral_coef=cfg.aero.lateral_coef,
                                 overrides=overrides)


def make_intrinsics(cfg: ScenarioConfig) -> CameraIntrinsics:
    c = cfg.camera
    return CameraIntrinsics(fx=c.fx, fy=c.fy, skew=c.skew, cx=c.cx, cy=c.cy,
                            width=c.width, height=c.height, fps=c.fps)


def make_mount(cfg: ScenarioConfig) -> CameraMount:
    c = cfg.camera
    return CameraMount(tilt=math.radians(c.mount_tilt_deg),
                       offset=np.array([c.mount_offset_x, c.mount_offset_y,
                                        c.mount_offset_z]))


def make_layout(cfg: ScenarioConfig) -> CmpLayout:
    lay = cfg.layout
    return CmpLayout(center_side=lay.center_side, satellite_side=lay.satellite_side,
                     satellite_offset=lay.satellite_offset)


def make_nav_config(cfg: ScenarioConfig) -> NavConfig:
    n = cfg.nav
    return NavConfig(lock_e_max=n.lock_e_max, lock_alpha_max_deg=n.lock_alpha_max_deg,
                     lock_frames=n.lock_frames, target_back_offset=n.target_back_offset,
                     target_up_offset=n.target_up_offset, align_gain=n.align_gain,
                     yaw_gain=n.yaw_gain, vertical_first_gate=n.vertical_first_gate,
                     lost_timeout=n.lost_timeout, vel_limit=n.vel_limit,
                     yaw_rate_limit=n.yaw_rate_limit, search_speed=n.search_speed,
                     search_leg_growth=n.search_leg_growth,
                     search_spin_rate=n.search_spin_rate)


def make_link(cfg: ScenarioConfig) -> LinkModel:
    ln = cfg.link
    return LinkModel(loss_probability=ln.loss_probability,
                     base_latency=ln.base_latency, jitter=ln.jitter)


def make_protocol_config(cfg: ScenarioConfig, mutant: str | None = None) -> ProtocolConfig:
    p = cfg.protocol
    return ProtocolConfig(retransmit_interval=p.retransmit_interval,
                          max_attempts=p.max_attempts,
                          retransmission_enabled=p.retransmission_enabled,
                          verification_timeout=p.verification_timeout,
                          lock_timeout=p.lock_timeout,
                          slide_ack_timeout=p.slide_ack_timeout,
                          transfer_timeout=p.transfer_timeout,
                          mutant=mutant)


def make_wind(cfg: ScenarioConfig) -> WindModel:
    w = cfg.wind
    return WindModel(ambient=np.array([w.ambient_x, w.ambient_y, w.ambient_z]),
                     gust_sigma=w.gust_sigma, gust_tau=w.gust_tau, cap=w.cap)


def make_vehicle_params(cfg: ScenarioConfig, mass: float) -> VehicleParams:
    v = cfg.vehicle
    params = VehicleParams(mass=mass, frame_size=v.frame_size,
                           max_lift_kgf=v.max_lift_kgf, pos_p=v.pos_p, pos_d=v.pos_d,
                           pos_i=v.pos_i, integral_limit=v.integral_limit,
                           yaw_p=v.yaw_p, drag_coef=v.drag_coef,
                           battery_drain=v.battery_drain)
    params.validate()
    return params


def make_slide_geometry(cfg: ScenarioConfig) -> SlideGeometry:
    t = cfg.transfer
    return SlideGeometry(ebs_slide_length=t.ebs_slide_length,
                         receiver_slide_length=t.receiver_slide_length,
                         incline=math.radians(t.incline_deg),
                         actuation_time=t.actuation_time)


def make_battery_spec(cfg: ScenarioConfig) -> BatterySpec:
    t = cfg.transfer
    return BatterySpec(mass=t.battery_mass, friction_mu=t.friction_mu)


def make_latch_tolerances(cfg: ScenarioConfig) -> LatchTolerances:
    t = cfg.transfer
    return LatchTolerances(max_lateral=t.latch_max_lateral,
                           max_angle=math.radians(t.latch_max_angle_deg))
