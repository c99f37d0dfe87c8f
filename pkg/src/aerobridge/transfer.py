"""Slide geometry, magnet latch envelope, and gravity-slide timing.

The two 45-degree slides (230 mm on the dispensing drone, 210 mm on the
receiver) form a single inclined channel once latched; the battery starts
from rest and slides the combined length under gravity minus Coulomb
friction. The magnet capture envelope is sized to strictly contain the
navigation lock thresholds, so a locked approach is always latchable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .aero import GRAVITY
from .geometry import FrameTransform


class StuckBattery(ValueError):
    """Friction balances or exceeds the gravity component along the slide."""


class LatchLost(RuntimeError):
    """Relative pose left the magnet capture envelope mid-transfer."""


@dataclass(frozen=True)
class SlideGeometry:
    ebs_slide_length: float = 0.230     # m
    receiver_slide_length: float = 0.210
    incline: float = math.radians(45.0)
    actuation_time: float = 1.5         # s per open or close

    def total_length(self) -> float:
        return self.ebs_slide_length + self.receiver_slide_length

    def validate(self) -> None:
        if not 0.0 < self.incline < math.pi / 2.0:
            raise ValueError("incline must be inside (0, 90) degrees")
        if self.ebs_slide_length <= 0 or self.receiver_slide_length <= 0:
            raise ValueError("slide lengths must be positive")


@dataclass(frozen=True)
class BatterySpec:
    mass: float = 0.4       # kg
    friction_mu: float = 0.2

    def validate(self) -> None:
        if self.mass <= 0:
            raise ValueError("battery mass must be positive")
        if self.friction_mu < 0:
            raise ValueError("friction coefficient must be non-negative")


@dataclass(frozen=True)
class LatchTolerances:
    max_lateral: float = 0.03            # m
    max_angle: float = math.radians(10.0)


@dataclass
class TransferTimeline:
    """Timestamps of the transfer stages, strictly increasing."""

    slides_open: float
    latch: float | None = None
    release: float | None = None
    ir_arrival: float | None = None
    slides_closed: float | None = None
    completed: bool = False
    abort_reason: str | None = None

    def total_duration(self) -> float:
        if self.slides_closed is None:
            raise ValueError("timeline incomplete: slides never closed")
        return self.slides_closed - self.slides_open

    def validate(self) -> None:
        stamps = [t for t in (self.slides_open, self.latch, self.release,
                              self.ir_arrival, self.slides_closed) if t is not None]
        if any(b <= a for a, b in zip(stamps, stamps[1:])):
            raise ValueError(f"timeline timestamps not strictly increasing: {stamps}")


def latch_check(relative_pose: FrameTransform,
                tolerances: LatchTolerances | None = None) -> bool:
    """Whether the magnet capture envelope holds for the tip-to-mouth pose.

    ``relative_pose`` is the EBS slide tip expressed in the receiver slide
    mouth frame; identity means perfect alignment.
    """
    tol = tolerances or LatchTolerances()
    offset = float(np.linalg.norm(relative_pose.translation))
    if offset > tol.max_lateral:
        return False
    # rotation angle from the trace: trace(R) = 1 + 2 cos(theta)
    cos_angle = (float(np.trace(relative_pose.rotation)) - 1.0) / 2.0
    angle = math.acos(max(-1.0, min(1.0, cos_angle)))
    return angle <= tol.max_angle


def slide_acceleration(battery: BatterySpec, incline: float,
                       g: float = GRAVITY) -> float:
    a = g * (math.sin(incline) - battery.friction_mu * math.cos(incline))
    if a <= 0.0:
        raise StuckBattery(
            f"mu={battery.friction_mu} >= tan(incline)={math.tan(incline):.4f}; "
            "battery will not move")
    return a


def slide_time(geometry: SlideGeometry, battery: BatterySpec,
               g: float = GRAVITY) -> float:
    """Time for the battery to traverse both slides from rest: sqrt(2 L / a)."""
    geometry.validate()
    battery.validate()
    a = slide_acceleration(battery, geometry.incline, g)
    return math.sqrt(2.0 * geometry.total_length() / a)


def run_transfer(geometry: SlideGeometry, battery: BatterySpec,
                 start_time: float = 0.0,
                 dispense_delay: float = 0.01,
                 latch_ok: Callable[[float], bool] | bool = True,
                 g: float = GRAVITY) -> TransferTimeline:
    """Compose the open / release / slide / close timeline.

    ``latch_ok`` reports whether the capture envelope holds at a given
    time; losing it before release truncates the timeline with the battery
    retained, losing it during the slide raises LatchLost.
    """
    probe = latch_ok if callable(latch_ok) else (lambda _t: bool(latch_ok))
    timeline = TransferTimeline(slides_open=start_time)
    open_done = start_time + geometry.actuation_time
    if not probe(open_done):
        timeline.abort_reason = "latch lost before release"
        timeline.slides_closed = open_done + geometry.actuation_time
        timeline.validate()
        return timeline
    timeline.latch = open_done
    timeline.release = open_done + dispense_delay
    duration = slide_time(geometry, battery, g)
    arrival = timeline.release + duration
    if not probe(arrival):
        raise LatchLost("capture envelope lost while the battery was in transit")
    timeline.ir_arrival = arrival
    timeline.slides_closed = arrival + geometry.actuation_time
    timeline.completed = True
    timeline.validate()
    return timeline
