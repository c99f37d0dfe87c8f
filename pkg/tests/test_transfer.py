import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aerobridge.geometry import FrameTransform, rotation_z
from aerobridge.transfer import (
    BatterySpec,
    LatchLost,
    LatchTolerances,
    SlideGeometry,
    StuckBattery,
    latch_check,
    run_transfer,
    slide_time,
)


def incline_time_oracle(length: float, accel: float, dt: float = 1e-6) -> float:
    """Numerically integrate constant-acceleration motion until the run-out."""
    s, v, t = 0.0, 0.0, 0.0
    while s < length:
        v += accel * dt
        s += v * dt
        t += dt
    return t


class TestLatch:
    def test_perfect_alignment(self):
        assert latch_check(FrameTransform(np.eye(3), np.zeros(3)))

    def test_lateral_offset_outside(self):
        assert not latch_check(FrameTransform(np.eye(3), np.array([0.05, 0, 0])))

    def test_angular_offset_outside(self):
        assert not latch_check(FrameTransform(rotation_z(math.radians(15)), np.zeros(3)))

    def test_lock_threshold_inside_capture_envelope(self):
        # navigation lock bound (2 cm, 2 deg) must imply latchable
        tf = FrameTransform(rotation_z(math.radians(2.0)), np.array([0.02, 0, 0]))
        assert latch_check(tf)

    @given(st.floats(0, 0.0299), st.floats(0, math.radians(9.9)))
    def test_envelope_interior(self, offset, angle):
        tf = FrameTransform(rotation_z(angle), np.array([offset, 0, 0]))
        assert latch_check(tf)


class TestSlideTime:
    def test_frictionless(self):
        t = slide_time(SlideGeometry(), BatterySpec(friction_mu=0.0))
        assert t == pytest.approx(0.356, abs=5e-4)

    def test_default_friction(self):
        t = slide_time(SlideGeometry(), BatterySpec(friction_mu=0.2))
        assert t == pytest.approx(0.398, abs=5e-4)

    def test_stuck_at_friction_balance(self):
        with pytest.raises(StuckBattery):
            slide_time(SlideGeometry(), BatterySpec(friction_mu=1.0))

    def test_matches_numeric_incline_oracle(self):
        geometry = SlideGeometry()
        for mu in (0.0, 0.1, 0.2, 0.35):
            battery = BatterySpec(friction_mu=mu)
            a = 9.81 * (math.sin(geometry.incline) - mu * math.cos(geometry.incline))
            oracle = incline_time_oracle(geometry.total_length(), a)
            assert slide_time(geometry, battery) == pytest.approx(oracle, abs=1e-3)

    @given(st.floats(0.0, 0.9), st.floats(math.radians(30), math.radians(80)))
    def test_monotone_in_friction(self, mu, incline):
        geometry = SlideGeometry(incline=incline)
        if mu >= math.tan(incline) - 1e-6:
            return
        t_low = slide_time(geometry, BatterySpec(friction_mu=mu * 0.5))
        t_high = slide_time(geometry, BatterySpec(friction_mu=mu))
        assert t_high >= t_low - 1e-12


class TestRunTransfer:
    def test_default_timeline(self):
        tl = run_transfer(SlideGeometry(), BatterySpec())
        assert tl.completed
        assert tl.total_duration() == pytest.approx(1.5 + 0.01 + 0.398 + 1.5, abs=2e-3)
        assert tl.total_duration() <= 5.0

    def test_stage_ordering(self):
        tl = run_transfer(SlideGeometry(), BatterySpec(), start_time=2.0)
        stamps = [tl.slides_open, tl.latch, tl.release, tl.ir_arrival, tl.slides_closed]
        assert all(b > a for a, b in zip(stamps, stamps[1:]))

    def test_latch_lost_before_release_retains_battery(self):
        tl = run_transfer(SlideGeometry(), BatterySpec(), latch_ok=False)
        assert not tl.completed
        assert tl.release is None
        assert tl.abort_reason is not None

    def test_latch_lost_in_transit_raises(self):
        # latch holds through release then fails while the battery slides
        def probe(t: float) -> bool:
            return t < 1.6
        with pytest.raises(LatchLost):
            run_transfer(SlideGeometry(), BatterySpec(), latch_ok=probe)

    def test_duration_monotone_in_friction_and_actuation(self):
        base = run_transfer(SlideGeometry(), BatterySpec(friction_mu=0.1)).total_duration()
        more_mu = run_transfer(SlideGeometry(), BatterySpec(friction_mu=0.3)).total_duration()
        slower = run_transfer(SlideGeometry(actuation_time=2.0),
                              BatterySpec(friction_mu=0.1)).total_duration()
        assert more_mu > base
        assert slower > base

    def test_three_sequential_transfers(self):
        t0 = 0.0
        for _ in range(3):
            tl = run_transfer(SlideGeometry(), BatterySpec(), start_time=t0)
            assert tl.completed and tl.total_duration() <= 5.0
            t0 = tl.slides_closed + 5.0

    def test_custom_tolerances(self):
        tight = LatchTolerances(max_lateral=0.005, max_angle=math.radians(1))
        assert not latch_check(FrameTransform(np.eye(3), np.array([0.01, 0, 0])), tight)
