import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aerobridge.config import default_config
from aerobridge.nav import (
    NavCommand,
    NavConfig,
    NavPhase,
    NavState,
    lock_check,
    nav_step,
    search_pattern,
)
from aerobridge.perception import AlignmentErrors, CameraMount, FusedEstimate
from aerobridge.scenario import run_align_loop

CFG = NavConfig()
MOUNT = CameraMount()
FRAME_DT = 1.0 / 30.0


def fused_at_target(cfg: NavConfig = CFG, e_offset=0.0, heading_off_deg=0.0):
    """FusedEstimate placing the EBS exactly at (or near) the dock standoff."""
    r_bc = MOUNT.rotation_body_to_camera()
    p_rec_body = np.array([cfg.target_back_offset + e_offset, 0.0,
                           -cfg.target_up_offset])
    heading_body = np.array([math.cos(math.radians(heading_off_deg)),
                             math.sin(math.radians(heading_off_deg)), 0.0])
    return FusedEstimate(
        position=r_bc @ (p_rec_body - MOUNT.offset),
        plate_normal=r_bc @ np.array([0.0, 0.0, 1.0]),
        heading=r_bc @ heading_body,
        association="front-back",
        marker_ids=("back", "center", "front", "left", "right"),
    )


def step_n(nav, fused, n, cfg=CFG):
    cmd = NavCommand()
    for _ in range(n):
        nav, cmd = nav_step(nav, [], fused, FRAME_DT, cfg, MOUNT)
    return nav, cmd


class TestLockCheck:
    def test_sustained_good_frames(self):
        nav = NavState(phase=NavPhase.ALIGN, consecutive_good_frames=10)
        assert lock_check(AlignmentErrors(0.009, 1.0), nav, CFG)

    def test_large_error_fails_regardless(self):
        nav = NavState(phase=NavPhase.ALIGN, consecutive_good_frames=50)
        assert not lock_check(AlignmentErrors(0.05, 0.1), nav, CFG)

    def test_counter_resets_on_bad_frame(self):
        nav = NavState(phase=NavPhase.ALIGN)
        good = fused_at_target()
        nav, _ = step_n(nav, good, 9)
        assert nav.consecutive_good_frames == 9
        bad = fused_at_target(e_offset=0.1)
        nav, _ = nav_step(nav, [], bad, FRAME_DT, CFG, MOUNT)
        assert nav.consecutive_good_frames == 0
        assert nav.phase is NavPhase.ALIGN


class TestPhases:
    def test_no_detection_searches_with_pattern_velocity(self):
        nav = NavState()
        nav, cmd = nav_step(nav, [], None, FRAME_DT, CFG, MOUNT)
        assert nav.phase is NavPhase.SEARCH
        assert math.hypot(cmd.vel_x, cmd.vel_y) > 0.0

    def test_detection_enters_align(self):
        nav = NavState()
        nav, _ = nav_step(nav, [], fused_at_target(e_offset=0.3), FRAME_DT, CFG, MOUNT)
        assert nav.phase is NavPhase.ALIGN

    def test_lock_after_n_good_frames_with_zero_command(self):
        nav = NavState(phase=NavPhase.ALIGN)
        nav, cmd = step_n(nav, fused_at_target(), 12)
        assert nav.phase is NavPhase.LOCK
        for v in (cmd.vel_x, cmd.vel_y, cmd.vel_z, cmd.yaw_rate):
            assert abs(v) < 1e-12

    def test_single_dropped_frame_keeps_lock(self):
        nav, _ = step_n(NavState(phase=NavPhase.ALIGN), fused_at_target(), 12)
        assert nav.phase is NavPhase.LOCK
        nav, _ = nav_step(nav, [], None, FRAME_DT, CFG, MOUNT)
        assert nav.phase is NavPhase.LOCK

    def test_one_second_of_drops_goes_lost_then_search(self):
        nav, _ = step_n(NavState(phase=NavPhase.ALIGN), fused_at_target(), 12)
        for _ in range(int(1.2 / FRAME_DT)):
            nav, _ = nav_step(nav, [], None, FRAME_DT, CFG, MOUNT)
            if nav.phase is NavPhase.LOST:
                break
        assert nav.phase is NavPhase.LOST
        nav, _ = nav_step(nav, [], None, FRAME_DT, CFG, MOUNT)
        assert nav.phase is NavPhase.SEARCH

    def test_align_fixed_point(self):
        nav = NavState(phase=NavPhase.ALIGN)
        nav, cmd = nav_step(nav, [], fused_at_target(), FRAME_DT, CFG, MOUNT)
        assert abs(cmd.vel_x) < 1e-9 and abs(cmd.vel_y) < 1e-9
        assert abs(cmd.vel_z) < 1e-9 and abs(cmd.yaw_rate) < 1e-9

    def test_nonzero_error_gives_nonzero_command(self):
        nav = NavState(phase=NavPhase.ALIGN)
        nav, cmd = nav_step(nav, [], fused_at_target(e_offset=0.05), FRAME_DT,
                            CFG, MOUNT)
        assert math.hypot(cmd.vel_x, cmd.vel_y) > 0.0

    @given(st.sampled_from(list(NavPhase)), st.booleans(),
           st.floats(-0.5, 0.5), st.floats(-30, 30))
    @settings(max_examples=120, deadline=None)
    def test_phase_machine_total(self, phase, detected, e_off, head_off):
        nav = NavState(phase=phase, consecutive_good_frames=3,
                       last_detection_time=0.0, time=0.1)
        fused = fused_at_target(e_offset=e_off, heading_off_deg=head_off) \
            if detected else None
        nav2, cmd = nav_step(nav, [], fused, FRAME_DT, CFG, MOUNT)
        assert nav2.phase in NavPhase
        for v in (cmd.vel_x, cmd.vel_y, cmd.vel_z):
            assert abs(v) <= CFG.vel_limit + 1e-12
        assert abs(cmd.yaw_rate) <= CFG.yaw_rate_limit + 1e-12


class TestSearchPattern:
    def test_starts_at_anchor(self):
        anchor = np.array([3.0, -1.0, 4.0])
        assert np.allclose(search_pattern(0.0, anchor), anchor)

    def test_reaches_two_meters_within_sixty_seconds(self):
        anchor = np.zeros(3)
        reached = False
        for elapsed in np.arange(0.0, 60.0, 0.2):
            p = search_pattern(elapsed, anchor)
            if float(np.linalg.norm(p[:2])) >= 2.0:
                reached = True
                break
        assert reached

    def test_altitude_fixed(self):
        anchor = np.array([0.0, 0.0, 5.0])
        for elapsed in np.arange(0.0, 120.0, 1.7):
            assert search_pattern(elapsed, anchor)[2] == 5.0

    def test_cycles_back_near_anchor(self):
        anchor = np.zeros(3)
        pairs = int(4.0 / 0.5)
        cycle = 0.5 * pairs * (pairs + 1) / 0.5  # path length / speed
        p = search_pattern(cycle + 0.1, anchor)
        assert float(np.linalg.norm(p[:2])) < 0.2


class TestClosedLoop:
    def test_noiseless_lock_quality(self):
        cfg = default_config()
        res = run_align_loop(cfg, seed=3, noise_sigma=0.0, duration=25.0)
        assert res.reached_lock
        es = [e for e, _ in res.steady_est_errors]
        als = [a for _, a in res.steady_est_errors]
        assert float(np.mean(es)) <= 0.001
        assert float(np.mean(als)) < 1.0

    @pytest.mark.parametrize("h,v,az", [
        (2.5, 1.3, 0.0),
        (1.8, 1.0, 2.0),
        (1.2, 0.8, -2.5),
        (0.8, 0.5, 3.1),
        (2.0, 1.5, 1.0),
    ])
    def test_lock_within_thirty_seconds_from_visibility_ball(self, h, v, az):
        cfg = default_config()
        res = run_align_loop(cfg, seed=1, noise_sigma=0.0, duration=30.0,
                             start_range=(h, v), start_azimuth_offset=az)
        assert res.reached_lock
        assert res.lock_time <= 30.0
