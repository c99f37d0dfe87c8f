import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aerobridge.aero import (
    ALT_GRID,
    OVERLAP_GRID,
    DownwashSample,
    DownwashTable,
    NonPositiveGeometry,
    OutOfRange,
    PropellerSpec,
    disturbance_on_receiver,
    downwash_lookup,
    momentum_thrust,
    overlap_from_xd,
)


class TestMomentumThrust:
    def test_no_induced_flow(self):
        assert momentum_thrust(1.225, 0.0856, 3.0, 0.0) == 0.0

    def test_hover_disc_value(self):
        area = math.pi * (0.3302 / 2.0) ** 2
        t = momentum_thrust(1.225, area, 0.0, 4.8)
        assert abs(t - 4.83) < 0.01

    def test_quadratic_in_induced_velocity(self):
        t1 = momentum_thrust(1.225, 0.09, 0.0, 2.0)
        t2 = momentum_thrust(1.225, 0.09, 0.0, 4.0)
        assert abs(t2 / t1 - 4.0) < 1e-12

    def test_rejects_bad_geometry(self):
        with pytest.raises(NonPositiveGeometry):
            momentum_thrust(0.0, 0.09, 0.0, 1.0)
        with pytest.raises(NonPositiveGeometry):
            momentum_thrust(1.225, -1.0, 0.0, 1.0)

    @given(st.floats(0.0, 10.0), st.floats(0.0, 10.0))
    def test_non_negative_and_finite(self, v_inf, v_i):
        t = momentum_thrust(1.225, 0.0856, v_inf, v_i)
        assert t >= 0.0 and math.isfinite(t)


class TestOverlap:
    def test_paper_calibration_points(self):
        assert overlap_from_xd(0.0) == 100.0
        assert abs(overlap_from_xd(0.16) - 50.0) < 1e-9
        assert overlap_from_xd(0.32) == 0.0
        assert overlap_from_xd(0.40) == 0.0

    def test_scales_with_diameter(self):
        assert abs(overlap_from_xd(0.32, prop_diameter=2 * 0.3302) - 50.0) < 1e-9

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            overlap_from_xd(-0.1)


@pytest.fixture(scope="module")
def table():
    return DownwashTable.default()


class TestLookupAnchors:
    def test_close_full_overlap_airflow(self, table):
        s = downwash_lookup(table, 0.15, 100.0)
        assert s.airflow_pos_a == pytest.approx(14.0)
        assert s.airflow_pos_b == pytest.approx(5.6)

    def test_close_half_overlap_thrust(self, table):
        s = downwash_lookup(table, 0.15, 50.0)
        assert s.delta_thrust_gf == pytest.approx(200.0)

    def test_far_half_overlap_small(self, table):
        s = downwash_lookup(table, 0.60, 50.0)
        assert s.delta_thrust_gf <= 25.0

    def test_zero_overlap_is_nominal(self, table):
        for alt in (0.12, 0.15, 0.33, 0.60, 0.9):
            s = downwash_lookup(table, alt, 0.0)
            assert s.delta_thrust_gf == 0.0
            assert s.airflow_pos_a == pytest.approx(9.6)
            assert s.airflow_pos_b == pytest.approx(9.6)
            assert s.lateral_push_n == 0.0

    def test_grid_node_exactness(self, table):
        for alt in ALT_GRID:
            for ov in OVERLAP_GRID:
                cell = table.cell(alt, ov)
                s = downwash_lookup(table, alt, ov)
                assert s == cell

    def test_clamps_outside_grid_rows(self, table):
        assert downwash_lookup(table, 0.12, 50.0) == downwash_lookup(table, 0.15, 50.0)
        assert downwash_lookup(table, 0.95, 50.0) == downwash_lookup(table, 0.60, 50.0)

    def test_out_of_range(self, table):
        with pytest.raises(OutOfRange):
            downwash_lookup(table, 0.05, 50.0)
        with pytest.raises(OutOfRange):
            downwash_lookup(table, 0.30, 120.0)


class TestMonotonicity:
    def test_dense_sweep(self, table):
        alts = np.linspace(0.10, 1.0, 41)
        overlaps = np.linspace(0.0, 100.0, 41)
        for ov in overlaps:
            col = [downwash_lookup(table, a, ov).delta_thrust_gf for a in alts]
            assert all(col[i] >= col[i + 1] - 1e-12 for i in range(len(col) - 1))
        for alt in alts:
            row = [downwash_lookup(table, alt, ov).delta_thrust_gf for ov in overlaps]
            assert all(row[i] <= row[i + 1] + 1e-12 for i in range(len(row) - 1))

    def test_bad_override_rejected(self):
        bad = {(0.60, 50.0): DownwashSample(500.0, 9.6, 9.6, 0.0)}
        with pytest.raises(ValueError):
            DownwashTable.default(overrides=bad)


class TestDisturbance:
    def test_receiver_above_is_unaffected(self, table):
        d = disturbance_on_receiver(np.array([0, 0, 1.0]), np.array([0, 0, 2.0]), table)
        assert d.thrust_deficit_gf == 0.0
        assert np.allclose(d.force_n, 0.0)

    def test_papers_chosen_geometry(self, table):
        d = disturbance_on_receiver(np.array([0.16, 0, 2.6]), np.array([0, 0, 2.0]), table)
        assert d.thrust_deficit_gf <= 25.0

    def test_table_maximum_directly_overhead(self, table):
        d = disturbance_on_receiver(np.array([0, 0, 2.15]), np.array([0, 0, 2.0]), table)
        assert d.thrust_deficit_gf == pytest.approx(
            table.cell(0.15, 100.0).delta_thrust_gf)

    def test_no_overlap_no_disturbance(self, table):
        d = disturbance_on_receiver(np.array([0.5, 0, 2.5]), np.array([0, 0, 2.0]), table)
        assert d.thrust_deficit_gf == 0.0

    def test_push_points_away_from_column(self, table):
        d = disturbance_on_receiver(np.array([0.2, 0, 2.3]), np.array([0, 0, 2.0]), table)
        assert d.force_n[0] < 0.0  # receiver pushed along -x, away from the EBS
        assert d.force_n[2] == 0.0

    def test_propagates_out_of_range_below_floor(self, table):
        with pytest.raises(OutOfRange):
            disturbance_on_receiver(np.array([0.0, 0, 2.05]),
                                    np.array([0, 0, 2.0]), table)

    def test_spec_scaled_overlap(self):
        spec = PropellerSpec(diameter=0.6604)
        t = DownwashTable.default(spec=spec)
        d = disturbance_on_receiver(np.array([0.5, 0, 2.5]), np.array([0, 0, 2.0]),
                                    t, spec)
        assert d.thrust_deficit_gf > 0.0  # doubled diameter widens the column
