"""Parametric downwash disturbance model and momentum-theory thrust.

The disturbance model is a small gridded table over vertical separation
(``alt``, between the two drones' propeller planes) and rotor overlap
percentage. A handful of cells are pinned to bench measurements:

- nominal output airflow 9.6 m/s and 1200 gF thrust at 0% overlap,
- at alt 0.15 m and 100% overlap: 14.0 m/s beneath the lower propeller
  (position A) and 5.6 m/s between the propellers (position B),
- at alt 0.15 m and 50% overlap: 200 gF thrust loss,
- at alt 0.60 m the thrust loss at 50% overlap is small (<= 25 gF).

Cells that were never measured numerically follow an exponential decay in
``alt`` through the pinned points; every cell can be overridden from the
scenario config. Lookups bilinearly interpolate between grid nodes and are
exact at the nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

GRAVITY = 9.81

ALT_GRID = (0.15, 0.30, 0.45, 0.60)
OVERLAP_GRID = (0.0, 50.0, 100.0)

# Zero-overlap horizontal separation for the default 13-inch propeller.
_XD_ZERO_OVERLAP = 0.32
_DEFAULT_DIAMETER = 0.3302

# Decay rate (1/m) of disturbance with vertical separation, fitted so the
# 50%-overlap thrust loss falls from 200 gF at 0.15 m to ~21 gF at 0.60 m.
_ALT_DECAY = 5.0

# Lateral push per m/s of position-B airflow deficit relative to nominal.
DEFAULT_LATERAL_COEF = 0.05


class NonPositiveGeometry(ValueError):
    """Air density or disc area is not positive."""


class OutOfRange(ValueError):
    """Query outside the validity domain of the downwash table."""


@dataclass(frozen=True)
class PropellerSpec:
    diameter: float = _DEFAULT_DIAMETER      # m (13 inch)
    rpm: float = 5000.0
    nominal_thrust_gf: float = 1200.0
    nominal_airflow: float = 9.6             # m/s

    def disc_area(self) -> float:
        return math.pi * (self.diameter / 2.0) ** 2


@dataclass(frozen=True)
class DownwashSample:
    delta_thrust_gf: float
    airflow_pos_a: float
    airflow_pos_b: float
    lateral_push_n: float

    def validate(self) -> None:
        if self.delta_thrust_gf < 0 or self.airflow_pos_a < 0 or self.airflow_pos_b < 0:
            raise ValueError("downwash sample fields must be non-negative")


def _decay(alt: float) -> float:
    return math.exp(-_ALT_DECAY * (alt - ALT_GRID[0]))


def _default_cell(alt: float, overlap: float, spec: PropellerSpec,
                  lateral_coef: float) -> DownwashSample:
    frac = overlap / 100.0
    d = _decay(alt)
    deficit_b = 4.0 * frac * d          # m/s below nominal between propellers
    return DownwashSample(
        delta_thrust_gf=400.0 * frac * d,
        airflow_pos_a=spec.nominal_airflow + 4.4 * frac * d,
        airflow_pos_b=spec.nominal_airflow - deficit_b,
        lateral_push_n=lateral_coef * deficit_b,
    )


@dataclass(frozen=True)
class DownwashTable:
    """Immutable grid of disturbance samples over (alt, overlap)."""

    cells: dict[tuple[float, float], DownwashSample]
    spec: PropellerSpec = field(default_factory=PropellerSpec)

    @staticmethod
    def default(spec: PropellerSpec | None = None,
                lateral_coef: float = DEFAULT_LATERAL_COEF,
                overrides: dict[tuple[float, float], DownwashSample] | None = None,
                ) -> "DownwashTable":
        spec = spec or PropellerSpec()
        cells: dict[tuple[float, float], DownwashSample] = {}
        for alt in ALT_GRID:
            for ov in OVERLAP_GRID:
                cells[(alt, ov)] = _default_cell(alt, ov, spec, lateral_coef)
        if overrides:
            for key, sample in overrides.items():
                if key not in cells:
                    raise OutOfRange(f"override key {key} is not a grid node")
                sample.validate()
                cells[key] = sample
        table = DownwashTable(cells=cells, spec=spec)
        table.check_monotonicity()
        return table

    def cell(self, alt: float, overlap: float) -> DownwashSample:
        return self.cells[(alt, overlap)]

    def check_monotonicity(self) -> None:
        """Thrust loss must shrink with alt and grow with overlap."""
        for ov in OVERLAP_GRID:
            col = [self.cells[(a, ov)].delta_thrust_gf for a in ALT_GRID]
            if any(col[i] < col[i + 1] for i in range(len(col) - 1)):
                raise ValueError(f"delta_thrust not non-increasing in alt at overlap {ov}")
        for alt in ALT_GRID:
            row = [self.cells[(alt, ov)].delta_thrust_gf for ov in OVERLAP_GRID]
            if any(row[i] > row[i + 1] for i in range(len(row) - 1)):
                raise ValueError(f"delta_thrust not non-decreasing in overlap at alt {alt}")
        nominal = self.spec.nominal_airflow
        for alt in ALT_GRID:
            c = self.cells[(alt, 0.0)]
            if (c.delta_thrust_gf, c.airflow_pos_a, c.airflow_pos_b, c.lateral_push_n) != (
                    0.0, nominal, nominal, 0.0):
                raise ValueError(f"overlap-0 cell at alt {alt} is not the nominal sample")


def momentum_thrust(rho: float, area: float, v_inf: float, v_i: float) -> float:
    """Actuator-disc thrust from mass flow rate and induced velocity.

    T = mdot (v_d - v_inf) with mdot = rho A (v_inf + v_i) and far-wake
    velocity v_d = v_inf + 2 v_i (momentum-theory closure). Returns newtons.
    """
    if rho <= 0 or area <= 0:
        raise NonPositiveGeometry(f"rho={rho}, area={area} must be positive")
    if v_i < 0 or v_inf < 0:
        raise ValueError("velocities must be non-negative")
    mdot = rho * area * (v_inf + v_i)
    return mdot * 2.0 * v_i


def overlap_from_xd(x_d: float, prop_diameter: float = _DEFAULT_DIAMETER) -> float:
    """Rotor overlap percentage from horizontal axis separation.

    Anchored at 100% / 50% / 0% for x_d of 0 / 0.16 / 0.32 m with the
    default propeller; the zero-overlap distance scales with diameter.
    """
    if x_d < 0:
        raise ValueError("x_d must be non-negative")
    x_zero = _XD_ZERO_OVERLAP * prop_diameter / _DEFAULT_DIAMETER
    return max(0.0, 100.0 * (1.0 - x_d / x_zero))


def _interp_nodes(value: float, grid: tuple[float, ...]) -> tuple[int, int, float]:
    if value <= grid[0]:
        return 0, 0, 0.0
    if value >= grid[-1]:
        return len(grid) - 1, len(grid) - 1, 0.0
    hi = next(i for i, g in enumerate(grid) if g >= value)
    lo = hi - 1
    frac = (value - grid[lo]) / (grid[hi] - grid[lo])
    return lo, hi, frac


def downwash_lookup(table: DownwashTable, alt: float, overlap: float) -> DownwashSample:
    """Bilinear interpolation over the grid, exact at grid nodes.

    ``alt`` below 0.10 m is outside the model's validity and raises
    OutOfRange; alt beyond the grid rows clamps to the nearest row.
    """
    if alt < 0.10:
        raise OutOfRange(f"alt {alt:.3f} m is below the 0.10 m model floor")
    if alt > 1.0:
        raise OutOfRange(f"alt {alt:.3f} m is above the 1.0 m model ceiling")
    if not 0.0 <= overlap <= 100.0:
        raise OutOfRange(f"overlap {overlap:.1f}% outside [0, 100]")
    alo, ahi, af = _interp_nodes(alt, ALT_GRID)
    olo, ohi, of = _interp_nodes(overlap, OVERLAP_GRID)

    def lerp_field(name: str) -> float:
        c = table.cells
        g = ALT_GRID
        o = OVERLAP_GRID
        f00 = getattr(c[(g[alo], o[olo])], name)
        f01 = getattr(c[(g[alo], o[ohi])], name)
        f10 = getattr(c[(g[ahi], o[olo])], name)
        f11 = getattr(c[(g[ahi], o[ohi])], name)
        top = f00 * (1 - of) + f01 * of
        bot = f10 * (1 - of) + f11 * of
        return top * (1 - af) + bot * af

    return DownwashSample(
        delta_thrust_gf=lerp_field("delta_thrust_gf"),
        airflow_pos_a=lerp_field("airflow_pos_a"),
        airflow_pos_b=lerp_field("airflow_pos_b"),
        lateral_push_n=lerp_field("lateral_push_n"),
    )


@dataclass(frozen=True)
class Disturbance:
    """Downwash effect on the lower drone.

    ``force_n`` is the lateral push (world frame, horizontal). The thrust
    deficit is reported separately in gram-force and is applied by the
    vehicle step as a reduction of available rotor thrust; the two together
    are the full disturbance, never double-applied.
    """

    force_n: np.ndarray
    thrust_deficit_gf: float

    @staticmethod
    def none() -> "Disturbance":
        return Disturbance(np.zeros(3), 0.0)


def disturbance_on_receiver(ebs_position: np.ndarray, rec_position: np.ndarray,
                            table: DownwashTable,
                            spec: PropellerSpec | None = None) -> Disturbance:
    """Downwash disturbance the upper (EBS) drone imposes on the receiver.

    Zero when the receiver is at or above the EBS. Vertical separation
    beyond 1.0 m clamps to the table ceiling; below 0.10 m the lookup's
    OutOfRange propagates (the model is undefined that close).
    """
    spec = spec or table.spec
    dz = float(ebs_position[2] - rec_position[2])
    if dz <= 0.0:
        return Disturbance.none()
    dx = float(ebs_position[0] - rec_position[0])
    dy = float(ebs_position[1] - rec_position[1])
    x_d = math.hypot(dx, dy)
    overlap = overlap_from_xd(x_d, spec.diameter)
    if overlap == 0.0:
        return Disturbance.none()
    sample = downwash_lookup(table, min(dz, 1.0), overlap)
    if x_d > 1e-9:
        # push the receiver away from the downwash column, horizontally
        direction = np.array([-dx / x_d, -dy / x_d, 0.0])
    else:
        direction = np.zeros(3)
    return Disturbance(
        force_n=direction * sample.lateral_push_n,
        thrust_deficit_gf=sample.delta_thrust_gf,
    )


def table_with_overrides(base: DownwashTable,
                         overrides: dict[tuple[float, float], DownwashSample],
                         ) -> DownwashTable:
    cells = dict(base.cells)
    for key, sample in overrides.items():
        if key not in cells:
            raise OutOfRange(f"override key {key} is not a grid node")
        cells[key] = sample
    table = replace(base, cells=cells)
    table.check_monotonicity()
    return table
