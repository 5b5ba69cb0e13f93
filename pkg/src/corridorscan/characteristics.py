"""Per-bottleneck characteristics: edge points, shockwave speed, delay.

The front of a bottleneck is its downstream edge (highest row index), the
rear its upstream edge.  Shockwave speed comes from the front and rear
activation points; its magnitude is capped by the maximum back-propagation
speed of the Van Aerde fundamental diagram at jam density.  Delay integrates
per-cell extra travel time against free flow, using measured volumes when
available and Van Aerde flow estimated from speed otherwise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from datetime import datetime

import numpy as np

from .errors import (
    EmptyRegionError,
    InvalidFundamentalDiagramError,
    SpeedOutOfRangeError,
)
from .geometry_filter import ProjectionCurve
from .grid import KM_PER_MILE, CorridorGeometry, SpeedGrid


def van_aerde_coefficients(uf: float, uc: float, qc: float, kj: float) -> tuple[float, float, float]:
    """Single-regime Van Aerde headway coefficients from (uf, uc, qc, kj).

    Units: speeds mph, qc veh/hour/lane, kj veh/mile/lane.
    """
    m = uf / (kj * uc * uc)
    c1 = m * (2 * uc - uf)
    c2 = m * (uf - uc) ** 2
    c3 = 1.0 / qc - m * uf
    return c1, c2, c3


def max_shockwave_speed(uf: float, uc: float, qc: float, kj: float) -> float:
    """Magnitude of the back-propagation shockwave speed at jam density (mph)."""
    bracket = (kj / qc - uf / (uc * uc)) + (uf - uc) ** 2 / (uf * uc * uc)
    if bracket <= 0:
        raise InvalidFundamentalDiagramError(
            f"non-positive shockwave bracket {bracket:.6g}; check uf/uc/qc/kj"
        )
    return 1.0 / bracket


@dataclass(frozen=True)
class FundamentalDiagram:
    """Van Aerde speed-flow relation.

    uf: free-flow speed (mph); uc: speed at capacity (mph);
    qc: capacity flow (veh/hour/lane); kj: jam density (veh/mile/lane).
    """

    uf: float
    uc: float
    qc: float
    kj: float

    def __post_init__(self):
        if not (0 < self.uc < self.uf):
            raise InvalidFundamentalDiagramError("need 0 < uc < uf")
        if self.qc <= 0:
            raise InvalidFundamentalDiagramError("qc must be > 0")
        if self.kj <= self.qc / self.uc:
            raise InvalidFundamentalDiagramError("kj must exceed density at capacity qc/uc")
        max_shockwave_speed(self.uf, self.uc, self.qc, self.kj)  # validates the bracket

    @classmethod
    def with_metric_jam_density(cls, uf: float, uc: float, qc: float, kj_per_km: float) -> "FundamentalDiagram":
        """Build from jam density given in veh/km/lane (converted to veh/mile/lane)."""
        return cls(uf=uf, uc=uc, qc=qc, kj=kj_per_km * KM_PER_MILE)

    @property
    def coefficients(self) -> tuple[float, float, float]:
        return van_aerde_coefficients(self.uf, self.uc, self.qc, self.kj)

    @property
    def w_max(self) -> float:
        return max_shockwave_speed(self.uf, self.uc, self.qc, self.kj)


def van_aerde_flow(u: float, fd: FundamentalDiagram) -> float:
    """Flow (veh/hour/lane) at speed u; defined on 0 <= u < uf."""
    if u < 0 or u >= fd.uf:
        raise SpeedOutOfRangeError(f"speed {u} outside [0, uf={fd.uf})")
    if u == 0:
        return 0.0
    c1, c2, c3 = fd.coefficients
    return u / (c1 + c2 / (fd.uf - u) + c3 * u)


def binary_projection(mask: np.ndarray, axis: str) -> ProjectionCurve:
    """Congested-cell counts per column ("time") or per row ("sections")."""
    mask = np.asarray(mask)
    if not mask.any():
        raise EmptyRegionError("region mask has no cells")
    if axis == "time":
        return ProjectionCurve("time", mask.sum(axis=0).astype(float))
    if axis == "sections":
        return ProjectionCurve("sections", mask.sum(axis=1).astype(float))
    raise ValueError("axis must be 'time' or 'sections'")


@dataclass(frozen=True)
class EdgePoint:
    section_id: str
    timestamp: datetime
    row: int
    col: int


@dataclass(frozen=True)
class ActivationPoints:
    front_activation: EdgePoint
    front_deactivation: EdgePoint
    rear_activation: EdgePoint
    rear_deactivation: EdgePoint


def extract_activation_points(
    mask: np.ndarray, timestamps, geometry: CorridorGeometry
) -> ActivationPoints:
    """Four (section, time) points bounding the region's front and rear rows.

    Front row = most downstream row with any region cell, rear row = most
    upstream; on each, activation is the first congested interval and
    deactivation the last.
    """
    mask = np.asarray(mask).astype(bool)
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        raise EmptyRegionError("region mask has no cells")
    rear_row, front_row = int(rows[0]), int(rows[-1])

    def edge(row: int, col: int) -> EdgePoint:
        return EdgePoint(
            section_id=geometry.sections[row].section_id,
            timestamp=timestamps[col],
            row=row,
            col=col,
        )

    front_cols = np.flatnonzero(mask[front_row])
    rear_cols = np.flatnonzero(mask[rear_row])
    return ActivationPoints(
        front_activation=edge(front_row, int(front_cols[0])),
        front_deactivation=edge(front_row, int(front_cols[-1])),
        rear_activation=edge(rear_row, int(rear_cols[0])),
        rear_deactivation=edge(rear_row, int(rear_cols[-1])),
    )


@dataclass(frozen=True)
class ShockwaveEstimate:
    """raw_mph is signed in a downstream-positive frame, so a queue tail
    racing upstream reads negative; reported_mph is the magnitude capped at
    the fundamental diagram's w_max."""

    raw_mph: float
    reported_mph: float
    clamped: bool


def shockwave_speed(
    front_activation: EdgePoint,
    rear_activation: EdgePoint,
    geometry: CorridorGeometry,
    fd: FundamentalDiagram,
) -> ShockwaveEstimate:
    """Back-propagation speed from the front and rear activation points.

    Distance is between section midpoints.  Simultaneous activations give an
    infinite raw value, and a rear edge that activates before the front is
    unphysical; both report w_max with the clamped flag, as do finite values
    whose magnitude exceeds w_max.
    """
    w_max = fd.w_max
    midpoints = geometry.midpoints_miles()
    signed_distance = midpoints[rear_activation.row] - midpoints[front_activation.row]
    dt_hours = (rear_activation.timestamp - front_activation.timestamp).total_seconds() / 3600.0
    if dt_hours == 0:
        return ShockwaveEstimate(raw_mph=-math.inf, reported_mph=w_max, clamped=True)
    raw = signed_distance / dt_hours
    if dt_hours < 0:
        return ShockwaveEstimate(raw_mph=raw, reported_mph=w_max, clamped=True)
    magnitude = abs(raw)
    if magnitude > w_max:
        return ShockwaveEstimate(raw_mph=raw, reported_mph=w_max, clamped=True)
    return ShockwaveEstimate(raw_mph=raw, reported_mph=magnitude, clamped=False)


def region_delay(
    mask: np.ndarray,
    grid: SpeedGrid,
    geometry: CorridorGeometry,
    fd: FundamentalDiagram,
    measured_volumes: np.ndarray | None = None,
) -> float:
    """Total vehicle-hours of delay over the region's cells.

    Per cell: length * flow * (1/u - 1/uf) * interval_hours * lanes, with
    flow from the measured per-lane volume matrix when given (falling back
    per cell where it is NaN) and Van Aerde otherwise.  Cells at or above
    free-flow speed contribute nothing; a zero-speed cell has no model flow,
    contributes nothing, and raises a warning.
    """
    mask = np.asarray(mask).astype(bool)
    cells = np.argwhere(mask)
    if cells.size == 0:
        raise EmptyRegionError("region mask has no cells")
    if measured_volumes is not None:
        measured_volumes = np.asarray(measured_volumes, dtype=float)
        if measured_volumes.shape != grid.shape:
            raise ValueError("measured volume matrix shape does not match the grid")
    lengths = geometry.lengths_miles
    lanes = geometry.lanes
    interval_hours = grid.interval_minutes / 60.0
    total = 0.0
    warned = False
    for r, c in cells:
        u = float(grid.values[r, c])
        if u >= fd.uf:
            continue
        if u == 0:
            if not warned:
                warnings.warn(
                    "zero-speed cell contributes no delay (no throughput)",
                    RuntimeWarning,
                    stacklevel=2,
                )
                warned = True
            continue
        if measured_volumes is not None and np.isfinite(measured_volumes[r, c]):
            q = float(measured_volumes[r, c])
        else:
            q = van_aerde_flow(u, fd)
        total += lengths[r] * q * (1.0 / u - 1.0 / fd.uf) * interval_hours * lanes[r]
    return float(total)


@dataclass(frozen=True)
class BottleneckReport:
    """One isolated bottleneck's extracted characteristics (one report row)."""

    index: int
    points: ActivationPoints
    shockwave: ShockwaveEstimate
    delay_vehicle_hours: float
    cell_count: int
