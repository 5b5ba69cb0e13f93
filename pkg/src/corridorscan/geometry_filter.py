"""Acceleration-zone removal downstream of ramps.

Vehicles discharging past a bottleneck head are still below the congestion
threshold while they accelerate, so the zone just downstream of a ramp gets
misclassified as congested.  The tell is a sharp per-section speed rise right
after the ramp row: when the region's mean speed at ramp_row+1 exceeds
lambda1 times the mean at ramp_row, every region cell from ramp_row+1 down
to the region's downstream edge is cleared.

Callers re-run the post-process filters (denoise + small-component drop)
afterwards; stripping frequently splits bottlenecks that were merged through
an acceleration zone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyRegionError
from .grid import CorridorGeometry, SpeedGrid
from .morphology import BinaryGrid, LabeledRegions, Region


@dataclass(frozen=True)
class ProjectionCurve:
    """Per-row ("sections") or per-column ("time") reduction of a grid or region."""

    axis: str
    values: np.ndarray
    source: str = ""

    def __post_init__(self):
        if self.axis not in ("sections", "time"):
            raise ValueError("axis must be 'sections' or 'time'")
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if np.any(v < 0):
            raise ValueError("projection values must be >= 0")


def region_speed_projection(grid: SpeedGrid, region: Region) -> ProjectionCurve:
    """Vertical projection: mean in-region speed per section row, 0 where the
    region has no cells in that row."""
    if region.size == 0:
        raise EmptyRegionError("region has no cells")
    sums = np.zeros(grid.n_sections, dtype=float)
    counts = np.zeros(grid.n_sections, dtype=float)
    rows = region.cells[:, 0]
    np.add.at(sums, rows, grid.values[rows, region.cells[:, 1]])
    np.add.at(counts, rows, 1.0)
    values = np.divide(sums, counts, out=np.zeros_like(sums), where=counts > 0)
    return ProjectionCurve("sections", values, source=f"region {region.label}")


def strip_acceleration_area(
    binary: BinaryGrid,
    regions: LabeledRegions,
    grid: SpeedGrid,
    geometry: CorridorGeometry,
    lambda1: float,
) -> BinaryGrid:
    """Clear the acceleration zone of each region that triggers the ramp test.

    Per region, ramp rows are checked in upstream->downstream order within the
    region's row span; the most upstream triggering ramp governs and clears
    rows ramp+1 .. region downstream edge.  Only ever clears cells.
    """
    out = np.array(binary, dtype=np.uint8, copy=True)
    ramp_rows = set(geometry.ramp_rows)
    for region in regions.regions:
        row_min, row_max = region.row_span
        candidates = [r for r in range(row_min, row_max) if r in ramp_rows]
        if not candidates:
            continue
        curve = region_speed_projection(grid, region).values
        for ramp in candidates:
            if curve[ramp + 1] > lambda1 * curve[ramp]:
                cells = region.cells
                doomed = cells[cells[:, 0] > ramp]
                out[doomed[:, 0], doomed[:, 1]] = 0
                break
    return out
