"""Spatiotemporal speed grids, corridor geometry, and detection parameters.

Conventions used throughout the package:

* rows are roadway sections ordered upstream -> downstream (row 0 is the most
  upstream section), columns are uniform time intervals in chronological order;
* all speeds are mph; jam density is converted to veh/mile/lane on load;
* a "missing" cell is one that was absent in the source feed.  Imputation
  fills the value but keeps the mask so downstream consumers can audit.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    ConfigError,
    NegativeSpeedError,
    NonMonotonicTimeError,
    NotAMultipleError,
    RowMismatchError,
)

KM_PER_MILE = 1.609344


@dataclass(frozen=True)
class Section:
    section_id: str
    length_miles: float
    ramp_flag: bool = False
    lanes: int = 1

    def __post_init__(self):
        if self.length_miles <= 0:
            raise ValueError(f"section {self.section_id}: length must be > 0")
        if self.lanes < 1:
            raise ValueError(f"section {self.section_id}: lanes must be >= 1")


@dataclass(frozen=True)
class CorridorGeometry:
    """Ordered sections; order matches SpeedGrid row order."""

    sections: tuple[Section, ...]
    direction_note: str = ""

    def __post_init__(self):
        if not self.sections:
            raise ValueError("geometry needs at least one section")
        object.__setattr__(self, "sections", tuple(self.sections))

    def __len__(self) -> int:
        return len(self.sections)

    @property
    def section_ids(self) -> tuple[str, ...]:
        return tuple(s.section_id for s in self.sections)

    @property
    def lengths_miles(self) -> np.ndarray:
        return np.array([s.length_miles for s in self.sections], dtype=float)

    @property
    def lanes(self) -> np.ndarray:
        return np.array([s.lanes for s in self.sections], dtype=int)

    @property
    def ramp_rows(self) -> tuple[int, ...]:
        return tuple(i for i, s in enumerate(self.sections) if s.ramp_flag)

    def midpoints_miles(self) -> np.ndarray:
        """Midpoint position of each section measured from the corridor start."""
        lengths = self.lengths_miles
        starts = np.concatenate(([0.0], np.cumsum(lengths)[:-1]))
        return starts + lengths / 2.0


def _as_readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class SpeedGrid:
    """Sections x time-intervals speed matrix with its missing-data mask.

    Immutable after construction; safe to share across workers.
    """

    values: np.ndarray
    section_ids: tuple[str, ...]
    timestamps: tuple[datetime, ...]
    interval_minutes: int
    missing_mask: np.ndarray

    def __post_init__(self):
        values = _as_readonly(np.asarray(self.values, dtype=float))
        mask = _as_readonly(np.asarray(self.missing_mask, dtype=bool))
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing_mask", mask)
        object.__setattr__(self, "section_ids", tuple(self.section_ids))
        object.__setattr__(self, "timestamps", tuple(self.timestamps))
        if values.ndim != 2:
            raise ValueError("speed values must be a 2-D matrix")
        if mask.shape != values.shape:
            raise ValueError("missing_mask shape does not match values")
        if values.shape[0] != len(self.section_ids):
            raise ValueError("row count does not match section_ids")
        if values.shape[1] != len(self.timestamps):
            raise ValueError("column count does not match timestamps")
        if self.interval_minutes < 1:
            raise ValueError("interval_minutes must be a positive integer")
        observed = values[~mask]
        if observed.size and not np.all(np.isfinite(observed)):
            raise ValueError("non-missing speeds must be finite")
        if observed.size and np.any(observed < 0):
            r, c = np.argwhere(~mask & (self.values < 0))[0]
            raise NegativeSpeedError(
                f"negative speed at row {r}, column {c}", row=int(r), column=int(c)
            )
        _check_timestamps(self.timestamps, self.interval_minutes)

    @property
    def n_sections(self) -> int:
        return self.values.shape[0]

    @property
    def n_intervals(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def day_key(self) -> str:
        return self.timestamps[0].date().isoformat()


def _check_timestamps(timestamps: Sequence[datetime], interval_minutes: int) -> None:
    step = interval_minutes * 60.0
    for a, b in zip(timestamps, timestamps[1:]):
        delta = (b - a).total_seconds()
        if delta <= 0:
            raise NonMonotonicTimeError(
                f"timestamps not strictly increasing at {a.isoformat()} -> {b.isoformat()}"
            )
        if abs(delta - step) > 1e-6:
            raise NonMonotonicTimeError(
                f"non-uniform spacing {delta / 60:.3f} min (expected {interval_minutes})"
            )


@dataclass(frozen=True)
class DetectionConfig:
    """Tunable parameters of the detection pipeline.

    alpha1/alpha2 size the morphology structuring element (sections x time
    intervals), alpha3 is the minimum surviving component size, lambda1 the
    acceleration-area speed-rise ratio, theta1/theta2 the accepted-threshold
    band as fractions of u_free, and chen_* the baseline classifier settings.
    """

    alpha1: int = 2
    alpha2: int = 3
    alpha3: int = 20
    lambda1: float = 1.3
    theta1: float = 0.3
    theta2: float = 0.85
    u_free: float = 60.0
    u_pre_default: float | None = None
    connectivity: int = 8
    chen_u_max: float = 35.0
    chen_delta_u_min: float = 15.0

    def __post_init__(self):
        if self.alpha1 < 1 or self.alpha2 < 1 or self.alpha3 < 1:
            raise ConfigError("alpha parameters must be >= 1")
        if not (0 < self.theta1 < self.theta2 < 1):
            raise ConfigError("need 0 < theta1 < theta2 < 1")
        if self.u_free <= 0 or self.chen_u_max <= 0 or self.chen_delta_u_min <= 0:
            raise ConfigError("speed parameters must be > 0")
        if self.u_pre_default is not None and self.u_pre_default <= 0:
            raise ConfigError("u_pre_default must be > 0")
        if self.connectivity not in (4, 8):
            raise ConfigError("connectivity must be 4 or 8")
        if self.lambda1 <= 0:
            raise ConfigError("lambda1 must be > 0")

    @property
    def seed_threshold_mph(self) -> float:
        """Initial u_pre before any day has been accepted: 0.75 of u_free unless overridden."""
        if self.u_pre_default is not None:
            return self.u_pre_default
        return 0.75 * self.u_free


# ---------------------------------------------------------------------------
# CSV interfaces
# ---------------------------------------------------------------------------
# Speed CSV:    header `section_id,<t0>,<t1>,...` (ISO-8601 interval starts),
#               one row per section in corridor order, empty cell = missing.
# Geometry CSV: header `section_id,length_miles,ramp_flag,lanes`.
# Truth CSV:    speed-CSV layout with 0/1 cells.
# Volumes CSV:  speed-CSV layout with per-lane veh/hour cells.


def parse_speed_csv_text(
    text: str,
    geometry: CorridorGeometry | None = None,
    interval_minutes: int | None = None,
) -> SpeedGrid:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]
    if not rows or len(rows[0]) < 2:
        raise RowMismatchError("speed CSV needs a timestamp header and at least one column")
    header = rows[0]
    try:
        timestamps = tuple(datetime.fromisoformat(t.strip()) for t in header[1:])
    except ValueError as exc:
        raise NonMonotonicTimeError(f"unparseable timestamp in header: {exc}") from exc
    data_rows = rows[1:]
    if geometry is not None:
        if len(data_rows) != len(geometry):
            raise RowMismatchError(
                f"speed CSV has {len(data_rows)} data rows, geometry has {len(geometry)} sections"
            )
        for i, (row, section) in enumerate(zip(data_rows, geometry.sections)):
            if row[0].strip() != section.section_id:
                raise RowMismatchError(
                    f"row {i}: section id {row[0]!r} does not match geometry {section.section_id!r}"
                )
    if not data_rows:
        raise RowMismatchError("speed CSV has no data rows")

    n_cols = len(timestamps)
    values = np.zeros((len(data_rows), n_cols), dtype=float)
    mask = np.zeros_like(values, dtype=bool)
    section_ids = []
    for i, row in enumerate(data_rows):
        if len(row) != n_cols + 1:
            raise RowMismatchError(
                f"row {i}: expected {n_cols + 1} cells, found {len(row)}"
            )
        section_ids.append(row[0].strip())
        for j, cell in enumerate(row[1:]):
            cell = cell.strip()
            if cell == "":
                mask[i, j] = True
                continue
            v = float(cell)
            if v < 0:
                raise NegativeSpeedError(
                    f"negative speed {v} at row {i} ({section_ids[-1]}), column {j}",
                    row=i,
                    column=j,
                )
            values[i, j] = v

    if interval_minutes is None:
        if len(timestamps) >= 2:
            delta = (timestamps[1] - timestamps[0]).total_seconds() / 60.0
            if delta <= 0 or abs(delta - round(delta)) > 1e-9:
                raise NonMonotonicTimeError(f"interval spacing {delta} min is not a whole minute count")
            interval_minutes = int(round(delta))
        else:
            interval_minutes = 5
    return SpeedGrid(values, tuple(section_ids), timestamps, interval_minutes, mask)


def load_speed_csv(path: str | Path, geometry: CorridorGeometry) -> SpeedGrid:
    return parse_speed_csv_text(Path(path).read_text(encoding="utf-8"), geometry)


def speed_csv_text(grid: SpeedGrid) -> str:
    """Serialize a grid back to the speed-CSV layout; floats round-trip bit-exactly."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["section_id"] + [t.isoformat() for t in grid.timestamps])
    for i, sid in enumerate(grid.section_ids):
        cells = [
            "" if grid.missing_mask[i, j] else repr(float(grid.values[i, j]))
            for j in range(grid.n_intervals)
        ]
        writer.writerow([sid] + cells)
    return out.getvalue()


def save_speed_csv(grid: SpeedGrid, path: str | Path) -> None:
    Path(path).write_text(speed_csv_text(grid), encoding="utf-8")


def parse_geometry_csv_text(text: str) -> CorridorGeometry:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r]
    if not rows:
        raise ConfigError("geometry CSV is empty")
    header = [h.strip().lower() for h in rows[0]]
    expected = ["section_id", "length_miles", "ramp_flag", "lanes"]
    if header != expected:
        raise ConfigError(f"geometry CSV header must be {','.join(expected)}")
    sections = []
    for row in rows[1:]:
        if len(row) < 4:
            raise ConfigError(f"geometry row too short: {row!r}")
        flag = row[2].strip().lower() in ("1", "true", "yes", "y")
        sections.append(
            Section(
                section_id=row[0].strip(),
                length_miles=float(row[1]),
                ramp_flag=flag,
                lanes=int(row[3]),
            )
        )
    return CorridorGeometry(tuple(sections))


def load_geometry_csv(path: str | Path) -> CorridorGeometry:
    return parse_geometry_csv_text(Path(path).read_text(encoding="utf-8"))


def parse_matrix_csv_text(text: str, geometry: CorridorGeometry | None = None) -> np.ndarray:
    """Parse a speed-CSV-layout file into a raw matrix (NaN where empty).

    Used for ground-truth binaries and measured-volume matrices.
    """
    grid_rows = list(csv.reader(io.StringIO(text)))
    grid_rows = [r for r in grid_rows if r]
    if len(grid_rows) < 2:
        raise RowMismatchError("matrix CSV needs a header and at least one data row")
    n_cols = len(grid_rows[0]) - 1
    data_rows = grid_rows[1:]
    if geometry is not None and len(data_rows) != len(geometry):
        raise RowMismatchError(
            f"matrix CSV has {len(data_rows)} data rows, geometry has {len(geometry)} sections"
        )
    out = np.full((len(data_rows), n_cols), np.nan, dtype=float)
    for i, row in enumerate(data_rows):
        if len(row) != n_cols + 1:
            raise RowMismatchError(f"row {i}: expected {n_cols + 1} cells, found {len(row)}")
        for j, cell in enumerate(row[1:]):
            cell = cell.strip()
            if cell != "":
                out[i, j] = float(cell)
    return out


# ---------------------------------------------------------------------------
# Grid transforms
# ---------------------------------------------------------------------------


def aggregate_time(grid: SpeedGrid, target_minutes: int) -> SpeedGrid:
    """Mean-aggregate columns into windows of target_minutes.

    Each output cell is the arithmetic mean of the non-missing source cells
    in its window; a window with no data stays missing.
    """
    if target_minutes % grid.interval_minutes != 0:
        raise NotAMultipleError(
            f"target {target_minutes} min is not a multiple of {grid.interval_minutes} min"
        )
    factor = target_minutes // grid.interval_minutes
    if factor == 1:
        return grid
    n_out = math.ceil(grid.n_intervals / factor)
    values = np.zeros((grid.n_sections, n_out), dtype=float)
    mask = np.zeros_like(values, dtype=bool)
    for w in range(n_out):
        sl = slice(w * factor, min((w + 1) * factor, grid.n_intervals))
        v = grid.values[:, sl]
        m = grid.missing_mask[:, sl]
        present = (~m).sum(axis=1)
        empty = present == 0
        with np.errstate(invalid="ignore"):
            sums = np.where(m, 0.0, v).sum(axis=1)
            values[:, w] = np.where(empty, 0.0, sums / np.maximum(present, 1))
        mask[:, w] = empty
    timestamps = tuple(grid.timestamps[w * factor] for w in range(n_out))
    return SpeedGrid(values, grid.section_ids, timestamps, target_minutes, mask)


def impute_missing(grid: SpeedGrid, fallback_mph: float) -> SpeedGrid:
    """Fill missing cells by per-row linear interpolation over time.

    Edge gaps copy the nearest observed value; a row with no data at all is
    filled with fallback_mph (free-flow).  The missing mask is preserved so
    imputed cells remain auditable.  Idempotent, and never alters observed
    cells.
    """
    if not grid.missing_mask.any():
        return grid
    values = np.array(grid.values, copy=True)
    cols = np.arange(grid.n_intervals, dtype=float)
    for i in range(grid.n_sections):
        row_mask = grid.missing_mask[i]
        if not row_mask.any():
            continue
        if row_mask.all():
            values[i, :] = fallback_mph
            continue
        known = ~row_mask
        values[i, row_mask] = np.interp(cols[row_mask], cols[known], values[i, known])
    return SpeedGrid(values, grid.section_ids, grid.timestamps, grid.interval_minutes, grid.missing_mask)
