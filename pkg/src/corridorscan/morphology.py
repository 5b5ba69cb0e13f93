"""Binary morphology and connected-component cleanup for congestion grids.

Grids are uint8 0/1 matrices shaped like the source speed grid.  The
structuring element is a solid alpha1 x alpha2 rectangle anchored at its
top-left cell.  Cells beyond the grid border are background (0): erosion and
dilation never fabricate congestion outside the corridor, and opening and
closing are evaluated on that zero-extended plane (intermediates are not
clipped) so both stay idempotent and correctly anti-extensive/extensive.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import StructuringElementTooLargeError
from .grid import DetectionConfig

BinaryGrid = np.ndarray  # uint8 matrix over {0, 1}


@dataclass(frozen=True)
class StructuringElement:
    """Solid rectangle of height (sections) x width (time intervals); origin top-left."""

    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError("structuring element must be at least 1x1")

    @property
    def offsets(self) -> tuple[tuple[int, int], ...]:
        return tuple((r, c) for r in range(self.height) for c in range(self.width))


def _check_fits(grid: np.ndarray, se: StructuringElement) -> None:
    if se.height > grid.shape[0] or se.width > grid.shape[1]:
        raise StructuringElementTooLargeError(
            f"{se.height}x{se.width} element does not fit a {grid.shape[0]}x{grid.shape[1]} grid"
        )


def _erode(grid: np.ndarray, se: StructuringElement) -> np.ndarray:
    # kept cell x: the whole rectangle translated to x stays inside the foreground
    windows = np.lib.stride_tricks.sliding_window_view(grid, (se.height, se.width))
    out = np.zeros_like(grid)
    out[: grid.shape[0] - se.height + 1, : grid.shape[1] - se.width + 1] = windows.all(
        axis=(2, 3)
    )
    return out.astype(np.uint8)


def _dilate(grid: np.ndarray, se: StructuringElement) -> np.ndarray:
    out = np.zeros_like(grid)
    rows, cols = grid.shape
    for dr, dc in se.offsets:
        out[dr:rows, dc:cols] |= grid[: rows - dr, : cols - dc]
    return out.astype(np.uint8)


def morph_transform(grid: BinaryGrid, se: StructuringElement, kind: str) -> BinaryGrid:
    """Apply erode, dilate, open, or close with the given rectangle element."""
    grid = np.asarray(grid, dtype=np.uint8)
    _check_fits(grid, se)
    if kind == "erode":
        return _erode(grid, se)
    if kind == "dilate":
        return _dilate(grid, se)
    if kind in ("open", "close"):
        # pad so dilation spill past the border survives into the erosion step
        pad_r, pad_c = se.height, se.width
        canvas = np.pad(grid, ((pad_r, pad_r), (pad_c, pad_c)))
        if kind == "open":
            result = _dilate(_erode(canvas, se), se)
        else:
            result = _erode(_dilate(canvas, se), se)
        return result[pad_r : pad_r + grid.shape[0], pad_c : pad_c + grid.shape[1]]
    raise ValueError(f"unknown morphology kind {kind!r}")


def denoise_grid(grid: BinaryGrid, config: DetectionConfig) -> BinaryGrid:
    """Opening then closing with the alpha1 x alpha2 element.

    Opening drops scattered congested specks (salt); the closing that follows
    refills uncongested pinholes inside real bottlenecks (pepper).
    """
    se = StructuringElement(config.alpha1, config.alpha2)
    return morph_transform(morph_transform(grid, se, "open"), se, "close")


@dataclass(frozen=True)
class Region:
    label: int
    cells: np.ndarray  # (n, 2) row/col pairs in row-major order
    bbox: tuple[int, int, int, int]  # row_min, col_min, row_max, col_max (inclusive)

    @property
    def size(self) -> int:
        return self.cells.shape[0]

    @property
    def row_span(self) -> tuple[int, int]:
        return self.bbox[0], self.bbox[2]

    def mask(self, shape: tuple[int, int]) -> np.ndarray:
        m = np.zeros(shape, dtype=np.uint8)
        m[self.cells[:, 0], self.cells[:, 1]] = 1
        return m


@dataclass(frozen=True)
class LabeledRegions:
    label_grid: np.ndarray  # int32, 0 = background
    regions: tuple[Region, ...]

    @property
    def region_count(self) -> int:
        return len(self.regions)


def _structure(connectivity: int) -> np.ndarray:
    if connectivity == 8:
        return np.ones((3, 3), dtype=int)
    if connectivity == 4:
        return np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=int)
    raise ValueError("connectivity must be 4 or 8")


def label_regions(grid: BinaryGrid, connectivity: int = 8) -> LabeledRegions:
    """Connected-component labels, numbered by row-major discovery order."""
    grid = np.asarray(grid, dtype=np.uint8)
    raw, count = ndimage.label(grid, structure=_structure(connectivity))
    if count == 0:
        return LabeledRegions(raw.astype(np.int32), ())
    # renumber so label k is the k-th component met in a row-major scan
    flat = raw.ravel()
    first_seen = np.full(count + 1, flat.size, dtype=np.int64)
    np.minimum.at(first_seen, flat, np.arange(flat.size))
    order = np.argsort(first_seen[1:], kind="stable")
    lut = np.zeros(count + 1, dtype=np.int32)
    lut[order + 1] = np.arange(1, count + 1)
    label_grid = lut[raw]
    regions = []
    for k in range(1, count + 1):
        cells = np.argwhere(label_grid == k)
        bbox = (
            int(cells[:, 0].min()),
            int(cells[:, 1].min()),
            int(cells[:, 0].max()),
            int(cells[:, 1].max()),
        )
        regions.append(Region(label=k, cells=cells, bbox=bbox))
    return LabeledRegions(label_grid, tuple(regions))


def filter_small_components(grid: BinaryGrid, alpha3: int, connectivity: int = 8) -> BinaryGrid:
    """Drop foreground components with fewer than alpha3 cells (strict)."""
    if alpha3 < 1:
        raise ValueError("alpha3 must be >= 1")
    grid = np.asarray(grid, dtype=np.uint8)
    raw, count = ndimage.label(grid, structure=_structure(connectivity))
    if count == 0:
        return grid.copy()
    sizes = np.bincount(raw.ravel(), minlength=count + 1)
    keep = sizes >= alpha3
    keep[0] = False
    return keep[raw].astype(np.uint8)
