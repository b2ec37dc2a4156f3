"""Digitize a plot-based breeding field into voxelized boxes and enumerate
candidate scanner positions.

Field frame convention (used across the whole package): the origin is the
southwest corner of the field, rows of plots run along +X, the row index
grows along +Y.  Alleys between plot blocks and the two end headlands are
corridors parallel to the Y axis; the gaps between adjacent rows (and the two
strips just outside the outer rows) are corridors parallel to the X axis.
Candidate scan locations are the intersections of the two corridor families.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Aabb

log = logging.getLogger(__name__)

# Fractional cell overhangs below this are treated as rounding artifacts of
# decimal voxel sizes (e.g. a 0.33 m voxel standing in for 1/3 m), not as an
# extra cell layer.
CELL_SNAP_TOLERANCE = 0.05


class LayoutError(ValueError):
    """Invalid field layout; carries the name of the offending field."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field_name = field_name


@dataclass(frozen=True)
class FieldLayout:
    """Declarative description of a plot-based field.

    All lengths in meters.  ``row_spacing`` is center-to-center across rows;
    ``alley_width`` is the free gap between plot boxes along a row;
    ``headland_depth`` is the unplanted border at both row ends.
    """

    n_rows: int
    plots_per_row: int
    plot_length: float
    plot_width: float
    plot_height: float
    row_spacing: float
    alley_width: float
    headland_depth: float
    origin: tuple[float, float] = (0.0, 0.0)
    voxel_size: tuple[float, float, float] = (0.5, 0.5, 0.33)

    def __post_init__(self):
        for name in ("n_rows", "plots_per_row"):
            if int(getattr(self, name)) < 1:
                raise LayoutError(name, f"must be >= 1, got {getattr(self, name)}")
        for name in (
            "plot_length",
            "plot_width",
            "plot_height",
            "row_spacing",
            "alley_width",
            "headland_depth",
        ):
            value = float(getattr(self, name))
            if not value > 0.0 or not math.isfinite(value):
                raise LayoutError(name, f"must be strictly positive, got {value}")
        if self.row_spacing <= self.plot_width:
            raise LayoutError(
                "row_spacing",
                f"must exceed plot_width ({self.plot_width}) so free space exists "
                f"between rows, got {self.row_spacing}",
            )
        dims = (self.plot_length, self.plot_width, self.plot_height)
        for axis, (voxel, extent) in enumerate(zip(self.voxel_size, dims)):
            if voxel <= 0.0:
                raise LayoutError("voxel_size", f"component {axis} must be positive")
            if voxel > extent * (1.0 + CELL_SNAP_TOLERANCE):
                raise LayoutError(
                    "voxel_size",
                    f"component {axis} ({voxel}) exceeds plot dimension {extent}",
                )

    @property
    def row_gap(self) -> float:
        """Free space between the boxes of adjacent rows."""
        return self.row_spacing - self.plot_width

    @property
    def field_length(self) -> float:
        """Extent along X including both headlands."""
        return (
            2.0 * self.headland_depth
            + self.plots_per_row * self.plot_length
            + (self.plots_per_row - 1) * self.alley_width
        )

    @property
    def field_width(self) -> float:
        """Extent along Y; the outer half-gap margins mirror the interior gaps."""
        return self.n_rows * self.row_spacing

    def plot_x_min(self, col: int) -> float:
        return self.origin[0] + self.headland_depth + col * (self.plot_length + self.alley_width)

    def plot_y_min(self, row: int) -> float:
        return self.origin[1] + self.row_gap / 2.0 + row * self.row_spacing

    def row_corridor_lines(self) -> np.ndarray:
        """Y coordinates of the n_rows+1 corridor lines parallel to X.

        Lines 0 and n_rows run along the unplanted strips just outside the
        outer rows; the rest are the centers of the interior row gaps.
        """
        return self.origin[1] + np.arange(self.n_rows + 1) * self.row_spacing

    def cross_corridor_lines(self) -> tuple[np.ndarray, np.ndarray]:
        """X coordinates of corridor lines parallel to Y and their kinds.

        Returns (xs, is_headland): the west headland center, the
        plots_per_row-1 alley centers, and the east headland center.
        """
        xs = [self.origin[0] + self.headland_depth / 2.0]
        kinds = [True]
        for col in range(self.plots_per_row - 1):
            xs.append(self.plot_x_min(col) + self.plot_length + self.alley_width / 2.0)
            kinds.append(False)
        xs.append(self.origin[0] + self.field_length - self.headland_depth / 2.0)
        kinds.append(True)
        return np.array(xs), np.array(kinds)

    def headland_line_ys(self) -> tuple[float, float]:
        """Y coordinates of the two open border corridors used for
        alley-headland-alley navigation."""
        lines = self.row_corridor_lines()
        return float(lines[0]), float(lines[-1])


def _cell_count(extent: float, voxel: float) -> int:
    """Ceiling division with a snap tolerance for near-integer quotients."""
    quotient = extent / voxel
    floor_q = math.floor(quotient)
    if quotient - floor_q <= CELL_SNAP_TOLERANCE:
        return max(1, floor_q)
    return math.ceil(quotient)


@dataclass(frozen=True)
class PlotBox:
    """One plot's axis-aligned bounding box with its voxel grid shape."""

    plot_id: tuple[int, int]
    aabb_min: np.ndarray
    aabb_max: np.ndarray
    grid_dims: tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "aabb_min", np.asarray(self.aabb_min, dtype=float))
        object.__setattr__(self, "aabb_max", np.asarray(self.aabb_max, dtype=float))

    @property
    def aabb(self) -> Aabb:
        return Aabb(self.aabb_min, self.aabb_max)

    @property
    def n_cells(self) -> int:
        nx, ny, nz = self.grid_dims
        return nx * ny * nz

    def cell_index_of(self, point: np.ndarray, voxel_size) -> tuple[int, int, int]:
        """Voxel containing ``point``; boundary points clamp toward the
        interior so entry points on cell faces stay inside the grid."""
        rel = (np.asarray(point) - self.aabb_min) / np.asarray(voxel_size)
        idx = np.floor(rel).astype(int)
        idx = np.clip(idx, 0, np.array(self.grid_dims) - 1)
        return int(idx[0]), int(idx[1]), int(idx[2])


@dataclass(frozen=True)
class CellId:
    """Identifies one voxel of one plot."""

    plot_id: tuple[int, int]
    cell_index: tuple[int, int, int]


@dataclass(frozen=True)
class ScanLocation:
    """Candidate scanner position at a corridor intersection."""

    location_id: int
    position: tuple[float, float]
    kind: str  # "alley_row_intersection" | "headland_intersection"


def digitize_field(layout: FieldLayout) -> list[PlotBox]:
    """Replace every plot by its axis-aligned bounding box on the ground.

    Boxes are ordered row-major (row index, then plot index along the row).
    Grid dims use snapped ceiling division; a short final layer is truncated
    to the box boundary geometrically but counts as a full cell for coverage.
    """
    dims = (
        _cell_count(layout.plot_length, layout.voxel_size[0]),
        _cell_count(layout.plot_width, layout.voxel_size[1]),
        _cell_count(layout.plot_height, layout.voxel_size[2]),
    )
    boxes = []
    for row in range(layout.n_rows):
        y0 = layout.plot_y_min(row)
        for col in range(layout.plots_per_row):
            x0 = layout.plot_x_min(col)
            boxes.append(
                PlotBox(
                    plot_id=(row, col),
                    aabb_min=np.array([x0, y0, 0.0]),
                    aabb_max=np.array(
                        [x0 + layout.plot_length, y0 + layout.plot_width, layout.plot_height]
                    ),
                    grid_dims=dims,
                )
            )
    return boxes


def field_cells(boxes: list[PlotBox]) -> list[CellId]:
    """All cells of all boxes in table column order (box order, then C-order
    over (i, j, k))."""
    cells = []
    for box in boxes:
        nx, ny, nz = box.grid_dims
        for i in range(nx):
            for j in range(ny):
                for k in range(nz):
                    cells.append(CellId(box.plot_id, (i, j, k)))
    return cells


def candidate_scan_locations(
    layout: FieldLayout,
    min_scan_distance: float,
    robot_clearance: float = 0.0,
) -> list[ScanLocation]:
    """Enumerate corridor intersections safe for scanner placement.

    The grid is the (n_rows+1) row corridor lines crossed with the
    (plots_per_row+1) alley/headland lines, numbered row-major from the
    origin corner.  A point survives only when its distance to every plot
    footprint exceeds both the scanner minimum and the robot clearance.
    """
    if min_scan_distance < 0.0:
        raise LayoutError("min_scan_distance", "must be >= 0")
    boxes = digitize_field(layout)
    effective = max(min_scan_distance, robot_clearance)
    ys = layout.row_corridor_lines()
    xs, is_headland = layout.cross_corridor_lines()
    locations = []
    location_id = 0
    for y in ys:
        for x, headland in zip(xs, is_headland):
            clearance = min(box.aabb.footprint_distance(x, y) for box in boxes)
            if clearance > effective:
                locations.append(
                    ScanLocation(
                        location_id=location_id,
                        position=(float(x), float(y)),
                        kind="headland_intersection" if headland else "alley_row_intersection",
                    )
                )
                location_id += 1
    if not locations:
        log.warning(
            "no candidate scan locations: every corridor intersection is within "
            "%.3f m of a plot (corridors narrower than the required clearance)",
            effective,
        )
    return locations


def write_cells_csv(path, layout: FieldLayout, boxes: list[PlotBox]) -> None:
    """One row per cell: plot ids, cell indices, center coordinates (m)."""
    voxel = np.asarray(layout.voxel_size)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["plot_row", "plot_col", "i", "j", "k", "cx", "cy", "cz"])
        for box in boxes:
            nx, ny, nz = box.grid_dims
            for i in range(nx):
                for j in range(ny):
                    for k in range(nz):
                        center = box.aabb_min + (np.array([i, j, k]) + 0.5) * voxel
                        # Truncated final layers keep their centers inside the box.
                        center = np.minimum(center, box.aabb_max - voxel * 1e-9)
                        writer.writerow(
                            [box.plot_id[0], box.plot_id[1], i, j, k]
                            + [f"{c:.6f}" for c in center]
                        )


def write_locations_csv(path, locations: list[ScanLocation]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["location_id", "x", "y", "kind"])
        for loc in locations:
            writer.writerow(
                [loc.location_id, f"{loc.position[0]:.6f}", f"{loc.position[1]:.6f}", loc.kind]
            )


def read_locations_csv(path) -> list[ScanLocation]:
    locations = []
    with open(path, newline="") as handle:
        for row in csv.DictReader(_data_rows(handle)):
            locations.append(
                ScanLocation(
                    location_id=int(row["location_id"]),
                    position=(float(row["x"]), float(row["y"])),
                    kind=row["kind"],
                )
            )
    return locations


def _data_rows(handle):
    """Skip '#'-prefixed header comments (seed annotations etc.)."""
    for line in handle:
        if not line.startswith("#"):
            yield line
