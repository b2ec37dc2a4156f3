"""Scanner ray generation, slab-method intersections and the per-location
visibility table.

The scanner sweep is an angular grid: vertical angles include both endpoints
(when the step lands on them), horizontal angles are half-open so a full
360-degree sweep does not duplicate the 0/360 direction.  Visibility uses
first-hit semantics: each ray contributes at most one cell, the one it enters
on the nearest plot box along the ray.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass

import numpy as np

from .field_model import CellId, PlotBox, ScanLocation, field_cells
from .geometry import Aabb, Ray, ray_aabb_intersect, slab_intersect_batch

__all__ = [
    "ScannerSpec",
    "Ray",
    "Aabb",
    "ray_aabb_intersect",
    "generate_rays",
    "direction_grid",
    "VisibilityTable",
    "visibility_analysis",
    "first_hits",
    "total_cells",
    "box_column_offsets",
    "write_visibility_csv",
    "read_visibility_csv",
    "write_visibility_cache",
    "read_visibility_cache",
]

_GRID_EPS = 1e-9
CACHE_MAGIC = b"TLSVIS1\n"
CACHE_VERSION = 1


@dataclass(frozen=True)
class ScannerSpec:
    """Angular sweep and range envelope of the laser scanner.

    Angles in degrees, ranges and mount height in meters.  The defaults match
    a survey-grade terrestrial scanner at quarter resolution.
    """

    v_start: float = -60.0
    v_end: float = 90.0
    h_start: float = 0.0
    h_end: float = 360.0
    angular_step: float = 0.36
    min_range: float = 0.6
    max_range: float = 70.0
    mount_height: float = 1.0

    def __post_init__(self):
        if not self.v_start < self.v_end:
            raise ValueError(f"v_start must be below v_end, got [{self.v_start}, {self.v_end}]")
        if not self.h_start < self.h_end:
            raise ValueError(f"h_start must be below h_end, got [{self.h_start}, {self.h_end}]")
        if self.angular_step <= 0.0:
            raise ValueError(f"angular_step must be positive, got {self.angular_step}")
        if not 0.0 <= self.min_range < self.max_range:
            raise ValueError(
                f"need 0 <= min_range < max_range, got [{self.min_range}, {self.max_range}]"
            )

    def vertical_angles(self) -> np.ndarray:
        """Inclusive grid from v_start up to the last step ever <= v_end."""
        steps = math.floor((self.v_end - self.v_start) / self.angular_step + _GRID_EPS)
        return self.v_start + np.arange(steps + 1) * self.angular_step

    def horizontal_angles(self) -> np.ndarray:
        """Half-open grid [h_start, h_end)."""
        count = math.ceil((self.h_end - self.h_start) / self.angular_step - _GRID_EPS)
        return self.h_start + np.arange(count) * self.angular_step

    @property
    def full_circle(self) -> bool:
        return abs((self.h_end - self.h_start) - 360.0) < 1e-9


def direction_grid(spec: ScannerSpec, heading: float = 0.0) -> np.ndarray:
    """(n_vertical, n_horizontal, 3) unit directions in the ENU frame.

    Azimuth 0 points along +X (east) before the heading rotation; elevation
    is measured from the horizontal plane.
    """
    v = np.deg2rad(spec.vertical_angles())[:, None]
    h = np.deg2rad(spec.horizontal_angles())[None, :] + heading
    cos_v = np.cos(v)
    out = np.empty((v.shape[0], h.shape[1], 3))
    out[:, :, 0] = cos_v * np.cos(h)
    out[:, :, 1] = cos_v * np.sin(h)
    out[:, :, 2] = np.broadcast_to(np.sin(v), out.shape[:2])
    return out


def generate_rays(spec: ScannerSpec, origin, heading: float = 0.0):
    """Yield one ray per (vertical, horizontal) angle pair.

    ``origin`` is the 3D scanner position; ``heading`` rotates every
    direction about +Z.
    """
    origin = np.asarray(origin, dtype=float)
    grid = direction_grid(spec, heading)
    for row in grid:
        for direction in row:
            yield Ray(origin, direction / np.linalg.norm(direction))


@dataclass
class VisibilityTable:
    """Hit counts per (scan location, plot cell).

    Rows follow ``locations`` order, columns follow box order with C-order
    cell indices inside each box.  A cell is visible from a location when its
    count is positive.
    """

    counts: np.ndarray  # (n_locations, n_cells) uint32
    locations: list[ScanLocation]
    boxes: list[PlotBox]

    def __post_init__(self):
        expected = (len(self.locations), total_cells(self.boxes))
        if self.counts.shape != expected:
            raise ValueError(f"counts shape {self.counts.shape} != {expected}")

    @property
    def n_locations(self) -> int:
        return self.counts.shape[0]

    @property
    def n_cells(self) -> int:
        return self.counts.shape[1]

    @property
    def visibility(self) -> np.ndarray:
        return self.counts > 0

    def cells(self) -> list[CellId]:
        return field_cells(self.boxes)


def total_cells(boxes: list[PlotBox]) -> int:
    return sum(box.n_cells for box in boxes)


def box_column_offsets(boxes: list[PlotBox]) -> np.ndarray:
    """Start column of each box's cell block in the table."""
    sizes = np.array([box.n_cells for box in boxes], dtype=np.int64)
    return np.concatenate([[0], np.cumsum(sizes)[:-1]])


def _elevation_window(
    spec: ScannerSpec, origin: np.ndarray, box: PlotBox, n_v: int
) -> tuple[int, int] | None:
    """Inclusive vertical index range able to reach the box.

    The extreme elevations hitting the box run to its top/bottom edge at the
    nearest footprint point (when above/below the origin) or the farthest
    corner otherwise; one extra step of margin absorbs grid rounding.
    """
    d_near = box.aabb.footprint_distance(origin[0], origin[1])
    corners_xy = np.array(
        [
            [box.aabb_min[0], box.aabb_min[1]],
            [box.aabb_min[0], box.aabb_max[1]],
            [box.aabb_max[0], box.aabb_min[1]],
            [box.aabb_max[0], box.aabb_max[1]],
        ]
    )
    d_far = float(np.max(np.linalg.norm(corners_xy - origin[:2], axis=1)))
    dz_top = box.aabb_max[2] - origin[2]
    dz_bot = box.aabb_min[2] - origin[2]
    v_hi = math.atan2(dz_top, d_near if dz_top >= 0 else d_far)
    v_lo = math.atan2(dz_bot, d_near if dz_bot <= 0 else d_far)
    margin = 2.0 * math.radians(spec.angular_step)
    v_lo_deg = math.degrees(v_lo - margin)
    v_hi_deg = math.degrees(v_hi + margin)
    k_lo = max(0, int(math.floor((v_lo_deg - spec.v_start) / spec.angular_step)))
    k_hi = min(n_v - 1, int(math.ceil((v_hi_deg - spec.v_start) / spec.angular_step)))
    if k_lo > k_hi:
        return None
    return k_lo, k_hi


def _azimuth_indices(
    spec: ScannerSpec, origin_xy: np.ndarray, box: PlotBox, n_h: int
) -> np.ndarray | None:
    """Horizontal ray indices whose azimuth can reach the box footprint."""
    corners = np.array(
        [
            [box.aabb_min[0], box.aabb_min[1]],
            [box.aabb_min[0], box.aabb_max[1]],
            [box.aabb_max[0], box.aabb_min[1]],
            [box.aabb_max[0], box.aabb_max[1]],
        ]
    )
    rel = corners - origin_xy
    center = box.aabb_min[:2] + (box.aabb_max[:2] - box.aabb_min[:2]) / 2.0 - origin_xy
    az_center = math.atan2(center[1], center[0])
    az = np.arctan2(rel[:, 1], rel[:, 0])
    spread = np.abs(np.angle(np.exp(1j * (az - az_center))))
    half_span = float(spread.max()) + 2.0 * math.radians(spec.angular_step)
    if half_span >= math.pi:
        return np.arange(n_h)
    step = math.radians(spec.angular_step)
    h0 = math.radians(spec.h_start)
    k_center = (az_center - h0) / step
    k_reach = int(math.ceil(half_span / step)) + 1
    k_lo = int(math.floor(k_center)) - k_reach
    k_hi = int(math.ceil(k_center)) + k_reach
    if spec.full_circle:
        return np.arange(k_lo, k_hi + 1) % n_h
    window = np.arange(max(k_lo, 0), min(k_hi, n_h - 1) + 1)
    return window if window.size else None


def visibility_analysis(
    boxes: list[PlotBox],
    locations: list[ScanLocation],
    spec: ScannerSpec,
    voxel_size,
) -> VisibilityTable:
    """Cast the scanner sweep from every location and accumulate cell hits.

    Per location, every ray's nearest entry over all plot boxes wins
    (occlusion); entries outside [min_range, max_range] are discarded.  Rays
    that miss every box (ground, sky) contribute nothing.  Work per box is
    restricted to the angular window subtending it, which keeps full fields
    at survey resolutions tractable; results equal exhaustive testing.
    Locations are processed independently in order, so the table is
    deterministic.
    """
    from ._kernels import first_hit_counts

    if not boxes or not locations:
        return VisibilityTable(
            counts=np.zeros((len(locations), total_cells(boxes)), dtype=np.uint32),
            locations=list(locations),
            boxes=list(boxes),
        )
    voxel = np.asarray(voxel_size, dtype=float)
    v = np.deg2rad(spec.vertical_angles())
    h = np.deg2rad(spec.horizontal_angles())
    cos_v, sin_v = np.cos(v), np.sin(v)
    cos_h, sin_h = np.cos(h), np.sin(h)
    n_v, n_h = len(v), len(h)
    box_min = np.array([b.aabb_min for b in boxes])
    box_max = np.array([b.aabb_max for b in boxes])
    col0 = box_column_offsets(boxes).astype(np.int64)
    gnx = np.array([b.grid_dims[0] for b in boxes], dtype=np.int64)
    gny = np.array([b.grid_dims[1] for b in boxes], dtype=np.int64)
    gnz = np.array([b.grid_dims[2] for b in boxes], dtype=np.int64)
    counts = np.zeros((len(locations), total_cells(boxes)), dtype=np.uint32)

    for loc_row, loc in enumerate(locations):
        origin = np.array([loc.position[0], loc.position[1], spec.mount_height])
        kv_lo = np.zeros(len(boxes), dtype=np.int64)
        kv_hi = np.full(len(boxes), -1, dtype=np.int64)
        buckets: list[list[int]] = [[] for _ in range(n_h)]
        for box_idx, box in enumerate(boxes):
            window = _elevation_window(spec, origin, box, n_v)
            if window is None:
                continue
            az_idx = _azimuth_indices(spec, origin[:2], box, n_h)
            if az_idx is None:
                continue
            kv_lo[box_idx], kv_hi[box_idx] = window
            for kh in az_idx:
                buckets[kh].append(box_idx)
        col_offsets = np.zeros(n_h + 1, dtype=np.int64)
        for kh in range(n_h):
            col_offsets[kh + 1] = col_offsets[kh] + len(buckets[kh])
        col_boxes = np.empty(col_offsets[-1], dtype=np.int64)
        for kh in range(n_h):
            col_boxes[col_offsets[kh] : col_offsets[kh + 1]] = buckets[kh]
        first_hit_counts(
            origin[0], origin[1], origin[2],
            cos_v, sin_v, cos_h, sin_h,
            box_min, box_max, col0, gnx, gny, gnz,
            voxel[0], voxel[1], voxel[2],
            col_offsets, col_boxes, kv_lo, kv_hi,
            spec.min_range, spec.max_range,
            counts[loc_row],
        )
    return VisibilityTable(counts=counts, locations=list(locations), boxes=list(boxes))


def first_hits(
    boxes: list[PlotBox], origin, directions: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Nearest entry distance and box index per ray over all boxes.

    Plain vectorized slab sweep without angular culling; suits moderate ray
    counts (scan synthesis, tests).  Returns (t_entry, box_index) with inf /
    -1 for misses; entries behind the origin clamp to 0.
    """
    directions = np.asarray(directions, dtype=float)
    origin = np.asarray(origin, dtype=float)
    t_best = np.full(len(directions), np.inf)
    box_best = np.full(len(directions), -1, dtype=np.int32)
    for box_idx, box in enumerate(boxes):
        t_entry, hit = slab_intersect_batch(origin, directions, box.aabb_min, box.aabb_max)
        t_entry = np.maximum(t_entry, 0.0)
        closer = hit & (t_entry < t_best)
        t_best[closer] = t_entry[closer]
        box_best[closer] = box_idx
    return t_best, box_best


def write_visibility_csv(path, table: VisibilityTable) -> None:
    """Sparse CSV of nonzero entries:
    location_id, plot_row, plot_index, i, j, k, hit_count."""
    offsets = box_column_offsets(table.boxes)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["location_id", "plot_row", "plot_index", "i", "j", "k", "hit_count"])
        for row, loc in enumerate(table.locations):
            cols = np.nonzero(table.counts[row])[0]
            for col in cols:
                box_idx = int(np.searchsorted(offsets, col, side="right") - 1)
                box = table.boxes[box_idx]
                local = int(col - offsets[box_idx])
                nx, ny, nz = box.grid_dims
                i, rem = divmod(local, ny * nz)
                j, k = divmod(rem, nz)
                writer.writerow(
                    [loc.location_id, box.plot_id[0], box.plot_id[1], i, j, k,
                     int(table.counts[row, col])]
                )


def read_visibility_csv(path, boxes: list[PlotBox], locations: list[ScanLocation]) -> VisibilityTable:
    """Rebuild a table from the sparse CSV given the field it was built on."""
    offsets = box_column_offsets(boxes)
    box_lookup = {box.plot_id: idx for idx, box in enumerate(boxes)}
    row_lookup = {loc.location_id: row for row, loc in enumerate(locations)}
    counts = np.zeros((len(locations), total_cells(boxes)), dtype=np.uint32)
    with open(path, newline="") as handle:
        lines = (line for line in handle if not line.startswith("#"))
        for rec in csv.DictReader(lines):
            box_idx = box_lookup[(int(rec["plot_row"]), int(rec["plot_index"]))]
            box = boxes[box_idx]
            nx, ny, nz = box.grid_dims
            local = (int(rec["i"]) * ny + int(rec["j"])) * nz + int(rec["k"])
            counts[row_lookup[int(rec["location_id"])], offsets[box_idx] + local] = int(
                rec["hit_count"]
            )
    return VisibilityTable(counts=counts, locations=list(locations), boxes=list(boxes))


def write_visibility_cache(path, table: VisibilityTable) -> None:
    """Binary cache: magic "TLSVIS1\\n", u32 version, u32 n_locations,
    u64 n_cells, u32 location ids, then u32 row-major counts
    (little-endian throughout)."""
    with open(path, "wb") as handle:
        handle.write(CACHE_MAGIC)
        handle.write(struct.pack("<IIQ", CACHE_VERSION, table.n_locations, table.n_cells))
        ids = np.array([loc.location_id for loc in table.locations], dtype="<u4")
        handle.write(ids.tobytes())
        handle.write(np.ascontiguousarray(table.counts, dtype="<u4").tobytes())


def read_visibility_cache(path, boxes: list[PlotBox], locations: list[ScanLocation]) -> VisibilityTable:
    with open(path, "rb") as handle:
        magic = handle.read(len(CACHE_MAGIC))
        if magic != CACHE_MAGIC:
            raise ValueError(f"not a visibility cache (bad magic {magic!r})")
        version, n_loc, n_cells = struct.unpack("<IIQ", handle.read(16))
        if version != CACHE_VERSION:
            raise ValueError(f"unsupported cache version {version}")
        ids = np.frombuffer(handle.read(4 * n_loc), dtype="<u4")
        expected_ids = np.array([loc.location_id for loc in locations], dtype="<u4")
        if n_loc != len(locations) or not np.array_equal(ids, expected_ids):
            raise ValueError("cache location ids do not match the provided locations")
        counts = np.frombuffer(handle.read(4 * n_loc * n_cells), dtype="<u4")
    counts = counts.reshape(n_loc, n_cells).astype(np.uint32)
    return VisibilityTable(counts=counts, locations=list(locations), boxes=list(boxes))
