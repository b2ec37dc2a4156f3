"""Shared geometric primitives: angles, rigid transforms, boxes and rays."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


class DegenerateBaselineError(ValueError):
    """Raised when two rover antennas coincide and no heading exists."""


def wrap_angle(theta: float) -> float:
    """Normalize an angle to the half-open interval (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, TWO_PI)
    if wrapped <= 0.0:
        wrapped += TWO_PI
    return wrapped - math.pi


def heading_from_rovers(p1, p2) -> float:
    """Heading of the baseline vector from antenna ``p1`` to antenna ``p2``.

    The two-argument arctangent keeps the quadrant information that a plain
    Y/X ratio would lose.  Result is in (-pi, pi], ENU convention
    (0 = east, pi/2 = north).
    """
    dx = float(p2[0]) - float(p1[0])
    dy = float(p2[1]) - float(p1[1])
    if dx == 0.0 and dy == 0.0:
        raise DegenerateBaselineError("rover antennas coincide; heading undefined")
    return wrap_angle(math.atan2(dy, dx))


def rotation_matrix(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Rotation Rz(yaw) @ Ry(pitch) @ Rx(roll) taking local axes to global."""
    cr, sr = math.cos(roll), math.sin(roll)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cy, sy = math.cos(yaw), math.sin(yaw)
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return rz @ ry @ rx


def transform_point(local, translation, roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Map a point from a local frame into the global frame.

    global = translation + Rz(yaw) @ Ry(pitch) @ Rx(roll) @ local
    """
    r = rotation_matrix(roll, pitch, yaw)
    return np.asarray(translation, dtype=float) + r @ np.asarray(local, dtype=float)


def transform_points(points: np.ndarray, translation, roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Vectorized :func:`transform_point` for an (n, 3) array."""
    r = rotation_matrix(roll, pitch, yaw)
    return np.asarray(points, dtype=float) @ r.T + np.asarray(translation, dtype=float)


@dataclass(frozen=True)
class Aabb:
    """Axis-aligned box given by its minimum and maximum corners."""

    minimum: np.ndarray
    maximum: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "minimum", np.asarray(self.minimum, dtype=float))
        object.__setattr__(self, "maximum", np.asarray(self.maximum, dtype=float))
        if not np.all(self.minimum < self.maximum):
            raise ValueError("box minimum must be strictly below maximum on every axis")

    @property
    def extent(self) -> np.ndarray:
        return self.maximum - self.minimum

    def footprint_distance(self, x: float, y: float) -> float:
        """Distance in the ground plane from (x, y) to the box footprint."""
        dx = max(self.minimum[0] - x, 0.0, x - self.maximum[0])
        dy = max(self.minimum[1] - y, 0.0, y - self.maximum[1])
        return math.hypot(dx, dy)


@dataclass(frozen=True)
class Ray:
    """Ray with a unit direction vector."""

    origin: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=float)
        direction = np.asarray(self.direction, dtype=float)
        norm = float(np.linalg.norm(direction))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"ray direction must be unit length, got |d| = {norm}")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "direction", direction)


def ray_aabb_intersect(ray: Ray, box: Aabb) -> tuple[float, float] | None:
    """Slab-method intersection of a ray with an axis-aligned box.

    Returns the (t_entry, t_exit) parameter interval where the ray is inside
    the box, or None when the per-axis slab intervals do not overlap or the
    whole box lies behind the origin.  t_entry is negative when the origin is
    inside the box.
    """
    t_near = -math.inf
    t_far = math.inf
    for axis in range(3):
        o = ray.origin[axis]
        d = ray.direction[axis]
        lo = box.minimum[axis]
        hi = box.maximum[axis]
        if d == 0.0:
            if o < lo or o > hi:
                return None
            continue
        inv = 1.0 / d
        t0 = (lo - o) * inv
        t1 = (hi - o) * inv
        if t0 > t1:
            t0, t1 = t1, t0
        t_near = max(t_near, t0)
        t_far = min(t_far, t1)
        if t_near > t_far:
            return None
    if t_far < 0.0:
        return None
    return t_near, t_far


def slab_intersect_batch(
    origin: np.ndarray,
    directions: np.ndarray,
    box_min: np.ndarray,
    box_max: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Slab test of many rays from one origin against one box.

    Returns (t_entry, hit_mask).  Rays parallel to a slab get +/-inf bounds
    from IEEE division; the 0 * inf = nan case cannot arise because a zero
    numerator with a zero direction component is resolved by the inf sign of
    the previous subtraction only when origin lies exactly on a slab plane,
    which we settle by nudging those components onto the open interval test.
    """
    d = directions
    o = origin
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t0 = (box_min - o) * inv
        t1 = (box_max - o) * inv
    t_lo = np.minimum(t0, t1)
    t_hi = np.maximum(t0, t1)
    # Where d == 0 the ray stays at o on that axis; inside the slab the
    # interval is (-inf, inf), outside it is empty.  Written after the
    # min/max so the empty interval is not re-sorted into a full one.
    zero = d == 0.0
    if np.any(zero):
        inside = (o >= box_min) & (o <= box_max)
        t_lo = np.where(zero, np.where(inside, -np.inf, np.inf), t_lo)
        t_hi = np.where(zero, np.where(inside, np.inf, -np.inf), t_hi)
    t_entry = np.max(t_lo, axis=-1)
    t_exit = np.min(t_hi, axis=-1)
    hit = (t_entry <= t_exit) & (t_exit >= 0.0)
    return t_entry, hit
