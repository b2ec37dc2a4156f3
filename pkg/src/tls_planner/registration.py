"""Synthetic scan generation, rigid registration and alignment scoring.

Scans are produced by casting the scanner sweep against the plot boxes and
the spherical reference targets, with Gaussian range noise.  Registration
places each scan into the world with its (possibly noisy) pose estimate and
then refines with point-to-point iterative closest point, gated at a maximum
correspondence radius.  Quality is scored with nearest-neighbor point error
statistics, per-target fitted-sphere offsets and Hausdorff distances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .field_model import PlotBox
from .geometry import rotation_matrix, transform_points
from .raycast import ScannerSpec, direction_grid, first_hits

FRAME_LOCAL = "scanner_local"
FRAME_WORLD = "world"


class FrameError(ValueError):
    """Cloud is in the wrong coordinate frame for the operation."""


class NoOverlapError(RuntimeError):
    """No correspondences within the gating radius."""


class EmptyCloudError(ValueError):
    """Operation requires a non-empty point cloud."""


@dataclass(frozen=True)
class ScanPose:
    """Scanner origin and orientation in the world frame."""

    position: np.ndarray  # (3,)
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))

    def matrix(self) -> np.ndarray:
        return rotation_matrix(self.roll, self.pitch, self.yaw)

    def inverse_apply(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points) - self.position) @ self.matrix()


@dataclass
class PointCloud:
    points: np.ndarray  # (n, 3)
    frame: str = FRAME_LOCAL
    source_location_id: int | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if self.frame not in (FRAME_LOCAL, FRAME_WORLD):
            raise FrameError(f"unknown frame {self.frame!r}")
        if self.points.size and not np.all(np.isfinite(self.points)):
            raise ValueError("point cloud contains non-finite coordinates")

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class Sphere:
    center: np.ndarray  # (3,)
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.radius <= 0:
            raise ValueError("sphere radius must be positive")


def synthesize_scan(
    boxes: list[PlotBox],
    spheres: list[Sphere],
    pose: ScanPose,
    spec: ScannerSpec,
    noise_sigma: float = 0.0,
    rng: np.random.Generator | None = None,
    ground: bool = True,
) -> PointCloud:
    """Cast the scanner sweep from ``pose`` and return scanner-frame points.

    Every ray keeps its nearest hit over all boxes, sphere targets and (by
    default) the z = 0 ground plane; the measured range gets Gaussian noise
    and is then gated to [min_range, max_range].  Ground returns matter for
    registration: without them the clouds are nearly all vertical faces and
    carry almost no height or tilt information.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    local_dirs = direction_grid(spec).reshape(-1, 3)
    world_dirs = local_dirs @ pose.matrix().T
    origin = pose.position
    t_best, _ = first_hits(boxes, origin, world_dirs)
    for sphere in spheres:
        t_sphere = _ray_sphere(origin, world_dirs, sphere)
        closer = t_sphere < t_best
        t_best[closer] = t_sphere[closer]
    if ground and origin[2] > 0.0:
        dz = world_dirs[:, 2]
        with np.errstate(divide="ignore"):
            t_ground = np.where(dz < 0.0, -origin[2] / dz, np.inf)
        closer = t_ground < t_best
        t_best[closer] = t_ground[closer]
    hit = np.isfinite(t_best)
    t_measured = t_best[hit]
    if noise_sigma > 0.0:
        t_measured = t_measured + rng.normal(0.0, noise_sigma, size=t_measured.shape)
    keep = (t_measured >= spec.min_range) & (t_measured <= spec.max_range)
    points = local_dirs[hit][keep] * t_measured[keep, None]
    return PointCloud(points=points, frame=FRAME_LOCAL)


def _ray_sphere(origin: np.ndarray, directions: np.ndarray, sphere: Sphere) -> np.ndarray:
    """Nearest positive intersection parameter per unit-direction ray."""
    oc = origin - sphere.center
    b = directions @ oc
    c = float(oc @ oc) - sphere.radius**2
    disc = b * b - c
    t = np.full(len(directions), np.inf)
    ok = disc >= 0.0
    sqrt_disc = np.sqrt(disc[ok])
    t0 = -b[ok] - sqrt_disc
    t1 = -b[ok] + sqrt_disc
    nearest = np.where(t0 > 0.0, t0, np.where(t1 > 0.0, t1, np.inf))
    t[ok] = nearest
    return t


def register_from_pose(cloud: PointCloud, pose: ScanPose) -> PointCloud:
    """Place a scanner-frame cloud into the world with a rigid pose."""
    if cloud.frame != FRAME_LOCAL:
        raise FrameError(f"expected a {FRAME_LOCAL} cloud, got {cloud.frame}")
    world = transform_points(cloud.points, pose.position, pose.roll, pose.pitch, pose.yaw)
    return PointCloud(points=world, frame=FRAME_WORLD, source_location_id=cloud.source_location_id)


@dataclass
class RigidTransform:
    rotation: np.ndarray     # (3, 3)
    translation: np.ndarray  # (3,)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls(rotation=np.eye(3), translation=np.zeros(3))


def _kabsch(source: np.ndarray, target: np.ndarray) -> RigidTransform:
    """Least-squares rigid transform mapping source points onto targets."""
    centroid_s = source.mean(axis=0)
    centroid_t = target.mean(axis=0)
    h = (source - centroid_s).T @ (target - centroid_t)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    correction = np.diag([1.0, 1.0, d])
    rotation = vt.T @ correction @ u.T
    translation = centroid_t - rotation @ centroid_s
    return RigidTransform(rotation=rotation, translation=translation)


def c2c_refine(
    source: PointCloud,
    reference: PointCloud,
    max_correspondence: float = 0.30,
    max_iters: int = 50,
    rms_change_tolerance: float = 1e-6,
) -> tuple[RigidTransform, PointCloud]:
    """Point-to-point ICP of source onto reference.

    Correspondences beyond ``max_correspondence`` are dropped each iteration.
    Iterations stop when the gated RMS improves by less than the tolerance or
    would increase (the last improving transform is kept), so the accepted
    RMS sequence never increases.
    """
    if source.frame != FRAME_WORLD or reference.frame != FRAME_WORLD:
        raise FrameError("both clouds must be in the world frame")
    if len(source) == 0 or len(reference) == 0:
        raise EmptyCloudError("cannot register empty clouds")
    tree = cKDTree(reference.points)
    current = source.points.copy()
    total = RigidTransform.identity()
    last_rms = math.inf
    for _ in range(max_iters):
        dist, idx = tree.query(current)
        gate = dist <= max_correspondence
        if not gate.any():
            raise NoOverlapError(
                f"no correspondences within {max_correspondence} m; clouds do not overlap"
            )
        rms = float(np.sqrt(np.mean(dist[gate] ** 2)))
        if rms >= last_rms - rms_change_tolerance:
            break
        last_rms = rms
        step = _kabsch(current[gate], reference.points[idx[gate]])
        current = step.apply(current)
        total = RigidTransform(
            rotation=step.rotation @ total.rotation,
            translation=step.rotation @ total.translation + step.translation,
        )
    refined = PointCloud(
        points=total.apply(source.points),
        frame=FRAME_WORLD,
        source_location_id=source.source_location_id,
    )
    return total, refined


@dataclass
class HausdorffResult:
    d_h: float                       # max over source of NN distance into reference
    distances: np.ndarray            # per source point
    axis_offsets: np.ndarray         # signed (n, 3): source - nearest reference

    @property
    def mean(self) -> float:
        return float(self.distances.mean())

    @property
    def sd(self) -> float:
        return float(self.distances.std())


def hausdorff_distance(source: PointCloud, reference: PointCloud) -> HausdorffResult:
    """Directed Hausdorff distance with the full per-point distance series.

    Distances are recomputed from the matched neighbor coordinates so they
    are bit-identical to a brute-force nearest-neighbor scan.
    """
    if len(source) == 0 or len(reference) == 0:
        raise EmptyCloudError("hausdorff_distance requires non-empty clouds")
    if source.frame != reference.frame:
        raise FrameError("clouds must share a frame")
    tree = cKDTree(reference.points)
    _, idx = tree.query(source.points)
    offsets = source.points - reference.points[idx]
    distances = np.linalg.norm(offsets, axis=1)
    return HausdorffResult(
        d_h=float(distances.max()), distances=distances, axis_offsets=offsets
    )


def voxel_downsample(points: np.ndarray, voxel: float) -> np.ndarray:
    """Centroid per occupied voxel; equalizes the wildly anisotropic density
    of scanner sweeps before registration."""
    if voxel <= 0:
        raise ValueError("voxel must be positive")
    points = np.asarray(points, dtype=float)
    if len(points) == 0:
        return points
    keys = np.floor(points / voxel).astype(np.int64)
    order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0]))
    sorted_keys = keys[order]
    sorted_points = points[order]
    change = np.any(np.diff(sorted_keys, axis=0) != 0, axis=1)
    bounds = np.concatenate([[0], np.nonzero(change)[0] + 1, [len(sorted_keys)]])
    sums = np.add.reduceat(sorted_points, bounds[:-1], axis=0)
    return sums / np.diff(bounds)[:, None]


def fit_sphere(points: np.ndarray, iterations: int = 5) -> Sphere:
    """Sphere through noisy surface samples.

    Linear least squares on |x|^2 = 2 c.x + (r^2 - |c|^2) seeds a short
    Gauss-Newton polish of the geometric residuals.
    """
    pts = np.asarray(points, dtype=float)
    if pts.shape[0] < 4:
        raise ValueError("need at least 4 points to fit a sphere")
    a = np.hstack([2.0 * pts, np.ones((len(pts), 1))])
    b = (pts**2).sum(axis=1)
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    center = sol[:3]
    radius = math.sqrt(max(sol[3] + center @ center, 1e-12))
    for _ in range(iterations):
        diff = pts - center
        dist = np.linalg.norm(diff, axis=1)
        residual = dist - radius
        jac = np.hstack([-diff / dist[:, None], -np.ones((len(pts), 1))])
        try:
            delta, *_ = np.linalg.lstsq(jac, -residual, rcond=None)
        except np.linalg.LinAlgError:
            break
        center = center + delta[:3]
        radius = radius + delta[3]
    return Sphere(center=center, radius=float(radius))


MIN_SPHERE_POINTS = 20


@dataclass
class TargetStats:
    """Per-target fitted-center offsets, with unusable targets flagged."""

    errors: list[float]          # Euclidean, usable targets only
    horizontal: list[float]
    vertical: list[float]
    unusable: list[int]          # target indices with too few points

    @property
    def mean_error(self) -> float:
        return float(np.mean(self.errors)) if self.errors else math.nan

    @property
    def mean_horizontal(self) -> float:
        return float(np.mean(self.horizontal)) if self.horizontal else math.nan

    @property
    def mean_vertical(self) -> float:
        return float(np.mean(self.vertical)) if self.vertical else math.nan


@dataclass
class RegistrationReport:
    """Alignment quality of one registration against the reference."""

    label: str
    target_stats: TargetStats
    max_point_error: float
    mean_point_error: float
    hausdorff_d_h: float
    hausdorff_mean: float
    hausdorff_sd: float
    axis_histograms: dict[str, tuple[np.ndarray, np.ndarray]]  # axis -> (counts, edges)
    n_sampled_points: int

    def summary_rows(self) -> list[tuple[str, float]]:
        return [
            ("target mean error (cm)", self.target_stats.mean_error * 100),
            ("target horizontal error (cm)", self.target_stats.mean_horizontal * 100),
            ("target vertical error (cm)", self.target_stats.mean_vertical * 100),
            ("max point error (cm)", self.max_point_error * 100),
            ("mean point error (cm)", self.mean_point_error * 100),
            ("hausdorff mean (cm)", self.hausdorff_mean * 100),
            ("hausdorff sd (cm)", self.hausdorff_sd * 100),
        ]


def _target_stats(
    cloud: PointCloud, truth: list[Sphere], search_factor: float = 1.5
) -> TargetStats:
    stats = TargetStats(errors=[], horizontal=[], vertical=[], unusable=[])
    if len(cloud) == 0:
        stats.unusable = list(range(len(truth)))
        return stats
    tree = cKDTree(cloud.points)
    for index, sphere in enumerate(truth):
        nearby = tree.query_ball_point(sphere.center, sphere.radius * search_factor)
        if len(nearby) < MIN_SPHERE_POINTS:
            stats.unusable.append(index)
            continue
        fitted = fit_sphere(cloud.points[nearby])
        offset = fitted.center - sphere.center
        stats.errors.append(float(np.linalg.norm(offset)))
        stats.horizontal.append(float(np.hypot(offset[0], offset[1])))
        stats.vertical.append(float(abs(offset[2])))
    return stats


def registration_report(
    scans: list[PointCloud],
    sphere_truth: list[Sphere],
    reference: PointCloud,
    label: str = "registration",
    subsample: int = 10_000,
    seed: int = 0,
    histogram_bins: int = 60,
) -> RegistrationReport:
    """Score registered scans against the reference registration.

    Scan point statistics come from a seeded uniform subsample of each
    individual scan: the mean point error averages the per-scan mean
    nearest-neighbor distances into the reference, the max point error is
    the overall worst sample.  The Hausdorff statistics and the per-axis
    offset histograms are computed over the merged cloud, and sphere targets
    are re-fitted in the merged cloud against the true centers.
    """
    if not scans:
        raise EmptyCloudError("no scans to report on")
    for cloud in scans:
        if cloud.frame != FRAME_WORLD:
            raise FrameError("scans must be registered into the world frame")
    rng = np.random.default_rng(seed)
    tree = cKDTree(reference.points)
    per_scan_means = []
    max_point_error = 0.0
    n_sampled = 0
    for cloud in scans:
        if len(cloud) > subsample:
            keep = rng.choice(len(cloud), size=subsample, replace=False)
            points = cloud.points[keep]
        else:
            points = cloud.points
        n_sampled += len(points)
        _, idx = tree.query(points)
        distances = np.linalg.norm(points - reference.points[idx], axis=1)
        per_scan_means.append(float(distances.mean()))
        max_point_error = max(max_point_error, float(distances.max()))

    merged = PointCloud(points=np.vstack([c.points for c in scans]), frame=FRAME_WORLD)
    result = hausdorff_distance(merged, reference)
    histograms = {}
    for axis, name in enumerate(("x", "y", "z")):
        histograms[name] = np.histogram(result.axis_offsets[:, axis], bins=histogram_bins)
    histograms["distance"] = np.histogram(result.distances, bins=histogram_bins)
    return RegistrationReport(
        label=label,
        target_stats=_target_stats(merged, sphere_truth),
        max_point_error=max_point_error,
        mean_point_error=float(np.mean(per_scan_means)),
        hausdorff_d_h=result.d_h,
        hausdorff_mean=result.mean,
        hausdorff_sd=result.sd,
        axis_histograms=histograms,
        n_sampled_points=n_sampled,
    )


def write_cloud_xyz(path, cloud: PointCloud) -> None:
    """ASCII cloud, one "x y z" line per point, meters, 6 decimals."""
    with open(path, "w") as handle:
        for x, y, z in cloud.points:
            handle.write(f"{x:.6f} {y:.6f} {z:.6f}\n")


def read_cloud_xyz(path, frame: str = FRAME_WORLD) -> PointCloud:
    points = []
    with open(path) as handle:
        for line in handle:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            points.append((float(parts[0]), float(parts[1]), float(parts[2])))
    return PointCloud(points=np.array(points, dtype=float).reshape(-1, 3), frame=frame)
