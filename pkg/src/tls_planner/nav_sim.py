"""Skid-steer navigation simulation: straight-line global plan, pure-pursuit
local tracking, in-place rotations between legs, and the error metrics used
to judge tracking quality.

The vehicle model is an ideal unicycle integrated at the control period; the
controller sees a noisy measured pose while the log records the true one.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import heading_from_rovers, transform_point, wrap_angle
from .routing import WaypointPlan

__all__ = [
    "RobotState",
    "PurePursuitParams",
    "NoiseModel",
    "TrajectoryLog",
    "NavigationMetrics",
    "StationaryStats",
    "MissionFailure",
    "heading_from_rovers",
    "transform_point",
    "pure_pursuit_step",
    "simulate_mission",
    "navigation_metrics",
    "stationary_pose_stats",
    "stationary_dwell_samples",
    "write_trajectory_csv",
    "read_trajectory_csv",
]

PHASE_ROTATE = 0
PHASE_TRACK = 1


class MissionFailure(RuntimeError):
    """A leg timed out before reaching its goal."""

    def __init__(self, leg: int, message: str):
        super().__init__(message)
        self.leg = leg


@dataclass(frozen=True)
class RobotState:
    x: float = 0.0
    y: float = 0.0
    heading: float = 0.0    # radians, (-pi, pi]
    v: float = 0.0          # m/s
    omega: float = 0.0      # rad/s
    time: float = 0.0       # s

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class PurePursuitParams:
    look_ahead: float = 1.0
    cruise_speed: float = 0.5
    v_max: float = 1.0
    rotation_rate: float = 0.5              # rad/s during in-place alignment
    goal_position_tolerance: float = 0.03
    goal_heading_tolerance: float = math.radians(2.0)
    control_period: float = 0.1
    leg_timeout_factor: float = 6.0         # x the ideal leg duration, plus slack

    def __post_init__(self):
        if self.look_ahead <= 0.0:
            raise ValueError("look_ahead must be positive")
        if not 0.0 < self.cruise_speed <= self.v_max:
            raise ValueError("cruise_speed must be in (0, v_max]")
        if self.goal_position_tolerance <= 0.0 or self.goal_heading_tolerance <= 0.0:
            raise ValueError("goal tolerances must be positive")
        if self.control_period <= 0.0:
            raise ValueError("control_period must be positive")


@dataclass(frozen=True)
class NoiseModel:
    """Gaussian pose-measurement noise plus multiplicative wheel slip.

    Stands in for the full localization stack: position/heading sigmas mimic
    the fused RTK-GNSS estimate, wheel slip perturbs the executed commands.
    """

    position_sigma: float = 0.0   # m, per axis
    heading_sigma: float = 0.0    # rad
    wheel_slip_sigma: float = 0.0  # fraction of commanded velocity
    seed: int = 0

    def __post_init__(self):
        for name in ("position_sigma", "heading_sigma", "wheel_slip_sigma"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")


@dataclass
class TrajectoryLog:
    """Fixed-rate simulation log of true states and commanded velocities."""

    time: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    v_cmd: np.ndarray
    omega_cmd: np.ndarray
    waypoint_idx: np.ndarray  # active goal waypoint per sample
    phase: np.ndarray         # PHASE_ROTATE or PHASE_TRACK

    def __len__(self) -> int:
        return len(self.time)

    @property
    def path_length(self) -> float:
        return float(np.hypot(np.diff(self.x), np.diff(self.y)).sum())


def pure_pursuit_step(
    state: RobotState,
    segment_start,
    segment_end,
    params: PurePursuitParams,
) -> tuple[float, float]:
    """One control cycle of pure pursuit along a straight segment.

    The target is the forward-most intersection of the look-ahead circle with
    the segment; when the goal is inside the circle the goal itself is
    targeted, and when the circle misses the path entirely the nearest path
    point is (recovery).  Curvature follows k = 2 sin(alpha) / L_D and the
    turn rate is omega = v * k.
    """
    p0 = np.asarray(segment_start, dtype=float)
    p1 = np.asarray(segment_end, dtype=float)
    seg = p1 - p0
    seg_len = float(np.linalg.norm(seg))
    if seg_len < 1e-12:
        raise ValueError("degenerate path segment")
    u = seg / seg_len
    rel = np.array(state.position) - p0
    proj = float(rel @ u)
    lateral2 = float(rel @ rel) - proj * proj
    disc = params.look_ahead**2 - lateral2
    if disc >= 0.0:
        s = proj + math.sqrt(disc)  # forward-most circle/line intersection
        s = min(max(s, 0.0), seg_len)
    else:
        s = min(max(proj, 0.0), seg_len)  # recovery: nearest path point
    target = p0 + s * u
    alpha = wrap_angle(
        math.atan2(target[1] - state.y, target[0] - state.x) - state.heading
    )
    curvature = 2.0 * math.sin(alpha) / params.look_ahead
    v = params.cruise_speed
    return v, v * curvature


def _measured(state: RobotState, noise: NoiseModel, rng: np.random.Generator) -> RobotState:
    if noise.position_sigma == 0.0 and noise.heading_sigma == 0.0:
        return state
    dx = rng.normal(0.0, noise.position_sigma) if noise.position_sigma else 0.0
    dy = rng.normal(0.0, noise.position_sigma) if noise.position_sigma else 0.0
    dpsi = rng.normal(0.0, noise.heading_sigma) if noise.heading_sigma else 0.0
    return replace(state, x=state.x + dx, y=state.y + dy, heading=wrap_angle(state.heading + dpsi))


def _integrate(state: RobotState, v: float, omega: float, dt: float) -> RobotState:
    return RobotState(
        x=state.x + v * math.cos(state.heading) * dt,
        y=state.y + v * math.sin(state.heading) * dt,
        heading=wrap_angle(state.heading + omega * dt),
        v=v,
        omega=omega,
        time=state.time + dt,
    )


def simulate_mission(
    plan: WaypointPlan,
    params: PurePursuitParams,
    noise: NoiseModel,
    initial: RobotState | None = None,
) -> TrajectoryLog:
    """Drive the plan leg by leg: rotate in place to face the leg, then track
    it with pure pursuit until inside the goal tolerance.

    Measurement noise enters the controller only; the log holds true states.
    A leg that exceeds its timeout raises MissionFailure naming the leg.
    Identical inputs (including the noise seed) give identical logs.
    """
    if not plan.waypoints:
        raise ValueError("plan has no waypoints")
    rng = np.random.default_rng(noise.seed)
    dt = params.control_period
    if initial is None:
        start = plan.waypoints[0].position
        initial = RobotState(x=start[0], y=start[1], heading=plan.waypoints[0].heading)

    rows = [(initial, 0.0, 0.0, 0, PHASE_TRACK)]
    state = initial
    for leg in range(len(plan.waypoints) - 1):
        p0 = np.array(plan.waypoints[leg].position)
        p1 = np.array(plan.waypoints[leg + 1].position)
        leg_len = float(np.linalg.norm(p1 - p0))
        if leg_len < 1e-12:
            continue
        bearing = math.atan2(p1[1] - p0[1], p1[0] - p0[0])
        rotate_time = abs(wrap_angle(bearing - state.heading)) / params.rotation_rate
        budget = params.leg_timeout_factor * (
            leg_len / params.cruise_speed + rotate_time
        ) + 10.0
        deadline = state.time + budget

        while True:
            meas = _measured(state, noise, rng)
            err = wrap_angle(bearing - meas.heading)
            if abs(err) <= params.goal_heading_tolerance:
                break
            omega = math.copysign(params.rotation_rate, err)
            slip = 1.0 + (rng.normal(0.0, noise.wheel_slip_sigma) if noise.wheel_slip_sigma else 0.0)
            state = _integrate(state, 0.0, omega * slip, dt)
            rows.append((state, 0.0, omega, leg + 1, PHASE_ROTATE))
            if state.time > deadline:
                raise MissionFailure(leg, f"leg {leg} timed out while rotating toward {tuple(p1)}")

        while True:
            meas = _measured(state, noise, rng)
            if math.dist(meas.position, tuple(p1)) <= params.goal_position_tolerance:
                break
            v_cmd, omega_cmd = pure_pursuit_step(meas, p0, p1, params)
            v_cmd = min(v_cmd, params.v_max)
            if noise.wheel_slip_sigma:
                v_exec = v_cmd * (1.0 + rng.normal(0.0, noise.wheel_slip_sigma))
                omega_exec = omega_cmd * (1.0 + rng.normal(0.0, noise.wheel_slip_sigma))
            else:
                v_exec, omega_exec = v_cmd, omega_cmd
            state = _integrate(state, v_exec, omega_exec, dt)
            rows.append((state, v_cmd, omega_cmd, leg + 1, PHASE_TRACK))
            if state.time > deadline:
                raise MissionFailure(leg, f"leg {leg} timed out en route to {tuple(p1)}")

    return TrajectoryLog(
        time=np.array([r[0].time for r in rows]),
        x=np.array([r[0].x for r in rows]),
        y=np.array([r[0].y for r in rows]),
        heading=np.array([r[0].heading for r in rows]),
        v_cmd=np.array([r[1] for r in rows]),
        omega_cmd=np.array([r[2] for r in rows]),
        waypoint_idx=np.array([r[3] for r in rows], dtype=np.int32),
        phase=np.array([r[4] for r in rows], dtype=np.int8),
    )


@dataclass
class ScanStop:
    """Arrival state and stationary dwell measurements at one scan node."""

    location_id: int
    planned: tuple[float, float]
    achieved: tuple[float, float, float]  # true x, y, heading at arrival
    dwell: np.ndarray                     # (n, 3) measured x, y, heading


def simulate_survey(
    plan: WaypointPlan,
    params: PurePursuitParams,
    noise: NoiseModel,
    dwell_duration: float = 30.0,
    initial: RobotState | None = None,
) -> tuple[TrajectoryLog, list[ScanStop]]:
    """Run the mission and collect stationary dwell samples at scan nodes.

    The platform holds still while scanning, so dwells do not alter the
    trajectory; they draw from a dedicated noise stream so the navigation
    log is unchanged by the dwell length.
    """
    log = simulate_mission(plan, params, noise, initial)
    rng = np.random.default_rng(np.random.SeedSequence([noise.seed, 0x5CA9]))
    n_dwell = max(2, round(dwell_duration / params.control_period))
    stops = []
    for wp_index, wp in enumerate(plan.waypoints):
        if wp.scan_node_id is None:
            continue
        at = np.nonzero(log.waypoint_idx == wp_index)[0]
        arrival = int(at[-1]) if at.size else len(log) - 1
        achieved = (float(log.x[arrival]), float(log.y[arrival]), float(log.heading[arrival]))
        stops.append(
            ScanStop(
                location_id=wp.scan_node_id,
                planned=wp.position,
                achieved=achieved,
                dwell=stationary_dwell_samples(achieved, noise, n_dwell, rng),
            )
        )
    return log, stops


@dataclass
class NavigationMetrics:
    xte: np.ndarray             # unsigned cross-track distances, m
    heading_error: np.ndarray   # signed, rad
    phase: np.ndarray
    mean_xte: float
    sd_xte: float
    mean_heading_error: float
    sd_heading_error: float
    fraction_below_5cm: float
    fraction_below_10cm: float
    tracking_fraction_below_5cm: float
    tracking_max_xte: float


def navigation_metrics(log: TrajectoryLog, plan: WaypointPlan) -> NavigationMetrics:
    """Cross-track and heading errors of every sample against its active leg.

    XTE is the perpendicular distance to the infinite line through the leg;
    the heading error is the normalized difference to the leg bearing.  All
    samples count, including in-place rotations; tracking-only figures are
    reported alongside.
    """
    pts = np.array([w.position for w in plan.waypoints])
    n = len(log)
    xte = np.zeros(n)
    heading_error = np.zeros(n)
    for idx in range(n):
        goal = int(log.waypoint_idx[idx])
        leg = max(1, goal)
        p0, p1 = pts[leg - 1], pts[leg]
        seg = p1 - p0
        seg_len = np.linalg.norm(seg)
        if seg_len < 1e-12:
            xte[idx] = math.dist((log.x[idx], log.y[idx]), tuple(p0))
            heading_error[idx] = 0.0
            continue
        u = seg / seg_len
        rel = np.array([log.x[idx] - p0[0], log.y[idx] - p0[1]])
        xte[idx] = abs(rel[0] * u[1] - rel[1] * u[0])
        heading_error[idx] = wrap_angle(log.heading[idx] - math.atan2(seg[1], seg[0]))
    tracking = log.phase == PHASE_TRACK
    tracked = xte[tracking] if tracking.any() else np.array([0.0])
    return NavigationMetrics(
        xte=xte,
        heading_error=heading_error,
        phase=log.phase,
        mean_xte=float(xte.mean()),
        sd_xte=float(xte.std()),
        mean_heading_error=float(heading_error.mean()),
        sd_heading_error=float(heading_error.std()),
        fraction_below_5cm=float((xte < 0.05).mean()),
        fraction_below_10cm=float((xte < 0.10).mean()),
        tracking_fraction_below_5cm=float((tracked < 0.05).mean()),
        tracking_max_xte=float(tracked.max()),
    )


@dataclass
class StationaryStats:
    """Pose statistics over a stationary dwell at one scan location."""

    mean_x: float
    mean_y: float
    mean_heading: float
    residual_sd_x: float
    residual_sd_y: float
    heading_sd: float
    absolute_location_error: float  # planned point to mean position
    n_samples: int


def stationary_pose_stats(samples: np.ndarray, planned) -> StationaryStats:
    """Residual statistics of dwell pose samples (n, 3: x, y, heading).

    Residuals are taken against the sample mean; the absolute location error
    is the distance from the planned point to that mean.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2 or samples.shape[1] != 3 or samples.shape[0] < 2:
        raise ValueError("need at least 2 pose samples of (x, y, heading)")
    mean_xy = samples[:, :2].mean(axis=0)
    headings = samples[:, 2]
    mean_heading = math.atan2(np.sin(headings).mean(), np.cos(headings).mean())
    heading_res = np.array([wrap_angle(h - mean_heading) for h in headings])
    return StationaryStats(
        mean_x=float(mean_xy[0]),
        mean_y=float(mean_xy[1]),
        mean_heading=wrap_angle(mean_heading),
        residual_sd_x=float(samples[:, 0].std()),
        residual_sd_y=float(samples[:, 1].std()),
        heading_sd=float(heading_res.std()),
        absolute_location_error=float(math.dist(mean_xy, planned)),
        n_samples=samples.shape[0],
    )


def stationary_dwell_samples(
    true_pose: tuple[float, float, float],
    noise: NoiseModel,
    n_samples: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Measured (x, y, heading) samples while the platform sits still."""
    x, y, heading = true_pose
    out = np.empty((n_samples, 3))
    out[:, 0] = x + rng.normal(0.0, noise.position_sigma, n_samples)
    out[:, 1] = y + rng.normal(0.0, noise.position_sigma, n_samples)
    out[:, 2] = [wrap_angle(heading + d) for d in rng.normal(0.0, noise.heading_sigma, n_samples)]
    return out


def write_trajectory_csv(path, log: TrajectoryLog) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["t", "x", "y", "heading", "v_cmd", "omega_cmd", "waypoint_idx", "phase"])
        for idx in range(len(log)):
            writer.writerow(
                [
                    f"{log.time[idx]:.3f}",
                    f"{log.x[idx]:.9f}",
                    f"{log.y[idx]:.9f}",
                    f"{log.heading[idx]:.9f}",
                    f"{log.v_cmd[idx]:.6f}",
                    f"{log.omega_cmd[idx]:.9f}",
                    int(log.waypoint_idx[idx]),
                    int(log.phase[idx]),
                ]
            )


def read_trajectory_csv(path) -> TrajectoryLog:
    cols: dict[str, list] = {k: [] for k in
                             ("t", "x", "y", "heading", "v_cmd", "omega_cmd", "waypoint_idx", "phase")}
    with open(path, newline="") as handle:
        lines = (line for line in handle if not line.startswith("#"))
        for row in csv.DictReader(lines):
            for key in cols:
                cols[key].append(float(row[key]))
    return TrajectoryLog(
        time=np.array(cols["t"]),
        x=np.array(cols["x"]),
        y=np.array(cols["y"]),
        heading=np.array(cols["heading"]),
        v_cmd=np.array(cols["v_cmd"]),
        omega_cmd=np.array(cols["omega_cmd"]),
        waypoint_idx=np.array(cols["waypoint_idx"], dtype=np.int32),
        phase=np.array(cols["phase"], dtype=np.int8),
    )
