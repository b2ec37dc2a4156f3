"""Run configuration: YAML schema, validation and loading.

The schema (units in meters, seconds; angles in degrees where suffixed):

    field:                # FieldLayout, see field_model
      n_rows, plots_per_row, plot_length, plot_width, plot_height,
      row_spacing, alley_width, headland_depth, origin: [x, y],
      voxel_size: [l, w, h]
    scanner:              # ScannerSpec
      v_start, v_end, h_start, h_end, angular_step, min_range, max_range,
      mount_height
    planning:
      min_scan_distance, robot_clearance, metric: br|aha,
      origin: southeast | [x, y]
    sim:
      look_ahead, cruise_speed, rotation_rate, goal_position_tolerance,
      goal_heading_tolerance_deg, control_period, dwell_duration,
      noise: {position_sigma, heading_sigma_deg, wheel_slip_sigma, seed}
    eval:
      max_correspondence, subsample, seed, range_noise_sigma,
      scan_angular_step,
      pose_noise: {xy_sigma, z_sigma, yaw_sigma_deg, pitch_roll_sigma_deg,
                   seed},
      spheres: [{center: [x, y, z], radius}, ...]
    output_dir: path

Every section except ``field`` may be omitted; defaults then apply.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import yaml

from .field_model import FieldLayout, LayoutError
from .nav_sim import NoiseModel, PurePursuitParams
from .raycast import ScannerSpec
from .registration import Sphere
from .routing import Metric


class ConfigError(ValueError):
    """Invalid configuration; message carries file and key context."""


@dataclass(frozen=True)
class PlanningConfig:
    min_scan_distance: float = 0.8
    robot_clearance: float = 0.4
    metric: Metric = Metric.AHA_NAV
    origin: str | tuple[float, float] = "southeast"


@dataclass(frozen=True)
class PoseNoiseConfig:
    """Scan-pose estimate noise for the registration evaluation."""

    xy_sigma: float = 0.025
    z_sigma: float = 0.03
    yaw_sigma: float = math.radians(0.4)
    pitch_roll_sigma: float = math.radians(0.4)
    seed: int = 99


@dataclass(frozen=True)
class EvalConfig:
    max_correspondence: float = 0.30
    subsample: int = 10_000
    seed: int = 7
    range_noise_sigma: float = 0.003
    scan_angular_step: float = 0.25
    scan_max_range: float = 20.0
    icp_voxel: float = 0.04
    pose_noise: PoseNoiseConfig = PoseNoiseConfig()
    spheres: tuple[Sphere, ...] = ()


@dataclass(frozen=True)
class SimConfig:
    params: PurePursuitParams = PurePursuitParams()
    noise: NoiseModel = NoiseModel()
    dwell_duration: float = 30.0


@dataclass
class RunConfig:
    field: FieldLayout
    scanner: ScannerSpec
    planning: PlanningConfig
    sim: SimConfig
    eval: EvalConfig
    output_dir: Path
    source_path: Path | None = None

    @property
    def seed(self) -> int:
        return self.sim.noise.seed

    def planning_origin_xy(self) -> tuple[float, float]:
        """Route origin; 'southeast' is the candidate-grid corner at maximum
        X on the first row corridor line."""
        if isinstance(self.planning.origin, tuple):
            return self.planning.origin
        xs, _ = self.field.cross_corridor_lines()
        ys = self.field.row_corridor_lines()
        return float(xs[-1]), float(ys[0])


def _no_extras(section: dict, context: str, path):
    if section:
        key = next(iter(section))
        raise ConfigError(f"{_where(path, f'{context}.{key}')}: unknown key")


def _where(path, key: str) -> str:
    location = str(path) if path else "<config>"
    line = _key_line(path, key.split(".")[-1])
    if line is not None:
        return f"{location}:{line}: {key}"
    return f"{location}: {key}"


def _key_line(path, key: str) -> int | None:
    """Best-effort line lookup of a key in the source file."""
    if not path:
        return None
    try:
        text = Path(path).read_text()
    except OSError:
        return None
    for number, line in enumerate(text.splitlines(), start=1):
        if line.strip().startswith(f"{key}:"):
            return number
    return None


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return config_from_dict(raw, path)


def config_from_dict(raw: dict, path=None) -> RunConfig:
    data = dict(raw)
    try:
        field_section = dict(data.pop("field"))
    except KeyError:
        raise ConfigError(f"{_where(path, 'field')}: required section missing") from None

    try:
        layout = FieldLayout(
            n_rows=int(field_section.pop("n_rows")),
            plots_per_row=int(field_section.pop("plots_per_row")),
            plot_length=float(field_section.pop("plot_length")),
            plot_width=float(field_section.pop("plot_width")),
            plot_height=float(field_section.pop("plot_height")),
            row_spacing=float(field_section.pop("row_spacing")),
            alley_width=float(field_section.pop("alley_width")),
            headland_depth=float(field_section.pop("headland_depth")),
            origin=tuple(field_section.pop("origin", (0.0, 0.0))),
            voxel_size=tuple(field_section.pop("voxel_size", (0.5, 0.5, 0.33))),
        )
    except KeyError as exc:
        raise ConfigError(f"{_where(path, f'field.{exc.args[0]}')}: required") from None
    except LayoutError as exc:
        raise ConfigError(f"{_where(path, f'field.{exc.field_name}')}: {exc}") from None
    _no_extras(field_section, "field", path)

    scanner_section = dict(data.pop("scanner", {}))
    try:
        scanner = ScannerSpec(
            v_start=float(scanner_section.pop("v_start", -60.0)),
            v_end=float(scanner_section.pop("v_end", 90.0)),
            h_start=float(scanner_section.pop("h_start", 0.0)),
            h_end=float(scanner_section.pop("h_end", 360.0)),
            angular_step=float(scanner_section.pop("angular_step", 0.36)),
            min_range=float(scanner_section.pop("min_range", 0.6)),
            max_range=float(scanner_section.pop("max_range", 70.0)),
            mount_height=float(scanner_section.pop("mount_height", 1.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"{_where(path, 'scanner')}: {exc}") from None
    _no_extras(scanner_section, "scanner", path)

    planning_section = dict(data.pop("planning", {}))
    origin_raw = planning_section.pop("origin", "southeast")
    if isinstance(origin_raw, str):
        if origin_raw != "southeast":
            raise ConfigError(
                f"{_where(path, 'planning.origin')}: must be 'southeast' or [x, y]"
            )
        origin: str | tuple[float, float] = "southeast"
    else:
        origin = (float(origin_raw[0]), float(origin_raw[1]))
    metric_raw = str(planning_section.pop("metric", "aha"))
    try:
        metric = Metric(metric_raw)
    except ValueError:
        raise ConfigError(
            f"{_where(path, 'planning.metric')}: got {metric_raw!r}, expected 'br' or 'aha'"
        ) from None
    planning = PlanningConfig(
        min_scan_distance=float(planning_section.pop("min_scan_distance", 0.8)),
        robot_clearance=float(planning_section.pop("robot_clearance", 0.4)),
        metric=metric,
        origin=origin,
    )
    _no_extras(planning_section, "planning", path)

    sim_section = dict(data.pop("sim", {}))
    noise_section = dict(sim_section.pop("noise", {}))
    try:
        noise = NoiseModel(
            position_sigma=float(noise_section.pop("position_sigma", 0.0)),
            heading_sigma=math.radians(float(noise_section.pop("heading_sigma_deg", 0.0))),
            wheel_slip_sigma=float(noise_section.pop("wheel_slip_sigma", 0.0)),
            seed=int(noise_section.pop("seed", 0)),
        )
        params = PurePursuitParams(
            look_ahead=float(sim_section.pop("look_ahead", 1.0)),
            cruise_speed=float(sim_section.pop("cruise_speed", 0.5)),
            v_max=float(sim_section.pop("v_max", 1.0)),
            rotation_rate=float(sim_section.pop("rotation_rate", 0.5)),
            goal_position_tolerance=float(sim_section.pop("goal_position_tolerance", 0.03)),
            goal_heading_tolerance=math.radians(
                float(sim_section.pop("goal_heading_tolerance_deg", 2.0))
            ),
            control_period=float(sim_section.pop("control_period", 0.1)),
            leg_timeout_factor=float(sim_section.pop("leg_timeout_factor", 6.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"{_where(path, 'sim')}: {exc}") from None
    sim = SimConfig(
        params=params,
        noise=noise,
        dwell_duration=float(sim_section.pop("dwell_duration", 30.0)),
    )
    _no_extras(noise_section, "sim.noise", path)
    _no_extras(sim_section, "sim", path)

    eval_section = dict(data.pop("eval", {}))
    pose_section = dict(eval_section.pop("pose_noise", {}))
    pose_noise = PoseNoiseConfig(
        xy_sigma=float(pose_section.pop("xy_sigma", 0.025)),
        z_sigma=float(pose_section.pop("z_sigma", 0.03)),
        yaw_sigma=math.radians(float(pose_section.pop("yaw_sigma_deg", 0.4))),
        pitch_roll_sigma=math.radians(float(pose_section.pop("pitch_roll_sigma_deg", 0.4))),
        seed=int(pose_section.pop("seed", 99)),
    )
    _no_extras(pose_section, "eval.pose_noise", path)
    spheres = []
    for index, entry in enumerate(eval_section.pop("spheres", []) or []):
        try:
            spheres.append(
                Sphere(center=tuple(entry["center"]), radius=float(entry.get("radius", 0.1)))
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(
                f"{_where(path, f'eval.spheres[{index}]')}: {exc}"
            ) from None
    evaluation = EvalConfig(
        max_correspondence=float(eval_section.pop("max_correspondence", 0.30)),
        subsample=int(eval_section.pop("subsample", 10_000)),
        seed=int(eval_section.pop("seed", 7)),
        range_noise_sigma=float(eval_section.pop("range_noise_sigma", 0.003)),
        scan_angular_step=float(eval_section.pop("scan_angular_step", 0.25)),
        scan_max_range=float(eval_section.pop("scan_max_range", 20.0)),
        icp_voxel=float(eval_section.pop("icp_voxel", 0.04)),
        pose_noise=pose_noise,
        spheres=tuple(spheres),
    )
    _no_extras(eval_section, "eval", path)

    output_dir = Path(data.pop("output_dir", "out"))
    _no_extras(data, "config", path)
    return RunConfig(
        field=layout,
        scanner=scanner,
        planning=planning,
        sim=sim,
        eval=evaluation,
        output_dir=output_dir,
        source_path=path,
    )
