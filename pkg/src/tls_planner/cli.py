"""Command line pipeline: plan -> route -> simulate -> evaluate.

Stages communicate through files in the run's output directory, so any stage
can be rerun or inspected in isolation.  Every data file starts with a
comment line recording the seed it was produced under.  Exit codes: 0 on
success, 2 on configuration/validation errors, 1 on runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .field_model import (
    LayoutError,
    candidate_scan_locations,
    digitize_field,
    read_locations_csv,
    write_cells_csv,
    write_locations_csv,
)
from .nav_sim import (
    MissionFailure,
    NoiseModel,
    ScanStop,
    navigation_metrics,
    read_trajectory_csv,
    simulate_survey,
    stationary_pose_stats,
    write_trajectory_csv,
)
from .raycast import (
    ScannerSpec,
    read_visibility_cache,
    visibility_analysis,
    write_visibility_cache,
    write_visibility_csv,
)
from .registration import (
    FRAME_WORLD,
    EmptyCloudError,
    NoOverlapError,
    PointCloud,
    RegistrationReport,
    ScanPose,
    c2c_refine,
    hausdorff_distance,
    register_from_pose,
    registration_report,
    synthesize_scan,
    write_cloud_xyz,
)
from .routing import (
    Metric,
    Tour,
    TspInfeasibleError,
    TspSizeError,
    build_distance_graph,
    decompose_route,
    nearest_neighbor_route,
    read_waypoints_csv,
    solve_tsp,
    write_tour_csv,
    write_waypoints_csv,
)
from .site_planning import greedy_cover, force_cover_size, read_cover_csv, write_cover_csv

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_VALIDATION = 2


def _annotate(path: Path, seed: int) -> None:
    """Prepend the seed header comment to a CSV output."""
    text = path.read_text()
    path.write_text(f"# tls-planner v{__version__} seed={seed}\n" + text)


def _out_dir(config: RunConfig, override: str | None) -> Path:
    out = Path(override) if override else config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_plan(config: RunConfig, out_dir: Path, use_cache: bool = True) -> dict:
    """Digitize, enumerate candidates, run visibility and the greedy cover."""
    from .report import save_layout_figure

    boxes = digitize_field(config.field)
    locations = candidate_scan_locations(
        config.field, config.planning.min_scan_distance, config.planning.robot_clearance
    )
    if not locations:
        raise LayoutError(
            "planning", "no valid scan locations: corridors are narrower than the clearance"
        )
    cells_path = out_dir / "cells.csv"
    write_cells_csv(cells_path, config.field, boxes)
    _annotate(cells_path, config.seed)
    cand_path = out_dir / "candidates.csv"
    write_locations_csv(cand_path, locations)
    _annotate(cand_path, config.seed)

    cache_path = out_dir / "visibility.bin"
    table = None
    if use_cache and cache_path.exists():
        try:
            table = read_visibility_cache(cache_path, boxes, locations)
        except ValueError:
            table = None
    if table is None:
        table = visibility_analysis(boxes, locations, config.scanner, config.field.voxel_size)
        write_visibility_cache(cache_path, table)
    vis_path = out_dir / "visibility.csv"
    write_visibility_csv(vis_path, table)
    _annotate(vis_path, config.seed)

    cover = greedy_cover(table)
    cover_path = out_dir / "cover.csv"
    write_cover_csv(cover_path, cover)
    _annotate(cover_path, config.seed)
    save_layout_figure(out_dir / "layout.svg", config.field, boxes, locations, cover.selected)

    print(f"candidates: {len(locations)}")
    print(f"selected scan locations: {len(cover.selected)} -> {sorted(cover.selected)}")
    print(f"reduction: {cover.reduction * 100:.1f}%")
    if cover.uncoverable:
        print(f"uncoverable cells: {len(cover.uncoverable)}")
    return {"locations": locations, "table": table, "cover": cover, "boxes": boxes}


def cmd_route(
    config: RunConfig,
    out_dir: Path,
    cover_path: Path | None = None,
    force_size: int | None = None,
) -> dict:
    """Solve the TSP under both metrics, compare to nearest neighbor, and
    decompose the tour for the configured metric into waypoints."""
    from .report import save_route_figure

    cover_file = cover_path or out_dir / "cover.csv"
    cand_file = out_dir / "candidates.csv"
    for path in (cover_file, cand_file):
        if not Path(path).exists():
            raise FileNotFoundError(f"missing required input {path}; run `plan` first")
    selected = read_cover_csv(cover_file)
    locations = {loc.location_id: loc for loc in read_locations_csv(cand_file)}
    if force_size is not None:
        boxes = digitize_field(config.field)
        cache_path = out_dir / "visibility.bin"
        if not cache_path.exists():
            raise FileNotFoundError(f"{cache_path} required for --force-size; run `plan`")
        table = read_visibility_cache(
            cache_path, boxes, sorted(locations.values(), key=lambda l: l.location_id)
        )
        cover = greedy_cover(table)
        selected = force_cover_size(table, cover, force_size)
    ids = sorted(selected)
    positions = [locations[i].position for i in ids]
    origin_xy = config.planning_origin_xy()

    tours: dict[tuple[str, str], Tour] = {}
    for metric in (Metric.AHA_NAV, Metric.BR_NAV):
        graph = build_distance_graph(ids, positions, origin_xy, metric, config.field)
        tours[("tsp", metric.value)] = solve_tsp(graph)
        tours[("nn", metric.value)] = nearest_neighbor_route(graph)
    for (kind, metric_name), tour in tours.items():
        tour_path = out_dir / f"tour_{kind}_{metric_name}.csv"
        write_tour_csv(tour_path, tour, f"{kind}_{metric_name}")
        _annotate(tour_path, config.seed)

    main_tour = tours[("tsp", config.planning.metric.value)]
    plan = decompose_route(main_tour, config.planning.metric, config.field)
    wp_path = out_dir / "waypoints.csv"
    write_waypoints_csv(wp_path, plan)
    _annotate(wp_path, config.seed)
    boxes = digitize_field(config.field)
    save_route_figure(out_dir / "route.svg", config.field, boxes, plan, main_tour)

    aha, br = tours[("tsp", "aha")], tours[("tsp", "br")]
    nn_aha = tours[("nn", "aha")]
    improvement = (
        (nn_aha.total_length - aha.total_length) / nn_aha.total_length * 100.0
        if nn_aha.total_length > 0
        else 0.0
    )
    print(f"TSP alley-headland-alley total: {aha.total_length:.1f} m")
    print(f"TSP between-rows total: {br.total_length:.1f} m")
    print(f"nearest-neighbor (aha) total: {nn_aha.total_length:.1f} m")
    print(f"TSP improvement over nearest neighbor: {improvement:.1f}%")
    return {"tours": tours, "plan": plan}


def cmd_simulate(config: RunConfig, out_dir: Path, waypoints_path: Path | None = None) -> dict:
    """Drive the waypoint plan with pure pursuit under the configured noise."""
    from .report import save_xte_figure

    wp_file = waypoints_path or out_dir / "waypoints.csv"
    if not Path(wp_file).exists():
        raise FileNotFoundError(f"missing required input {wp_file}; run `route` first")
    plan = read_waypoints_csv(wp_file, config.planning.metric)
    log, stops = simulate_survey(
        plan, config.sim.params, config.sim.noise, config.sim.dwell_duration
    )
    metrics = navigation_metrics(log, plan)

    traj_path = out_dir / "trajectory.csv"
    write_trajectory_csv(traj_path, log)
    _annotate(traj_path, config.seed)
    _write_stops_csv(out_dir / "stops.csv", stops)
    _annotate(out_dir / "stops.csv", config.seed)
    _write_dwell_csv(out_dir / "dwell.csv", stops)
    _annotate(out_dir / "dwell.csv", config.seed)
    _write_nav_metrics_csv(out_dir / "nav_metrics.csv", metrics)
    _annotate(out_dir / "nav_metrics.csv", config.seed)
    boxes = digitize_field(config.field)
    save_xte_figure(out_dir / "xte.svg", config.field, boxes, plan, log, metrics)

    print(f"mission samples: {len(log)}, duration {log.time[-1]:.1f} s")
    print(f"mean XTE: {metrics.mean_xte * 100:.2f} cm (sd {metrics.sd_xte * 100:.2f})")
    print(f"mean heading error: {math.degrees(metrics.mean_heading_error):.3f} deg")
    print(
        "XTE below 5 cm: {:.1f}% of samples, below 10 cm: {:.1f}%".format(
            metrics.fraction_below_5cm * 100, metrics.fraction_below_10cm * 100
        )
    )
    return {"log": log, "stops": stops, "metrics": metrics, "plan": plan}


def cmd_evaluate(config: RunConfig, out_dir: Path, stops_path: Path | None = None) -> dict:
    """Synthesize scans at the achieved poses, register them pose-only and
    with cloud-to-cloud refinement, and score both against the ground-truth
    registration."""
    from .report import save_registration_histograms

    stops_file = stops_path or out_dir / "stops.csv"
    dwell_file = out_dir / "dwell.csv"
    for path in (stops_file, dwell_file):
        if not Path(path).exists():
            raise FileNotFoundError(f"missing required input {path}; run `simulate` first")
    stops = _read_stops_csv(stops_file, dwell_file)
    if not stops:
        raise EmptyCloudError("stops file lists no scan locations")

    scan_spec = replace(
        config.scanner,
        angular_step=config.eval.scan_angular_step,
        max_range=min(config.scanner.max_range, config.eval.scan_max_range),
    )
    boxes = digitize_field(config.field)
    spheres = list(config.eval.spheres)
    range_rng = np.random.default_rng(np.random.SeedSequence([config.eval.seed, 0xA11]))
    pose_rng = np.random.default_rng(
        np.random.SeedSequence([config.eval.pose_noise.seed, 0xB22])
    )

    local_clouds: list[PointCloud] = []
    true_poses: list[ScanPose] = []
    estimated_poses: list[ScanPose] = []
    noise_cfg = config.eval.pose_noise
    for stop in stops:
        x, y, heading = stop.achieved
        true_pose = ScanPose(
            position=np.array([x, y, config.scanner.mount_height]), yaw=heading
        )
        est_stats = stationary_pose_stats(stop.dwell, stop.planned)
        estimated = ScanPose(
            position=np.array(
                [
                    est_stats.mean_x,
                    est_stats.mean_y,
                    config.scanner.mount_height + pose_rng.normal(0.0, noise_cfg.z_sigma),
                ]
            ),
            roll=pose_rng.normal(0.0, noise_cfg.pitch_roll_sigma),
            pitch=pose_rng.normal(0.0, noise_cfg.pitch_roll_sigma),
            yaw=est_stats.mean_heading + pose_rng.normal(0.0, noise_cfg.yaw_sigma),
        )
        cloud = synthesize_scan(
            boxes, spheres, true_pose, scan_spec, config.eval.range_noise_sigma, range_rng
        )
        cloud.source_location_id = stop.location_id
        local_clouds.append(cloud)
        true_poses.append(true_pose)
        estimated_poses.append(estimated)
        scan_path = out_dir / f"scan_{stop.location_id:03d}.xyz"
        write_cloud_xyz(scan_path, cloud)

    reference_clouds = [register_from_pose(c, p) for c, p in zip(local_clouds, true_poses)]
    pose_only_clouds = [register_from_pose(c, p) for c, p in zip(local_clouds, estimated_poses)]
    refined_clouds = refine_ensemble(
        pose_only_clouds, config.eval.max_correspondence, config.eval.icp_voxel
    )

    reference_union = PointCloud(
        points=np.vstack([c.points for c in reference_clouds]), frame=FRAME_WORLD
    )
    write_cloud_xyz(out_dir / "registration_reference.xyz", reference_union)
    write_cloud_xyz(
        out_dir / "registration_pose_only.xyz",
        PointCloud(np.vstack([c.points for c in pose_only_clouds]), FRAME_WORLD),
    )
    write_cloud_xyz(
        out_dir / "registration_refined.xyz",
        PointCloud(np.vstack([c.points for c in refined_clouds]), FRAME_WORLD),
    )

    reports = {}
    for label, clouds in (
        ("pose_only", pose_only_clouds),
        ("refined", refined_clouds),
        ("reference", reference_clouds),
    ):
        reports[label] = registration_report(
            clouds,
            spheres,
            reference_union,
            label=label,
            subsample=config.eval.subsample,
            seed=config.eval.seed,
        )
        report_path = out_dir / f"report_{label}.csv"
        _write_report_csv(report_path, reports[label])
        _annotate(report_path, config.seed)
    save_registration_histograms(out_dir / "registration_histograms.svg", reports["refined"])
    summary = _summary_block(reports)
    (out_dir / "registration_summary.txt").write_text(summary)
    print(summary, end="")
    return {"reports": reports, "stops": stops}


def refine_ensemble(
    clouds: list[PointCloud],
    max_correspondence: float,
    icp_voxel: float = 0.04,
) -> list[PointCloud]:
    """Mutual cloud-to-cloud refinement without any ground-truth input.

    Transforms are estimated on voxel-downsampled working copies (scanner
    sweeps are wildly anisotropic in density, which otherwise biases
    point-to-point correspondences) and applied to the full scans.  Each
    pass re-registers every scan against the union of all others, with the
    correspondence gate annealed down from ``max_correspondence``.  Finally
    one rigid transform re-anchors the ensemble onto the consensus of the
    initial placements, so zero-mean pose errors average out instead of one
    scan's error becoming everyone's.
    """
    from .registration import _kabsch, voxel_downsample

    if len(clouds) == 1:
        return list(clouds)
    initial = [c.points.copy() for c in clouds]
    full = [c.points.copy() for c in clouds]
    work = [voxel_downsample(p, icp_voxel) for p in full]
    gates = (max_correspondence, max_correspondence / 2.0, max_correspondence / 4.0)
    for gate in gates:
        for index in range(len(full)):
            target = np.vstack([w for j, w in enumerate(work) if j != index])
            transform, _ = c2c_refine(
                PointCloud(work[index], FRAME_WORLD), PointCloud(target, FRAME_WORLD), gate
            )
            work[index] = transform.apply(work[index])
            full[index] = transform.apply(full[index])
    anchor = _kabsch(np.vstack(full), np.vstack(initial))
    return [
        PointCloud(anchor.apply(points), FRAME_WORLD, cloud.source_location_id)
        for points, cloud in zip(full, clouds)
    ]


def _summary_block(reports: dict[str, RegistrationReport]) -> str:
    lines = [
        "Registration errors (cm)",
        f"{'method':<22}{'tgt mean':>9}{'tgt horiz':>10}{'tgt vert':>9}"
        f"{'max pt':>8}{'mean pt':>8}",
    ]
    label_names = {
        "reference": "ground-truth poses",
        "pose_only": "nav estimate only",
        "refined": "nav estimate + C2C",
    }
    for key in ("reference", "pose_only", "refined"):
        report = reports[key]
        stats = report.target_stats
        lines.append(
            f"{label_names[key]:<22}"
            f"{stats.mean_error * 100:>9.2f}"
            f"{stats.mean_horizontal * 100:>10.2f}"
            f"{stats.mean_vertical * 100:>9.2f}"
            f"{report.max_point_error * 100:>8.2f}"
            f"{report.mean_point_error * 100:>8.2f}"
        )
    refined = reports["refined"]
    lines.append(
        f"hausdorff refined vs reference: mean {refined.hausdorff_mean * 100:.2f} cm, "
        f"sd {refined.hausdorff_sd * 100:.2f} cm"
    )
    return "\n".join(lines) + "\n"


def _write_stops_csv(path: Path, stops: list[ScanStop]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["location_id", "planned_x", "planned_y", "achieved_x", "achieved_y",
             "achieved_heading", "n_dwell"]
        )
        for stop in stops:
            writer.writerow(
                [
                    stop.location_id,
                    f"{stop.planned[0]:.6f}",
                    f"{stop.planned[1]:.6f}",
                    f"{stop.achieved[0]:.9f}",
                    f"{stop.achieved[1]:.9f}",
                    f"{stop.achieved[2]:.9f}",
                    len(stop.dwell),
                ]
            )


def _write_dwell_csv(path: Path, stops: list[ScanStop]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["location_id", "sample", "x", "y", "heading"])
        for stop in stops:
            for index, (x, y, heading) in enumerate(stop.dwell):
                writer.writerow(
                    [stop.location_id, index, f"{x:.9f}", f"{y:.9f}", f"{heading:.9f}"]
                )


def _read_stops_csv(stops_path, dwell_path) -> list[ScanStop]:
    dwell: dict[int, list[tuple[float, float, float]]] = {}
    with open(dwell_path, newline="") as handle:
        lines = (line for line in handle if not line.startswith("#"))
        for row in csv.DictReader(lines):
            dwell.setdefault(int(row["location_id"]), []).append(
                (float(row["x"]), float(row["y"]), float(row["heading"]))
            )
    stops = []
    with open(stops_path, newline="") as handle:
        lines = (line for line in handle if not line.startswith("#"))
        for row in csv.DictReader(lines):
            lid = int(row["location_id"])
            samples = np.array(dwell.get(lid, []), dtype=float).reshape(-1, 3)
            stops.append(
                ScanStop(
                    location_id=lid,
                    planned=(float(row["planned_x"]), float(row["planned_y"])),
                    achieved=(
                        float(row["achieved_x"]),
                        float(row["achieved_y"]),
                        float(row["achieved_heading"]),
                    ),
                    dwell=samples,
                )
            )
    return stops


def _write_nav_metrics_csv(path: Path, metrics) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["metric", "value"])
        writer.writerow(["mean_xte_m", f"{metrics.mean_xte:.6f}"])
        writer.writerow(["sd_xte_m", f"{metrics.sd_xte:.6f}"])
        writer.writerow(["mean_heading_error_rad", f"{metrics.mean_heading_error:.9f}"])
        writer.writerow(["sd_heading_error_rad", f"{metrics.sd_heading_error:.9f}"])
        writer.writerow(["fraction_below_5cm", f"{metrics.fraction_below_5cm:.6f}"])
        writer.writerow(["fraction_below_10cm", f"{metrics.fraction_below_10cm:.6f}"])
        writer.writerow(
            ["tracking_fraction_below_5cm", f"{metrics.tracking_fraction_below_5cm:.6f}"]
        )
        writer.writerow(["tracking_max_xte_m", f"{metrics.tracking_max_xte:.6f}"])


def _write_report_csv(path: Path, report: RegistrationReport) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["metric", "value_cm"])
        for name, value in report.summary_rows():
            writer.writerow([name, f"{value:.4f}"])
        writer.writerow(["sampled_points", report.n_sampled_points])
        writer.writerow(["unusable_targets", len(report.target_stats.unusable)])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tls-planner",
        description="Plan, route, simulate and evaluate an autonomous multi-scan TLS survey.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", help="output directory (default: config output_dir)")
        p.add_argument("--seed", type=int, help="override the simulation seed")

    p_plan = sub.add_parser("plan", help="digitize, visibility analysis, greedy cover")
    common(p_plan)
    p_plan.add_argument(
        "--no-cache", action="store_true", help="ignore an existing visibility cache"
    )

    p_route = sub.add_parser("route", help="TSP + nearest-neighbor tours, waypoints")
    common(p_route)
    p_route.add_argument("--metric", choices=["br", "aha"], help="override planning metric")
    p_route.add_argument("--cover", help="cover CSV (default: <out>/cover.csv)")
    p_route.add_argument(
        "--force-size", type=int, help="force the scan set to this size for comparison"
    )

    p_sim = sub.add_parser("simulate", help="pure-pursuit mission simulation")
    common(p_sim)
    p_sim.add_argument("--waypoints", help="waypoint CSV (default: <out>/waypoints.csv)")
    p_sim.add_argument("--noise-position", type=float, help="override position sigma (m)")
    p_sim.add_argument("--noise-heading", type=float, help="override heading sigma (deg)")
    p_sim.add_argument("--noise-slip", type=float, help="override wheel slip sigma")

    p_eval = sub.add_parser("evaluate", help="synthetic scans + registration scoring")
    common(p_eval)
    p_eval.add_argument("--stops", help="stops CSV (default: <out>/stops.csv)")
    return parser


def _apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    noise = config.sim.noise
    if args.seed is not None:
        noise = replace(noise, seed=args.seed)
    if getattr(args, "noise_position", None) is not None:
        noise = replace(noise, position_sigma=args.noise_position)
    if getattr(args, "noise_heading", None) is not None:
        noise = replace(noise, heading_sigma=math.radians(args.noise_heading))
    if getattr(args, "noise_slip", None) is not None:
        noise = replace(noise, wheel_slip_sigma=args.noise_slip)
    if noise is not config.sim.noise:
        config.sim = replace(config.sim, noise=noise)
    if getattr(args, "metric", None):
        config.planning = replace(config.planning, metric=Metric(args.metric))
    return config


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config)
        config = _apply_overrides(config, args)
        out_dir = _out_dir(config, args.out)
        if args.command == "plan":
            cmd_plan(config, out_dir, use_cache=not args.no_cache)
        elif args.command == "route":
            cmd_route(
                config,
                out_dir,
                cover_path=Path(args.cover) if args.cover else None,
                force_size=args.force_size,
            )
        elif args.command == "simulate":
            cmd_simulate(
                config,
                out_dir,
                waypoints_path=Path(args.waypoints) if args.waypoints else None,
            )
        elif args.command == "evaluate":
            cmd_evaluate(
                config, out_dir, stops_path=Path(args.stops) if args.stops else None
            )
    except (ConfigError, LayoutError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except MissionFailure as exc:
        print(f"mission failure on leg {exc.leg}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (
        TspSizeError,
        TspInfeasibleError,
        NoOverlapError,
        EmptyCloudError,
        FileNotFoundError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
