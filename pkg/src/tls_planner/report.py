"""Matplotlib figure rendering for planning, routing, navigation and
registration outputs.  All figures go to self-contained SVG files next to
the delimited data; the SVG date metadata and hash salt are pinned so reruns
are byte-identical."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.collections import LineCollection
from matplotlib.patches import Rectangle

from .field_model import FieldLayout, PlotBox, ScanLocation
from .nav_sim import TrajectoryLog, NavigationMetrics
from .registration import RegistrationReport
from .routing import Tour, WaypointPlan

matplotlib.rcParams["svg.hashsalt"] = "tls-planner"

_SAVE_KWARGS = {"format": "svg", "metadata": {"Date": None}, "bbox_inches": "tight"}


def _draw_field(ax, layout: FieldLayout, boxes: list[PlotBox]) -> None:
    for box in boxes:
        ax.add_patch(
            Rectangle(
                (box.aabb_min[0], box.aabb_min[1]),
                box.aabb_max[0] - box.aabb_min[0],
                box.aabb_max[1] - box.aabb_min[1],
                facecolor="mediumseagreen",
                edgecolor="darkgreen",
                linewidth=0.5,
            )
        )
    ax.set_xlim(layout.origin[0] - 1, layout.origin[0] + layout.field_length + 1)
    ax.set_ylim(layout.origin[1] - 1, layout.origin[1] + layout.field_width + 1)
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")


def save_layout_figure(
    path,
    layout: FieldLayout,
    boxes: list[PlotBox],
    locations: list[ScanLocation],
    selected: list[int] | None = None,
) -> None:
    """Field map: plots green, candidate locations as black squares, the
    selected scan set highlighted in red."""
    fig, ax = plt.subplots(figsize=(9, 6))
    _draw_field(ax, layout, boxes)
    xs = [loc.position[0] for loc in locations]
    ys = [loc.position[1] for loc in locations]
    ax.scatter(xs, ys, marker="s", s=18, c="black", label="candidates", zorder=3)
    if selected:
        chosen = {lid for lid in selected}
        sx = [loc.position[0] for loc in locations if loc.location_id in chosen]
        sy = [loc.position[1] for loc in locations if loc.location_id in chosen]
        ax.scatter(sx, sy, marker="s", s=46, c="red", label="selected", zorder=4)
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title("Scan location layout")
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_route_figure(
    path,
    layout: FieldLayout,
    boxes: list[PlotBox],
    plan: WaypointPlan,
    tour: Tour | None = None,
) -> None:
    """Route overlay: plots green, scan goals as red stars, navigation path
    as black lines."""
    fig, ax = plt.subplots(figsize=(9, 6))
    _draw_field(ax, layout, boxes)
    pts = np.array([wp.position for wp in plan.waypoints])
    ax.plot(pts[:, 0], pts[:, 1], "k-", linewidth=1.2, zorder=3, label="path")
    goals = np.array(
        [wp.position for wp in plan.waypoints if wp.scan_node_id is not None]
    ).reshape(-1, 2)
    if goals.size:
        ax.scatter(goals[:, 0], goals[:, 1], marker="*", s=130, c="red", zorder=4, label="goals")
    if tour is not None:
        start = tour.points[0]
        ax.scatter([start[0]], [start[1]], marker="D", s=40, c="blue", zorder=4, label="origin")
        ax.set_title(f"Route ({tour.metric.value}): {tour.total_length:.1f} m")
    else:
        ax.set_title("Route")
    ax.legend(loc="upper right", fontsize=8)
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_xte_figure(
    path,
    layout: FieldLayout,
    boxes: list[PlotBox],
    plan: WaypointPlan,
    log: TrajectoryLog,
    metrics: NavigationMetrics,
) -> None:
    """Trajectory colored by cross-track error band (<5 cm, 5-10 cm,
    >10 cm); waypoints drawn as circles."""
    fig, ax = plt.subplots(figsize=(9, 6))
    _draw_field(ax, layout, boxes)
    points = np.column_stack([log.x, log.y])
    segments = np.stack([points[:-1], points[1:]], axis=1)
    seg_err = np.maximum(metrics.xte[:-1], metrics.xte[1:])
    colors = np.where(
        seg_err < 0.05, "forestgreen", np.where(seg_err < 0.10, "orange", "red")
    )
    ax.add_collection(LineCollection(segments, colors=colors, linewidths=1.4, zorder=3))
    wps = np.array([wp.position for wp in plan.waypoints])
    ax.scatter(wps[:, 0], wps[:, 1], facecolors="none", edgecolors="black", s=40, zorder=4)
    ax.set_title(
        "Cross-track error: mean {:.2f} cm, {:.0f}% < 5 cm".format(
            metrics.mean_xte * 100, metrics.fraction_below_5cm * 100
        )
    )
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_registration_histograms(path, report: RegistrationReport) -> None:
    """Distance histogram plus the signed per-axis offset histograms."""
    fig, axes = plt.subplots(2, 2, figsize=(10, 7))
    panels = [
        ("distance", "nearest-neighbor distance (m)"),
        ("x", "dH_X offset (m)"),
        ("y", "dH_Y offset (m)"),
        ("z", "dH_Z offset (m)"),
    ]
    for ax, (key, label) in zip(axes.ravel(), panels):
        counts, edges = report.axis_histograms[key]
        ax.bar(
            edges[:-1],
            counts,
            width=np.diff(edges),
            align="edge",
            color="steelblue",
            edgecolor="none",
        )
        ax.set_xlabel(label)
        ax.set_ylabel("points")
    fig.suptitle(
        f"{report.label}: mean {report.hausdorff_mean * 100:.2f} cm, "
        f"sd {report.hausdorff_sd * 100:.2f} cm"
    )
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
