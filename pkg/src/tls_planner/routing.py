"""Inter-location distances, exact TSP routing and waypoint decomposition.

Two navigation metrics reflect crop growth stages.  Early season the robot
may cross between rows, so distances are Manhattan ("br", between-rows).
Near canopy closure only the alley/headland corridors and the two unplanted
border strips beyond the outer rows stay open, so an alley change detours
through the nearer border ("aha", alley-headland-alley): down the current
corridor, along the border, up the target corridor.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .field_model import FieldLayout
from .geometry import wrap_angle

ORIGIN_ID = -1
MAX_EXACT_NODES = 18
_COORD_EPS = 1e-9


class Metric(str, Enum):
    BR_NAV = "br"
    AHA_NAV = "aha"


class TspSizeError(ValueError):
    """Too many nodes for the exact solver."""


class TspInfeasibleError(ValueError):
    """No finite-length tour exists."""


def pairwise_distance(a, b, metric: Metric, layout: FieldLayout) -> float:
    """Travel distance between two corridor positions under a metric.

    Positions on the same alley/headland corridor (equal x) take the corridor
    directly under both metrics.  Otherwise "br" is the Manhattan distance
    and "aha" detours through whichever border strip minimizes the total,
    via the intermediate point h = (a_x, border_y).
    """
    ax, ay = float(a[0]), float(a[1])
    bx, by = float(b[0]), float(b[1])
    if abs(ax - bx) < _COORD_EPS:
        return abs(ay - by)
    if metric == Metric.BR_NAV:
        return abs(ax - bx) + abs(ay - by)
    y_near, y_far = layout.headland_line_ys()
    return min(
        abs(ay - hy) + abs(ax - bx) + abs(hy - by) for hy in (y_near, y_far)
    )


@dataclass(frozen=True)
class DistanceGraph:
    """Complete symmetric distance graph over the origin plus scan locations.

    Node 0 is always the tour origin; ``node_ids[0]`` is ORIGIN_ID.
    """

    node_ids: list[int]
    positions: np.ndarray  # (n, 2)
    weights: np.ndarray    # (n, n) symmetric, zero diagonal
    metric: Metric

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)


def build_distance_graph(
    location_ids: list[int],
    positions: list[tuple[float, float]],
    origin_xy: tuple[float, float],
    metric: Metric,
    layout: FieldLayout,
) -> DistanceGraph:
    ids = [ORIGIN_ID] + list(location_ids)
    pts = np.array([origin_xy] + list(positions), dtype=float)
    n = len(ids)
    weights = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = pairwise_distance(pts[i], pts[j], metric, layout)
            weights[i, j] = weights[j, i] = d
    return DistanceGraph(node_ids=ids, positions=pts, weights=weights, metric=metric)


@dataclass(frozen=True)
class Tour:
    """Closed tour starting and ending at the origin node."""

    node_ids: list[int]            # e.g. [-1, 14, 26, ..., -1]
    points: np.ndarray             # (len(node_ids), 2)
    total_length: float
    metric: Metric


def _tour_from_order(graph: DistanceGraph, order: list[int]) -> Tour:
    cycle = order + [order[0]]
    length = float(sum(graph.weights[u, v] for u, v in zip(cycle[:-1], cycle[1:])))
    return Tour(
        node_ids=[graph.node_ids[i] for i in cycle],
        points=graph.positions[cycle],
        total_length=length,
        metric=graph.metric,
    )


def solve_tsp(graph: DistanceGraph, method: str = "dp") -> Tour:
    """Minimum-length Hamiltonian cycle through all nodes.

    ``method="dp"`` is the Held-Karp dynamic program with ties broken toward
    the lexicographically smallest node sequence; ``method="ilp"`` is the
    integer formulation with lazily added subtour-elimination cuts.  Both are
    exact and must agree on length.
    """
    n = graph.n_nodes
    if n > MAX_EXACT_NODES:
        raise TspSizeError(
            f"{n} nodes exceeds the exact regime ({MAX_EXACT_NODES}); "
            "use nearest_neighbor_route for larger instances"
        )
    if not np.all(np.isfinite(graph.weights)):
        raise TspInfeasibleError("distance graph contains non-finite weights")
    if n == 1:
        return _tour_from_order(graph, [0])
    if method == "dp":
        order = _held_karp_order(graph.weights)
    elif method == "ilp":
        order = _dfj_ilp_order(graph.weights)
    else:
        raise ValueError(f"unknown method {method!r}")
    return _tour_from_order(graph, order)


def _held_karp_order(w: np.ndarray) -> list[int]:
    """Held-Karp over subsets of nodes 1..n-1 anchored at node 0.

    dp[mask][j] = shortest path from 0 through exactly the nodes of ``mask``
    ending at j.  The tour is rebuilt front-to-back choosing at each step the
    smallest node that still completes an optimal tour, which yields the
    lexicographically smallest optimal sequence.
    """
    n = w.shape[0]
    if n == 2:
        return [0, 1]
    m = n - 1
    full = (1 << m) - 1
    dp = np.full((full + 1, m), np.inf)
    for j in range(m):
        dp[1 << j, j] = w[0, j + 1]
    for mask in range(1, full + 1):
        if mask & (mask - 1) == 0:
            continue
        for j in range(m):
            bit = 1 << j
            if not mask & bit:
                continue
            prev = mask ^ bit
            row = dp[prev]
            best = np.inf
            for k in range(m):
                if prev & (1 << k):
                    cand = row[k] + w[k + 1, j + 1]
                    if cand < best:
                        best = cand
            dp[mask, j] = best
    optimal = min(dp[full, j] + w[j + 1, 0] for j in range(m))

    # Forward reconstruction.  By symmetry of w, the cheapest path from node
    # v through a remaining set back to 0 equals dp[set][v].
    order = [0]
    remaining = full
    current = 0
    cost_so_far = 0.0
    while remaining:
        target = optimal - cost_so_far
        for j in range(m):
            bit = 1 << j
            if not remaining & bit:
                continue
            completion = w[current, j + 1] + dp[remaining, j]
            if abs(completion - target) <= 1e-9 * max(1.0, abs(target)):
                order.append(j + 1)
                cost_so_far += w[current, j + 1]
                current = j + 1
                remaining ^= bit
                break
        else:
            raise RuntimeError("tour reconstruction failed")
    return order


def _dfj_ilp_order(w: np.ndarray) -> list[int]:
    """Symmetric TSP as 0/1 edge selection: every node has degree two, and
    subtour cuts (sum of edges inside S <= |S|-1) are added lazily whenever
    the integer optimum splits into components."""
    n = w.shape[0]
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    edge_index = {e: k for k, e in enumerate(edges)}
    cost = np.array([w[i, j] for i, j in edges])
    degree_rows = np.zeros((n, len(edges)))
    for k, (i, j) in enumerate(edges):
        degree_rows[i, k] = 1
        degree_rows[j, k] = 1
    constraints = [LinearConstraint(degree_rows, 2, 2)]
    integrality = np.ones(len(edges))
    while True:
        res = milp(c=cost, constraints=constraints, integrality=integrality, bounds=Bounds(0, 1))
        if not res.success:
            raise TspInfeasibleError(f"ILP solver failed: {res.message}")
        chosen = {edges[k] for k in np.nonzero(res.x > 0.5)[0]}
        components = _edge_components(n, chosen)
        if len(components) == 1:
            return _order_from_edges(n, chosen)
        for comp in components:
            inside = [edge_index[(i, j)] for i, j in edges if i in comp and j in comp]
            row = np.zeros(len(edges))
            row[inside] = 1
            constraints.append(LinearConstraint(row[None, :], 0, len(comp) - 1))


def _edge_components(n: int, chosen: set[tuple[int, int]]) -> list[set[int]]:
    adjacency: dict[int, list[int]] = {i: [] for i in range(n)}
    for i, j in chosen:
        adjacency[i].append(j)
        adjacency[j].append(i)
    seen: set[int] = set()
    components = []
    for start in range(n):
        if start in seen:
            continue
        stack = [start]
        comp = set()
        while stack:
            u = stack.pop()
            if u in comp:
                continue
            comp.add(u)
            stack.extend(v for v in adjacency[u] if v not in comp)
        seen |= comp
        components.append(comp)
    return components


def _order_from_edges(n: int, chosen: set[tuple[int, int]]) -> list[int]:
    adjacency: dict[int, list[int]] = {i: [] for i in range(n)}
    for i, j in chosen:
        adjacency[i].append(j)
        adjacency[j].append(i)
    order = [0]
    prev = None
    while len(order) < n:
        nxt = [v for v in sorted(adjacency[order[-1]]) if v != prev]
        prev = order[-1]
        order.append(nxt[0])
    # Canonical direction: the smaller second node leads.
    if n > 2 and order[-1] < order[1]:
        order = [0] + order[1:][::-1]
    return order


def nearest_neighbor_route(graph: DistanceGraph, start: int = 0) -> Tour:
    """Greedy tour: always move to the nearest unvisited node, ties to the
    lowest node index, then return to the start."""
    n = graph.n_nodes
    unvisited = set(range(n)) - {start}
    order = [start]
    while unvisited:
        here = order[-1]
        nxt = min(unvisited, key=lambda v: (graph.weights[here, v], v))
        order.append(nxt)
        unvisited.remove(nxt)
    return _tour_from_order(graph, order)


@dataclass(frozen=True)
class Waypoint:
    position: tuple[float, float]
    heading: float                 # radians, (-pi, pi]; faces the next waypoint
    scan_node_id: int | None = None  # location id when this stop is a scan


@dataclass
class WaypointPlan:
    """Straight-leg navigation plan; every leg is axis-parallel."""

    waypoints: list[Waypoint]
    segment_kinds: list[str]  # per leg: "alley" | "row_gap" | "headland"
    metric: Metric

    @property
    def leg_lengths(self) -> list[float]:
        out = []
        for a, b in zip(self.waypoints[:-1], self.waypoints[1:]):
            out.append(math.dist(a.position, b.position))
        return out

    @property
    def total_length(self) -> float:
        return sum(self.leg_lengths)


def _leg_kind(p, q, layout: FieldLayout) -> str:
    """Classify an axis-parallel leg by the corridor it runs in."""
    if abs(p[0] - q[0]) < _COORD_EPS:
        xs, is_headland = layout.cross_corridor_lines()
        for x, headland in zip(xs, is_headland):
            if abs(p[0] - x) < 1e-6:
                return "headland" if headland else "alley"
        return "alley"
    y_near, y_far = layout.headland_line_ys()
    if abs(p[1] - y_near) < 1e-6 or abs(p[1] - y_far) < 1e-6:
        return "headland"
    return "row_gap"


def _nearest_row_line(layout: FieldLayout, y_mid: float, y_a: float, y_b: float) -> float:
    """Row corridor line closest to y_mid, clamped between the endpoints so
    the Manhattan total is preserved; ties pick the lower line."""
    lines = layout.row_corridor_lines()
    lo, hi = min(y_a, y_b), max(y_a, y_b)
    usable = lines[(lines >= lo - _COORD_EPS) & (lines <= hi + _COORD_EPS)]
    if usable.size == 0:
        usable = lines
    deltas = np.abs(usable - y_mid)
    return float(usable[int(np.argmin(deltas))])


def decompose_route(tour: Tour, metric: Metric, layout: FieldLayout) -> WaypointPlan:
    """Break each tour edge into axis-parallel legs whose lengths re-sum to
    the edge weight.

    Same-corridor edges are a single leg.  An alley change under "br" crosses
    through the row gap nearest the midpoint; under "aha" it runs via the
    nearer border strip.  Goal headings point at the next waypoint; the last
    waypoint keeps its arrival bearing.
    """
    if metric != tour.metric:
        raise ValueError(f"tour metric {tour.metric} does not match {metric}")
    points: list[tuple[float, float]] = []
    scan_ids: list[int | None] = []

    def push(pt, node_id=None):
        pt = (float(pt[0]), float(pt[1]))
        if points and math.dist(points[-1], pt) < _COORD_EPS:
            if node_id is not None and scan_ids[-1] is None:
                scan_ids[-1] = node_id
            return
        points.append(pt)
        scan_ids.append(node_id)

    push(tuple(tour.points[0]), tour.node_ids[0] if tour.node_ids[0] != ORIGIN_ID else None)
    for (p, q), node_id in zip(
        zip(tour.points[:-1], tour.points[1:]), tour.node_ids[1:]
    ):
        if abs(p[0] - q[0]) < _COORD_EPS:
            pass  # same corridor: direct leg
        elif metric == Metric.BR_NAV:
            y_cross = _nearest_row_line(layout, (p[1] + q[1]) / 2.0, p[1], q[1])
            push((p[0], y_cross))
            push((q[0], y_cross))
        else:
            y_near, y_far = layout.headland_line_ys()
            costs = [
                (abs(p[1] - hy) + abs(hy - q[1]), hy) for hy in (y_near, y_far)
            ]
            hy = min(costs)[1]
            push((p[0], hy))
            push((q[0], hy))
        push(tuple(q), node_id if node_id != ORIGIN_ID else None)

    headings = []
    for idx in range(len(points) - 1):
        dx = points[idx + 1][0] - points[idx][0]
        dy = points[idx + 1][1] - points[idx][1]
        headings.append(wrap_angle(math.atan2(dy, dx)))
    if headings:
        headings.append(headings[-1])
    else:
        headings = [0.0]
    waypoints = [
        Waypoint(position=pt, heading=h, scan_node_id=sid)
        for pt, h, sid in zip(points, headings, scan_ids)
    ]
    kinds = [
        _leg_kind(a.position, b.position, layout)
        for a, b in zip(waypoints[:-1], waypoints[1:])
    ]
    return WaypointPlan(waypoints=waypoints, segment_kinds=kinds, metric=metric)


def serpentine_plan(layout: FieldLayout) -> WaypointPlan:
    """Serpentine pass over every alley/headland corridor, snaking between
    the two border strips.  Mirrors the field-navigation benchmark pattern."""
    xs, _ = layout.cross_corridor_lines()
    y_near, y_far = layout.headland_line_ys()
    points = []
    for idx, x in enumerate(xs):
        if idx % 2 == 0:
            points.extend([(float(x), y_near), (float(x), y_far)])
        else:
            points.extend([(float(x), y_far), (float(x), y_near)])
    headings = []
    for idx in range(len(points) - 1):
        dx = points[idx + 1][0] - points[idx][0]
        dy = points[idx + 1][1] - points[idx][1]
        headings.append(wrap_angle(math.atan2(dy, dx)))
    headings.append(headings[-1])
    waypoints = [Waypoint(p, h) for p, h in zip(points, headings)]
    kinds = [
        _leg_kind(a.position, b.position, layout)
        for a, b in zip(waypoints[:-1], waypoints[1:])
    ]
    return WaypointPlan(waypoints=waypoints, segment_kinds=kinds, metric=Metric.AHA_NAV)


def brute_force_tsp_length(w: np.ndarray) -> float:
    """Exhaustive optimal cycle length; reference for small instances."""
    n = w.shape[0]
    best = math.inf
    for perm in itertools.permutations(range(1, n)):
        cycle = (0,) + perm + (0,)
        length = sum(w[u, v] for u, v in zip(cycle[:-1], cycle[1:]))
        best = min(best, length)
    return best


def write_tour_csv(path, tour: Tour, name: str) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["order", "node_id", "x", "y"])
        for idx, (nid, pt) in enumerate(zip(tour.node_ids, tour.points)):
            writer.writerow([idx, nid, f"{pt[0]:.6f}", f"{pt[1]:.6f}"])


def write_waypoints_csv(path, plan: WaypointPlan) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["index", "x", "y", "heading_rad", "scan_node_id", "incoming_kind"])
        for idx, wp in enumerate(plan.waypoints):
            kind = plan.segment_kinds[idx - 1] if idx > 0 else ""
            writer.writerow(
                [
                    idx,
                    f"{wp.position[0]:.6f}",
                    f"{wp.position[1]:.6f}",
                    f"{wp.heading:.9f}",
                    "" if wp.scan_node_id is None else wp.scan_node_id,
                    kind,
                ]
            )


def read_waypoints_csv(path, metric: Metric) -> WaypointPlan:
    waypoints = []
    kinds = []
    with open(path, newline="") as handle:
        lines = (line for line in handle if not line.startswith("#"))
        for row in csv.DictReader(lines):
            try:
                waypoints.append(
                    Waypoint(
                        position=(float(row["x"]), float(row["y"])),
                        heading=float(row["heading_rad"]),
                        scan_node_id=int(row["scan_node_id"]) if row["scan_node_id"] else None,
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}: malformed waypoint row {row!r}") from exc
            if row["incoming_kind"]:
                kinds.append(row["incoming_kind"])
    return WaypointPlan(waypoints=waypoints, segment_kinds=kinds, metric=metric)
