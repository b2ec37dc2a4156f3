import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tls_planner.field_model import FieldLayout
from tls_planner.routing import (
    Metric,
    TspSizeError,
    brute_force_tsp_length,
    build_distance_graph,
    decompose_route,
    nearest_neighbor_route,
    pairwise_distance,
    read_waypoints_csv,
    serpentine_plan,
    solve_tsp,
    write_waypoints_csv,
)


def layout():
    return FieldLayout(
        n_rows=10, plots_per_row=6, plot_length=3.0, plot_width=1.0,
        plot_height=1.9, row_spacing=1.8, alley_width=1.5, headland_depth=2.0,
    )


class TestPairwiseDistance:
    def test_manhattan(self):
        assert pairwise_distance((0, 0), (3, 4), Metric.BR_NAV, layout()) == pytest.approx(7.0)

    def test_alley_headland_alley_hand_example(self):
        # border strips at y=0 and y=18; near detour: 5 down + 4 across + 3 up
        assert pairwise_distance(
            (2, 5), (6, 3), Metric.AHA_NAV, layout()
        ) == pytest.approx(12.0)

    def test_same_point_zero_under_both(self):
        for metric in Metric:
            assert pairwise_distance((2.5, 7), (2.5, 7), metric, layout()) == 0.0

    def test_same_corridor_direct_under_both(self):
        for metric in Metric:
            assert pairwise_distance((5.75, 1.8), (5.75, 9.0), metric, layout()) == pytest.approx(7.2)

    def test_far_border_chosen_when_shorter(self):
        # both points near the top: detour over y=18 beats y=0
        d = pairwise_distance((2, 16.2), (6, 17.0), Metric.AHA_NAV, layout())
        assert d == pytest.approx((18 - 16.2) + 4 + (18 - 17.0))

    @given(
        st.floats(0, 29), st.floats(0, 18), st.floats(0, 29), st.floats(0, 18)
    )
    @settings(max_examples=200)
    def test_br_never_exceeds_aha(self, ax, ay, bx, by):
        lay = layout()
        br = pairwise_distance((ax, ay), (bx, by), Metric.BR_NAV, lay)
        aha = pairwise_distance((ax, ay), (bx, by), Metric.AHA_NAV, lay)
        assert br <= aha + 1e-9

    @given(
        st.tuples(st.floats(0, 29), st.floats(0, 18)),
        st.tuples(st.floats(0, 29), st.floats(0, 18)),
        st.tuples(st.floats(0, 29), st.floats(0, 18)),
    )
    @settings(max_examples=200)
    def test_manhattan_triangle_inequality(self, a, b, c):
        lay = layout()
        ab = pairwise_distance(a, b, Metric.BR_NAV, lay)
        bc = pairwise_distance(b, c, Metric.BR_NAV, lay)
        ac = pairwise_distance(a, c, Metric.BR_NAV, lay)
        assert ac <= ab + bc + 1e-9


def random_graph(rng, n, metric=Metric.BR_NAV):
    ids = list(range(1, n))
    positions = [tuple(rng.uniform(0, 20, 2)) for _ in ids]
    origin = tuple(rng.uniform(0, 20, 2))
    return build_distance_graph(ids, positions, origin, metric, layout())


class TestSolveTsp:
    def test_unit_square_perimeter(self):
        graph = build_distance_graph(
            [1, 2, 3], [(6.5, 0.0), (6.5, 1.0), (5.5, 1.0)],
            (5.5, 0.0), Metric.BR_NAV, layout(),
        )
        tour = solve_tsp(graph)
        assert tour.total_length == pytest.approx(4.0)
        assert tour.node_ids[0] == tour.node_ids[-1] == -1
        assert sorted(tour.node_ids[1:-1]) == [1, 2, 3]

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(3)
        for trial in range(100):
            n = int(rng.integers(3, 9))
            graph = random_graph(rng, n)
            tour = solve_tsp(graph)
            assert tour.total_length == pytest.approx(
                brute_force_tsp_length(graph.weights), abs=1e-9
            ), f"trial {trial}"

    def test_dp_and_ilp_agree(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            n = int(rng.integers(3, 10))
            graph = random_graph(rng, n)
            dp = solve_tsp(graph, method="dp")
            ilp = solve_tsp(graph, method="ilp")
            assert dp.total_length == pytest.approx(ilp.total_length, abs=1e-9)

    def test_too_many_nodes_rejected(self):
        rng = np.random.default_rng(5)
        graph = random_graph(rng, 19)
        with pytest.raises(TspSizeError, match="nearest_neighbor"):
            solve_tsp(graph)

    def test_lexicographic_tie_break(self):
        # four corners of a square admit two optimal directions; the
        # sequence must start with the smaller neighbor
        graph = build_distance_graph(
            [1, 2, 3], [(6.5, 0.0), (6.5, 1.0), (5.5, 1.0)],
            (5.5, 0.0), Metric.BR_NAV, layout(),
        )
        tour = solve_tsp(graph)
        assert tour.node_ids == [-1, 1, 2, 3, -1]


class TestNearestNeighbor:
    def test_square_from_corner_happens_optimal(self):
        graph = build_distance_graph(
            [1, 2, 3], [(6.5, 0.0), (6.5, 1.0), (5.5, 1.0)],
            (5.5, 0.0), Metric.BR_NAV, layout(),
        )
        assert nearest_neighbor_route(graph).total_length == pytest.approx(4.0)

    def test_never_beats_optimal(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            n = int(rng.integers(3, 9))
            graph = random_graph(rng, n)
            nn = nearest_neighbor_route(graph)
            opt = solve_tsp(graph)
            assert nn.total_length >= opt.total_length - 1e-9


class TestDecomposition:
    def test_same_corridor_single_leg(self):
        graph = build_distance_graph(
            [1], [(5.75, 9.0)], (5.75, 0.0), Metric.AHA_NAV, layout()
        )
        tour = solve_tsp(graph)
        plan = decompose_route(tour, Metric.AHA_NAV, layout())
        assert len(plan.waypoints) == 3  # origin -> node -> origin
        assert plan.total_length == pytest.approx(tour.total_length)

    def test_aha_alley_change_three_legs(self):
        lay = layout()
        graph = build_distance_graph(
            [1], [(10.25, 5.4)], (5.75, 3.6), Metric.AHA_NAV, lay
        )
        tour = solve_tsp(graph)
        plan = decompose_route(tour, Metric.AHA_NAV, lay)
        # out: down to border, across, up == 3 legs; back: 3 more
        assert len(plan.waypoints) == 7
        lengths = plan.leg_lengths
        assert lengths[0] == pytest.approx(3.6)   # to border y=0
        assert lengths[1] == pytest.approx(4.5)   # along border
        assert lengths[2] == pytest.approx(5.4)   # up to goal
        assert sum(lengths[:3]) == pytest.approx(graph.weights[0, 1])
        assert plan.segment_kinds[0] == "alley"
        assert plan.segment_kinds[1] == "headland"
        assert plan.segment_kinds[2] == "alley"

    def test_br_alley_change_axis_parallel_manhattan(self):
        lay = layout()
        graph = build_distance_graph(
            [1], [(10.25, 7.2)], (5.75, 3.6), Metric.BR_NAV, lay
        )
        tour = solve_tsp(graph)
        plan = decompose_route(tour, Metric.BR_NAV, lay)
        for a, b in zip(plan.waypoints[:-1], plan.waypoints[1:]):
            dx = abs(a.position[0] - b.position[0])
            dy = abs(a.position[1] - b.position[1])
            assert min(dx, dy) < 1e-9 and max(dx, dy) > 0
        out_legs = plan.leg_lengths[: len(plan.leg_lengths) // 2]
        assert sum(out_legs) == pytest.approx(4.5 + 3.6)
        assert "row_gap" in plan.segment_kinds

    def test_leg_lengths_resum_to_edge_weights(self):
        lay = layout()
        rng = np.random.default_rng(8)
        ids = [3, 11, 24, 40, 66]
        ys = lay.row_corridor_lines()
        xs, _ = lay.cross_corridor_lines()
        positions = [
            (float(xs[i % 7]), float(ys[i // 7])) for i in ids
        ]
        for metric in Metric:
            graph = build_distance_graph(ids, positions, (float(xs[-1]), 0.0), metric, lay)
            tour = solve_tsp(graph)
            plan = decompose_route(tour, metric, lay)
            assert plan.total_length == pytest.approx(tour.total_length, abs=1e-9)

    def test_headings_point_at_next_waypoint(self):
        lay = layout()
        graph = build_distance_graph(
            [1], [(10.25, 5.4)], (5.75, 3.6), Metric.AHA_NAV, lay
        )
        plan = decompose_route(solve_tsp(graph), Metric.AHA_NAV, lay)
        for a, b in zip(plan.waypoints[:-1], plan.waypoints[1:]):
            expected = math.atan2(
                b.position[1] - a.position[1], b.position[0] - a.position[0]
            )
            assert a.heading == pytest.approx(expected)
            assert -math.pi < a.heading <= math.pi

    def test_scan_nodes_marked(self):
        lay = layout()
        graph = build_distance_graph(
            [4, 9], [(10.25, 5.4), (5.75, 9.0)], (5.75, 0.0), Metric.AHA_NAV, lay
        )
        plan = decompose_route(solve_tsp(graph), Metric.AHA_NAV, lay)
        marked = [wp.scan_node_id for wp in plan.waypoints if wp.scan_node_id is not None]
        assert sorted(marked) == [4, 9]

    def test_metric_mismatch_rejected(self):
        lay = layout()
        graph = build_distance_graph([1], [(10.25, 5.4)], (5.75, 3.6), Metric.AHA_NAV, lay)
        tour = solve_tsp(graph)
        with pytest.raises(ValueError, match="metric"):
            decompose_route(tour, Metric.BR_NAV, lay)


def test_serpentine_plan_covers_all_corridors():
    lay = layout()
    plan = serpentine_plan(lay)
    xs, _ = lay.cross_corridor_lines()
    visited = {round(wp.position[0], 6) for wp in plan.waypoints}
    assert visited == {round(float(x), 6) for x in xs}
    assert len(plan.waypoints) == 2 * len(xs)


def test_waypoints_csv_round_trip(tmp_path):
    lay = layout()
    graph = build_distance_graph(
        [4, 9], [(10.25, 5.4), (5.75, 9.0)], (5.75, 0.0), Metric.AHA_NAV, lay
    )
    plan = decompose_route(solve_tsp(graph), Metric.AHA_NAV, lay)
    path = tmp_path / "wp.csv"
    write_waypoints_csv(path, plan)
    loaded = read_waypoints_csv(path, Metric.AHA_NAV)
    assert len(loaded.waypoints) == len(plan.waypoints)
    for a, b in zip(loaded.waypoints, plan.waypoints):
        assert a.position == pytest.approx(b.position)
        assert a.heading == pytest.approx(b.heading)
        assert a.scan_node_id == b.scan_node_id
    assert loaded.segment_kinds == plan.segment_kinds


def test_malformed_waypoint_file_names_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("index,x,y,heading_rad,scan_node_id,incoming_kind\n0,1.0,oops,0.0,,\n")
    with pytest.raises(ValueError, match="malformed waypoint row"):
        read_waypoints_csv(path, Metric.AHA_NAV)
