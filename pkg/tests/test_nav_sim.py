import math

import numpy as np
import pytest

from tls_planner.field_model import FieldLayout
from tls_planner.nav_sim import (
    MissionFailure,
    NoiseModel,
    PurePursuitParams,
    RobotState,
    navigation_metrics,
    pure_pursuit_step,
    read_trajectory_csv,
    simulate_mission,
    simulate_survey,
    stationary_dwell_samples,
    stationary_pose_stats,
    write_trajectory_csv,
)
from tls_planner.routing import Metric, Waypoint, WaypointPlan, serpentine_plan


def straight_plan(length=8.0, y=0.0):
    return WaypointPlan(
        waypoints=[Waypoint((0.0, y), 0.0), Waypoint((length, y), 0.0)],
        segment_kinds=["headland"],
        metric=Metric.AHA_NAV,
    )


class TestPurePursuitStep:
    params = PurePursuitParams()

    def test_on_path_aligned_drives_straight(self):
        state = RobotState(x=1.0, y=0.0, heading=0.0)
        v, omega = pure_pursuit_step(state, (0, 0), (10, 0), self.params)
        assert v == pytest.approx(self.params.cruise_speed)
        assert omega == pytest.approx(0.0, abs=1e-12)

    def test_curvature_at_30_degrees(self):
        # heading 30 degrees off a target dead ahead: k = 2 sin(30)/1 = 1
        state = RobotState(x=0.0, y=0.0, heading=-math.radians(30))
        v, omega = pure_pursuit_step(state, (0, 0), (10, 0), self.params)
        assert omega / v == pytest.approx(2 * math.sin(math.radians(30)), abs=1e-12)

    def test_curvature_at_90_degrees(self):
        state = RobotState(x=0.0, y=0.0, heading=-math.pi / 2)
        v, omega = pure_pursuit_step(state, (0, 0), (10, 0), self.params)
        assert omega / v == pytest.approx(2.0, abs=1e-12)

    def test_radius_curvature_reciprocity(self):
        # arc radius L/(2 sin a) times curvature 2 sin a / L is one
        for alpha_deg in (5, 17, 30, 45, 60, 89):
            alpha = math.radians(alpha_deg)
            radius = self.params.look_ahead / (2 * math.sin(alpha))
            curvature = 2 * math.sin(alpha) / self.params.look_ahead
            assert radius * curvature == pytest.approx(1.0, abs=1e-12)

    def test_recovery_targets_nearest_path_point(self):
        state = RobotState(x=5.0, y=3.0, heading=0.0)  # 3 m off a 1 m lookahead
        v, omega = pure_pursuit_step(state, (0, 0), (10, 0), self.params)
        assert omega < 0  # turns back toward the path

    def test_degenerate_segment_rejected(self):
        with pytest.raises(ValueError):
            pure_pursuit_step(RobotState(), (1, 1), (1, 1), self.params)


class TestSimulateMission:
    def test_zero_noise_straight_leg_converges(self):
        plan = straight_plan()
        params = PurePursuitParams()
        log = simulate_mission(plan, params, NoiseModel(), RobotState(0.0, 0.4, 0.0))
        metrics = navigation_metrics(log, plan)
        assert math.dist((log.x[-1], log.y[-1]), (8.0, 0.0)) < 2 * params.goal_position_tolerance
        tail = metrics.xte[3 * len(log) // 4 :]
        assert tail.max() < 0.01

    def test_zero_length_plan_logs_only_initial_state(self):
        plan = WaypointPlan(
            waypoints=[Waypoint((2.0, 3.0), 0.5)], segment_kinds=[], metric=Metric.AHA_NAV
        )
        log = simulate_mission(plan, PurePursuitParams(), NoiseModel())
        assert len(log) == 1
        assert (log.x[0], log.y[0]) == (2.0, 3.0)

    def test_fixed_seed_is_bit_identical(self):
        plan = straight_plan()
        noise = NoiseModel(position_sigma=0.01, heading_sigma=0.01, wheel_slip_sigma=0.05, seed=9)
        a = simulate_mission(plan, PurePursuitParams(), noise)
        b = simulate_mission(plan, PurePursuitParams(), noise)
        assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
        assert np.array_equal(a.heading, b.heading)
        assert np.array_equal(a.omega_cmd, b.omega_cmd)

    def test_lateral_offset_within_lookahead_converges_monotonically(self):
        plan = straight_plan(length=12.0)
        params = PurePursuitParams()
        for offset in (0.2, 0.5, 0.9):
            log = simulate_mission(plan, params, NoiseModel(), RobotState(0.0, offset, 0.0))
            metrics = navigation_metrics(log, plan)
            xte = metrics.xte
            above = np.nonzero(xte >= 0.01)[0]
            assert above.size, "sanity: starts off the path"
            settle = above[-1] + 1
            assert settle < int(0.9 * len(xte)), (
                f"offset {offset} never settled below 1 cm for good"
            )
            assert xte[settle:].max() < 0.01
            # damped approach: monotone initial descent, at most one
            # overshoot bounce, then monotone final descent below 1 cm
            first_below = int(np.argmax(xte < 0.01))
            initial = xte[: first_below + 1]
            assert np.all(np.diff(initial) <= 1e-6), "initial descent must be monotone"
            if settle > first_below:
                bounce_peak = first_below + int(np.argmax(xte[first_below:settle]))
                final = xte[bounce_peak : settle + 1]
                assert np.all(np.diff(final) <= 1e-6), "post-bounce descent must be monotone"

    def test_path_length_ratio_bound(self):
        lay = FieldLayout(
            n_rows=4, plots_per_row=3, plot_length=3.0, plot_width=1.0,
            plot_height=1.9, row_spacing=1.8, alley_width=1.5, headland_depth=2.0,
        )
        plan = serpentine_plan(lay)
        log = simulate_mission(plan, PurePursuitParams(), NoiseModel())
        assert log.path_length >= plan.total_length * 0.98
        assert log.path_length / plan.total_length <= 1.05

    def test_leg_timeout_reports_leg_index(self):
        plan = WaypointPlan(
            waypoints=[Waypoint((0, 0), 0.0), Waypoint((500.0, 0), 0.0)],
            segment_kinds=["headland"],
            metric=Metric.AHA_NAV,
        )
        params = PurePursuitParams(leg_timeout_factor=0.001)
        with pytest.raises(MissionFailure) as err:
            simulate_mission(plan, params, NoiseModel())
        assert err.value.leg == 0


class TestMetrics:
    def test_on_segment_zero_xte(self):
        plan = straight_plan()
        log = simulate_mission(plan, PurePursuitParams(), NoiseModel())
        metrics = navigation_metrics(log, plan)
        assert metrics.xte.max() < 1e-3

    def test_constant_offset_statistics(self):
        plan = straight_plan()
        from tls_planner.nav_sim import TrajectoryLog

        n = 50
        log = TrajectoryLog(
            time=np.arange(n) * 0.1,
            x=np.linspace(0, 8, n),
            y=np.full(n, 0.03),
            heading=np.zeros(n),
            v_cmd=np.full(n, 0.5),
            omega_cmd=np.zeros(n),
            waypoint_idx=np.ones(n, dtype=np.int32),
            phase=np.ones(n, dtype=np.int8),
        )
        metrics = navigation_metrics(log, plan)
        assert metrics.mean_xte == pytest.approx(0.03)
        assert metrics.sd_xte == pytest.approx(0.0, abs=1e-12)
        assert metrics.fraction_below_5cm == 1.0

    def test_csv_round_trip(self, tmp_path):
        plan = straight_plan()
        log = simulate_mission(plan, PurePursuitParams(), NoiseModel())
        path = tmp_path / "trajectory.csv"
        write_trajectory_csv(path, log)
        loaded = read_trajectory_csv(path)
        np.testing.assert_allclose(loaded.x, log.x, atol=1e-9)
        np.testing.assert_array_equal(loaded.waypoint_idx, log.waypoint_idx)
        np.testing.assert_array_equal(loaded.phase, log.phase)


class TestStationaryStats:
    def test_identical_samples_zero_stats(self):
        samples = np.tile([2.0, 3.0, 0.4], (10, 1))
        stats = stationary_pose_stats(samples, (2.0, 3.0))
        assert stats.residual_sd_x == 0.0
        assert stats.residual_sd_y == 0.0
        assert stats.heading_sd == 0.0
        assert stats.absolute_location_error == 0.0

    def test_alternating_centimeter_offsets(self):
        samples = np.array([[2.01, 3.0, 0.0], [1.99, 3.0, 0.0]] * 50)
        stats = stationary_pose_stats(samples, (2.0, 3.0))
        assert stats.mean_x == pytest.approx(2.0)
        assert stats.absolute_location_error == pytest.approx(0.0, abs=1e-12)
        assert stats.residual_sd_x == pytest.approx(0.01)

    def test_gaussian_sigma_recovery(self):
        rng = np.random.default_rng(33)
        noise = NoiseModel(position_sigma=0.005, heading_sigma=math.radians(0.3), seed=0)
        samples = stationary_dwell_samples((4.0, 5.0, 0.2), noise, 1000, rng)
        stats = stationary_pose_stats(samples, (4.0, 5.0))
        assert stats.residual_sd_x == pytest.approx(0.005, rel=0.15)
        assert stats.residual_sd_y == pytest.approx(0.005, rel=0.15)
        assert stats.heading_sd == pytest.approx(math.radians(0.3), rel=0.15)

    def test_too_few_samples_rejected(self):
        with pytest.raises(ValueError, match="at least 2"):
            stationary_pose_stats(np.array([[0.0, 0.0, 0.0]]), (0, 0))


def test_survey_collects_stops_at_scan_nodes():
    plan = WaypointPlan(
        waypoints=[
            Waypoint((0.0, 0.0), 0.0),
            Waypoint((4.0, 0.0), 0.0, scan_node_id=7),
            Waypoint((8.0, 0.0), 0.0, scan_node_id=12),
        ],
        segment_kinds=["headland", "headland"],
        metric=Metric.AHA_NAV,
    )
    params = PurePursuitParams()
    log, stops = simulate_survey(plan, params, NoiseModel(seed=2), dwell_duration=5.0)
    assert [s.location_id for s in stops] == [7, 12]
    for stop in stops:
        assert math.dist(stop.achieved[:2], stop.planned) < 3 * params.goal_position_tolerance
        assert stop.dwell.shape == (50, 3)
