import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tls_planner.geometry import (
    Aabb,
    DegenerateBaselineError,
    Ray,
    heading_from_rovers,
    ray_aabb_intersect,
    rotation_matrix,
    slab_intersect_batch,
    transform_point,
    wrap_angle,
)

from oracles import six_plane_clip


class TestWrapAngle:
    def test_identity_inside_range(self):
        assert wrap_angle(0.5) == pytest.approx(0.5)

    def test_boundary_is_pi_not_minus_pi(self):
        assert wrap_angle(math.pi) == pytest.approx(math.pi)
        assert wrap_angle(-math.pi) == pytest.approx(math.pi)

    @given(st.floats(-50.0, 50.0))
    def test_always_in_half_open_interval(self, theta):
        wrapped = wrap_angle(theta)
        assert -math.pi < wrapped <= math.pi
        assert math.isclose(
            math.sin(wrapped - theta), 0.0, abs_tol=1e-9
        ), "must differ by a multiple of 2*pi"


class TestHeadingFromRovers:
    def test_east_baseline(self):
        assert heading_from_rovers((0, 0), (1, 0)) == pytest.approx(0.0)

    def test_north_baseline(self):
        assert heading_from_rovers((0, 0), (0, 1)) == pytest.approx(math.pi / 2)

    def test_west_baseline(self):
        assert heading_from_rovers((0, 0), (-1, 0)) == pytest.approx(math.pi)

    def test_coincident_antennas_rejected(self):
        with pytest.raises(DegenerateBaselineError):
            heading_from_rovers((2.0, 3.0), (2.0, 3.0))

    @given(
        st.floats(-100, 100), st.floats(-100, 100),
        st.floats(-100, 100), st.floats(-100, 100),
    )
    def test_swapping_rovers_flips_by_pi(self, x1, y1, x2, y2):
        if math.hypot(x2 - x1, y2 - y1) < 1e-6:
            return
        forward = heading_from_rovers((x1, y1), (x2, y2))
        backward = heading_from_rovers((x2, y2), (x1, y1))
        assert -math.pi < forward <= math.pi
        assert abs(wrap_angle(forward - backward)) == pytest.approx(math.pi, abs=1e-9)


class TestTransformPoint:
    def test_identity_pose(self):
        out = transform_point([1.0, 2.0, 3.0], [0, 0, 0], 0.0, 0.0, 0.0)
        np.testing.assert_allclose(out, [1.0, 2.0, 3.0])

    def test_pure_translation(self):
        out = transform_point([0.0, 0.0, 0.0], [1.0, 2.0, 3.0], 0.0, 0.0, 0.0)
        np.testing.assert_allclose(out, [1.0, 2.0, 3.0])

    def test_yaw_quarter_turn_maps_x_to_y(self):
        out = transform_point([1.0, 0.0, 0.0], [0, 0, 0], 0.0, 0.0, math.pi / 2)
        np.testing.assert_allclose(out, [0.0, 1.0, 0.0], atol=1e-12)

    @given(
        st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2),
        st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3),
        st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10),
    )
    @settings(max_examples=50)
    def test_inverse_pose_round_trip(self, roll, pitch, yaw, tx, ty, tz, px, py, pz):
        point = np.array([px, py, pz])
        translation = np.array([tx, ty, tz])
        world = transform_point(point, translation, roll, pitch, yaw)
        back = rotation_matrix(roll, pitch, yaw).T @ (world - translation)
        np.testing.assert_allclose(back, point, atol=1e-9)


class TestRayAabbIntersect:
    box = Aabb([1.0, -1.0, -1.0], [2.0, 1.0, 1.0])

    def test_axis_aligned_entry_exit(self):
        result = ray_aabb_intersect(Ray([0, 0, 0], [1, 0, 0]), self.box)
        assert result == pytest.approx((1.0, 2.0))

    def test_parallel_slab_miss(self):
        assert ray_aabb_intersect(Ray([0, 5, 0], [1, 0, 0]), self.box) is None

    def test_origin_inside_box(self):
        cube = Aabb([-1, -1, -1], [1, 1, 1])
        result = ray_aabb_intersect(Ray([0, 0, 0], [1, 0, 0]), cube)
        assert result is not None
        t_entry, t_exit = result
        assert t_entry < 0.0
        assert t_exit == pytest.approx(1.0)
        assert max(t_entry, 0.0) == 0.0

    def test_box_fully_behind_origin(self):
        assert ray_aabb_intersect(Ray([5, 0, 0], [1, 0, 0]), self.box) is None


def _random_ray_boxes(rng, count):
    origins = rng.uniform(-10, 10, (count, 3))
    directions = rng.normal(size=(count, 3))
    # Mix in axis-parallel rays to exercise the zero-component branches.
    zero_mask = rng.random((count, 3)) < 0.08
    directions[zero_mask] = 0.0
    bad = np.linalg.norm(directions, axis=1) < 1e-12
    directions[bad] = [1.0, 0.0, 0.0]
    directions /= np.linalg.norm(directions, axis=1)[:, None]
    lows = rng.uniform(-8, 8, (count, 3))
    highs = lows + rng.uniform(0.1, 6.0, (count, 3))
    return origins, directions, lows, highs


def test_slab_method_matches_six_plane_oracle_bulk():
    """Differential test on 1e5 random ray/box pairs, |delta t| < 1e-9."""
    rng = np.random.default_rng(2024)
    count = 100_000
    origins, directions, lows, highs = _random_ray_boxes(rng, count)
    mismatches = 0
    for i in range(count):
        box = Aabb(lows[i], highs[i])
        fast = ray_aabb_intersect(Ray(origins[i], directions[i]), box)
        slow = six_plane_clip(origins[i], directions[i], lows[i], highs[i])
        if (fast is None) != (slow is None):
            mismatches += 1
            continue
        if fast is not None:
            if abs(fast[0] - slow[0]) > 1e-9 or abs(fast[1] - slow[1]) > 1e-9:
                mismatches += 1
    assert mismatches == 0


def test_batch_slab_matches_scalar():
    rng = np.random.default_rng(7)
    origins, directions, lows, highs = _random_ray_boxes(rng, 500)
    for i in range(0, 500, 25):
        origin = origins[i]
        t_entry, hit = slab_intersect_batch(origin, directions, lows[i], highs[i])
        box = Aabb(lows[i], highs[i])
        for j in range(len(directions)):
            scalar = ray_aabb_intersect(Ray(origin, directions[j]), box)
            assert hit[j] == (scalar is not None)
            if scalar is not None:
                assert t_entry[j] == pytest.approx(scalar[0], abs=1e-9)
