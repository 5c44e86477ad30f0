import math

import numpy as np
import pytest
from pydantic import TypeAdapter, ValidationError

from src.config.simulation_config import CIRCLE_SCENARIO, DEFAULT_SONAR_HEIGHT
from src.models.scene import IppConfig
from src.models.trajectory import CircleTrajectory, LineTrajectory, TrajectorySpec
from src.models.tree import RandomizationParams
from src.services.scene_builder import TreeSource, build_scene
from src.services.trajectory_runner import (
    poses_from_spec,
    run_trajectory,
    sweep_domain,
    timing_sweep,
)
from src.utils.exceptions import RejectedInputError


@pytest.fixture(scope="module")
def dense_source(sample_reference, default_attachments):
    return TreeSource(
        reference=sample_reference,
        attachments=tuple(default_attachments),
        params=RandomizationParams(leaf_count_scale=20.0),
    )


@pytest.fixture(scope="module")
def single_tree_scene(dense_source):
    return build_scene([[0.0, 0.0]], dense_source, master_seed=7)


@pytest.mark.unit
class TestPoses:

    def test_circle_angles_and_inward_boresight(self):
        # Setup
        spec = CircleTrajectory(center=(1.0, -2.0), height=1.5, **CIRCLE_SCENARIO)
        scene = build_scene([], TreeSource.bundled(), master_seed=0)

        # Execute
        poses = poses_from_spec(spec, scene)

        # Verify
        assert len(poses) == 15
        for i, pose in enumerate(poses):
            angle = math.radians(24.0 * i)
            assert pose.position[0] == pytest.approx(1.0 + 6.2 * math.cos(angle))
            assert pose.position[1] == pytest.approx(-2.0 + 6.2 * math.sin(angle))
            assert pose.position[2] == 1.5
            assert pose.boresight == pytest.approx((-math.cos(angle), -math.sin(angle), 0.0))
            assert pose.beamwidth_deg == 20.0
        assert math.degrees(math.atan2(poses[-1].position[1] + 2.0, poses[-1].position[0] - 1.0)) == pytest.approx(-24.0)

    def test_default_interval_spreads_over_full_circle(self):
        spec = CircleTrajectory(center=(0.0, 0.0), height=1.0, radius=2.0, point_count=4, beamwidth_deg=10.0)

        poses = poses_from_spec(spec, build_scene([], TreeSource.bundled(), master_seed=0))

        np.testing.assert_allclose([p.position[:2] for p in poses], [[2, 0], [0, 2], [-2, 0], [0, -2]], atol=1e-12)

    def test_auto_centre_and_height_from_trees(self, tree_source):
        # Setup
        scene = build_scene([[0.0, 0.0], [4.0, 0.0]], tree_source, master_seed=5)
        spec = CircleTrajectory(radius=3.0, point_count=1, beamwidth_deg=20.0)

        # Execute
        (pose,) = poses_from_spec(spec, scene)

        # Verify
        assert pose.position[:2] == pytest.approx((5.0, 0.0))
        assert pose.position[2] == pytest.approx(0.5 * scene.mean_tree_height())

    def test_auto_centre_on_empty_scene_is_rejected(self):
        spec = CircleTrajectory(radius=3.0, point_count=2, beamwidth_deg=20.0)

        with pytest.raises(RejectedInputError, match="centre"):
            poses_from_spec(spec, build_scene([], TreeSource.bundled(), master_seed=0))

    def test_empty_scene_with_explicit_centre_uses_default_height(self):
        spec = CircleTrajectory(center=(0.0, 0.0), radius=3.0, point_count=1, beamwidth_deg=20.0)

        (pose,) = poses_from_spec(spec, build_scene([], TreeSource.bundled(), master_seed=0))

        assert pose.position[2] == DEFAULT_SONAR_HEIGHT

    def test_line_with_single_point_sits_at_start(self):
        spec = LineTrajectory(start=(0.0, 0.0, 1.0), end=(4.0, 0.0, 1.0), point_count=1, beamwidth_deg=20.0)

        (pose,) = poses_from_spec(spec, build_scene([], TreeSource.bundled(), master_seed=0))

        assert pose.position == (0.0, 0.0, 1.0)
        assert pose.boresight == pytest.approx((1.0, 0.0, 0.0))

    def test_line_spacing_and_auto_end(self, tree_source):
        # Setup
        scene = build_scene([[2.0, 2.0], [4.0, 2.0]], tree_source, master_seed=1)
        spec = LineTrajectory(start=(-3.0, 2.0, 1.2), point_count=5, beamwidth_deg=50.0)

        # Execute
        poses = poses_from_spec(spec, scene)

        # Verify
        xs = [p.position[0] for p in poses]
        np.testing.assert_allclose(xs, np.linspace(-3.0, 3.0, 5))
        assert all(p.position[1] == pytest.approx(2.0) and p.position[2] == 1.2 for p in poses)
        assert poses[0].boresight == pytest.approx((1.0, 0.0, 0.0))

    def test_coincident_line_endpoints_fail_validation(self):
        with pytest.raises(ValidationError):
            LineTrajectory(start=(1.0, 1.0, 1.0), end=(1.0, 1.0, 1.0), point_count=3, beamwidth_deg=20.0)

    def test_trajectory_kind_selects_the_model(self):
        adapter = TypeAdapter(TrajectorySpec)

        spec = adapter.validate_python({"kind": "line", "start": [0, 0, 1], "point_count": 2, "beamwidth_deg": 10})

        assert isinstance(spec, LineTrajectory)


@pytest.mark.integration
class TestRunTrajectory:

    def test_empty_sky_gives_silent_impulses(self):
        # Setup
        scene = build_scene([], TreeSource.bundled(), master_seed=0)
        spec = CircleTrajectory(center=(0.0, 0.0), height=1.5, radius=5.0, point_count=3, beamwidth_deg=20.0)

        # Execute
        report = run_trajectory(spec, scene, threads=1)

        # Verify
        assert report.point_count == 3
        assert report.tree_count == 0
        for point in report.points:
            assert point.facet_count == 0
            assert point.impulse.is_zero()

    def test_circle_around_a_tree_hears_echoes(self, single_tree_scene):
        spec = CircleTrajectory(**CIRCLE_SCENARIO)

        report = run_trajectory(spec, single_tree_scene, threads=2)

        assert report.point_count == 15
        assert [p.index for p in report.points] == list(range(15))
        assert sum(1 for p in report.points if not p.impulse.is_zero()) >= 1
        assert report.total_wall_time_s >= max(p.wall_time_s for p in report.points)

    @pytest.mark.slow
    def test_circle_scenario_finishes_within_ten_seconds(self, single_tree_scene):
        report = run_trajectory(CircleTrajectory(**CIRCLE_SCENARIO), single_tree_scene, threads=4)

        assert max(report.facet_counts()) > 0
        assert report.total_wall_time_s < 10.0

    def test_threads_do_not_change_results(self, single_tree_scene):
        spec = CircleTrajectory(radius=4.0, point_count=6, beamwidth_deg=50.0)

        serial = run_trajectory(spec, single_tree_scene, threads=1)
        pooled = run_trajectory(spec, single_tree_scene, threads=3)

        for a, b in zip(serial.points, pooled.points):
            assert a.facet_count == b.facet_count
            np.testing.assert_array_equal(a.impulse.samples, b.impulse.samples)

    def test_timings_frame_has_one_row_per_pose(self, single_tree_scene):
        report = run_trajectory(CircleTrajectory(radius=4.0, point_count=4, beamwidth_deg=20.0), single_tree_scene)

        frame = report.timings_frame()

        assert list(frame.columns) == ["pose", "facet_count", "wall_time_s"]
        assert len(frame) == 4


@pytest.mark.integration
class TestTimingSweep:

    def test_sweep_domain_fits_inside_the_circle(self):
        domain = sweep_domain(6.2)

        corner = math.hypot(domain.x_max, domain.y_max)
        assert corner == pytest.approx(6.2 / 2)

    def test_single_cell(self, tree_source):
        # Execute
        table = timing_sweep(
            point_counts=(1,), tree_counts=(1,), source=tree_source, master_seed=3, repetitions=1
        )

        # Verify
        assert table.point_counts == (1,)
        assert table.tree_counts == (1,)
        assert table.seconds[0][0] > 0
        assert list(table.to_frame().columns) == ["T=1"]

    def test_rejects_empty_counts(self, tree_source):
        with pytest.raises(RejectedInputError):
            timing_sweep(point_counts=(), tree_counts=(1,), source=tree_source)

    @pytest.mark.slow
    def test_time_grows_with_points(self, dense_source):
        # Setup
        ipp = IppConfig(domain=sweep_domain(6.2), intensity=1.0, lambda_max=1.0, seed=11)

        # Execute
        table = timing_sweep(
            point_counts=(1, 15),
            tree_counts=(1, 5),
            source=dense_source,
            repetitions=3,
            ipp=ipp,
            threads=1,
        )

        # Verify: allow for timer noise, only the large step must show
        grid = np.asarray(table.seconds)
        assert np.all(grid[1] > grid[0])
        assert set(table.monotonic_flags()) == {"non_decreasing_in_points", "non_decreasing_in_trees"}

    @pytest.mark.slow
    def test_full_sweep_is_non_decreasing_on_both_axes(self, dense_source):
        # Setup
        ipp = IppConfig(domain=sweep_domain(6.2), intensity=1.0, lambda_max=1.0, seed=11)

        # Execute
        table = timing_sweep(
            point_counts=(1, 5, 10, 15),
            tree_counts=(1, 2, 3, 4, 5),
            source=dense_source,
            repetitions=5,
            ipp=ipp,
            threads=1,
        )

        # Verify
        assert np.asarray(table.seconds).shape == (4, 5)
        assert table.repetitions == 5
        assert table.monotonic_flags() == {
            "non_decreasing_in_points": True,
            "non_decreasing_in_trees": True,
        }
