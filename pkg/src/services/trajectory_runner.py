import math
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Union

import numpy as np

from src.config.settings import settings
from src.config.simulation_config import DEFAULT_SONAR_HEIGHT, TIMING_SWEEP
from src.models.acoustics import AcousticConfig, LeafBeampatternParams
from src.models.scene import Domain, IppConfig, Scene
from src.models.trajectory import (
    CircleTrajectory,
    LineTrajectory,
    PointResult,
    RunReport,
    SonarPose,
    TimingTable,
)
from src.services.echo_simulator import simulate_pose
from src.services.scene_builder import TreeSource, build_scene, sample_ipp_given_count
from src.utils.exceptions import RejectedInputError
from src.utils.logger import setup_logger
from src.utils.seeds import derive_seed
from src.utils.validators import normalize

logger = setup_logger(__name__)

Trajectory = Union[CircleTrajectory, LineTrajectory]


def _circle_poses(spec: CircleTrajectory, scene: Scene, cfg: AcousticConfig) -> List[SonarPose]:
    if spec.center is None:
        if scene.tree_count == 0:
            raise RejectedInputError("automatic circle centre needs at least one tree", field="center")
        center = scene.mean_position()
    else:
        center = np.asarray(spec.center, dtype=float)

    if spec.height is not None:
        height = spec.height
    elif scene.tree_count:
        height = 0.5 * scene.mean_tree_height()
    else:
        height = DEFAULT_SONAR_HEIGHT

    poses = []
    for i in range(spec.point_count):
        angle = math.radians(spec.start_angle_deg + i * spec.step_deg)
        x = center[0] + spec.radius * math.cos(angle)
        y = center[1] + spec.radius * math.sin(angle)
        inward = (-math.cos(angle), -math.sin(angle), 0.0)
        poses.append(
            SonarPose(
                position=(x, y, height),
                boresight=inward,
                beamwidth_deg=spec.beamwidth_deg,
                acoustic=cfg,
            )
        )
    return poses


def _line_poses(spec: LineTrajectory, scene: Scene, cfg: AcousticConfig) -> List[SonarPose]:
    start = np.asarray(spec.start, dtype=float)
    if spec.end is None:
        if scene.tree_count == 0:
            raise RejectedInputError("automatic line end needs at least one tree", field="end")
        mean = scene.mean_position()
        end = np.array([mean[0], mean[1], start[2]])
    else:
        end = np.asarray(spec.end, dtype=float)
    if np.allclose(start, end):
        raise RejectedInputError("line start coincides with its end", field="end")
    direction = tuple(normalize(end - start, name="line direction"))

    points = np.linspace(start, end, spec.point_count)
    return [
        SonarPose(
            position=tuple(p), boresight=direction, beamwidth_deg=spec.beamwidth_deg, acoustic=cfg
        )
        for p in points
    ]


def poses_from_spec(
    spec: Trajectory, scene: Scene, cfg: Optional[AcousticConfig] = None
) -> List[SonarPose]:
    """Sonar poses along a circle (aimed at the centre) or a line (aimed along the path)."""
    cfg = cfg or AcousticConfig()
    if isinstance(spec, CircleTrajectory):
        return _circle_poses(spec, scene, cfg)
    return _line_poses(spec, scene, cfg)


def run_trajectory(
    spec: Trajectory,
    scene: Scene,
    cfg: Optional[AcousticConfig] = None,
    leaf: Optional[LeafBeampatternParams] = None,
    threads: Optional[int] = None,
) -> RunReport:
    """
    Run the echo pipeline at every pose.

    Poses are fanned out to a thread pool; results keep pose order. The total
    wall time spans the whole batch and excludes scene generation.
    """
    poses = poses_from_spec(spec, scene, cfg)
    workers = settings.resolve_threads(threads)

    def run_pose(indexed: tuple) -> PointResult:
        index, pose = indexed
        started = time.perf_counter()
        facets, impulse = simulate_pose(scene, pose, leaf)
        elapsed = time.perf_counter() - started
        logger.debug("pose_simulated", pose=index, facets=len(facets), seconds=round(elapsed, 6))
        return PointResult(
            index=index, pose=pose, facet_count=len(facets), impulse=impulse, wall_time_s=elapsed
        )

    started = time.perf_counter()
    if workers == 1 or len(poses) <= 1:
        points = [run_pose(item) for item in enumerate(poses)]
    else:
        with ThreadPoolExecutor(max_workers=min(workers, len(poses))) as pool:
            points = list(pool.map(run_pose, enumerate(poses)))
    total = time.perf_counter() - started
    total = max(total, max((p.wall_time_s for p in points), default=0.0))

    report = RunReport(points=tuple(points), total_wall_time_s=total, tree_count=scene.tree_count)
    logger.info(
        "trajectory_finished",
        kind=spec.kind,
        points=report.point_count,
        trees=report.tree_count,
        facets=sum(report.facet_counts()),
        seconds=round(total, 6),
    )
    return report


def sweep_domain(radius: float) -> Domain:
    """Square domain inside a circle of the given radius, so trees stay within the trajectory."""
    half = radius / (2.0 * math.sqrt(2.0))
    return Domain(x_min=-half, x_max=half, y_min=-half, y_max=half)


def timing_sweep(
    point_counts: Sequence[int] = TIMING_SWEEP["point_counts"],
    tree_counts: Sequence[int] = TIMING_SWEEP["tree_counts"],
    base_spec: Optional[CircleTrajectory] = None,
    cfg: Optional[AcousticConfig] = None,
    source: Optional[TreeSource] = None,
    master_seed: int = 0,
    repetitions: int = TIMING_SWEEP["repetitions"],
    ipp: Optional[IppConfig] = None,
    leaf: Optional[LeafBeampatternParams] = None,
    threads: Optional[int] = None,
) -> TimingTable:
    """
    Median total pipeline time per (point count, tree count) cell.

    Each tree-count column uses a scene of exactly T trees drawn from the
    count-conditioned IPP with a fixed seed, so scenes are nested across T.
    """
    if not point_counts or not tree_counts:
        raise RejectedInputError("point and tree counts must be non-empty", field="timing")
    if repetitions < 1:
        raise RejectedInputError("repetitions must be >= 1", field="repetitions")

    base_spec = base_spec or CircleTrajectory(radius=6.2, point_count=1, beamwidth_deg=20.0)
    source = source or TreeSource.bundled()
    if ipp is None:
        ipp = IppConfig(
            domain=sweep_domain(base_spec.radius),
            intensity=1.0,
            lambda_max=1.0,
            seed=derive_seed(master_seed, "timing"),
        )

    positions = sample_ipp_given_count(ipp, max(tree_counts))
    seconds: List[List[float]] = [[0.0] * len(tree_counts) for _ in point_counts]
    for column, tree_count in enumerate(tree_counts):
        scene = build_scene(positions[:tree_count], source, master_seed, domain=ipp.domain)
        for row, point_count in enumerate(point_counts):
            spec = base_spec.model_copy(update={"point_count": point_count})
            runs = [
                run_trajectory(spec, scene, cfg, leaf, threads=threads).total_wall_time_s
                for _ in range(repetitions)
            ]
            seconds[row][column] = statistics.median(runs)
            logger.debug(
                "timing_cell", points=point_count, trees=tree_count, seconds=seconds[row][column]
            )

    table = TimingTable(
        point_counts=tuple(point_counts),
        tree_counts=tuple(tree_counts),
        seconds=tuple(tuple(row) for row in seconds),
        repetitions=repetitions,
    )
    logger.info("timing_sweep_finished", **table.monotonic_flags())
    return table
