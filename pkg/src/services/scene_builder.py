import math
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import stats
from scipy.spatial.transform import Rotation

from src.config.simulation_config import LAMBDA_MAX_RTOL
from src.models.lsystem import BranchAttachment, LSystemSpec
from src.models.scene import Domain, FacetBatch, FacetObservation, IppConfig, Placement, Scene, SceneFile
from src.models.trajectory import SonarPose
from src.models.tree import RandomizationParams, ReferenceTree, TreeGeometry
from src.services.lsystem_service import default_lsystem, trunk_attachments
from src.services.tree_generator import load_sample_reference, randomize_tree
from src.utils.exceptions import IntensityBoundError, RejectedInputError
from src.utils.logger import setup_logger
from src.utils.seeds import derive_seed, make_rng
from src.utils.validators import as_points

logger = setup_logger(__name__)

_THINNING_BATCH = 256
_MAX_THINNING_ROUNDS = 100_000
_CULL_SLACK = 1e-9


# --------------------------------------------------------------------------
# IPP sampling
# --------------------------------------------------------------------------


def _check_bound(cfg: IppConfig, points: np.ndarray, values: Optional[np.ndarray] = None) -> None:
    if len(points) == 0:
        return
    lam = cfg.intensity_at(points) if values is None else values
    negative = np.flatnonzero(lam < 0)
    if negative.size:
        x, y = points[negative[0]]
        raise RejectedInputError(
            f"intensity is negative ({lam[negative[0]]:.6g}) at ({x:.3f}, {y:.3f})",
            field="intensity",
        )
    worst = int(np.argmax(lam))
    if lam[worst] > cfg.lambda_max * (1.0 + LAMBDA_MAX_RTOL):
        raise IntensityBoundError(float(lam[worst]), cfg.lambda_max, tuple(points[worst]))


def _uniform_candidates(domain: Domain, rng: np.random.Generator, count: int) -> np.ndarray:
    return rng.uniform(
        low=(domain.x_min, domain.y_min), high=(domain.x_max, domain.y_max), size=(count, 2)
    )


def _thin(cfg: IppConfig, candidates: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    lam = cfg.intensity_at(candidates)
    _check_bound(cfg, candidates, lam)
    u = rng.uniform(size=len(candidates))
    return candidates[u * cfg.lambda_max < lam]


def sample_ipp(cfg: IppConfig) -> np.ndarray:
    """
    Draw tree positions from an inhomogeneous Poisson process by thinning.

    Candidates form a homogeneous process of rate ``lambda_max`` on the
    domain; each is kept with probability lambda(s) / lambda_max. Returns an
    (n, 2) array.
    """
    try:
        _check_bound(cfg, cfg.probe_points())
    except (IntensityBoundError, RejectedInputError) as e:
        logger.error("intensity_validation_failed", error=str(e))
        raise

    rng = make_rng(cfg.seed)
    count = int(stats.poisson.rvs(cfg.lambda_max * cfg.domain.area, random_state=rng))
    candidates = _uniform_candidates(cfg.domain, rng, count)
    kept = _thin(cfg, candidates, rng)
    logger.info("ipp_sampled", candidates=count, kept=len(kept), seed=cfg.seed)
    return kept


def sample_ipp_given_count(cfg: IppConfig, count: int) -> np.ndarray:
    """
    Draw exactly ``count`` positions from the IPP conditioned on its size.

    Thinning runs in fixed-size batches until enough points are accepted, so
    for a fixed seed the result for n is a prefix of the result for n + 1.
    """
    if count < 0:
        raise RejectedInputError(f"count must be >= 0, got {count}", field="count")
    _check_bound(cfg, cfg.probe_points())

    rng = make_rng(cfg.seed)
    accepted: List[np.ndarray] = []
    total = 0
    rounds = 0
    while total < count:
        if rounds >= _MAX_THINNING_ROUNDS:
            raise RejectedInputError(
                f"intensity too small to accept {count} points", field="intensity"
            )
        kept = _thin(cfg, _uniform_candidates(cfg.domain, rng, _THINNING_BATCH), rng)
        accepted.append(kept)
        total += len(kept)
        rounds += 1

    points = np.vstack(accepted)[:count] if accepted else np.zeros((0, 2))
    logger.debug("ipp_sampled_given_count", count=count, rounds=rounds)
    return points


# --------------------------------------------------------------------------
# Scene construction
# --------------------------------------------------------------------------


class TreeSource(BaseModel):
    """Reference tree plus trunk attachments; yields one randomized tree per seed."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    reference: ReferenceTree
    attachments: Tuple[BranchAttachment, ...] = Field(..., min_length=1)
    params: RandomizationParams = Field(default_factory=RandomizationParams)

    @classmethod
    def from_lsystem(
        cls,
        reference: ReferenceTree,
        lsystem: Optional[LSystemSpec] = None,
        params: Optional[RandomizationParams] = None,
    ) -> "TreeSource":
        return cls(
            reference=reference,
            attachments=tuple(trunk_attachments(lsystem or default_lsystem())),
            params=params or RandomizationParams(),
        )

    @classmethod
    def bundled(cls, params: Optional[RandomizationParams] = None) -> "TreeSource":
        return cls.from_lsystem(load_sample_reference(), params=params)

    def generate(self, seed: int) -> TreeGeometry:
        return randomize_tree(
            self.reference, self.attachments, self.params.model_copy(update={"seed": seed})
        )


def build_scene(
    positions: Union[np.ndarray, Sequence[Sequence[float]]],
    source: TreeSource,
    master_seed: int,
    domain: Optional[Domain] = None,
) -> Scene:
    """Place one randomized tree per position, each with its own derived seed and a uniform yaw."""
    points = as_points(positions, dim=2, name="positions")
    if domain is not None and len(points):
        outside = np.flatnonzero(~domain.contains(points))
        if outside.size:
            raise RejectedInputError(
                f"position {outside[0]} lies outside the domain", field="positions"
            )

    yaws = make_rng(derive_seed(master_seed, "yaw")).uniform(0.0, 2.0 * math.pi, size=len(points))
    yaws = np.where(yaws >= 2.0 * math.pi, 0.0, yaws)

    placements = []
    trees = {}
    for i, (position, yaw) in enumerate(zip(points, yaws)):
        seed = derive_seed(master_seed, "tree", i)
        trees[i] = source.generate(seed)
        placements.append(
            Placement(tree_id=i, position=tuple(position), yaw=float(yaw), seed=seed)
        )

    scene = Scene(
        domain=domain,
        placements=tuple(placements),
        trees=trees,
        master_seed=master_seed,
        params=source.params,
    )
    scene.attach_index(LeafIndex.build(scene))
    logger.info("scene_built", trees=scene.tree_count, leaves=scene.leaf_count, seed=master_seed)
    return scene


def save_scene(path: Union[str, Path], scene: Scene) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    envelope = SceneFile(
        domain=scene.domain,
        master_seed=scene.master_seed,
        params=scene.params,
        placements=list(scene.placements),
        trees=scene.trees,
    )
    path.write_text(envelope.model_dump_json(indent=2), encoding="utf-8")
    logger.info("scene_saved", path=str(path), trees=scene.tree_count)
    return path


def load_scene(path: Union[str, Path]) -> Scene:
    envelope = SceneFile.model_validate_json(Path(path).read_text(encoding="utf-8"))
    scene = Scene(
        domain=envelope.domain,
        placements=tuple(envelope.placements),
        trees=envelope.trees,
        master_seed=envelope.master_seed,
        params=envelope.params,
    )
    scene.attach_index(LeafIndex.build(scene))
    return scene


# --------------------------------------------------------------------------
# Main-lobe queries
# --------------------------------------------------------------------------


def _dot3(rows: np.ndarray, vector: np.ndarray) -> np.ndarray:
    return rows[:, 0] * vector[0] + rows[:, 1] * vector[1] + rows[:, 2] * vector[2]


def _row_dot(left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Row-wise dot product of two (N, 3) arrays."""
    return left[:, 0] * right[:, 0] + left[:, 1] * right[:, 1] + left[:, 2] * right[:, 2]


def sonar_frame(boresight: Sequence[float]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Forward, right and up unit vectors; right is horizontal unless looking straight up or down."""
    forward = np.asarray(boresight, dtype=float)
    right = np.cross(forward, (0.0, 0.0, 1.0))
    norm = np.linalg.norm(right)
    right = np.array([1.0, 0.0, 0.0]) if norm < 1e-12 else right / norm
    up = np.cross(right, forward)
    return forward, right, up


class LeafIndex:
    """World-frame leaf arrays of a scene with one bounding sphere per placed tree."""

    def __init__(
        self,
        centers: np.ndarray,
        normals: np.ndarray,
        radii: np.ndarray,
        offsets: np.ndarray,
        sphere_centers: np.ndarray,
        sphere_radii: np.ndarray,
    ):
        self.centers = centers
        self.normals = normals
        self.radii = radii
        self.offsets = offsets
        self.sphere_centers = sphere_centers
        self.sphere_radii = sphere_radii
        self.leaf_ids = np.arange(len(radii), dtype=np.int64)

    @classmethod
    def build(cls, scene: Scene) -> "LeafIndex":
        centers, normals, radii = [], [], []
        sphere_centers, sphere_radii = [], []
        offsets = [0]
        for placement in scene.placements:
            tree = scene.trees[placement.tree_id]
            rotation = Rotation.from_euler("z", placement.yaw)
            base = np.array([placement.position[0], placement.position[1], 0.0])
            centers.append(base + rotation.apply(tree.leaf_centers) if tree.leaf_count else tree.leaf_centers)
            normals.append(rotation.apply(tree.leaf_normals) if tree.leaf_count else tree.leaf_normals)
            radii.append(tree.leaf_radii)
            sphere_centers.append(base + rotation.apply(np.asarray(tree.bounding_center)))
            sphere_radii.append(tree.bounding_radius)
            offsets.append(offsets[-1] + tree.leaf_count)

        return cls(
            centers=np.vstack(centers) if centers else np.zeros((0, 3)),
            normals=np.vstack(normals) if normals else np.zeros((0, 3)),
            radii=np.concatenate(radii) if radii else np.zeros(0),
            offsets=np.asarray(offsets, dtype=np.int64),
            sphere_centers=np.vstack(sphere_centers) if sphere_centers else np.zeros((0, 3)),
            sphere_radii=np.asarray(sphere_radii, dtype=float),
        )

    def __len__(self) -> int:
        return int(self.radii.size)

    def candidate_leaves(self, pose: SonarPose) -> np.ndarray:
        """Indices of leaves in trees whose bounding sphere can meet the cone."""
        if len(self.sphere_radii) == 0:
            return np.zeros(0, dtype=np.int64)
        position = np.asarray(pose.position, dtype=float)
        forward = np.asarray(pose.boresight, dtype=float)
        rel = self.sphere_centers - position
        dist = np.sqrt(_row_dot(rel, rel))
        half = pose.half_beamwidth_rad

        keep = dist <= self.sphere_radii
        far = ~keep
        if np.any(far):
            cos_alpha = np.clip(_dot3(rel[far], forward) / dist[far], -1.0, 1.0)
            alpha = np.arccos(cos_alpha)
            spread = np.arcsin(np.clip(self.sphere_radii[far] / dist[far], 0.0, 1.0))
            keep[far] = alpha <= half + spread + _CULL_SLACK

        trees = np.flatnonzero(keep)
        if trees.size == 0:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(
            [np.arange(self.offsets[t], self.offsets[t + 1], dtype=np.int64) for t in trees]
        )


def _observe(index: LeafIndex, selection: np.ndarray, pose: SonarPose) -> FacetBatch:
    """Map selected leaves to sonar-frame observations, keeping only main-lobe members."""
    if selection.size == 0:
        return FacetBatch.empty()
    position = np.asarray(pose.position, dtype=float)
    forward, right, up = sonar_frame(pose.boresight)

    rel = index.centers[selection] - position
    r = np.sqrt(_row_dot(rel, rel))
    x_f = _dot3(rel, forward)
    x_r = _dot3(rel, right)
    x_u = _dot3(rel, up)
    az = np.arctan2(x_r, x_f)
    el = np.arctan2(x_u, np.hypot(x_f, x_r))
    inside = (r > 0) & (np.hypot(az, el) <= pose.half_beamwidth_rad)
    if not np.any(inside):
        return FacetBatch.empty()

    r, az, el, rel = r[inside], az[inside], el[inside], rel[inside]
    ids = index.leaf_ids[selection][inside]
    normals = index.normals[selection][inside]
    cos_beta = np.abs(_row_dot(normals, rel) / r)
    beta = np.arccos(np.clip(cos_beta, 0.0, 1.0))

    order = np.lexsort((ids, r))
    return FacetBatch(
        r=r[order],
        az=az[order],
        el=el[order],
        beta=beta[order],
        a=index.radii[selection][inside][order],
        leaf_ids=ids[order],
    )


def leaf_index_for(scene: Scene) -> LeafIndex:
    if scene.leaf_index is None:
        scene.attach_index(LeafIndex.build(scene))
    return scene.leaf_index


def facet_batch_in_main_lobe(scene: Scene, pose: SonarPose) -> FacetBatch:
    index = leaf_index_for(scene)
    return _observe(index, index.candidate_leaves(pose), pose)


def facets_in_main_lobe(scene: Scene, pose: SonarPose) -> List[FacetObservation]:
    """Leaf disks within half the beamwidth of boresight, sorted by range (ties by leaf id)."""
    return facet_batch_in_main_lobe(scene, pose).to_observations()


def scan_all_facets(scene: Scene, pose: SonarPose) -> FacetBatch:
    """Exhaustive scan over every leaf of the scene, without culling."""
    index = leaf_index_for(scene)
    return _observe(index, index.leaf_ids, pose)
