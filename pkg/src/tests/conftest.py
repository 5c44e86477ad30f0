from typing import Sequence

import numpy as np
import pytest

from src.config.simulation_config import PartTag
from src.models.acoustics import AcousticConfig
from src.models.scene import Placement, Scene
from src.models.trajectory import SonarPose
from src.models.tree import Branch, RandomizationParams, TreeGeometry
from src.services.lsystem_service import default_lsystem, trunk_attachments
from src.services.scene_builder import LeafIndex, TreeSource
from src.services.tree_generator import load_sample_reference


@pytest.fixture(scope="session")
def sample_reference():
    return load_sample_reference()


@pytest.fixture(scope="session")
def default_attachments():
    return trunk_attachments(default_lsystem())


@pytest.fixture(scope="session")
def tree_source(sample_reference, default_attachments):
    return TreeSource(
        reference=sample_reference,
        attachments=tuple(default_attachments),
        params=RandomizationParams(leaf_count_scale=4.0),
    )


@pytest.fixture
def acoustic_config():
    return AcousticConfig()


def make_leaf_scene(
    centers: Sequence[Sequence[float]],
    normals: Sequence[Sequence[float]],
    radius: float = 0.03,
) -> Scene:
    """Scene with one hand-placed tree at the origin holding the given leaf disks."""
    centers = np.asarray(centers, dtype=float).reshape(-1, 3)
    normals = np.asarray(normals, dtype=float).reshape(-1, 3)
    normals = normals / np.linalg.norm(normals, axis=1, keepdims=True)
    trunk = Branch(points=[[0.0, 0.0, 0.0], [0.0, 0.0, 0.1]], radius=0.05, tag=PartTag.TRUNK)
    cloud = np.vstack([trunk.points, centers])
    middle = 0.5 * (cloud.min(axis=0) + cloud.max(axis=0))
    tree = TreeGeometry(
        branches=(trunk,),
        leaf_centers=centers,
        leaf_normals=normals,
        leaf_radii=np.full(len(centers), radius),
        bounding_center=tuple(middle),
        bounding_radius=float(np.linalg.norm(cloud - middle, axis=1).max()),
    )
    scene = Scene(
        placements=(Placement(tree_id=0, position=(0.0, 0.0), yaw=0.0),),
        trees={0: tree},
    )
    scene.attach_index(LeafIndex.build(scene))
    return scene


def make_pose(position, boresight, beamwidth_deg: float = 20.0, cfg=None) -> SonarPose:
    direction = np.asarray(boresight, dtype=float)
    direction = direction / np.linalg.norm(direction)
    return SonarPose(
        position=tuple(position),
        boresight=tuple(direction),
        beamwidth_deg=beamwidth_deg,
        acoustic=cfg or AcousticConfig(),
    )


def delay_index(r: float, cfg: AcousticConfig) -> int:
    return int(round(cfg.sample_rate * 2.0 * r / cfg.speed_of_sound))

