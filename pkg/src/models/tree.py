from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.config.simulation_config import TREE_FILE_VERSION, PartTag
from src.models.types import FloatArray, IntArray, Vec3
from src.utils.exceptions import GeometryValidationError
from src.utils.validators import as_points, check_unit_norm


class SkeletonChain(BaseModel):
    """Polyline through reference-tree vertices with a parent link (-1 = root)."""

    model_config = ConfigDict(frozen=True)

    chain_id: int = Field(..., ge=0)
    parent_id: int = Field(-1, ge=-1)
    tag: PartTag
    radius: float = Field(..., gt=0, description="Branch radius (m)")
    vertex_indices: Tuple[int, ...] = Field(..., min_length=2)

    @field_validator("tag")
    @classmethod
    def validate_tag(cls, v: PartTag) -> PartTag:
        if v == PartTag.LEAF:
            raise ValueError("skeleton chains cannot be tagged leaf")
        return v


class ReferenceTree(BaseModel):
    """Tagged triangle mesh plus branch skeleton of a reference tree."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    vertices: FloatArray
    triangles: IntArray
    tags: Tuple[PartTag, ...]
    leaf_groups: IntArray = Field(..., description="Leaf group id per triangle, -1 if none")
    skeleton: Tuple[SkeletonChain, ...]
    source: Optional[str] = None

    @model_validator(mode="before")
    @classmethod
    def reshape_arrays(cls, data: dict) -> dict:
        if isinstance(data, dict):
            data = dict(data)
            if "vertices" in data:
                data["vertices"] = as_points(data["vertices"], name="vertices")
            if "triangles" in data:
                data["triangles"] = np.asarray(data["triangles"], dtype=np.int64).reshape(-1, 3)
        return data

    @model_validator(mode="after")
    def validate_mesh(self) -> "ReferenceTree":
        n_vertices = len(self.vertices)
        triangles = self.triangles
        if triangles.size and (triangles.min() < 0 or triangles.max() >= n_vertices):
            bad = int(np.flatnonzero((triangles < 0) | (triangles >= n_vertices))[0] // 3)
            raise GeometryValidationError(
                f"triangle {bad} references a vertex outside 0..{n_vertices - 1}"
            )
        if len(self.tags) != len(triangles) or len(self.leaf_groups) != len(triangles):
            raise GeometryValidationError("tags and leaf groups must match the triangle count")
        for i, (tag, group) in enumerate(zip(self.tags, self.leaf_groups)):
            if tag == PartTag.LEAF and group < 0:
                raise GeometryValidationError(f"leaf triangle {i} has no leaf group")
            if tag != PartTag.LEAF and group >= 0:
                raise GeometryValidationError(f"non-leaf triangle {i} carries a leaf group")

        chains = {c.chain_id: c for c in self.skeleton}
        if len(chains) != len(self.skeleton):
            raise GeometryValidationError("duplicate skeleton chain ids")
        for chain in self.skeleton:
            if max(chain.vertex_indices) >= n_vertices or min(chain.vertex_indices) < 0:
                raise GeometryValidationError(
                    f"skeleton chain {chain.chain_id} references a missing vertex"
                )
            if chain.parent_id != -1 and chain.parent_id not in chains:
                raise GeometryValidationError(
                    f"skeleton chain {chain.chain_id} has unknown parent {chain.parent_id}"
                )
        for chain in self.skeleton:
            seen = {chain.chain_id}
            parent = chain.parent_id
            while parent != -1:
                if parent in seen:
                    raise GeometryValidationError(
                        f"skeleton parent links form a cycle through chain {parent}"
                    )
                seen.add(parent)
                parent = chains[parent].parent_id
        return self

    def chains_by_tag(self, tag: PartTag) -> List[SkeletonChain]:
        return [c for c in self.skeleton if c.tag == tag]

    def chain_points(self, chain: SkeletonChain) -> np.ndarray:
        return self.vertices[list(chain.vertex_indices)]

    def part_counts(self) -> Dict[str, int]:
        """Triangle counts per tag plus the number of leaf groups."""
        counts = {tag.value: 0 for tag in PartTag}
        for tag in self.tags:
            counts[tag.value] += 1
        groups = self.leaf_groups[self.leaf_groups >= 0]
        counts["leaf_groups"] = int(np.unique(groups).size)
        counts["skeleton_chains"] = len(self.skeleton)
        return counts


class RandomizationParams(BaseModel):
    """Perturbation laws applied to reference branches."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    length_scale_range: Tuple[float, float] = Field(
        (0.85, 1.15), description="Uniform range of per-branch length multipliers"
    )
    curvature_jitter: float = Field(0.08, ge=0, description="Max control-point offset (m)")
    sub_branch_jitter: float = Field(
        0.15, ge=0, le=1, description="Max sub-branch shift as a fraction of parent length"
    )
    uniform_leaf_orientation: bool = Field(
        True, description="Resample leaf normals uniformly on the sphere"
    )
    leaf_count_scale: float = Field(1.0, gt=0)
    seed: int = Field(0, ge=0, lt=2**64)

    @field_validator("length_scale_range")
    @classmethod
    def validate_length_scale_range(cls, v: Tuple[float, float]) -> Tuple[float, float]:
        lo, hi = v
        if not 0 < lo <= hi:
            raise ValueError(f"length scale range must satisfy 0 < lo <= hi, got {v}")
        return v


class LeafDisk(BaseModel):
    """Leaf approximated as a circular reflecting disk."""

    model_config = ConfigDict(frozen=True)

    center: Vec3
    normal: Vec3
    radius: float = Field(..., gt=0, description="Disk radius a (m)")

    @field_validator("normal")
    @classmethod
    def validate_normal(cls, v: Vec3) -> Vec3:
        check_unit_norm(np.asarray(v), "normal")
        return v


class Branch(BaseModel):
    """Curved branch as a polyline with a radius."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    points: FloatArray
    radius: float = Field(..., gt=0)
    tag: PartTag
    parent: int = Field(-1, ge=-1, description="Index of the parent branch, -1 for the trunk")

    @field_validator("points")
    @classmethod
    def validate_points(cls, v: np.ndarray) -> np.ndarray:
        pts = as_points(v, name="branch points")
        if len(pts) < 2:
            raise ValueError("a branch needs at least two points")
        return v

    @property
    def length(self) -> float:
        return float(np.linalg.norm(np.diff(self.points, axis=0), axis=1).sum())


class TreeGeometry(BaseModel):
    """Randomized tree: branches plus leaf disks, in the tree's local frame (trunk base at origin)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    branches: Tuple[Branch, ...]
    leaf_centers: FloatArray
    leaf_normals: FloatArray
    leaf_radii: FloatArray
    bounding_center: Vec3
    bounding_radius: float = Field(..., ge=0)
    seed: int = Field(0, ge=0, lt=2**64)

    @model_validator(mode="before")
    @classmethod
    def reshape_leaves(cls, data: dict) -> dict:
        if isinstance(data, dict):
            data = dict(data)
            for key in ("leaf_centers", "leaf_normals"):
                if key in data:
                    data[key] = as_points(data[key], name=key)
        return data

    @model_validator(mode="after")
    def validate_leaves(self) -> "TreeGeometry":
        n = len(self.leaf_centers)
        if self.leaf_normals.shape != (n, 3) or self.leaf_radii.shape != (n,):
            raise ValueError("leaf arrays must agree in length")
        if n:
            check_unit_norm(self.leaf_normals, "leaf normal")
            if np.any(self.leaf_radii <= 0):
                raise ValueError("leaf radii must be positive")
            dist = np.linalg.norm(self.leaf_centers - np.asarray(self.bounding_center), axis=1)
            if np.any(dist > self.bounding_radius * (1 + 1e-9) + 1e-12):
                raise ValueError("leaf centre outside the bounding sphere")
        return self

    @property
    def leaf_count(self) -> int:
        return int(len(self.leaf_radii))

    @property
    def height(self) -> float:
        return float(max(b.points[:, 2].max() for b in self.branches))

    def all_branch_points(self) -> np.ndarray:
        return np.vstack([b.points for b in self.branches])

    def summary(self) -> Dict[str, float]:
        return {
            "branch_count": len(self.branches),
            "leaf_count": self.leaf_count,
            "bounding_radius": round(self.bounding_radius, 6),
            "height": round(self.height, 6),
        }


class TreeFile(BaseModel):
    """Versioned on-disk envelope for a generated tree."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    version: int = TREE_FILE_VERSION
    params: RandomizationParams
    attachment_count: int
    tree: TreeGeometry
