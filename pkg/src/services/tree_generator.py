import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError
from scipy.spatial.transform import Rotation

from src.config.simulation_config import (
    BRANCH_SUBDIVISIONS,
    REFERENCE_TREE_VERSION,
    PartTag,
)
from src.models.lsystem import BranchAttachment
from src.models.tree import (
    Branch,
    LeafDisk,
    RandomizationParams,
    ReferenceTree,
    SkeletonChain,
    TreeFile,
    TreeGeometry,
)
from src.utils.exceptions import GeometryValidationError, ParseError, RejectedInputError
from src.utils.logger import setup_logger
from src.utils.seeds import make_rng

logger = setup_logger(__name__)

SAMPLE_REFERENCE_PATH = Path(__file__).resolve().parent.parent / "data" / "sample_reference.tree"

_TAGS = {tag.value: tag for tag in PartTag}


# --------------------------------------------------------------------------
# Reference tree file
# --------------------------------------------------------------------------


def _decode(raw: bytes) -> str:
    if raw.startswith((b"\xff\xfe", b"\xfe\xff")):
        return raw.decode("utf-16")
    return raw.decode("utf-8-sig")


def _parse_tag(token: str, line_no: int, source: Optional[str]) -> PartTag:
    try:
        return _TAGS[token.lower()]
    except KeyError:
        raise ParseError(f"unknown part tag {token!r}", line=line_no, source=source) from None


def parse_reference(text: str, source: Optional[str] = None) -> ReferenceTree:
    """
    Parse the text reference-tree format.

    Records, one per line (``#`` starts a comment)::

        version 1
        v x y z
        t i j k TAG [leaf_group]
        s chain_id parent_id TAG radius i0 i1 ...

    Indices are 0-based. TAG is one of trunk, branch, sub-branch, leaf.
    """
    vertices: List[Tuple[float, float, float]] = []
    triangles: List[Tuple[int, int, int]] = []
    triangle_lines: List[int] = []
    tags: List[PartTag] = []
    groups: List[int] = []
    chains: List[SkeletonChain] = []
    chain_lines: List[int] = []
    version_seen = False

    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        kind, args = fields[0], fields[1:]

        try:
            if not version_seen:
                if kind != "version" or len(args) != 1:
                    raise ParseError("expected 'version N' header", line=line_no, source=source)
                if int(args[0]) != REFERENCE_TREE_VERSION:
                    raise ParseError(
                        f"unsupported reference tree version {args[0]}",
                        line=line_no,
                        source=source,
                    )
                version_seen = True
            elif kind == "v":
                if len(args) != 3:
                    raise ParseError("vertex needs 3 coordinates", line=line_no, source=source)
                xyz = tuple(float(a) for a in args)
                if not all(math.isfinite(c) for c in xyz):
                    raise ParseError("vertex coordinates must be finite", line=line_no, source=source)
                vertices.append(xyz)  # type: ignore[arg-type]
            elif kind == "t":
                if len(args) not in (4, 5):
                    raise ParseError(
                        "triangle needs 3 indices, a tag and an optional leaf group",
                        line=line_no,
                        source=source,
                    )
                triangles.append((int(args[0]), int(args[1]), int(args[2])))
                triangle_lines.append(line_no)
                tag = _parse_tag(args[3], line_no, source)
                tags.append(tag)
                groups.append(int(args[4]) if len(args) == 5 else -1)
            elif kind == "s":
                if len(args) < 6:
                    raise ParseError(
                        "skeleton chain needs id, parent, tag, radius and two vertices",
                        line=line_no,
                        source=source,
                    )
                chains.append(
                    SkeletonChain(
                        chain_id=int(args[0]),
                        parent_id=int(args[1]),
                        tag=_parse_tag(args[2], line_no, source),
                        radius=float(args[3]),
                        vertex_indices=tuple(int(a) for a in args[4:]),
                    )
                )
                chain_lines.append(line_no)
            else:
                raise ParseError(f"unknown record {kind!r}", line=line_no, source=source)
        except ParseError:
            raise
        except ValueError as e:
            raise ParseError(str(e).splitlines()[0], line=line_no, source=source) from e

    if not version_seen:
        raise ParseError("empty reference tree file", source=source)

    n_vertices = len(vertices)
    for tri, line_no in zip(triangles, triangle_lines):
        if min(tri) < 0 or max(tri) >= n_vertices:
            raise GeometryValidationError(
                f"{source or 'reference'} line {line_no}: triangle references a missing vertex"
            )
    for chain, line_no in zip(chains, chain_lines):
        if min(chain.vertex_indices) < 0 or max(chain.vertex_indices) >= n_vertices:
            raise GeometryValidationError(
                f"{source or 'reference'} line {line_no}: skeleton chain references a missing vertex"
            )

    try:
        return ReferenceTree(
            vertices=vertices,
            triangles=triangles,
            tags=tuple(tags),
            leaf_groups=groups,
            skeleton=tuple(chains),
            source=source,
        )
    except ValidationError as e:
        message = e.errors()[0]["msg"].removeprefix("Value error, ")
        raise GeometryValidationError(f"{source or 'reference'}: {message}") from e


def load_reference(path: Union[str, Path]) -> ReferenceTree:
    """Read a reference tree file (UTF-8 or UTF-16, any line endings)."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        logger.error("reference_read_failed", path=str(path), error=str(e))
        raise

    reference = parse_reference(_decode(raw), source=str(path))
    logger.info("reference_loaded", path=str(path), **reference.part_counts())
    return reference


def load_sample_reference() -> ReferenceTree:
    return load_reference(SAMPLE_REFERENCE_PATH)


# --------------------------------------------------------------------------
# Leaf disks
# --------------------------------------------------------------------------


def _leaf_table(reference: ReferenceTree) -> Tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Centres, unit normals and radii of all non-degenerate leaf groups."""
    mask = reference.leaf_groups >= 0
    if not np.any(mask):
        return np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), 0

    corners = reference.vertices[reference.triangles[mask]]
    cross = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    areas = 0.5 * np.linalg.norm(cross, axis=1)
    centroids = corners.mean(axis=1)
    group_ids, inverse = np.unique(reference.leaf_groups[mask], return_inverse=True)

    n_groups = len(group_ids)
    total_area = np.bincount(inverse, weights=areas, minlength=n_groups)
    weighted = np.stack(
        [np.bincount(inverse, weights=areas * centroids[:, k], minlength=n_groups) for k in range(3)],
        axis=1,
    )
    normal_sum = np.stack(
        [np.bincount(inverse, weights=cross[:, k], minlength=n_groups) for k in range(3)],
        axis=1,
    )
    normal_norm = np.linalg.norm(normal_sum, axis=1)

    keep = (total_area > 0) & (normal_norm > 0)
    skipped = int(n_groups - keep.sum())
    centers = weighted[keep] / total_area[keep, None]
    normals = normal_sum[keep] / normal_norm[keep, None]
    radii = np.sqrt(total_area[keep] / math.pi)
    return centers, normals, radii, skipped


def leaf_disks_from_mesh(reference: ReferenceTree) -> List[LeafDisk]:
    """
    Replace each leaf group by an equal-area disk at its area-weighted
    centroid, oriented along the area-weighted mean normal.
    """
    centers, normals, radii, skipped = _leaf_table(reference)
    if skipped:
        logger.warning("degenerate_leaf_groups_skipped", count=skipped)
    return [
        LeafDisk(center=tuple(c), normal=tuple(n), radius=float(a))
        for c, n, a in zip(centers, normals, radii)
    ]


# --------------------------------------------------------------------------
# Polyline helpers
# --------------------------------------------------------------------------


def subdivide_polyline(points: np.ndarray, pieces: int = BRANCH_SUBDIVISIONS) -> np.ndarray:
    """Split every segment into ``pieces`` equal parts, keeping the original vertices."""
    points = np.asarray(points, dtype=float)
    if pieces <= 1 or len(points) < 2:
        return points.copy()
    steps = np.arange(pieces) / pieces
    starts, ends = points[:-1], points[1:]
    inner = starts[:, None, :] + steps[None, :, None] * (ends - starts)[:, None, :]
    return np.vstack([inner.reshape(-1, 3), points[-1:]])


def _arc_fractions(points: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    cumulative = np.concatenate([[0.0], np.cumsum(seg)])
    total = cumulative[-1]
    if total == 0:
        return np.linspace(0.0, 1.0, len(points))
    return cumulative / total


def _point_at(points: np.ndarray, t: Union[float, np.ndarray]) -> np.ndarray:
    """Point(s) at arc-length fraction ``t`` along a polyline."""
    fractions = _arc_fractions(points)
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return np.stack([np.interp(t, fractions, points[:, k]) for k in range(3)], axis=-1)


def _project(points: np.ndarray, polyline: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Arc-length fraction and distance of the nearest polyline point for each query point."""
    points = np.atleast_2d(points)
    fractions = _arc_fractions(polyline)
    best_t = np.zeros(len(points))
    best_d = np.full(len(points), np.inf)
    for j in range(len(polyline) - 1):
        a, b = polyline[j], polyline[j + 1]
        ab = b - a
        denom = float(ab @ ab)
        s = np.zeros(len(points)) if denom == 0 else np.clip((points - a) @ ab / denom, 0.0, 1.0)
        nearest = a + s[:, None] * ab
        d = np.linalg.norm(points - nearest, axis=1)
        better = d < best_d
        best_d[better] = d[better]
        best_t[better] = fractions[j] + s[better] * (fractions[j + 1] - fractions[j])
    return best_t, best_d


def _minimal_rotation(source: np.ndarray, target: np.ndarray) -> Rotation:
    """Smallest rotation taking unit vector ``source`` onto unit vector ``target``."""
    axis = np.cross(source, target)
    sin_angle = float(np.linalg.norm(axis))
    cos_angle = float(np.clip(source @ target, -1.0, 1.0))
    if sin_angle < 1e-12:
        if cos_angle > 0:
            return Rotation.identity()
        helper = np.array([1.0, 0.0, 0.0]) if abs(source[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        perpendicular = np.cross(source, helper)
        return Rotation.from_rotvec(math.pi * perpendicular / np.linalg.norm(perpendicular))
    return Rotation.from_rotvec(axis / sin_angle * math.atan2(sin_angle, cos_angle))


def _perpendicular_unit(axis: np.ndarray, draw: np.ndarray) -> np.ndarray:
    axis_norm = np.linalg.norm(axis)
    if axis_norm == 0:
        return draw / max(np.linalg.norm(draw), 1e-300)
    unit_axis = axis / axis_norm
    v = draw - (draw @ unit_axis) * unit_axis
    norm = np.linalg.norm(v)
    if norm < 1e-12:
        helper = np.array([1.0, 0.0, 0.0]) if abs(unit_axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        v = np.cross(unit_axis, helper)
        norm = np.linalg.norm(v)
    return v / norm


# --------------------------------------------------------------------------
# Randomization
# --------------------------------------------------------------------------


@dataclass
class _ReferenceLayout:
    """Reference skeleton pre-digested for randomization."""

    trunk: List[SkeletonChain]
    first_level: List[SkeletonChain]
    children: Dict[int, List[SkeletonChain]]
    polylines: Dict[int, np.ndarray]
    leaf_centers: np.ndarray
    leaf_normals: np.ndarray
    leaf_radii: np.ndarray
    leaf_host: np.ndarray
    leaf_t: np.ndarray
    leaf_offsets: np.ndarray


def _layout(reference: ReferenceTree) -> _ReferenceLayout:
    trunk = reference.chains_by_tag(PartTag.TRUNK)
    if not trunk:
        raise RejectedInputError("reference tree has no trunk chain", field="reference")
    trunk_ids = {c.chain_id for c in trunk}
    first_level = [
        c for c in reference.skeleton
        if c.tag != PartTag.TRUNK and (c.parent_id == -1 or c.parent_id in trunk_ids)
    ]
    if not first_level:
        raise RejectedInputError("reference tree has no first-level branch", field="reference")

    children: Dict[int, List[SkeletonChain]] = {c.chain_id: [] for c in reference.skeleton}
    for chain in reference.skeleton:
        if chain.parent_id != -1:
            children[chain.parent_id].append(chain)

    polylines = {
        c.chain_id: subdivide_polyline(reference.chain_points(c)) for c in reference.skeleton
    }

    centers, normals, radii, skipped = _leaf_table(reference)
    if skipped:
        logger.warning("degenerate_leaf_groups_skipped", count=skipped)

    chain_ids = [c.chain_id for c in reference.skeleton]
    host = np.zeros(len(centers), dtype=np.int64)
    leaf_t = np.zeros(len(centers))
    offsets = np.zeros_like(centers)
    if len(centers):
        params = np.zeros((len(chain_ids), len(centers)))
        dists = np.zeros((len(chain_ids), len(centers)))
        for row, cid in enumerate(chain_ids):
            params[row], dists[row] = _project(centers, polylines[cid])
        nearest = np.argmin(dists, axis=0)
        host = np.asarray([chain_ids[r] for r in nearest], dtype=np.int64)
        leaf_t = params[nearest, np.arange(len(centers))]
        for i in range(len(centers)):
            offsets[i] = centers[i] - _point_at(polylines[int(host[i])], leaf_t[i])

    return _ReferenceLayout(
        trunk=trunk,
        first_level=first_level,
        children=children,
        polylines=polylines,
        leaf_centers=centers,
        leaf_normals=normals,
        leaf_radii=radii,
        leaf_host=host,
        leaf_t=leaf_t,
        leaf_offsets=offsets,
    )


def _subtree(root: SkeletonChain, children: Dict[int, List[SkeletonChain]]) -> List[SkeletonChain]:
    order: List[SkeletonChain] = []
    queue = deque([root])
    while queue:
        chain = queue.popleft()
        order.append(chain)
        queue.extend(children[chain.chain_id])
    return order


def _bend(points: np.ndarray, magnitude: float, draw: np.ndarray) -> np.ndarray:
    """Quadratic bow: add 2t(1-t) * delta with delta orthogonal to the chord."""
    if magnitude == 0.0:
        return points
    delta = magnitude * _perpendicular_unit(points[-1] - points[0], draw)
    t = _arc_fractions(points)
    return points + (2.0 * t * (1.0 - t))[:, None] * delta


def _place_group(
    layout: _ReferenceLayout,
    root: SkeletonChain,
    attachment: BranchAttachment,
    params: RandomizationParams,
    rng: np.random.Generator,
) -> Tuple[List[Tuple[SkeletonChain, np.ndarray]], Rotation]:
    """Scale, orient, bend and re-seat one reference branch group on an attachment."""
    ref_root = layout.polylines[root.chain_id]
    base = ref_root[0]
    chord = ref_root[-1] - base
    if np.linalg.norm(chord) == 0:
        raise GeometryValidationError(f"skeleton chain {root.chain_id} has zero length")
    rotation = _minimal_rotation(chord / np.linalg.norm(chord), np.asarray(attachment.direction))
    anchor = np.asarray(attachment.position, dtype=float)
    lo, hi = params.length_scale_range

    placed: Dict[int, np.ndarray] = {}
    result: List[Tuple[SkeletonChain, np.ndarray]] = []
    for chain in _subtree(root, layout.children):
        scale = rng.uniform(lo, hi)
        shift = rng.uniform(-params.sub_branch_jitter, params.sub_branch_jitter)
        magnitude = rng.uniform(0.0, params.curvature_jitter)
        draw = rng.normal(size=3)

        ref_points = layout.polylines[chain.chain_id]
        if chain.chain_id == root.chain_id:
            new_base = anchor
        else:
            parent_ref = layout.polylines[chain.parent_id]
            t_base, _ = _project(ref_points[:1], parent_ref)
            offset = ref_points[0] - _point_at(parent_ref, t_base[0])
            t_new = float(np.clip(t_base[0] + shift, 0.0, 1.0))
            new_base = _point_at(placed[chain.parent_id], t_new) + rotation.apply(offset)

        local = scale * (ref_points - ref_points[0])
        points = new_base + rotation.apply(local)
        points = _bend(points, magnitude, draw)
        placed[chain.chain_id] = points
        result.append((chain, points))
    return result, rotation


def _trunk_polylines(layout: _ReferenceLayout, top: float) -> List[Tuple[SkeletonChain, np.ndarray]]:
    result = []
    for chain in layout.trunk:
        points = layout.polylines[chain.chain_id]
        result.append((chain, points))
    main_chain, main_points = result[0]
    if top > main_points[:, 2].max():
        tip = main_points[np.argmax(main_points[:, 2])]
        extended = np.vstack([main_points, [tip[0], tip[1], top]])
        result[0] = (main_chain, extended)
    return result


def _roll_about_chord(points: np.ndarray, angle: float) -> Rotation:
    chord = points[-1] - points[0]
    norm = np.linalg.norm(chord)
    if norm == 0:
        return Rotation.identity()
    return Rotation.from_rotvec(chord / norm * angle)


def randomize_tree(
    reference: ReferenceTree,
    attachments: Sequence[BranchAttachment],
    params: RandomizationParams,
) -> TreeGeometry:
    """
    Grow a randomized tree by placing perturbed reference branches on the
    trunk attachments.

    The K first-level reference branches (with their sub-branches and leaves)
    are assigned cyclically to the attachments. Each group is scaled about its
    base, rotated so its chord points along the attachment direction, bent by
    a bounded quadratic offset, and its sub-branches slide along the parent.
    Leaves follow their host chain. The leaf set is then thinned or
    duplicated to ``round(L_ref * leaf_count_scale)`` leaves.
    """
    if not attachments:
        raise RejectedInputError("at least one branch attachment is required", field="attachments")

    layout = _layout(reference)
    rng = make_rng(params.seed)

    top = max(a.height for a in attachments)
    placed_chains: List[Tuple[SkeletonChain, np.ndarray]] = list(_trunk_polylines(layout, top))
    rotations: Dict[int, Rotation] = {}
    group_of: List[int] = [-1] * len(placed_chains)

    for i, attachment in enumerate(attachments):
        root = layout.first_level[i % len(layout.first_level)]
        group, rotation = _place_group(layout, root, attachment, params, rng)
        rotations[i] = rotation
        placed_chains.extend(group)
        group_of.extend([i] * len(group))

    # leaves ride on their host chain in every placed copy
    centers: List[np.ndarray] = []
    normals: List[np.ndarray] = []
    radii: List[float] = []
    hosts: List[int] = []
    for slot, (chain, points) in enumerate(placed_chains):
        hosted = np.flatnonzero(layout.leaf_host == chain.chain_id)
        if hosted.size == 0:
            continue
        group = group_of[slot]
        rotation = rotations.get(group, Rotation.identity())
        anchors = _point_at(points, layout.leaf_t[hosted])
        centers.append(anchors + rotation.apply(layout.leaf_offsets[hosted]))
        normals.append(rotation.apply(layout.leaf_normals[hosted]))
        radii.extend(layout.leaf_radii[hosted].tolist())
        hosts.extend([slot] * hosted.size)

    leaf_centers = np.vstack(centers) if centers else np.zeros((0, 3))
    leaf_normals = np.vstack(normals) if normals else np.zeros((0, 3))
    leaf_radii = np.asarray(radii, dtype=float)
    host_slots = np.asarray(hosts, dtype=np.int64)

    target = int(round(len(layout.leaf_radii) * params.leaf_count_scale))
    carried = len(leaf_radii)
    if carried > target:
        keep = np.sort(rng.choice(carried, size=target, replace=False))
        leaf_centers, leaf_normals = leaf_centers[keep], leaf_normals[keep]
        leaf_radii, host_slots = leaf_radii[keep], host_slots[keep]
    elif carried < target:
        if carried == 0:
            logger.warning("leaf_duplication_impossible", target=target)
        else:
            extra_c, extra_n, extra_r = [], [], []
            for _ in range(target - carried):
                j = int(rng.integers(carried))
                points = placed_chains[int(host_slots[j])][1]
                t_old, _ = _project(leaf_centers[j : j + 1], points)
                t_new = rng.uniform()
                roll = _roll_about_chord(points, rng.uniform(0.0, 2.0 * math.pi))
                offset = leaf_centers[j] - _point_at(points, t_old[0])
                extra_c.append(_point_at(points, t_new) + roll.apply(offset))
                extra_n.append(roll.apply(leaf_normals[j]))
                extra_r.append(leaf_radii[j])
            leaf_centers = np.vstack([leaf_centers, extra_c])
            leaf_normals = np.vstack([leaf_normals, extra_n])
            leaf_radii = np.concatenate([leaf_radii, extra_r])

    if params.uniform_leaf_orientation and len(leaf_radii):
        draws = rng.normal(size=(len(leaf_radii), 3))
        leaf_normals = draws / np.linalg.norm(draws, axis=1, keepdims=True)
    elif len(leaf_normals):
        leaf_normals = leaf_normals / np.linalg.norm(leaf_normals, axis=1, keepdims=True)

    chain_slot: Dict[Tuple[int, int], int] = {}
    branches: List[Branch] = []
    for k, (chain, points) in enumerate(placed_chains):
        group = group_of[k]
        chain_slot[(group, chain.chain_id)] = k
        parent = -1
        if chain.parent_id != -1:
            parent = chain_slot.get(
                (group, chain.parent_id), chain_slot.get((-1, chain.parent_id), -1)
            )
        branches.append(Branch(points=points, radius=chain.radius, tag=chain.tag, parent=parent))

    cloud = np.vstack([np.vstack([b.points for b in branches]), leaf_centers])
    bounding_center = 0.5 * (cloud.min(axis=0) + cloud.max(axis=0))
    bounding_radius = float(np.linalg.norm(cloud - bounding_center, axis=1).max())

    tree = TreeGeometry(
        branches=tuple(branches),
        leaf_centers=leaf_centers,
        leaf_normals=leaf_normals,
        leaf_radii=leaf_radii,
        bounding_center=tuple(float(c) for c in bounding_center),
        bounding_radius=bounding_radius,
        seed=params.seed,
    )
    logger.debug("tree_randomized", seed=params.seed, attachments=len(attachments), **tree.summary())
    return tree


# --------------------------------------------------------------------------
# Persistence
# --------------------------------------------------------------------------


def save_tree(
    path: Union[str, Path],
    tree: TreeGeometry,
    params: RandomizationParams,
    attachment_count: int,
) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    envelope = TreeFile(params=params, attachment_count=attachment_count, tree=tree)
    path.write_text(envelope.model_dump_json(indent=2), encoding="utf-8")
    logger.info("tree_saved", path=str(path), leaves=tree.leaf_count)
    return path


def load_tree(path: Union[str, Path]) -> TreeFile:
    path = Path(path)
    return TreeFile.model_validate_json(path.read_text(encoding="utf-8"))
