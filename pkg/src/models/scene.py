import math
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator
from scipy.interpolate import RegularGridInterpolator

from src.config.simulation_config import INTENSITY_PROBE_GRID, SCENE_FILE_VERSION
from src.models.tree import RandomizationParams, TreeGeometry
from src.models.types import FloatArray, IntArray, Vec2
from src.utils.exceptions import ParseError


class Domain(BaseModel):
    """Axis-aligned rectangle D in the ground plane (m)."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    x_min: float
    x_max: float
    y_min: float
    y_max: float

    @model_validator(mode="after")
    def validate_extent(self) -> "Domain":
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError("domain must have x_min < x_max and y_min < y_max")
        return self

    @classmethod
    def from_bounds(cls, bounds: Sequence[float]) -> "Domain":
        x_min, x_max, y_min, y_max = bounds
        return cls(x_min=x_min, x_max=x_max, y_min=y_min, y_max=y_max)

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def contains(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(points)
        return (
            (pts[:, 0] >= self.x_min)
            & (pts[:, 0] <= self.x_max)
            & (pts[:, 1] >= self.y_min)
            & (pts[:, 1] <= self.y_max)
        )

    def probe_lattice(self, size: int = INTENSITY_PROBE_GRID) -> np.ndarray:
        xs = np.linspace(self.x_min, self.x_max, size)
        ys = np.linspace(self.y_min, self.y_max, size)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel()])


class GriddedIntensity(BaseModel):
    """Intensity map sampled on a rectangular grid, linearly interpolated."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    xs: FloatArray
    ys: FloatArray
    values: FloatArray = Field(..., description="lambda at (xs[i], ys[j]), shape (len(xs), len(ys))")
    source: Optional[str] = None

    _interpolator: Any = PrivateAttr(default=None)

    @model_validator(mode="after")
    def validate_grid(self) -> "GriddedIntensity":
        if self.xs.ndim != 1 or self.ys.ndim != 1 or len(self.xs) < 2 or len(self.ys) < 2:
            raise ValueError("intensity grid needs at least two distinct x and y values")
        if np.any(np.diff(self.xs) <= 0) or np.any(np.diff(self.ys) <= 0):
            raise ValueError("intensity grid coordinates must be strictly increasing")
        if self.values.shape != (len(self.xs), len(self.ys)):
            raise ValueError("intensity values must have shape (len(xs), len(ys))")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("intensity values must be finite and non-negative")
        self._interpolator = RegularGridInterpolator(
            (self.xs, self.ys), self.values, method="linear", bounds_error=True
        )
        return self

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "GriddedIntensity":
        """Read an ``x,y,lambda`` CSV covering a full rectangular grid."""
        try:
            frame = pd.read_csv(path)
        except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
            raise ParseError(str(e), source=str(path)) from e
        frame.columns = [str(c).strip().lower() for c in frame.columns]
        missing = {"x", "y", "lambda"} - set(frame.columns)
        if missing:
            raise ParseError(f"missing columns {sorted(missing)}", line=1, source=str(path))
        bad = frame[["x", "y", "lambda"]].apply(pd.to_numeric, errors="coerce").isna().any(axis=1)
        if bad.any():
            # header is line 1
            raise ParseError("non-numeric value", line=int(np.flatnonzero(bad)[0]) + 2, source=str(path))
        grid = frame.pivot_table(index="x", columns="y", values="lambda", aggfunc="first")
        if grid.isna().any().any() or len(grid) * len(grid.columns) != len(frame):
            raise ParseError("rows do not form a complete rectangular grid", source=str(path))
        return cls(
            xs=grid.index.to_numpy(dtype=float),
            ys=grid.columns.to_numpy(dtype=float),
            values=grid.to_numpy(dtype=float),
            source=str(path),
        )

    def covers(self, domain: Domain) -> bool:
        return bool(
            self.xs[0] <= domain.x_min
            and self.xs[-1] >= domain.x_max
            and self.ys[0] <= domain.y_min
            and self.ys[-1] >= domain.y_max
        )

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        values = np.asarray(self._interpolator(np.atleast_2d(points)), dtype=float)
        # linear interpolation never leaves the node range
        return np.clip(values, 0.0, float(self.values.max()))


IntensityFunction = Callable[[np.ndarray], np.ndarray]


class IppConfig(BaseModel):
    """Inhomogeneous Poisson process on D sampled by thinning."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    domain: Domain
    intensity: Union[float, GriddedIntensity, IntensityFunction] = Field(
        ..., description="trees/m^2: constant, gridded map, or vectorised callable on (N, 2) points"
    )
    lambda_max: float = Field(..., gt=0, description="Upper bound of lambda on D")
    seed: int = Field(0, ge=0, lt=2**64)

    @field_validator("intensity")
    @classmethod
    def validate_intensity(cls, v: Any) -> Any:
        if isinstance(v, float) and (v < 0 or not math.isfinite(v)):
            raise ValueError("constant intensity must be finite and non-negative")
        return v

    @model_validator(mode="after")
    def validate_coverage(self) -> "IppConfig":
        if isinstance(self.intensity, GriddedIntensity) and not self.intensity.covers(self.domain):
            raise ValueError("gridded intensity map does not cover the domain")
        return self

    def intensity_at(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if isinstance(self.intensity, float):
            return np.full(len(pts), self.intensity)
        if isinstance(self.intensity, GriddedIntensity):
            return self.intensity.evaluate(pts)
        values = np.asarray(self.intensity(pts), dtype=float)
        return np.broadcast_to(values, (len(pts),)).copy()

    def probe_points(self) -> np.ndarray:
        probes = [self.domain.probe_lattice()]
        if isinstance(self.intensity, GriddedIntensity):
            gx, gy = np.meshgrid(self.intensity.xs, self.intensity.ys, indexing="ij")
            nodes = np.column_stack([gx.ravel(), gy.ravel()])
            probes.append(nodes[self.domain.contains(nodes)])
        return np.vstack(probes)


class Placement(BaseModel):
    """A tree placed at s_i with a yaw about the vertical axis."""

    model_config = ConfigDict(frozen=True)

    tree_id: int = Field(..., ge=0)
    position: Vec2
    yaw: float = Field(..., ge=0, lt=2 * math.pi)
    seed: int = Field(0, ge=0, lt=2**64)


class Scene(BaseModel):
    """Placed trees on the ground plane; immutable once built."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    domain: Optional[Domain] = None
    placements: Tuple[Placement, ...] = ()
    trees: Dict[int, TreeGeometry] = Field(default_factory=dict)
    master_seed: Optional[int] = None
    params: Optional[RandomizationParams] = None

    _leaf_index: Any = PrivateAttr(default=None)

    @model_validator(mode="after")
    def validate_placements(self) -> "Scene":
        for placement in self.placements:
            if placement.tree_id not in self.trees:
                raise ValueError(f"placement references missing tree {placement.tree_id}")
            if self.domain is not None and not self.domain.contains(np.asarray(placement.position))[0]:
                raise ValueError(f"tree {placement.tree_id} lies outside the domain")
        return self

    @property
    def tree_count(self) -> int:
        return len(self.placements)

    @property
    def leaf_count(self) -> int:
        return sum(self.trees[p.tree_id].leaf_count for p in self.placements)

    def positions(self) -> np.ndarray:
        if not self.placements:
            return np.zeros((0, 2))
        return np.array([p.position for p in self.placements], dtype=float)

    def mean_position(self) -> np.ndarray:
        return self.positions().mean(axis=0)

    def mean_tree_height(self) -> float:
        return float(np.mean([self.trees[p.tree_id].height for p in self.placements]))

    @property
    def leaf_index(self) -> Any:
        return self._leaf_index

    def attach_index(self, index: Any) -> None:
        self._leaf_index = index


class SceneFile(BaseModel):
    """Versioned on-disk envelope for a scene."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    version: int = SCENE_FILE_VERSION
    domain: Optional[Domain] = None
    master_seed: Optional[int] = None
    params: Optional[RandomizationParams] = None
    placements: List[Placement]
    trees: Dict[int, TreeGeometry]


class FacetObservation(BaseModel):
    """Leaf disk as seen from the sonar: range, angles, incidence, radius."""

    model_config = ConfigDict(frozen=True)

    r: float = Field(..., gt=0, description="Range sonar -> disk centre (m)")
    az: float = Field(..., description="Azimuth in the sonar frame (rad)")
    el: float = Field(..., description="Elevation in the sonar frame (rad)")
    beta: float = Field(..., ge=0, le=math.pi / 2, description="Folded incident angle (rad)")
    a: float = Field(..., gt=0, description="Disk radius (m)")
    leaf_id: int = Field(-1, description="Global leaf index within the scene")


class FacetBatch(BaseModel):
    """Columnar form of a facet list for vectorised spectrum assembly."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    r: FloatArray
    az: FloatArray
    el: FloatArray
    beta: FloatArray
    a: FloatArray
    leaf_ids: IntArray

    def __len__(self) -> int:
        return int(self.r.size)

    @classmethod
    def empty(cls) -> "FacetBatch":
        return cls(r=[], az=[], el=[], beta=[], a=[], leaf_ids=[])

    @classmethod
    def from_observations(cls, observations: Sequence[FacetObservation]) -> "FacetBatch":
        if not observations:
            return cls.empty()
        return cls(
            r=[o.r for o in observations],
            az=[o.az for o in observations],
            el=[o.el for o in observations],
            beta=[o.beta for o in observations],
            a=[o.a for o in observations],
            leaf_ids=[o.leaf_id for o in observations],
        )

    def to_observations(self) -> List[FacetObservation]:
        return [
            FacetObservation(r=r, az=az, el=el, beta=beta, a=a, leaf_id=int(i))
            for r, az, el, beta, a, i in zip(
                self.r.tolist(),
                self.az.tolist(),
                self.el.tolist(),
                self.beta.tolist(),
                self.a.tolist(),
                self.leaf_ids.tolist(),
            )
        ]
