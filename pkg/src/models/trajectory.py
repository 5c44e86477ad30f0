from typing import Annotated, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.models.acoustics import AcousticConfig, ImpulseResponse
from src.models.types import Vec2, Vec3
from src.utils.validators import check_unit_norm


class SonarPose(BaseModel):
    """Emitter position, boresight and main-lobe width."""

    model_config = ConfigDict(frozen=True)

    position: Vec3
    boresight: Vec3
    beamwidth_deg: float = Field(..., gt=0, lt=180)
    acoustic: AcousticConfig = Field(default_factory=AcousticConfig)

    @field_validator("boresight")
    @classmethod
    def validate_boresight(cls, v: Vec3) -> Vec3:
        check_unit_norm(np.asarray(v), "boresight")
        return v

    @property
    def half_beamwidth_rad(self) -> float:
        return float(np.radians(self.beamwidth_deg) / 2)


class CircleTrajectory(BaseModel):
    """Poses on a horizontal circle, boresight aimed at the centre."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["circle"] = "circle"
    center: Optional[Vec2] = Field(None, description="None = mean tree position")
    radius: float = Field(..., gt=0, description="m")
    height: Optional[float] = Field(None, description="None = half the mean tree height")
    point_count: int = Field(..., ge=1)
    interval_deg: Optional[float] = Field(None, gt=0, description="None = 360 / point_count")
    start_angle_deg: float = 0.0
    beamwidth_deg: float = Field(..., gt=0, lt=180)

    @property
    def step_deg(self) -> float:
        return self.interval_deg if self.interval_deg is not None else 360.0 / self.point_count


class LineTrajectory(BaseModel):
    """Equally spaced poses on a segment, boresight along the path."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: Literal["line"] = "line"
    start: Vec3
    end: Optional[Vec3] = Field(None, description="None = mean tree position at start height")
    point_count: int = Field(..., ge=1)
    beamwidth_deg: float = Field(..., gt=0, lt=180)

    @model_validator(mode="after")
    def validate_segment(self) -> "LineTrajectory":
        if self.end is not None and np.allclose(self.start, self.end):
            raise ValueError("line trajectory needs distinct start and end points")
        return self


TrajectorySpec = Annotated[Union[CircleTrajectory, LineTrajectory], Field(discriminator="kind")]


class PointResult(BaseModel):
    """Pipeline output at one pose."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    index: int
    pose: SonarPose
    facet_count: int = Field(..., ge=0, description="m, facets in the main lobe")
    impulse: ImpulseResponse
    wall_time_s: float = Field(..., ge=0)


class RunReport(BaseModel):
    """Per-pose impulses and timings for a whole trajectory."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    points: Tuple[PointResult, ...]
    total_wall_time_s: float = Field(..., ge=0)
    tree_count: int = Field(..., ge=0)

    @property
    def point_count(self) -> int:
        return len(self.points)

    def facet_counts(self) -> List[int]:
        return [p.facet_count for p in self.points]

    def timings_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "pose": [p.index for p in self.points],
                "facet_count": self.facet_counts(),
                "wall_time_s": [p.wall_time_s for p in self.points],
            }
        )


class TimingTable(BaseModel):
    """Total impulse-pipeline time per (points, trees) cell."""

    model_config = ConfigDict(frozen=True)

    point_counts: Tuple[int, ...]
    tree_counts: Tuple[int, ...]
    seconds: Tuple[Tuple[float, ...], ...] = Field(..., description="[point row][tree column]")
    repetitions: int = Field(1, ge=1)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(
            [list(row) for row in self.seconds],
            index=pd.Index(self.point_counts, name="points"),
            columns=[f"T={t}" for t in self.tree_counts],
        )
        return frame

    def monotonic_flags(self) -> Dict[str, bool]:
        grid = np.asarray(self.seconds, dtype=float)
        return {
            "non_decreasing_in_points": bool(np.all(np.diff(grid, axis=0) >= 0)),
            "non_decreasing_in_trees": bool(np.all(np.diff(grid, axis=1) >= 0)),
        }
