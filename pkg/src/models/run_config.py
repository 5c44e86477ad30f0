try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.config.simulation_config import CIRCLE_SCENARIO, DEFAULT_LSYSTEM, TIMING_SWEEP
from src.models.acoustics import AcousticConfig, LeafBeampatternParams
from src.models.lsystem import LSystemSpec
from src.models.scene import Domain, GriddedIntensity, IppConfig
from src.models.trajectory import CircleTrajectory, TrajectorySpec
from src.models.tree import RandomizationParams
from src.models.types import Vec2
from src.utils.exceptions import ConfigError


class IppSection(BaseModel):
    """Tree placement: explicit positions, or an IPP over a domain."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    domain: Tuple[float, float, float, float] = Field(
        (-5.0, 5.0, -5.0, 5.0), description="x_min, x_max, y_min, y_max (m)"
    )
    intensity: Optional[float] = Field(None, ge=0, description="Constant lambda (trees/m^2)")
    intensity_csv: Optional[Path] = Field(None, description="x,y,lambda grid")
    lambda_max: float = Field(0.05, gt=0)
    positions: Optional[List[Vec2]] = Field(None, description="Fixed tree positions, bypasses sampling")

    @model_validator(mode="after")
    def validate_source(self) -> "IppSection":
        if self.intensity is not None and self.intensity_csv is not None:
            raise ValueError("give either intensity or intensity_csv, not both")
        return self

    def to_config(self, seed: int) -> IppConfig:
        intensity: Union[float, GriddedIntensity]
        if self.intensity_csv is not None:
            intensity = GriddedIntensity.from_csv(self.intensity_csv)
        elif self.intensity is not None:
            intensity = float(self.intensity)
        else:
            intensity = self.lambda_max
        return IppConfig(
            domain=Domain.from_bounds(self.domain),
            intensity=intensity,
            lambda_max=self.lambda_max,
            seed=seed,
        )


class AcousticSection(AcousticConfig):
    leaf: LeafBeampatternParams = Field(default_factory=LeafBeampatternParams)

    def to_config(self) -> AcousticConfig:
        return AcousticConfig(**self.model_dump(exclude={"leaf"}))


class TimingSection(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    point_counts: Tuple[int, ...] = Field(TIMING_SWEEP["point_counts"], min_length=1)
    tree_counts: Tuple[int, ...] = Field(TIMING_SWEEP["tree_counts"], min_length=1)
    repetitions: int = Field(TIMING_SWEEP["repetitions"], ge=1)

    @model_validator(mode="after")
    def validate_counts(self) -> "TimingSection":
        if min(self.point_counts) < 1 or min(self.tree_counts) < 1:
            raise ValueError("point and tree counts must be >= 1")
        return self


class OutputSection(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    directory: Optional[Path] = Field(None, description="None = settings.OUTPUT_DIR")
    write_wav: bool = True


def _default_trajectory() -> CircleTrajectory:
    return CircleTrajectory(**CIRCLE_SCENARIO)


class RunConfig(BaseModel):
    """Everything a CLI command needs, read from one TOML file."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    seed: int = Field(0, ge=0, lt=2**64, description="Master seed")
    reference_tree: Optional[Path] = Field(None, description="None = bundled sample tree")
    scene_file: Optional[Path] = Field(None, description="Pre-built scene; skips placement")
    lsystem: LSystemSpec = Field(default_factory=lambda: LSystemSpec.model_validate(DEFAULT_LSYSTEM))
    randomization: RandomizationParams = Field(default_factory=RandomizationParams)
    ipp: IppSection = Field(default_factory=IppSection)
    acoustic: AcousticSection = Field(default_factory=AcousticSection)
    trajectory: TrajectorySpec = Field(default_factory=_default_trajectory)
    timing: TimingSection = Field(default_factory=TimingSection)
    output: OutputSection = Field(default_factory=OutputSection)

    def with_seed(self, seed: Optional[int]) -> "RunConfig":
        if seed is None:
            return self
        if not 0 <= seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed}", field="--seed")
        return self.model_copy(update={"seed": seed})

    def ensure_files_exist(self) -> None:
        for field, path in (
            ("reference_tree", self.reference_tree),
            ("scene_file", self.scene_file),
            ("ipp.intensity_csv", self.ipp.intensity_csv),
        ):
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"file not found: {path}", field=field)


_PATH_FIELDS = (("reference_tree",), ("scene_file",), ("ipp", "intensity_csv"), ("output", "directory"))


def _resolve_paths(data: Dict[str, Any], base: Path) -> Dict[str, Any]:
    for keys in _PATH_FIELDS:
        holder = data
        for key in keys[:-1]:
            holder = holder.get(key) if isinstance(holder, dict) else None
        if isinstance(holder, dict) and isinstance(holder.get(keys[-1]), str):
            path = Path(holder[keys[-1]]).expanduser()
            holder[keys[-1]] = str(path if path.is_absolute() else base / path)
    return data


def config_error_from_validation(error: ValidationError) -> ConfigError:
    first = error.errors()[0]
    field = ".".join(str(part) for part in first["loc"]) or None
    message = str(first["msg"]).removeprefix("Value error, ")
    return ConfigError(message, field=field)


def load_run_config(path: Union[str, Path, None] = None) -> RunConfig:
    """
    Read and validate a run configuration.

    Relative paths resolve against the config file's directory. Unknown keys
    and missing referenced files raise ``ConfigError`` naming the field.
    """
    if path is None:
        config = RunConfig()
        config.ensure_files_exist()
        return config

    path = Path(path)
    try:
        with path.open("rb") as handle:
            data = tomllib.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}", field="--config") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}", field="--config") from e

    try:
        config = RunConfig.model_validate(_resolve_paths(data, path.resolve().parent))
    except ValidationError as e:
        raise config_error_from_validation(e) from e
    config.ensure_files_exist()
    return config
