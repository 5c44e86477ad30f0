from typing import Dict

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.config.simulation_config import GOLDEN_ANGLE_DEG, LSYSTEM_ALPHABET
from src.models.types import Vec3
from src.utils.validators import check_unit_norm


class TurtleParams(BaseModel):
    """Turtle interpretation parameters for trunk branching."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    step_length: float = Field(0.2, gt=0, description="Trunk advance per F (m)")
    branching_angle_deg: float = Field(
        55.0, gt=0, lt=180, description="Branch angle from the trunk axis; also the +/- yaw step"
    )
    azimuth_increment_deg: float = Field(
        GOLDEN_ANGLE_DEG, description="Azimuth advance between successive branches"
    )


class LSystemSpec(BaseModel):
    """Deterministic bracketed L-system."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    axiom: str = Field(..., min_length=1)
    rules: Dict[str, str] = Field(default_factory=dict)
    iterations: int = Field(0, ge=0)
    turtle: TurtleParams = Field(default_factory=TurtleParams)
    alphabet: str = Field(
        "".join(sorted(LSYSTEM_ALPHABET)),
        description="Terminal and turtle symbols that need no rule",
    )

    @field_validator("rules")
    @classmethod
    def validate_rule_keys(cls, v: Dict[str, str]) -> Dict[str, str]:
        for symbol in v:
            if len(symbol) != 1:
                raise ValueError(f"rule keys must be single symbols, got {symbol!r}")
        return v

    @model_validator(mode="after")
    def validate_rule_symbols(self) -> "LSystemSpec":
        known = set(self.rules) | set(self.alphabet)
        for symbol, replacement in self.rules.items():
            unknown = sorted(set(replacement) - known)
            if unknown:
                raise ValueError(
                    f"rule {symbol!r} produces unknown symbol {unknown[0]!r}"
                )
        return self


class BranchAttachment(BaseModel):
    """First-level branch attachment on the trunk axis."""

    model_config = ConfigDict(frozen=True)

    position: Vec3 = Field(..., description="Point on the trunk axis (m)")
    direction: Vec3 = Field(..., description="Unit growth direction")
    depth: int = Field(0, ge=0, description="Bracket nesting depth at spawn")

    @field_validator("direction")
    @classmethod
    def validate_direction(cls, v: Vec3) -> Vec3:
        check_unit_norm(np.asarray(v), "direction")
        return v

    @property
    def height(self) -> float:
        return self.position[2]

