import math
from typing import List, Tuple

from src.config.simulation_config import BRANCH_SYMBOL, DEFAULT_LSYSTEM
from src.models.lsystem import BranchAttachment, LSystemSpec, TurtleParams
from src.utils.exceptions import ParseError, UnknownSymbolError
from src.utils.logger import setup_logger

logger = setup_logger(__name__)


def default_lsystem() -> LSystemSpec:
    """Bundled trunk-branching system (a documented stand-in, see DESIGN.md)."""
    return LSystemSpec.model_validate(DEFAULT_LSYSTEM)


def expand(spec: LSystemSpec) -> str:
    """Apply the production rules ``spec.iterations`` times in parallel."""
    known = set(spec.rules) | set(spec.alphabet)
    for symbol in spec.axiom + "".join(spec.rules.values()):
        if symbol not in known:
            raise UnknownSymbolError(symbol)

    current = spec.axiom
    for _ in range(spec.iterations):
        current = "".join(spec.rules.get(symbol, symbol) for symbol in current)

    logger.debug("lsystem_expanded", iterations=spec.iterations, length=len(current))
    return current


def count_branch_symbols(expanded: str) -> int:
    return expanded.count(BRANCH_SYMBOL)


def _direction(branching_angle_deg: float, azimuth_deg: float) -> Tuple[float, float, float]:
    polar = math.radians(branching_angle_deg)
    azimuth = math.radians(azimuth_deg)
    x = math.sin(polar) * math.cos(azimuth)
    y = math.sin(polar) * math.sin(azimuth)
    z = math.cos(polar)
    norm = math.sqrt(x * x + y * y + z * z)
    return (x / norm, y / norm, z / norm)


def interpret_trunk(expanded: str, turtle: TurtleParams) -> List[BranchAttachment]:
    """
    Walk the expanded string with a trunk-bound turtle.

    F climbs the trunk by one step, +/- yaw the heading by the branching
    angle, [ and ] push/pop (height, heading), and X spawns a branch at the
    current height. Successive branches advance the azimuth by
    ``turtle.azimuth_increment_deg``. Other symbols are rule variables and
    draw nothing. Attachments are returned ordered by height, ties kept in
    spawn order.
    """
    height = 0.0
    heading = 0.0
    stack: List[Tuple[float, float, int]] = []
    spawned: List[Tuple[float, int, BranchAttachment]] = []

    for index, symbol in enumerate(expanded):
        if symbol == "F":
            height += turtle.step_length
        elif symbol == "+":
            heading += turtle.branching_angle_deg
        elif symbol == "-":
            heading -= turtle.branching_angle_deg
        elif symbol == "[":
            stack.append((height, heading, index))
        elif symbol == "]":
            if not stack:
                raise ParseError("unbalanced ']'", index=index)
            height, heading, _ = stack.pop()
        elif symbol == BRANCH_SYMBOL:
            order = len(spawned)
            azimuth = heading + order * turtle.azimuth_increment_deg
            attachment = BranchAttachment(
                position=(0.0, 0.0, height),
                direction=_direction(turtle.branching_angle_deg, azimuth),
                depth=len(stack),
            )
            spawned.append((height, order, attachment))

    if stack:
        raise ParseError("unbalanced '['", index=stack[-1][2])

    spawned.sort(key=lambda item: (item[0], item[1]))
    return [attachment for _, _, attachment in spawned]


def trunk_attachments(spec: LSystemSpec) -> List[BranchAttachment]:
    """Expand and interpret in one step."""
    attachments = interpret_trunk(expand(spec), spec.turtle)
    logger.info(
        "trunk_attachments_generated",
        count=len(attachments),
        top=max((a.height for a in attachments), default=0.0),
    )
    return attachments
