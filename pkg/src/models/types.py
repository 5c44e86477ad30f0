from typing import Annotated, Any, Tuple

import numpy as np
from pydantic import BeforeValidator, PlainSerializer

from src.utils.validators import readonly


def _float_array(value: Any) -> np.ndarray:
    return readonly(np.array(value, dtype=float))


def _int_array(value: Any) -> np.ndarray:
    return readonly(np.array(value, dtype=np.int64))


def _to_list(arr: np.ndarray) -> list:
    return arr.tolist()


# Read-only numpy arrays that serialize to nested lists in JSON mode.
FloatArray = Annotated[
    np.ndarray,
    BeforeValidator(_float_array),
    PlainSerializer(_to_list, return_type=list, when_used="json"),
]
IntArray = Annotated[
    np.ndarray,
    BeforeValidator(_int_array),
    PlainSerializer(_to_list, return_type=list, when_used="json"),
]

Vec2 = Tuple[float, float]
Vec3 = Tuple[float, float, float]
