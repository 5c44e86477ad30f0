from typing import Sequence

import numpy as np

from src.config.simulation_config import UNIT_NORM_TOL


def as_vector3(value: Sequence[float] | np.ndarray, name: str = "vector") -> np.ndarray:
    """Coerce to a finite float 3-vector."""
    arr = np.asarray(value, dtype=float)
    if arr.shape != (3,):
        raise ValueError(f"{name} must have 3 components, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def as_points(value: Sequence | np.ndarray, dim: int = 3, name: str = "points") -> np.ndarray:
    """Coerce to a finite (N, dim) float array; empty input gives shape (0, dim)."""
    arr = np.asarray(value, dtype=float)
    if arr.size == 0:
        return np.zeros((0, dim))
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise ValueError(f"{name} must have shape (N, {dim}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def check_unit_norm(vectors: np.ndarray, name: str = "vector", tol: float = UNIT_NORM_TOL) -> None:
    norms = np.linalg.norm(np.atleast_2d(vectors), axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > tol)
    if bad.size:
        raise ValueError(f"{name} #{int(bad[0])} has norm {norms[bad[0]]!r}, expected 1")


def normalize(vector: np.ndarray, name: str = "vector") -> np.ndarray:
    norm = float(np.linalg.norm(vector))
    if norm == 0.0 or not np.isfinite(norm):
        raise ValueError(f"{name} cannot be normalized (norm {norm})")
    return np.asarray(vector, dtype=float) / norm


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr
