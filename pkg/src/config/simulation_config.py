import math
from enum import Enum


class PartTag(str, Enum):
    """Part tags carried by reference-tree triangles and skeleton chains."""

    TRUNK = "trunk"
    BRANCH = "branch"
    SUB_BRANCH = "sub-branch"
    LEAF = "leaf"


# File format versions
REFERENCE_TREE_VERSION = 1
TREE_FILE_VERSION = 1
SCENE_FILE_VERSION = 1
RUN_MANIFEST_VERSION = 1

# L-system alphabet: F = trunk segment, +/- = yaw, [ ] = push/pop, X = branch spawn
LSYSTEM_ALPHABET = frozenset("F+-[]X")
BRANCH_SYMBOL = "X"
GOLDEN_ANGLE_DEG = 180.0 * (3.0 - math.sqrt(5.0))  # ~137.5

# Stand-in for the unpublished trunk-branching production rules.
DEFAULT_LSYSTEM = {
    "axiom": "FFFFX",
    "rules": {"X": "F[+X]F[-X]FX"},
    "iterations": 2,
    "turtle": {
        "step_length": 0.2,
        "branching_angle_deg": 55.0,
        "azimuth_increment_deg": GOLDEN_ANGLE_DEG,
    },
}

# Acoustic defaults (strongest harmonic of the emitted call)
ACOUSTIC_DEFAULTS = {
    "f_lo": 60_000.0,
    "f_hi": 80_000.0,
    "speed_of_sound": 343.0,
    "sample_rate": 400_000.0,
    "n_samples": 16_384,
    "sonar_amplitude": 1.0,
}

EVALUATED_BEAMWIDTHS_DEG = (10.0, 20.0, 50.0)

# Circle scenario used for the timing table
CIRCLE_SCENARIO = {
    "radius": 6.2,
    "point_count": 15,
    "interval_deg": 24.0,
    "beamwidth_deg": 20.0,
}

TIMING_SWEEP = {
    "point_counts": (1, 5, 10, 15),
    "tree_counts": (1, 2, 3, 4, 5),
    "repetitions": 5,
}

DEFAULT_SONAR_HEIGHT = 1.5  # m, used when the scene has no trees

# Seed streams derived from the master seed
SEED_STREAMS = {
    "ipp": 1,
    "yaw": 2,
    "tree": 3,
    "timing": 4,
}

# Tolerances
UNIT_NORM_TOL = 1e-9
HERMITIAN_RTOL = 1e-12
IMAG_RESIDUAL_RTOL = 1e-9
LAMBDA_MAX_RTOL = 1e-12
INTENSITY_PROBE_GRID = 64
BRANCH_SUBDIVISIONS = 4
