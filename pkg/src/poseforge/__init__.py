"""Multi-source extrinsic calibration.

Solves one robot/world hand/eye problem per measurement source, fuses the
two reconstructed camera-from-target poses by inverse-variance weighting
with an outlier gate, and scores pose labels. A seeded simulator produces
measurement files for end-to-end checks without hardware.
"""

from .kernels import BACKEND
from .se3 import (
    RigidTransform,
    compose,
    geodesic_angle,
    invert,
    matrix_to_rodrigues,
    rodrigues_to_matrix,
    weighted_rotation_mean,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "RigidTransform",
    "compose",
    "geodesic_angle",
    "invert",
    "matrix_to_rodrigues",
    "rodrigues_to_matrix",
    "weighted_rotation_mean",
]
