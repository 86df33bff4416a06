"""Pinhole camera with Brown-Conrady distortion, and planar board geometry."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from . import kernels
from .errors import BehindCamera, ValidationError
from .se3 import RigidTransform, matrix_to_rodrigues

MIN_DEPTH = 1e-6
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class CameraModel:
    """Intrinsics and distortion.

    ``distortion`` is ``(k1, k2, p1, p2, k3)``: radial k1, k2, k3 and
    tangential p1, p2, in that fixed order.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    distortion: tuple = (0.0, 0.0, 0.0, 0.0, 0.0)
    width: int = 0
    height: int = 0

    def __post_init__(self):
        object.__setattr__(self, "distortion", tuple(float(d) for d in self.distortion))
        if len(self.distortion) != 5:
            raise ValidationError("expected 5 coefficients (k1, k2, p1, p2, k3)", "dist")
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError("focal lengths must be positive", "fx/fy")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValidationError("principal point outside the image", "cx/cy")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def intrinsics_vector(self) -> np.ndarray:
        """``(fx, fy, cx, cy, k1, k2, p1, p2, k3)``, the kernel packing."""
        return np.array([self.fx, self.fy, self.cx, self.cy, *self.distortion])

    def with_intrinsics(self, vec) -> "CameraModel":
        vec = [float(v) for v in vec]
        return CameraModel(vec[0], vec[1], vec[2], vec[3], tuple(vec[4:9]), self.width, self.height)

    def in_bounds(self, pixels, margin: float = 0.0) -> np.ndarray:
        """Mask of pixels inside the image grown by ``margin`` (fraction of size)."""
        px = np.atleast_2d(pixels)
        mx = margin * self.width
        my = margin * self.height
        return (
            (px[:, 0] >= -mx)
            & (px[:, 0] <= self.width + mx)
            & (px[:, 1] >= -my)
            & (px[:, 1] <= self.height + my)
        )

    def to_json(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "dist": list(self.distortion),
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "CameraModel":
        try:
            return cls(
                float(doc["fx"]),
                float(doc["fy"]),
                float(doc["cx"]),
                float(doc["cy"]),
                tuple(doc.get("dist", (0.0,) * 5)),
                int(doc["width"]),
                int(doc["height"]),
            )
        except KeyError as exc:
            raise ValidationError("missing key", str(exc.args[0])) from None


@dataclass(frozen=True)
class FeatureObservation:
    feature_id: int
    pixel: tuple

    def __post_init__(self):
        object.__setattr__(self, "pixel", (float(self.pixel[0]), float(self.pixel[1])))


@dataclass(frozen=True)
class BoardSpec:
    """Chessboard with ``squares_x`` by ``squares_y`` squares.

    ``board_to_target`` is the pose of the board frame in the target frame.
    In the board frame the board lies in z = 0 with corner ids running
    row-major (x fastest) over the interior corners.
    """

    squares_x: int
    squares_y: int
    square_size: float
    board_to_target: RigidTransform = field(default_factory=RigidTransform.identity)

    def __post_init__(self):
        if self.squares_x < 3 or self.squares_y < 3:
            raise ValidationError("board needs at least 3x3 squares", "squares_x/squares_y")
        if not self.square_size > 0:
            raise ValidationError("square size must be positive", "square_size")

    @property
    def corner_count(self) -> int:
        return (self.squares_x - 1) * (self.squares_y - 1)

    def corners_in_board(self) -> np.ndarray:
        nx = self.squares_x - 1
        ny = self.squares_y - 1
        ids = np.arange(nx * ny)
        pts = np.zeros((nx * ny, 3))
        pts[:, 0] = (ids % nx + 1) * self.square_size
        pts[:, 1] = (ids // nx + 1) * self.square_size
        return pts

    def corner_points(self, ids=None) -> np.ndarray:
        """Target-frame coordinates, as an ``(N, 3)`` array, for ``ids`` (default all)."""
        pts = self.board_to_target.apply(self.corners_in_board())
        if ids is None:
            return pts
        ids = np.asarray(ids, dtype=int)
        if ids.size and (ids.min() < 0 or ids.max() >= self.corner_count):
            raise ValidationError(f"feature id outside 0..{self.corner_count - 1}", "feature_id")
        return pts[ids]

    def to_json(self) -> dict[str, Any]:
        from .io import transform_to_json

        return {
            "schema_version": SCHEMA_VERSION,
            "squares_x": self.squares_x,
            "squares_y": self.squares_y,
            "square_size": self.square_size,
            "board_to_target": transform_to_json(self.board_to_target),
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "BoardSpec":
        from .io import transform_from_json

        try:
            b2t = doc.get("board_to_target")
            return cls(
                int(doc["squares_x"]),
                int(doc["squares_y"]),
                float(doc["square_size"]),
                transform_from_json(b2t, "board_to_target") if b2t else RigidTransform.identity(),
            )
        except KeyError as exc:
            raise ValidationError("missing key", str(exc.args[0])) from None


def board_corners_in_target(spec: BoardSpec) -> list[tuple[int, np.ndarray]]:
    """Interior corners as ``(feature_id, xyz)`` pairs in the target frame."""
    return list(enumerate(spec.corner_points()))


def project_many(model: CameraModel, pose: RigidTransform, points) -> np.ndarray:
    """Project ``(N, 3)`` target-frame points through ``pose`` (target to camera).

    Raises BehindCamera if any point has depth <= 1e-6 m.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    depth = points @ pose.rotation[2] + pose.translation[2]
    if np.any(depth <= MIN_DEPTH):
        bad = int(np.argmin(depth))
        raise BehindCamera(f"point {bad} at depth {depth[bad]:.3g} m")
    return kernels.project_points(
        matrix_to_rodrigues(pose.rotation), pose.translation, model.intrinsics_vector(), points
    )


def project(model: CameraModel, pose: RigidTransform, point) -> np.ndarray:
    """Pixel coordinates of one point."""
    return project_many(model, pose, np.asarray(point, dtype=float).reshape(1, 3))[0]


def undistort_normalized(model: CameraModel, pixels, iterations: int = 20) -> np.ndarray:
    """Invert the distortion by fixed-point iteration; returns normalized coords ``(N, 2)``."""
    px = np.atleast_2d(np.asarray(pixels, dtype=float))
    k1, k2, p1, p2, k3 = model.distortion
    xd = (px[:, 0] - model.cx) / model.fx
    yd = (px[:, 1] - model.cy) / model.fy
    x, y = xd.copy(), yd.copy()
    for _ in range(iterations):
        r2 = x * x + y * y
        radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
        dx = 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
        dy = p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
        x = (xd - dx) / radial
        y = (yd - dy) / radial
    return np.column_stack([x, y])
