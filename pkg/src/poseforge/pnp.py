"""Board pose estimation by reprojection-error minimization.

Each sample is initialized from a planar homography (normalized DLT on
undistorted coordinates) and refined with Levenberg-Marquardt over
``(rotation vector, translation)`` of the target-to-camera transform. With
``refine_intrinsics`` a second, joint pass also frees
``(fx, fy, cx, cy, k1, k2, p1, p2, k3)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .camera import BoardSpec, CameraModel, FeatureObservation, undistort_normalized
from .errors import DegenerateConfiguration, InsufficientFeatures, ValidationError
from .lsq import LmOptions, LsqProblem, SolveReport, solve_lm
from .se3 import RigidTransform, compose, invert, matrix_to_rodrigues, project_to_rotation

log = logging.getLogger(__name__)

MIN_FEATURES = 6


@dataclass(frozen=True)
class PnpSample:
    sample_id: int
    observations: tuple

    def __post_init__(self):
        obs = tuple(
            o if isinstance(o, FeatureObservation) else FeatureObservation(int(o[0]), (o[1], o[2]))
            for o in self.observations
        )
        ids = [o.feature_id for o in obs]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"sample {self.sample_id}: duplicate feature ids", "observations")
        object.__setattr__(self, "observations", obs)

    def ids(self) -> np.ndarray:
        return np.array([o.feature_id for o in self.observations], dtype=int)

    def pixels(self) -> np.ndarray:
        return np.array([o.pixel for o in self.observations], dtype=float).reshape(-1, 2)


@dataclass
class PnpResult:
    poses: dict
    rms_per_sample: dict
    refined_camera: Optional[CameraModel] = None
    reports: dict = field(default_factory=dict)

    @property
    def final_cost(self) -> float:
        unique = {id(r): r for r in self.reports.values()}
        return float(sum(r.final_cost for r in unique.values()))


def _normalize(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    s = np.sqrt(2.0) / d
    T = np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])
    return (pts - c) * s, T


def homography_dlt(plane: np.ndarray, image: np.ndarray) -> np.ndarray:
    """Homography ``H`` with ``image ~ H @ [plane, 1]`` (normalized DLT)."""
    centered = plane - plane.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[0] == 0.0 or sv[1] / sv[0] < 1e-9:
        raise DegenerateConfiguration("board points are collinear")
    a, Ta = _normalize(plane)
    b, Tb = _normalize(image)
    n = a.shape[0]
    A = np.zeros((2 * n, 9))
    A[0::2, 0:2] = a
    A[0::2, 2] = 1.0
    A[0::2, 6:8] = -b[:, 0:1] * a
    A[0::2, 8] = -b[:, 0]
    A[1::2, 3:5] = a
    A[1::2, 5] = 1.0
    A[1::2, 6:8] = -b[:, 1:2] * a
    A[1::2, 8] = -b[:, 1]
    _, s, Vt = np.linalg.svd(A)
    if s[-2] / s[0] < 1e-12:
        raise DegenerateConfiguration("DLT system is rank-deficient")
    Hn = Vt[-1].reshape(3, 3)
    return np.linalg.inv(Tb) @ Hn @ Ta


def initial_pose(camera: CameraModel, board: BoardSpec, sample: PnpSample) -> RigidTransform:
    """Target-to-camera pose from the board homography."""
    ids = sample.ids()
    plane = board.corners_in_board()[ids, :2]
    image = undistort_normalized(camera, sample.pixels())
    H = homography_dlt(plane, image)
    scale = 2.0 / (np.linalg.norm(H[:, 0]) + np.linalg.norm(H[:, 1]))
    if H[2, 2] * scale < 0.0:
        scale = -scale
    r1 = scale * H[:, 0]
    r2 = scale * H[:, 1]
    R = project_to_rotation(np.column_stack([r1, r2, np.cross(r1, r2)]))
    board_to_camera = RigidTransform(R, scale * H[:, 2])
    return compose(board_to_camera, invert(board.board_to_target))


def _check_sample(board: BoardSpec, sample: PnpSample) -> None:
    if len(sample.observations) < MIN_FEATURES:
        raise InsufficientFeatures(
            f"sample {sample.sample_id}: {len(sample.observations)} observations, need {MIN_FEATURES}"
        )
    ids = sample.ids()
    if ids.min() < 0 or ids.max() >= board.corner_count:
        raise ValidationError(f"sample {sample.sample_id}: feature id outside the board", "feature_id")


def _pose_params(T: RigidTransform) -> np.ndarray:
    return np.concatenate([matrix_to_rodrigues(T.rotation), T.translation])


def _params_pose(p) -> RigidTransform:
    return RigidTransform.from_rotvec(p[0:3], p[3:6])


def reprojection_residuals(camera_vec, pose_params, points, pixels) -> np.ndarray:
    """Flattened ``project(pose, X_j) - x_j`` for one sample."""
    uv = kernels.project_points(pose_params[0:3], pose_params[3:6], camera_vec, points)
    return (uv - pixels).reshape(-1)


def pose_problem(camera_vec, points, pixels) -> LsqProblem:
    def residual(p):
        return reprojection_residuals(camera_vec, p, points, pixels)

    def jacobian(p):
        _, jp, _ = kernels.project_points_jac(p[0:3], p[3:6], camera_vec, points)
        return jp.reshape(-1, 6)

    return LsqProblem(residual, jacobian)


def joint_problem(points_list, pixels_list) -> LsqProblem:
    """All poses plus the 9 intrinsics in one parameter vector (intrinsics last)."""
    n = len(points_list)
    sizes = [2 * p.shape[0] for p in points_list]
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    def residual(x):
        intr = x[6 * n:]
        return np.concatenate(
            [
                reprojection_residuals(intr, x[6 * i: 6 * i + 6], points_list[i], pixels_list[i])
                for i in range(n)
            ]
        )

    def jacobian(x):
        intr = x[6 * n:]
        J = np.zeros((offsets[-1], 6 * n + 9))
        for i in range(n):
            p = x[6 * i: 6 * i + 6]
            _, jp, ji = kernels.project_points_jac(p[0:3], p[3:6], intr, points_list[i])
            rows = slice(offsets[i], offsets[i + 1])
            J[rows, 6 * i: 6 * i + 6] = jp.reshape(-1, 6)
            J[rows, 6 * n:] = ji.reshape(-1, 9)
        return J

    return LsqProblem(residual, jacobian)


def _rms(res: np.ndarray) -> float:
    # res is flattened (u, v) pairs; RMS over points of the 2D error norm
    return float(np.sqrt(np.mean(res.reshape(-1, 2) ** 2) * 2.0)) if res.size else 0.0


def solve_pnp(
    camera: CameraModel,
    board: BoardSpec,
    samples: Sequence[PnpSample],
    refine_intrinsics: bool = False,
    options: LmOptions | None = None,
) -> PnpResult:
    cam_vec = camera.intrinsics_vector()
    poses: dict[int, RigidTransform] = {}
    reports: dict[int, SolveReport] = {}
    rms: dict[int, float] = {}
    data = []
    for sample in samples:
        _check_sample(board, sample)
        points = board.corner_points(sample.ids())
        pixels = sample.pixels()
        data.append((points, pixels))
        x0 = _pose_params(initial_pose(camera, board, sample))
        rep = solve_lm(pose_problem(cam_vec, points, pixels), x0, options)
        reports[sample.sample_id] = rep
        poses[sample.sample_id] = _params_pose(rep.solution)

    refined = None
    if refine_intrinsics and samples:
        x0 = np.concatenate([_pose_params(poses[s.sample_id]) for s in samples] + [cam_vec])
        problem = joint_problem([d[0] for d in data], [d[1] for d in data])
        rep = solve_lm(problem, x0, options)
        n = len(samples)
        cam_vec = rep.solution[6 * n:]
        refined = camera.with_intrinsics(cam_vec)
        for i, sample in enumerate(samples):
            poses[sample.sample_id] = _params_pose(rep.solution[6 * i: 6 * i + 6])
            reports[sample.sample_id] = rep
        log.info("joint refinement: %s, cost %.6g", rep.termination_reason, rep.final_cost)

    for sample, (points, pixels) in zip(samples, data):
        p = _pose_params(poses[sample.sample_id])
        rms[sample.sample_id] = _rms(reprojection_residuals(cam_vec, p, points, pixels))
    return PnpResult(poses, rms, refined, reports)
