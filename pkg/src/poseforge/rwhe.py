"""Robot/world hand/eye calibration for one measurement source.

Given true camera-from-target poses ``T_TC`` and a source's end-effector
chain ``M = T_{T_S C_S}`` for the same samples, find the constant offsets
``C = T_{C_S C}`` and ``Z = T_{T_S T}`` minimizing

    sum_i || T_TC(i) - C @ M(i) @ inv(Z) ||_F^2

Parameters are the rotation vectors and translations of ``C`` and of
``Y = inv(Z)``. Only the top 3x4 block contributes (the last row of the
difference is identically zero).
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from . import kernels
from .errors import DegenerateMean, DegenerateMotion, InsufficientSamples, NoConvergence
from .lsq import LmOptions, LsqProblem, SolveReport, solve_lm
from .se3 import (
    RigidTransform,
    compose,
    invert,
    matrix_to_rodrigues,
    project_to_rotation,
    weighted_rotation_mean,
)

log = logging.getLogger(__name__)

GRADIENT_ACCEPT = 1e-6
RANK_TOL = 1e-6
MAX_RESTARTS = 8
# pairwise motion check is quadratic; cap the samples it looks at
RANK_CHECK_SAMPLES = 200


class Source(str, enum.Enum):
    KUKA = "KUKA"
    VICON = "VICON"


@dataclass(frozen=True)
class SourceMeasurement:
    sample_id: int
    target_chain: RigidTransform
    source_tag: Source = Source.KUKA


@dataclass(frozen=True)
class OffsetPair:
    target_offset: RigidTransform  # T_{T_S T}
    camera_offset: RigidTransform  # T_{C_S C}
    residual_rms: float = 0.0
    report: Optional[SolveReport] = None

    @classmethod
    def identity(cls) -> "OffsetPair":
        return cls(RigidTransform.identity(), RigidTransform.identity())


def reconstruct_pose(offsets: OffsetPair, measurement: SourceMeasurement | RigidTransform) -> RigidTransform:
    """``T_{C_S C} @ T_{T_S C_S} @ inv(T_{T_S T})``."""
    chain = measurement.target_chain if isinstance(measurement, SourceMeasurement) else measurement
    return compose(compose(offsets.camera_offset, chain), invert(offsets.target_offset))


def _offsets_to_params(offsets: OffsetPair) -> np.ndarray:
    y = invert(offsets.target_offset)
    return np.concatenate(
        [
            matrix_to_rodrigues(offsets.camera_offset.rotation),
            offsets.camera_offset.translation,
            matrix_to_rodrigues(y.rotation),
            y.translation,
        ]
    )


def _params_to_offsets(p: np.ndarray) -> tuple[RigidTransform, RigidTransform]:
    camera = RigidTransform.from_rotvec(p[0:3], p[3:6])
    target = invert(RigidTransform.from_rotvec(p[6:9], p[9:12]))
    return target, camera


def check_motion(chains: Sequence[RigidTransform], tol: float = RANK_TOL) -> int:
    """Rank of the stacked pairwise relative rotation vectors.

    Raises DegenerateMotion when the motions do not span 3 dimensions.
    """
    Rs = [c.rotation for c in chains[:RANK_CHECK_SAMPLES]]
    diffs = [
        matrix_to_rodrigues(Rs[i].T @ Rs[j])
        for i in range(len(Rs))
        for j in range(i + 1, len(Rs))
    ]
    if not diffs:
        raise DegenerateMotion("need at least 2 samples with distinct orientations")
    s = np.linalg.svd(np.asarray(diffs), compute_uv=False)
    rank = int(np.sum(s > tol * max(s[0], 1e-300))) if s[0] > tol else 0
    if rank < 3:
        raise DegenerateMotion(
            f"measurement rotations span {rank} dimension(s); need 3 (singular values {s.tolist()})"
        )
    return rank


def closed_form_offsets(truth_poses: Sequence[RigidTransform], chains: Sequence[RigidTransform]) -> OffsetPair:
    """Linear estimate of the offsets, used as an LM starting point.

    Relative motions satisfy ``A_ij = R_C B_ij R_C^T`` with
    ``A_ij = R_Ti R_Tj^T`` and ``B_ij = R_Mi R_Mj^T``, so their rotation
    vectors are related by ``a = R_C b``; ``R_C`` follows from orthogonal
    Procrustes on those pairs. ``R_Y`` is then the chordal mean of
    ``R_Mi^T R_C^T R_Ti`` and both translations come from one linear
    least-squares solve of ``t_Ti - R_C t_Mi = t_C + R_C R_Mi t_Y``.
    """
    RT = [t.rotation for t in truth_poses]
    RM = [m.rotation for m in chains]
    n = len(RT)
    pairs = [(0, j) for j in range(1, n)] + [(j - 1, j) for j in range(2, n)]
    H = np.zeros((3, 3))
    for i, j in pairs:
        a = matrix_to_rodrigues(RT[i] @ RT[j].T)
        b = matrix_to_rodrigues(RM[i] @ RM[j].T)
        # half-turn axes have an arbitrary sign
        if max(np.linalg.norm(a), np.linalg.norm(b)) > 0.9 * math.pi:
            continue
        H += np.outer(a, b)
    Rc = project_to_rotation(H) if np.any(H) else np.eye(3)
    try:
        Ry = weighted_rotation_mean([RM[i].T @ Rc.T @ RT[i] for i in range(n)], np.ones(n))
    except DegenerateMean:
        Ry = np.eye(3)

    A = np.zeros((3 * n, 6))
    rhs = np.zeros(3 * n)
    for i in range(n):
        A[3 * i: 3 * i + 3, 0:3] = np.eye(3)
        A[3 * i: 3 * i + 3, 3:6] = Rc @ RM[i]
        rhs[3 * i: 3 * i + 3] = truth_poses[i].translation - Rc @ chains[i].translation
    sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
    camera = RigidTransform(Rc, sol[0:3])
    target = invert(RigidTransform(Ry, sol[3:6]))
    return OffsetPair(target, camera)


def rwhe_problem(truth: np.ndarray, meas: np.ndarray, translation_weight: float = 1.0) -> LsqProblem:
    def residual(p):
        return kernels.rwhe_residuals(p, truth, meas, translation_weight)

    return LsqProblem(residual)


def solve_rwhe(
    truth: Mapping[int, RigidTransform],
    measurements: Sequence[SourceMeasurement],
    init: OffsetPair | None = None,
    *,
    translation_weight: float = 1.0,
    seed: int = 0,
    max_restarts: int = MAX_RESTARTS,
    options: LmOptions | None = None,
) -> OffsetPair:
    """Solve for ``(T_{T_S T}, T_{C_S C})`` from paired truth and chain poses.

    LM runs from identity offsets (or ``init``) and from the closed-form
    estimate of :func:`closed_form_offsets`; the lower-cost result wins.
    The identity start alone can settle in a local minimum when the true
    offsets are large rotations. If the final gradient infinity-norm still
    exceeds 1e-6 the solve is restarted from random rotation-vector
    perturbations (norm at most pi/2, seeded) of the best start.
    """
    measurements = [m for m in measurements]
    if len(measurements) < 3:
        raise InsufficientSamples(f"RWHE needs at least 3 samples, got {len(measurements)}")
    missing = [m.sample_id for m in measurements if m.sample_id not in truth]
    if missing:
        raise InsufficientSamples(f"no truth pose for samples {missing[:10]}")
    check_motion([m.target_chain for m in measurements])

    T = np.stack([truth[m.sample_id].as_3x4() for m in measurements])
    M = np.stack([m.target_chain.as_3x4() for m in measurements])
    problem = rwhe_problem(T, M, translation_weight)
    x0 = _offsets_to_params(init or OffsetPair.identity())
    best = solve_lm(problem, x0, options)
    if init is None:
        x_cf = _offsets_to_params(
            closed_form_offsets([truth[m.sample_id] for m in measurements], [m.target_chain for m in measurements])
        )
        rep = solve_lm(problem, x_cf, options)
        if rep.final_cost < best.final_cost:
            best, x0 = rep, x_cf
    rng = np.random.default_rng(seed)
    attempt = 0
    while best.gradient_norm > GRADIENT_ACCEPT and attempt < max_restarts:
        attempt += 1
        x = x0.copy()
        for sl in (slice(0, 3), slice(6, 9)):
            d = rng.standard_normal(3)
            d *= rng.uniform(0.0, math.pi / 2) / np.linalg.norm(d)
            x[sl] = matrix_to_rodrigues(
                kernels.rodrigues(d) @ kernels.rodrigues(x0[sl])
            )
        rep = solve_lm(problem, x, options)
        log.debug("RWHE restart %d: cost %.6g grad %.3g", attempt, rep.final_cost, rep.gradient_norm)
        if rep.final_cost < best.final_cost:
            best = rep

    if best.termination_reason == "max_iter" and best.gradient_norm > GRADIENT_ACCEPT:
        raise NoConvergence(
            f"RWHE hit max_iter with gradient norm {best.gradient_norm:.3g} after {attempt} restarts"
        )
    target, camera = _params_to_offsets(best.solution)
    rms = math.sqrt(best.final_cost / len(measurements))
    return OffsetPair(target, camera, rms, best)


def residual_per_sample(
    offsets: OffsetPair,
    truth: Mapping[int, RigidTransform],
    measurements: Sequence[SourceMeasurement],
) -> dict[int, float]:
    """Frobenius norm of ``T_TC - reconstruct_pose`` per sample."""
    out = {}
    for m in measurements:
        d = truth[m.sample_id].as_matrix() - reconstruct_pose(offsets, m).as_matrix()
        out[m.sample_id] = float(np.linalg.norm(d))
    return out
