"""Rotations and rigid transformations.

Conventions
-----------
``T_BA`` maps coordinates expressed in frame ``B`` into frame ``A``::

    x_A = R_BA @ x_B + t

so ``compose(T_BA, T_CB)`` is ``T_CA``. Rotation vectors (Rodrigues
vectors) are ``axis * angle`` in radians. Angles are radians everywhere in
this module; conversion to degrees happens at I/O boundaries only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import DegenerateMean

SMALL_ANGLE = 1e-9
# below this, the rotation is numerically a half-turn and the axis sign is
# chosen by tie-break instead of from the antisymmetric part
HALF_TURN_SIN = 1e-12


def skew(v) -> np.ndarray:
    """Cross-product matrix ``[v]_x`` such that ``skew(v) @ w == cross(v, w)``."""
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
    )


def rodrigues_to_matrix(r) -> np.ndarray:
    """Rotation matrix of a rotation vector.

    For ``|r| < 1e-9`` the first-order form ``I + [r]_x`` is returned.
    """
    return kernels.rodrigues(np.asarray(r, dtype=float).reshape(3))


def matrix_to_rodrigues(R) -> np.ndarray:
    """Canonical rotation vector of ``R`` with norm in ``[0, pi]``.

    The angle comes from ``atan2(sin, cos)`` so it stays well conditioned
    at both ends of the range. For angles past pi/2 the axis is read from
    the symmetric part of ``R``, which avoids dividing by a small sine. At
    an exact half-turn the axis sign is ambiguous; the tie-break makes the
    first nonzero component positive.
    """
    R = np.asarray(R, dtype=float)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    s = 0.5 * math.sqrt(w @ w)
    c = 0.5 * (R[0, 0] + R[1, 1] + R[2, 2] - 1.0)
    theta = math.atan2(s, c)
    if theta < SMALL_ANGLE:
        return 0.5 * w
    if c >= 0.0:
        return (theta / (2.0 * s)) * w

    # uu^T = (sym(R) - c I) / (1 - c)
    B = (0.5 * (R + R.T) - c * np.eye(3)) / (1.0 - c)
    k = int(np.argmax(np.diag(B)))
    u = B[:, k] / math.sqrt(B[k, k])
    u /= np.linalg.norm(u)
    if s > HALF_TURN_SIN:
        if u @ w < 0.0:
            u = -u
    else:
        theta = math.pi
        for comp in u:
            if abs(comp) > 1e-12:
                if comp < 0.0:
                    u = -u
                break
    return theta * u


def geodesic_angle(a, b) -> float:
    """Angle in radians of the relative rotation ``a.T @ b``.

    Equal to ``arccos((tr(a^T b) - 1) / 2)``. Below pi/2 the chordal form
    ``2 asin(||a - b||_F / (2 sqrt 2))`` is used instead: arccos loses about
    half the digits near zero (a rotation compared with itself would come
    out near 1e-8), while the chord is exactly zero for equal inputs.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    # tr(a^T b) is the elementwise inner product
    cos_theta = (float(np.sum(a * b)) - 1.0) / 2.0
    if cos_theta > 0.0:
        d = a - b
        chord = math.sqrt(float(np.sum(d * d))) / (2.0 * math.sqrt(2.0))
        return 2.0 * math.asin(min(1.0, chord))
    return math.acos(max(-1.0, cos_theta))


def project_to_rotation(M) -> np.ndarray:
    """Nearest rotation matrix to ``M`` in Frobenius norm (polar factor with det +1)."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=float))
    D = np.eye(3)
    D[2, 2] = np.sign(np.linalg.det(U @ Vt)) or 1.0
    return U @ D @ Vt


def weighted_rotation_mean(rotations: Sequence, weights: Sequence[float]) -> np.ndarray:
    """Weighted chordal L2 mean on SO(3).

    Computes ``Rbar @ U @ D^-1/2 @ U.T`` where ``Rbar = sum(w_i R_i)`` and
    ``(U, D)`` is the eigendecomposition of ``Rbar.T @ Rbar``. This is the
    orthogonal polar factor of ``Rbar``. If ``det(Rbar) < 0`` the polar
    factor is a reflection, and the sign-corrected SVD projection is
    returned instead (the constrained minimizer on SO(3)).

    Raises
    ------
    DegenerateMean
        if ``Rbar`` is (numerically) singular.
    """
    Rs = np.asarray(rotations, dtype=float).reshape(-1, 3, 3)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if Rs.shape[0] == 0 or Rs.shape[0] != w.shape[0]:
        raise ValueError("need one weight per rotation and at least one rotation")
    if np.any(w < 0.0) or not w.sum() > 0.0:
        raise ValueError("weights must be nonnegative with a positive sum")
    Rbar = np.einsum("i,ijk->jk", w / w.sum(), Rs)
    evals, U = np.linalg.eigh(Rbar.T @ Rbar)
    if evals[0] <= 1e-12 * max(evals[-1], 1e-300):
        raise DegenerateMean(
            f"weighted rotation sum is singular (eigenvalues {evals.tolist()})"
        )
    if np.linalg.det(Rbar) < 0.0:
        return project_to_rotation(Rbar)
    return Rbar @ (U * (1.0 / np.sqrt(evals))) @ U.T


def chordal_cost(R, rotations: Sequence, weights: Sequence[float]) -> float:
    """``sum(w_i * ||R - R_i||_F^2)``."""
    R = np.asarray(R, dtype=float)
    return float(
        sum(wi * np.sum((R - np.asarray(Ri)) ** 2) for Ri, wi in zip(rotations, weights))
    )


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """An element of SE(3): ``x -> rotation @ x + translation``.

    Instances are immutable; the arrays are marked read-only.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        R.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_rotvec(cls, r, t) -> "RigidTransform":
        return cls(rodrigues_to_matrix(r), t)

    @classmethod
    def from_matrix(cls, M) -> "RigidTransform":
        M = np.asarray(M, dtype=float)
        return cls(M[:3, :3], M[:3, 3])

    def as_matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def as_3x4(self) -> np.ndarray:
        return np.hstack([self.rotation, self.translation[:, None]])

    def rotvec(self) -> np.ndarray:
        return matrix_to_rodrigues(self.rotation)

    def apply(self, points) -> np.ndarray:
        """Transform a point ``(3,)`` or points ``(N, 3)``."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        return invert(self)

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return compose(self, other)

    def allclose(self, other: "RigidTransform", atol: float = 1e-12) -> bool:
        return bool(
            np.allclose(self.rotation, other.rotation, rtol=0.0, atol=atol)
            and np.allclose(self.translation, other.translation, rtol=0.0, atol=atol)
        )

    def __repr__(self) -> str:
        return (
            f"RigidTransform(rotvec={np.array2string(self.rotvec(), precision=6)}, "
            f"translation={np.array2string(self.translation, precision=6)})"
        )


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Product ``a @ b`` of the homogeneous matrices."""
    return RigidTransform(
        a.rotation @ b.rotation, a.rotation @ b.translation + a.translation
    )


def invert(t: RigidTransform) -> RigidTransform:
    Rt = t.rotation.T
    return RigidTransform(Rt, -Rt @ t.translation)


def is_rotation(R, tol: float = 1e-12) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return bool(
        np.max(np.abs(R @ R.T - np.eye(3))) <= tol
        and abs(np.linalg.det(R) - 1.0) <= tol
    )


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed rotation (Haar measure on SO(3)).

    Built from a normalized 4D Gaussian, i.e. a uniform unit quaternion.
    """
    q = rng.standard_normal(4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )
