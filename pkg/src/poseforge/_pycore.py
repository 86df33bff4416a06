"""Numpy implementation of the numerical kernels.

This is the fallback used when the compiled ``_core`` extension is not
available (or when ``POSEFORGE_PURE_PYTHON=1``). Both backends expose the
same five functions with identical signatures; ``tests/test_kernels.py``
checks them against each other.

Intrinsics are always packed as ``(fx, fy, cx, cy, k1, k2, p1, p2, k3)``.
"""

from __future__ import annotations

import math

import numpy as np

SMALL_ANGLE = 1e-9


def _skew(v):
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
    )


def rodrigues(r):
    r = np.asarray(r, dtype=float)
    theta = math.sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2])
    if theta < SMALL_ANGLE:
        return np.eye(3) + _skew(r)
    u = r / theta
    c = math.cos(theta)
    s = math.sin(theta)
    return c * np.eye(3) + (1.0 - c) * np.outer(u, u) + s * _skew(u)


def rodrigues_derivs(r):
    """Return ``R(r)`` and ``dR`` with ``dR[i] = dR/dr_i``."""
    r = np.asarray(r, dtype=float)
    R = rodrigues(r)
    theta2 = float(r @ r)
    dR = np.empty((3, 3, 3))
    if theta2 < SMALL_ANGLE * SMALL_ANGLE:
        for i in range(3):
            e = np.zeros(3)
            e[i] = 1.0
            dR[i] = _skew(e)
        return R, dR
    IminusR = np.eye(3) - R
    for i in range(3):
        w = np.cross(r, IminusR[:, i])
        dR[i] = (r[i] * _skew(r) + _skew(w)) @ R / theta2
    return R, dR


def _distort(x, y, intr):
    k1, k2, p1, p2, k3 = intr[4], intr[5], intr[6], intr[7], intr[8]
    r2 = x * x + y * y
    radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
    yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
    return xd, yd, r2, radial


def project_points(rvec, t, intr, X):
    R = rodrigues(rvec)
    X = np.asarray(X, dtype=float)
    pc = X @ R.T + np.asarray(t, dtype=float)
    x = pc[:, 0] / pc[:, 2]
    y = pc[:, 1] / pc[:, 2]
    xd, yd, _, _ = _distort(x, y, intr)
    out = np.empty((X.shape[0], 2))
    out[:, 0] = intr[0] * xd + intr[2]
    out[:, 1] = intr[1] * yd + intr[3]
    return out


def project_points_jac(rvec, t, intr, X):
    """Project and differentiate.

    Returns ``(uv, J_pose, J_intr)`` with shapes ``(N, 2)``, ``(N, 2, 6)``
    and ``(N, 2, 9)``. Pose parameters are ``(rvec, t)``.
    """
    fx, fy = intr[0], intr[1]
    k1, k2, p1, p2, k3 = intr[4], intr[5], intr[6], intr[7], intr[8]
    R, dR = rodrigues_derivs(rvec)
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    pc = X @ R.T + np.asarray(t, dtype=float)
    iz = 1.0 / pc[:, 2]
    x = pc[:, 0] * iz
    y = pc[:, 1] * iz
    xd, yd, r2, radial = _distort(x, y, intr)

    uv = np.empty((n, 2))
    uv[:, 0] = fx * xd + intr[2]
    uv[:, 1] = fy * yd + intr[3]

    # d(pc)/d(pose): (N, 3, 6)
    dpc = np.zeros((n, 3, 6))
    for i in range(3):
        dpc[:, :, i] = X @ dR[i].T
    dpc[:, 0, 3] = 1.0
    dpc[:, 1, 4] = 1.0
    dpc[:, 2, 5] = 1.0

    # d(x, y)/d(pc)
    dx = dpc[:, 0, :] * iz[:, None] - (x * iz)[:, None] * dpc[:, 2, :]
    dy = dpc[:, 1, :] * iz[:, None] - (y * iz)[:, None] * dpc[:, 2, :]

    drad = k1 + r2 * (2.0 * k2 + 3.0 * k3 * r2)
    dxd_dx = radial + 2.0 * x * x * drad + 2.0 * p1 * y + 6.0 * p2 * x
    dxd_dy = 2.0 * x * y * drad + 2.0 * p1 * x + 2.0 * p2 * y
    dyd_dx = 2.0 * x * y * drad + 2.0 * p1 * x + 2.0 * p2 * y
    dyd_dy = radial + 2.0 * y * y * drad + 6.0 * p1 * y + 2.0 * p2 * x

    jpose = np.empty((n, 2, 6))
    jpose[:, 0, :] = fx * (dxd_dx[:, None] * dx + dxd_dy[:, None] * dy)
    jpose[:, 1, :] = fy * (dyd_dx[:, None] * dx + dyd_dy[:, None] * dy)

    jintr = np.zeros((n, 2, 9))
    jintr[:, 0, 0] = xd
    jintr[:, 1, 1] = yd
    jintr[:, 0, 2] = 1.0
    jintr[:, 1, 3] = 1.0
    r4 = r2 * r2
    jintr[:, 0, 4] = fx * x * r2
    jintr[:, 1, 4] = fy * y * r2
    jintr[:, 0, 5] = fx * x * r4
    jintr[:, 1, 5] = fy * y * r4
    jintr[:, 0, 6] = fx * 2.0 * x * y
    jintr[:, 1, 6] = fy * (r2 + 2.0 * y * y)
    jintr[:, 0, 7] = fx * (r2 + 2.0 * x * x)
    jintr[:, 1, 7] = fy * 2.0 * x * y
    jintr[:, 0, 8] = fx * x * r4 * r2
    jintr[:, 1, 8] = fy * y * r4 * r2
    return uv, jpose, jintr


def rwhe_residuals(params, truth, meas, trans_weight):
    """Stacked ``truth_i - C @ M_i @ Y`` over the top 3x4 block.

    ``params`` is ``(r_C, t_C, r_Y, t_Y)`` where ``C`` is the camera-side
    offset and ``Y`` the inverse of the target-side offset. ``truth`` and
    ``meas`` are ``(N, 3, 4)``. Per sample the 12 entries are the rotation
    block row-major followed by the translation scaled by ``trans_weight``.
    """
    params = np.asarray(params, dtype=float)
    Rc = rodrigues(params[0:3])
    tc = params[3:6]
    Ry = rodrigues(params[6:9])
    ty = params[9:12]
    Rm = meas[:, :, :3]
    tm = meas[:, :, 3]
    Rp = Rc @ Rm @ Ry
    tp = (Rm @ ty + tm) @ Rc.T + tc
    n = truth.shape[0]
    res = np.empty((n, 12))
    res[:, :9] = (truth[:, :, :3] - Rp).reshape(n, 9)
    res[:, 9:] = trans_weight * (truth[:, :, 3] - tp)
    return res.reshape(-1)
