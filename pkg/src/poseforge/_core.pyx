# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled numerical kernels.

Same contract as ``poseforge._pycore``; see that module for conventions.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, sin, cos

cnp.import_array()

cdef double SMALL_ANGLE = 1e-9


cdef void _rodrigues(const double* r, double* R) noexcept nogil:
    cdef double theta = sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2])
    cdef double ux, uy, uz, c, s, C
    if theta < SMALL_ANGLE:
        R[0] = 1.0;   R[1] = -r[2]; R[2] = r[1]
        R[3] = r[2];  R[4] = 1.0;   R[5] = -r[0]
        R[6] = -r[1]; R[7] = r[0];  R[8] = 1.0
        return
    ux = r[0] / theta
    uy = r[1] / theta
    uz = r[2] / theta
    c = cos(theta)
    s = sin(theta)
    C = 1.0 - c
    R[0] = c + C * ux * ux
    R[1] = C * ux * uy - s * uz
    R[2] = C * ux * uz + s * uy
    R[3] = C * uy * ux + s * uz
    R[4] = c + C * uy * uy
    R[5] = C * uy * uz - s * ux
    R[6] = C * uz * ux - s * uy
    R[7] = C * uz * uy + s * ux
    R[8] = c + C * uz * uz


cdef void _rodrigues_derivs(const double* r, double* R, double* dR) noexcept nogil:
    # dR laid out as dR[i*9 + row*3 + col]
    cdef double theta2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2]
    cdef double w[3]
    cdef double S[9]
    cdef double a0, a1, a2
    cdef int i, j, k, m
    _rodrigues(r, R)
    if theta2 < SMALL_ANGLE * SMALL_ANGLE:
        for i in range(27):
            dR[i] = 0.0
        # [e_x], [e_y], [e_z]
        dR[0 * 9 + 5] = -1.0; dR[0 * 9 + 7] = 1.0
        dR[1 * 9 + 2] = 1.0;  dR[1 * 9 + 6] = -1.0
        dR[2 * 9 + 1] = -1.0; dR[2 * 9 + 3] = 1.0
        return
    for i in range(3):
        # column i of (I - R)
        a0 = (1.0 if i == 0 else 0.0) - R[0 * 3 + i]
        a1 = (1.0 if i == 1 else 0.0) - R[1 * 3 + i]
        a2 = (1.0 if i == 2 else 0.0) - R[2 * 3 + i]
        w[0] = r[1] * a2 - r[2] * a1
        w[1] = r[2] * a0 - r[0] * a2
        w[2] = r[0] * a1 - r[1] * a0
        S[0] = 0.0
        S[1] = -(r[i] * r[2] + w[2])
        S[2] = r[i] * r[1] + w[1]
        S[3] = r[i] * r[2] + w[2]
        S[4] = 0.0
        S[5] = -(r[i] * r[0] + w[0])
        S[6] = -(r[i] * r[1] + w[1])
        S[7] = r[i] * r[0] + w[0]
        S[8] = 0.0
        for j in range(3):
            for k in range(3):
                a0 = 0.0
                for m in range(3):
                    a0 += S[j * 3 + m] * R[m * 3 + k]
                dR[i * 9 + j * 3 + k] = a0 / theta2


def rodrigues(r):
    cdef const double[::1] rv = np.ascontiguousarray(r, dtype=np.float64)
    out = np.empty((3, 3))
    cdef double[:, ::1] o = out
    _rodrigues(&rv[0], &o[0, 0])
    return out


def rodrigues_derivs(r):
    cdef const double[::1] rv = np.ascontiguousarray(r, dtype=np.float64)
    R = np.empty((3, 3))
    dR = np.empty((3, 3, 3))
    cdef double[:, ::1] Rv = R
    cdef double[:, :, ::1] dv = dR
    _rodrigues_derivs(&rv[0], &Rv[0, 0], &dv[0, 0, 0])
    return R, dR


def project_points(rvec, t, intr, X):
    cdef const double[::1] rv = np.ascontiguousarray(rvec, dtype=np.float64)
    cdef const double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef const double[::1] p = np.ascontiguousarray(intr, dtype=np.float64)
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0], j
    out = np.empty((n, 2))
    cdef double[:, ::1] o = out
    cdef double R[9]
    cdef double px, py, pz, x, y, r2, radial, xd, yd
    cdef double fx = p[0], fy = p[1], cx = p[2], cy = p[3]
    cdef double k1 = p[4], k2 = p[5], p1 = p[6], p2 = p[7], k3 = p[8]
    _rodrigues(&rv[0], R)
    with nogil:
        for j in range(n):
            px = R[0] * Xv[j, 0] + R[1] * Xv[j, 1] + R[2] * Xv[j, 2] + tv[0]
            py = R[3] * Xv[j, 0] + R[4] * Xv[j, 1] + R[5] * Xv[j, 2] + tv[1]
            pz = R[6] * Xv[j, 0] + R[7] * Xv[j, 1] + R[8] * Xv[j, 2] + tv[2]
            x = px / pz
            y = py / pz
            r2 = x * x + y * y
            radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
            xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
            yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
            o[j, 0] = fx * xd + cx
            o[j, 1] = fy * yd + cy
    return out


def project_points_jac(rvec, t, intr, X):
    cdef const double[::1] rv = np.ascontiguousarray(rvec, dtype=np.float64)
    cdef const double[::1] tv = np.ascontiguousarray(t, dtype=np.float64)
    cdef const double[::1] p = np.ascontiguousarray(intr, dtype=np.float64)
    cdef const double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = Xv.shape[0], j
    cdef int i
    uv = np.empty((n, 2))
    jpose = np.empty((n, 2, 6))
    jintr = np.zeros((n, 2, 9))
    cdef double[:, ::1] o = uv
    cdef double[:, :, ::1] jp = jpose
    cdef double[:, :, ::1] ji = jintr
    cdef double R[9]
    cdef double dR[27]
    cdef double dpc[18]
    cdef double px, py, pz, iz, x, y, r2, r4, radial, drad, xd, yd
    cdef double a, b, c, dxi, dyi
    cdef double dxd_dx, dxd_dy, dyd_dx, dyd_dy
    cdef double fx = p[0], fy = p[1], cx = p[2], cy = p[3]
    cdef double k1 = p[4], k2 = p[5], p1 = p[6], p2 = p[7], k3 = p[8]
    _rodrigues_derivs(&rv[0], R, dR)
    with nogil:
        for j in range(n):
            a = Xv[j, 0]
            b = Xv[j, 1]
            c = Xv[j, 2]
            px = R[0] * a + R[1] * b + R[2] * c + tv[0]
            py = R[3] * a + R[4] * b + R[5] * c + tv[1]
            pz = R[6] * a + R[7] * b + R[8] * c + tv[2]
            # dpc[row*6 + param]
            for i in range(3):
                dpc[0 * 6 + i] = dR[i * 9 + 0] * a + dR[i * 9 + 1] * b + dR[i * 9 + 2] * c
                dpc[1 * 6 + i] = dR[i * 9 + 3] * a + dR[i * 9 + 4] * b + dR[i * 9 + 5] * c
                dpc[2 * 6 + i] = dR[i * 9 + 6] * a + dR[i * 9 + 7] * b + dR[i * 9 + 8] * c
            for i in range(3, 6):
                dpc[0 * 6 + i] = 1.0 if i == 3 else 0.0
                dpc[1 * 6 + i] = 1.0 if i == 4 else 0.0
                dpc[2 * 6 + i] = 1.0 if i == 5 else 0.0
            iz = 1.0 / pz
            x = px * iz
            y = py * iz
            r2 = x * x + y * y
            r4 = r2 * r2
            radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
            xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
            yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
            o[j, 0] = fx * xd + cx
            o[j, 1] = fy * yd + cy
            drad = k1 + r2 * (2.0 * k2 + 3.0 * k3 * r2)
            dxd_dx = radial + 2.0 * x * x * drad + 2.0 * p1 * y + 6.0 * p2 * x
            dxd_dy = 2.0 * x * y * drad + 2.0 * p1 * x + 2.0 * p2 * y
            dyd_dx = dxd_dy
            dyd_dy = radial + 2.0 * y * y * drad + 6.0 * p1 * y + 2.0 * p2 * x
            for i in range(6):
                dxi = dpc[0 * 6 + i] * iz - x * iz * dpc[2 * 6 + i]
                dyi = dpc[1 * 6 + i] * iz - y * iz * dpc[2 * 6 + i]
                jp[j, 0, i] = fx * (dxd_dx * dxi + dxd_dy * dyi)
                jp[j, 1, i] = fy * (dyd_dx * dxi + dyd_dy * dyi)
            ji[j, 0, 0] = xd
            ji[j, 1, 1] = yd
            ji[j, 0, 2] = 1.0
            ji[j, 1, 3] = 1.0
            ji[j, 0, 4] = fx * x * r2
            ji[j, 1, 4] = fy * y * r2
            ji[j, 0, 5] = fx * x * r4
            ji[j, 1, 5] = fy * y * r4
            ji[j, 0, 6] = fx * 2.0 * x * y
            ji[j, 1, 6] = fy * (r2 + 2.0 * y * y)
            ji[j, 0, 7] = fx * (r2 + 2.0 * x * x)
            ji[j, 1, 7] = fy * 2.0 * x * y
            ji[j, 0, 8] = fx * x * r4 * r2
            ji[j, 1, 8] = fy * y * r4 * r2
    return uv, jpose, jintr


def rwhe_residuals(params, truth, meas, double trans_weight):
    cdef const double[::1] pv = np.ascontiguousarray(params, dtype=np.float64)
    cdef const double[:, :, ::1] Tv = np.ascontiguousarray(truth, dtype=np.float64)
    cdef const double[:, :, ::1] Mv = np.ascontiguousarray(meas, dtype=np.float64)
    cdef Py_ssize_t n = Tv.shape[0], s
    out = np.empty(12 * n)
    cdef double[::1] o = out
    cdef double Rc[9]
    cdef double Ry[9]
    cdef double A[9]
    cdef double P[9]
    cdef double v[3]
    cdef int i, j, k
    cdef double acc
    _rodrigues(&pv[0], Rc)
    _rodrigues(&pv[6], Ry)
    with nogil:
        for s in range(n):
            # A = Rc @ Rm
            for i in range(3):
                for j in range(3):
                    acc = 0.0
                    for k in range(3):
                        acc += Rc[i * 3 + k] * Mv[s, k, j]
                    A[i * 3 + j] = acc
            # P = A @ Ry
            for i in range(3):
                for j in range(3):
                    acc = 0.0
                    for k in range(3):
                        acc += A[i * 3 + k] * Ry[k * 3 + j]
                    P[i * 3 + j] = acc
                    o[12 * s + i * 3 + j] = Tv[s, i, j] - acc
            # v = Rm @ ty + tm
            for i in range(3):
                acc = Mv[s, i, 3]
                for k in range(3):
                    acc += Mv[s, i, k] * pv[9 + k]
                v[i] = acc
            for i in range(3):
                acc = pv[3 + i]
                for k in range(3):
                    acc += Rc[i * 3 + k] * v[k]
                o[12 * s + 9 + i] = trans_weight * (Tv[s, i, 3] - acc)
    return out
