# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled versions of the calibration inner-loop kernels.

Single fused passes over the point arrays; semantics match
``_numpy_kernels`` exactly, only the summation order differs.
"""

import numpy as np

NAME = "cython"


def backproject(const double[:, ::1] uvz, double fx, double fy, double cx, double cy):
    cdef Py_ssize_t i, n = uvz.shape[0]
    out = np.empty((n, 3))
    cdef double[:, ::1] o = out
    cdef double z
    with nogil:
        for i in range(n):
            z = uvz[i, 2]
            o[i, 0] = (uvz[i, 0] - cx) / fx * z
            o[i, 1] = (uvz[i, 1] - cy) / fy * z
            o[i, 2] = z
    return out


def map_rigid(const double[:, ::1] b, const double[:, ::1] R, const double[::1] T):
    cdef Py_ssize_t i, n = b.shape[0]
    out = np.empty((n, 3))
    cdef double[:, ::1] o = out
    cdef double d0, d1, d2
    with nogil:
        for i in range(n):
            d0 = b[i, 0] - T[0]
            d1 = b[i, 1] - T[1]
            d2 = b[i, 2] - T[2]
            o[i, 0] = R[0, 0] * d0 + R[0, 1] * d1 + R[0, 2] * d2
            o[i, 1] = R[1, 0] * d0 + R[1, 1] * d1 + R[1, 2] * d2
            o[i, 2] = R[2, 0] * d0 + R[2, 1] * d1 + R[2, 2] * d2
    return out


def map_rigid_inverse(const double[:, ::1] a, const double[:, ::1] R, const double[::1] T):
    cdef Py_ssize_t i, n = a.shape[0]
    out = np.empty((n, 3))
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(n):
            o[i, 0] = R[0, 0] * a[i, 0] + R[1, 0] * a[i, 1] + R[2, 0] * a[i, 2] + T[0]
            o[i, 1] = R[0, 1] * a[i, 0] + R[1, 1] * a[i, 1] + R[2, 1] * a[i, 2] + T[1]
            o[i, 2] = R[0, 2] * a[i, 0] + R[1, 2] * a[i, 1] + R[2, 2] * a[i, 2] + T[2]
    return out


def rigid_objective(const double[:, ::1] a, const double[:, ::1] b,
                    const double[:, ::1] R, const double[::1] T, const double[::1] w):
    cdef Py_ssize_t i, n = a.shape[0]
    cdef double d0, d1, d2, r0, r1, r2, acc = 0.0
    with nogil:
        for i in range(n):
            d0 = b[i, 0] - T[0]
            d1 = b[i, 1] - T[1]
            d2 = b[i, 2] - T[2]
            r0 = a[i, 0] - (R[0, 0] * d0 + R[0, 1] * d1 + R[0, 2] * d2)
            r1 = a[i, 1] - (R[1, 0] * d0 + R[1, 1] * d1 + R[1, 2] * d2)
            r2 = a[i, 2] - (R[2, 0] * d0 + R[2, 1] * d1 + R[2, 2] * d2)
            acc += w[i] * (r0 * r0 + r1 * r1 + r2 * r2)
    return acc


def weighted_cross_covariance(const double[:, ::1] a, const double[:, ::1] b, const double[::1] w):
    cdef Py_ssize_t i, j, k, n = a.shape[0]
    cdef double total = 0.0
    cdef double sa[3]
    cdef double sb[3]
    cdef double m[3][3]
    cdef double da[3]
    cdef double db[3]
    for j in range(3):
        sa[j] = 0.0
        sb[j] = 0.0
        for k in range(3):
            m[j][k] = 0.0
    with nogil:
        for i in range(n):
            total += w[i]
            for j in range(3):
                sa[j] += w[i] * a[i, j]
                sb[j] += w[i] * b[i, j]
        for j in range(3):
            sa[j] /= total
            sb[j] /= total
        # second pass on centered data keeps the covariance accurate far from the origin
        for i in range(n):
            for j in range(3):
                da[j] = a[i, j] - sa[j]
                db[j] = w[i] * (b[i, j] - sb[j])
            for j in range(3):
                for k in range(3):
                    m[j][k] += db[j] * da[k]
    ma = np.array([sa[0], sa[1], sa[2]])
    mb = np.array([sb[0], sb[1], sb[2]])
    M = np.array([[m[0][0], m[0][1], m[0][2]],
                  [m[1][0], m[1][1], m[1][2]],
                  [m[2][0], m[2][1], m[2][2]]])
    return ma, mb, M


def focal_normal_sums(const double[::1] u, const double[::1] z, double c,
                      const double[::1] target, const double[::1] w):
    cdef Py_ssize_t i, n = u.shape[0]
    cdef double A, num = 0.0, den = 0.0
    with nogil:
        for i in range(n):
            A = (u[i] - c) * z[i]
            num += w[i] * A * target[i]
            den += w[i] * A * A
    return num, den


def center_normal_sums(const double[::1] u, const double[::1] z, double f,
                       const double[::1] target, const double[::1] w):
    cdef Py_ssize_t i, n = u.shape[0]
    cdef double B, num = 0.0, den = 0.0
    with nogil:
        for i in range(n):
            B = z[i] / f
            num += w[i] * B * (u[i] * B - target[i])
            den += w[i] * B * B
    return num, den
