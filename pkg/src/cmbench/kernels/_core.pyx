# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled implementations of the numeric hot loops.

Mirror of `_reference.py`: every function keeps the same expression tree and
the same row-major accumulation order over window offsets, and the extension
is built with floating-point contraction disabled, so results are
bit-identical to the NumPy backend. Keep the two files in sync.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

cdef double _W_EPS = 1e-12
cdef double _INF = float("inf")


def transfer_sq(const double[:, ::1] h, const double[:, ::1] h_inv,
                const double[:, ::1] pts_a, const double[:, ::1] pts_b):
    cdef Py_ssize_t n = pts_a.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef double ax, ay, bx, by, wa, wb, ua, va, ub, vb
    cdef double dxf, dyf, dxb, dyb
    for i in range(n):
        ax = pts_a[i, 0]
        ay = pts_a[i, 1]
        bx = pts_b[i, 0]
        by = pts_b[i, 1]
        wa = h[2, 0] * ax + h[2, 1] * ay + h[2, 2]
        wb = h_inv[2, 0] * bx + h_inv[2, 1] * by + h_inv[2, 2]
        if not (fabs(wa) > _W_EPS and fabs(wb) > _W_EPS):
            out[i] = _INF
            continue
        ua = (h[0, 0] * ax + h[0, 1] * ay + h[0, 2]) / wa
        va = (h[1, 0] * ax + h[1, 1] * ay + h[1, 2]) / wa
        ub = (h_inv[0, 0] * bx + h_inv[0, 1] * by + h_inv[0, 2]) / wb
        vb = (h_inv[1, 0] * bx + h_inv[1, 1] * by + h_inv[1, 2]) / wb
        dxf = ua - bx
        dyf = va - by
        dxb = ub - ax
        dyb = vb - ay
        out[i] = (dxf * dxf + dyf * dyf) + (dxb * dxb + dyb * dyb)
    return out_arr


def sampson_sq(const double[:, ::1] e, const double[:, ::1] pts_a, const double[:, ::1] pts_b):
    cdef Py_ssize_t n = pts_a.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef double ax, ay, bx, by, ex0, ex1, ex2, etx0, etx1, num, den
    for i in range(n):
        ax = pts_a[i, 0]
        ay = pts_a[i, 1]
        bx = pts_b[i, 0]
        by = pts_b[i, 1]
        ex0 = e[0, 0] * ax + e[0, 1] * ay + e[0, 2]
        ex1 = e[1, 0] * ax + e[1, 1] * ay + e[1, 2]
        ex2 = e[2, 0] * ax + e[2, 1] * ay + e[2, 2]
        etx0 = e[0, 0] * bx + e[1, 0] * by + e[2, 0]
        etx1 = e[0, 1] * bx + e[1, 1] * by + e[2, 1]
        num = bx * ex0 + by * ex1 + ex2
        num = num * num
        den = (ex0 * ex0 + ex1 * ex1) + (etx0 * etx0 + etx1 * etx1)
        if den > _W_EPS:
            out[i] = num / den
        else:
            out[i] = _INF
    return out_arr


def conv2d(const double[:, ::1] padded, const double[:, ::1] kernel, Py_ssize_t out_h, Py_ssize_t out_w):
    cdef Py_ssize_t kh = kernel.shape[0]
    cdef Py_ssize_t kw = kernel.shape[1]
    out_arr = np.empty((out_h, out_w), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t y, x, dy, dx
    cdef double acc
    for y in range(out_h):
        for x in range(out_w):
            acc = 0.0
            for dy in range(kh):
                for dx in range(kw):
                    acc = acc + kernel[dy, dx] * padded[y + dy, x + dx]
            out[y, x] = acc
    return out_arr


def window_mean_var(const double[:, ::1] padded, Py_ssize_t radius, Py_ssize_t out_h, Py_ssize_t out_w):
    cdef Py_ssize_t side = 2 * radius + 1
    cdef double count = <double> (side * side)
    mean_arr = np.empty((out_h, out_w), dtype=np.float64)
    var_arr = np.empty((out_h, out_w), dtype=np.float64)
    cdef double[:, ::1] mean = mean_arr
    cdef double[:, ::1] var = var_arr
    cdef Py_ssize_t y, x, dy, dx
    cdef double s, s2, w, m, v
    for y in range(out_h):
        for x in range(out_w):
            s = 0.0
            s2 = 0.0
            for dy in range(side):
                for dx in range(side):
                    w = padded[y + dy, x + dx]
                    s = s + w
                    s2 = s2 + w * w
            m = s / count
            v = s2 / count - m * m
            if v < 0.0:
                v = 0.0
            mean[y, x] = m
            var[y, x] = v
    return mean_arr, var_arr


def window_min_max(const double[:, ::1] padded, Py_ssize_t radius, Py_ssize_t out_h, Py_ssize_t out_w):
    cdef Py_ssize_t side = 2 * radius + 1
    mn_arr = np.empty((out_h, out_w), dtype=np.float64)
    mx_arr = np.empty((out_h, out_w), dtype=np.float64)
    cdef double[:, ::1] mn = mn_arr
    cdef double[:, ::1] mx = mx_arr
    cdef Py_ssize_t y, x, dy, dx
    cdef double lo, hi, w
    for y in range(out_h):
        for x in range(out_w):
            lo = padded[y, x]
            hi = lo
            for dy in range(side):
                for dx in range(side):
                    if dy == 0 and dx == 0:
                        continue
                    w = padded[y + dy, x + dx]
                    if w < lo:
                        lo = w
                    if w > hi:
                        hi = w
            mn[y, x] = lo
            mx[y, x] = hi
    return mn_arr, mx_arr
