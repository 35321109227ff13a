# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled rotated-rectangle overlap kernel.

Twin of ``_overlap_py``; same algorithm (Sutherland-Hodgman clipping of
counter-clockwise corner quads), same results to the last bit on the same
input, just compiled.  Rectangles are (cx, cy, l, w, yaw).
"""

from libc.math cimport cos, sin, fabs

import numpy as np


cdef void _corners(double cx, double cy, double l, double w, double yaw,
                   double* xs, double* ys) noexcept nogil:
    cdef double c = cos(yaw)
    cdef double s = sin(yaw)
    cdef double hl = 0.5 * l
    cdef double hw = 0.5 * w
    xs[0] = cx + c * hl - s * hw; ys[0] = cy + s * hl + c * hw
    xs[1] = cx - c * hl - s * hw; ys[1] = cy - s * hl + c * hw
    xs[2] = cx - c * hl + s * hw; ys[2] = cy - s * hl - c * hw
    xs[3] = cx + c * hl + s * hw; ys[3] = cy + s * hl - c * hw


cdef double _clip_area(double* ax, double* ay, double* bx, double* by) noexcept nogil:
    # Clip quad A against convex CCW quad B; buffers sized for the max
    # vertex count a quad/quad intersection can reach (8) plus slack.
    cdef double px[16]
    cdef double py[16]
    cdef double qx[16]
    cdef double qy[16]
    cdef int n = 4, m, i, j, prev
    cdef double x1, y1, x2, y2, ex, ey, cur_side, prev_side, t, acc
    for i in range(4):
        px[i] = ax[i]
        py[i] = ay[i]
    for j in range(4):
        x1 = bx[j]; y1 = by[j]
        x2 = bx[(j + 1) % 4]; y2 = by[(j + 1) % 4]
        ex = x2 - x1; ey = y2 - y1
        m = 0
        prev = n - 1
        for i in range(n):
            cur_side = ex * (py[i] - y1) - ey * (px[i] - x1)
            prev_side = ex * (py[prev] - y1) - ey * (px[prev] - x1)
            if cur_side >= 0.0:
                if prev_side < 0.0:
                    t = prev_side / (prev_side - cur_side)
                    qx[m] = px[prev] + t * (px[i] - px[prev])
                    qy[m] = py[prev] + t * (py[i] - py[prev])
                    m += 1
                qx[m] = px[i]
                qy[m] = py[i]
                m += 1
            elif prev_side >= 0.0:
                t = prev_side / (prev_side - cur_side)
                qx[m] = px[prev] + t * (px[i] - px[prev])
                qy[m] = py[prev] + t * (py[i] - py[prev])
                m += 1
            prev = i
        n = m
        if n == 0:
            return 0.0
        for i in range(n):
            px[i] = qx[i]
            py[i] = qy[i]
    if n < 3:
        return 0.0
    acc = 0.0
    prev = n - 1
    for i in range(n):
        acc += px[prev] * py[i] - px[i] * py[prev]
        prev = i
    return 0.5 * fabs(acc)


cdef double _pair_area(double* a, double* b) noexcept nogil:
    cdef double ax[4]
    cdef double ay[4]
    cdef double bx[4]
    cdef double by[4]
    _corners(a[0], a[1], a[2], a[3], a[4], ax, ay)
    _corners(b[0], b[1], b[2], b[3], b[4], bx, by)
    return _clip_area(ax, ay, bx, by)


def intersection_area(a, b):
    """Overlap area of two rotated rectangles given as (cx, cy, l, w, yaw)."""
    cdef double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    return _pair_area(&av[0], &bv[0])


def intersection_areas_pairs(boxes_a, boxes_b):
    """Elementwise overlap areas of two (P, 5) float64 arrays of rectangles."""
    cdef double[:, ::1] a = np.ascontiguousarray(boxes_a, dtype=np.float64)
    cdef double[:, ::1] b = np.ascontiguousarray(boxes_b, dtype=np.float64)
    cdef Py_ssize_t n = a.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            out[i] = _pair_area(&a[i, 0], &b[i, 0])
    return out_arr
