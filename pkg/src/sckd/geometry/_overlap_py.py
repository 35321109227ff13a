"""Pure-Python rotated-rectangle overlap kernel.

Fallback twin of ``_overlap_cy``; both expose ``intersection_area`` and
``intersection_areas_pairs`` with identical semantics.  Rectangles are
``(cx, cy, l, w, yaw)`` with ``l`` along the heading given by ``yaw``.
Intersection areas come from Sutherland-Hodgman clipping of the two
counter-clockwise corner quadrilaterals.
"""

import math

import numpy as np


def _corners(cx, cy, l, w, yaw):
    c = math.cos(yaw)
    s = math.sin(yaw)
    hl = 0.5 * l
    hw = 0.5 * w
    # counter-clockwise order
    return [
        (cx + c * hl - s * hw, cy + s * hl + c * hw),
        (cx - c * hl - s * hw, cy - s * hl + c * hw),
        (cx - c * hl + s * hw, cy - s * hl - c * hw),
        (cx + c * hl + s * hw, cy + s * hl - c * hw),
    ]


def _clip_by_edge(poly, x1, y1, x2, y2):
    ex = x2 - x1
    ey = y2 - y1
    out = []
    n = len(poly)
    for i in range(n):
        cx, cy = poly[i]
        px, py = poly[i - 1]
        cur_side = ex * (cy - y1) - ey * (cx - x1)
        prev_side = ex * (py - y1) - ey * (px - x1)
        if cur_side >= 0.0:
            if prev_side < 0.0:
                t = prev_side / (prev_side - cur_side)
                out.append((px + t * (cx - px), py + t * (cy - py)))
            out.append((cx, cy))
        elif prev_side >= 0.0:
            t = prev_side / (prev_side - cur_side)
            out.append((px + t * (cx - px), py + t * (cy - py)))
    return out


def _polygon_area(poly):
    n = len(poly)
    if n < 3:
        return 0.0
    acc = 0.0
    for i in range(n):
        x0, y0 = poly[i - 1]
        x1, y1 = poly[i]
        acc += x0 * y1 - x1 * y0
    return 0.5 * abs(acc)


def intersection_area(a, b):
    """Overlap area of two rotated rectangles given as (cx, cy, l, w, yaw)."""
    poly = _corners(a[0], a[1], a[2], a[3], a[4])
    clip = _corners(b[0], b[1], b[2], b[3], b[4])
    for i in range(4):
        x1, y1 = clip[i]
        x2, y2 = clip[(i + 1) % 4]
        poly = _clip_by_edge(poly, x1, y1, x2, y2)
        if not poly:
            return 0.0
    return _polygon_area(poly)


def intersection_areas_pairs(boxes_a, boxes_b):
    """Elementwise overlap areas of two (P, 5) float64 arrays of rectangles."""
    boxes_a = np.asarray(boxes_a, dtype=np.float64)
    boxes_b = np.asarray(boxes_b, dtype=np.float64)
    out = np.empty(boxes_a.shape[0], dtype=np.float64)
    for i in range(boxes_a.shape[0]):
        out[i] = intersection_area(boxes_a[i], boxes_b[i])
    return out
