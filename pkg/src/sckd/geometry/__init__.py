"""Rotated-box geometry: BEV/3D IoU, corner extraction, greedy rotated NMS.

The pairwise overlap kernel is the hot loop of target assignment, NMS and
AP evaluation, so it exists twice: a Cython extension and a pure-Python
twin.  The compiled one is preferred at import; set ``SCKD_PURE_PY=1`` to
force the fallback (the benchmark and parity tests use both directly).

Boxes appear in two layouts:
  * 7-vector ``(cx, cy, cz, l, w, h, yaw)`` for full 3D boxes,
  * 5-vector ``(cx, cy, l, w, yaw)`` for their BEV footprints.
"""

import math
import os

import numpy as np

from . import _overlap_py

if os.environ.get("SCKD_PURE_PY"):
    _kernel = _overlap_py
    IMPL = "python"
else:
    try:
        from . import _overlap_cy as _kernel

        IMPL = "compiled"
    except ImportError:
        _kernel = _overlap_py
        IMPL = "python"

intersection_area = _kernel.intersection_area
intersection_areas_pairs = _kernel.intersection_areas_pairs


def bev_from_box7(boxes7):
    """(N, 7) boxes -> (N, 5) BEV footprints."""
    boxes7 = np.asarray(boxes7, dtype=np.float64)
    return boxes7[:, [0, 1, 3, 4, 6]]


def box_corners_bev(boxes5):
    """Counter-clockwise BEV corners, shape (N, 4, 2)."""
    boxes5 = np.atleast_2d(np.asarray(boxes5, dtype=np.float64))
    cx, cy, l, w, yaw = (boxes5[:, i] for i in range(5))
    c, s = np.cos(yaw), np.sin(yaw)
    hl, hw = 0.5 * l, 0.5 * w
    local = np.stack(
        [
            np.stack([hl, hw], axis=-1),
            np.stack([-hl, hw], axis=-1),
            np.stack([-hl, -hw], axis=-1),
            np.stack([hl, -hw], axis=-1),
        ],
        axis=1,
    )
    rot = np.stack([np.stack([c, -s], -1), np.stack([s, c], -1)], axis=1)
    return np.einsum("nij,nkj->nki", rot, local) + boxes5[:, None, :2]


def _bev_areas(boxes5):
    return boxes5[:, 2] * boxes5[:, 3]


def iou_bev_matrix(boxes_a5, boxes_b5):
    """Rotated BEV IoU matrix, shape (N, M).

    Pairs whose circumscribed circles do not touch are zero without calling
    the overlap kernel.
    """
    a = np.atleast_2d(np.asarray(boxes_a5, dtype=np.float64))
    b = np.atleast_2d(np.asarray(boxes_b5, dtype=np.float64))
    n, m = a.shape[0], b.shape[0]
    out = np.zeros((n, m), dtype=np.float64)
    if n == 0 or m == 0:
        return out
    ra = 0.5 * np.hypot(a[:, 2], a[:, 3])
    rb = 0.5 * np.hypot(b[:, 2], b[:, 3])
    d2 = ((a[:, None, :2] - b[None, :, :2]) ** 2).sum(-1)
    cand = d2 <= (ra[:, None] + rb[None, :]) ** 2
    ii, jj = np.nonzero(cand)
    if ii.size == 0:
        return out
    inter = intersection_areas_pairs(a[ii], b[jj])
    union = _bev_areas(a)[ii] + _bev_areas(b)[jj] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.where(union > 0.0, inter / union, 0.0)
    out[ii, jj] = np.clip(vals, 0.0, 1.0)
    return out


def iou_3d_matrix(boxes_a7, boxes_b7):
    """Rotated 3D IoU matrix: BEV overlap area times z-extent overlap."""
    a = np.atleast_2d(np.asarray(boxes_a7, dtype=np.float64))
    b = np.atleast_2d(np.asarray(boxes_b7, dtype=np.float64))
    n, m = a.shape[0], b.shape[0]
    out = np.zeros((n, m), dtype=np.float64)
    if n == 0 or m == 0:
        return out
    a5, b5 = bev_from_box7(a), bev_from_box7(b)
    ra = 0.5 * np.hypot(a5[:, 2], a5[:, 3])
    rb = 0.5 * np.hypot(b5[:, 2], b5[:, 3])
    d2 = ((a5[:, None, :2] - b5[None, :, :2]) ** 2).sum(-1)
    zlo = np.maximum(
        (a[:, 2] - 0.5 * a[:, 5])[:, None], (b[:, 2] - 0.5 * b[:, 5])[None, :]
    )
    zhi = np.minimum(
        (a[:, 2] + 0.5 * a[:, 5])[:, None], (b[:, 2] + 0.5 * b[:, 5])[None, :]
    )
    zov = np.clip(zhi - zlo, 0.0, None)
    cand = (d2 <= (ra[:, None] + rb[None, :]) ** 2) & (zov > 0.0)
    ii, jj = np.nonzero(cand)
    if ii.size == 0:
        return out
    inter_vol = intersection_areas_pairs(a5[ii], b5[jj]) * zov[ii, jj]
    vol_a = a[:, 3] * a[:, 4] * a[:, 5]
    vol_b = b[:, 3] * b[:, 4] * b[:, 5]
    union = vol_a[ii] + vol_b[jj] - inter_vol
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.where(union > 0.0, inter_vol / union, 0.0)
    out[ii, jj] = np.clip(vals, 0.0, 1.0)
    return out


def rotated_nms(boxes5, scores, iou_threshold):
    """Greedy confidence-descending suppression on rotated BEV boxes.

    Returns kept indices in descending-score order; a box is suppressed
    when its IoU with an already-kept box is >= iou_threshold.  Ties in
    score break by lower index for determinism.
    """
    boxes5 = np.atleast_2d(np.asarray(boxes5, dtype=np.float64))
    scores = np.asarray(scores, dtype=np.float64)
    if boxes5.shape[0] == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.lexsort((np.arange(scores.size), -scores))
    iou = iou_bev_matrix(boxes5, boxes5)
    keep = []
    suppressed = np.zeros(scores.size, dtype=bool)
    for idx in order:
        if suppressed[idx]:
            continue
        keep.append(idx)
        suppressed |= iou[idx] >= iou_threshold
    return np.asarray(keep, dtype=np.int64)


def points_in_bev_boxes(points_xy, boxes5):
    """Boolean mask (P,) of points lying in any of the BEV footprints."""
    pts = np.atleast_2d(np.asarray(points_xy, dtype=np.float64))
    boxes5 = np.atleast_2d(np.asarray(boxes5, dtype=np.float64))
    inside = np.zeros(pts.shape[0], dtype=bool)
    for cx, cy, l, w, yaw in boxes5:
        c, s = math.cos(yaw), math.sin(yaw)
        dx = pts[:, 0] - cx
        dy = pts[:, 1] - cy
        u = c * dx + s * dy
        v = -s * dx + c * dy
        inside |= (np.abs(u) <= 0.5 * l) & (np.abs(v) <= 0.5 * w)
    return inside


def points_in_box7(points_xyz, box7):
    """Boolean mask of 3D points inside one (cx,cy,cz,l,w,h,yaw) box."""
    pts = np.atleast_2d(np.asarray(points_xyz, dtype=np.float64))
    cx, cy, cz, l, w, h, yaw = (float(v) for v in box7)
    mask = points_in_bev_boxes(pts[:, :2], [[cx, cy, l, w, yaw]])
    return mask & (np.abs(pts[:, 2] - cz) <= 0.5 * h)
