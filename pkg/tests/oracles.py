"""Independent brute-force oracles used to freeze expected test values.

These deliberately avoid the library's own code paths: Monte-Carlo
rasterization for overlap, direct greedy loops for NMS and assignment,
and explicit prefix enumeration for interpolated AP.
"""

import math

import numpy as np


def _inside(points, box5):
    cx, cy, l, w, yaw = box5
    c, s = math.cos(yaw), math.sin(yaw)
    dx = points[:, 0] - cx
    dy = points[:, 1] - cy
    u = c * dx + s * dy
    v = -s * dx + c * dy
    return (np.abs(u) <= 0.5 * l) & (np.abs(v) <= 0.5 * w)


def mc_iou_bev(a5, b5, n_samples=1_000_000, seed=0):
    """Monte-Carlo BEV IoU: sample inside A, estimate |A&B|."""
    rng = np.random.default_rng(seed)
    cx, cy, l, w, yaw = a5
    u = (rng.random(n_samples) - 0.5) * l
    v = (rng.random(n_samples) - 0.5) * w
    c, s = math.cos(yaw), math.sin(yaw)
    pts = np.stack([c * u - s * v + cx, s * u + c * v + cy], axis=1)
    inter = l * w * _inside(pts, b5).mean()
    union = l * w + b5[2] * b5[3] - inter
    return inter / union


def mc_iou_3d(a7, b7, n_samples=1_000_000, seed=0):
    """Monte-Carlo 3D IoU: sample inside box A's volume."""
    rng = np.random.default_rng(seed)
    cx, cy, cz, l, w, h, yaw = a7
    u = (rng.random(n_samples) - 0.5) * l
    v = (rng.random(n_samples) - 0.5) * w
    z = (rng.random(n_samples) - 0.5) * h + cz
    c, s = math.cos(yaw), math.sin(yaw)
    pts = np.stack([c * u - s * v + cx, s * u + c * v + cy], axis=1)
    in_bev = _inside(pts, (b7[0], b7[1], b7[3], b7[4], b7[6]))
    in_z = np.abs(z - b7[2]) <= 0.5 * b7[5]
    vol_a = l * w * h
    vol_b = b7[3] * b7[4] * b7[5]
    inter = vol_a * (in_bev & in_z).mean()
    return inter / (vol_a + vol_b - inter)


def greedy_nms_oracle(iou_fn, boxes, scores, threshold):
    """Plain O(n^2) greedy suppression using a caller-supplied pair IoU."""
    order = sorted(range(len(boxes)), key=lambda i: (-scores[i], i))
    keep = []
    for i in order:
        if all(iou_fn(boxes[i], boxes[k]) < threshold for k in keep):
            keep.append(i)
    return keep


def assignment_oracle(anchor_boxes7, anchor_classes, gt_boxes, iou_fn,
                      pos_iou, neg_iou):
    """Exhaustive per-anchor assignment over the full IoU matrix.

    pos_iou/neg_iou map class id -> threshold; boxes compete only within
    their class.  Returns (cls_target, cls_weight, matched_gt_index).
    """
    n = len(anchor_boxes7)
    cls_target = np.full(n, -1, dtype=np.int64)
    cls_weight = np.ones(n, dtype=np.float64)
    matched = np.full(n, -1, dtype=np.int64)
    classes = sorted(set(anchor_classes))
    for class_id in classes:
        a_idx = [i for i in range(n) if anchor_classes[i] == class_id]
        g_idx = [j for j, g in enumerate(gt_boxes) if int(g.class_id) == class_id]
        if not g_idx:
            continue
        iou = np.zeros((len(a_idx), len(g_idx)))
        for ii, ai in enumerate(a_idx):
            for jj, gj in enumerate(g_idx):
                iou[ii, jj] = iou_fn(anchor_boxes7[ai], gt_boxes[gj].as_array7())
        best_g = iou.argmax(axis=1)
        best_iou = iou.max(axis=1)
        pos = best_iou >= pos_iou[class_id]
        ignore = (best_iou >= neg_iou[class_id]) & ~pos
        for jj in range(len(g_idx)):
            ii = int(iou[:, jj].argmax())
            if iou[ii, jj] > 0.0:
                pos[ii] = True
                ignore[ii] = False
                best_g[ii] = jj
        for ii, ai in enumerate(a_idx):
            if pos[ii]:
                cls_target[ai] = class_id
                matched[ai] = g_idx[best_g[ii]]
            elif ignore[ii]:
                cls_weight[ai] = 0.0
    return cls_target, cls_weight, matched


def interpolated_ap_oracle(scores, tp_flags, n_gt, n_points):
    """Direct prefix enumeration of interpolated AP (percent).

    For each grid recall r, scan every prefix of the score-sorted
    detections and take the best precision among prefixes whose recall
    reaches r.
    """
    if n_gt == 0:
        return 0.0
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    if n_points == 11:
        grid = [i / 10.0 for i in range(11)]
    else:
        grid = [i / 40.0 for i in range(1, 41)]
    total = 0.0
    for r in grid:
        best = 0.0
        tp = 0
        for k, i in enumerate(order, start=1):
            tp += 1 if tp_flags[i] else 0
            recall = tp / n_gt
            precision = tp / k
            if recall >= r - 1e-12:
                best = max(best, precision)
        total += best
    return 100.0 * total / len(grid)
