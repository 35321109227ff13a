"""Rotated-box IoU wrappers, 11/40-point average precision, and the
two-region (entire area / driving corridor) mAP report."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .errors import ContractViolation
from .frames import Box3D, ClassId, Detection


class APMode(enum.Enum):
    AP11 = "AP11"
    AP40 = "AP40"


class IoUKind(enum.Enum):
    BEV = "BEV"
    IOU3D = "3D"


@dataclass
class EvalConfig:
    mode: APMode = APMode.AP11
    iou_kind: IoUKind = IoUKind.BEV
    iou_thresholds: dict[ClassId, float] = field(
        default_factory=lambda: {
            ClassId.CAR: 0.5,
            ClassId.PEDESTRIAN: 0.25,
            ClassId.CYCLIST: 0.25,
        }
    )
    # axis-aligned BEV rectangle (x_min, x_max, y_min, y_max); the narrow
    # in-front-of-ego region reported next to the entire area
    corridor: tuple[float, float, float, float] = (0.0, 25.0, -4.0, 4.0)
    # detection decoding used when producing boxes to evaluate
    conf_min: float = 0.05
    nms_iou: float = 0.3

    def validate(self) -> "EvalConfig":
        for class_id, thr in self.iou_thresholds.items():
            if not (0.0 < thr <= 1.0):
                raise ContractViolation(
                    f"IoU threshold for {class_id.name} must be in (0, 1]"
                )
        if (self.corridor[1] <= self.corridor[0]
                or self.corridor[3] <= self.corridor[2]):
            raise ContractViolation("corridor rectangle is empty")
        if not (0.0 <= self.conf_min <= 1.0 and 0.0 <= self.nms_iou <= 1.0):
            raise ContractViolation("conf_min and nms_iou must lie in [0, 1]")
        return self


def _check_box(box: Box3D) -> None:
    if box.size[0] * box.size[1] <= 0.0 or box.size[2] <= 0.0:
        raise ContractViolation(f"degenerate box with size {box.size}")


def iou_bev(a: Box3D, b: Box3D) -> float:
    """IoU of the two yawed BEV rectangles."""
    _check_box(a)
    _check_box(b)
    return float(geometry.iou_bev_matrix(a.bev5(), b.bev5())[0, 0])


def iou_3d(a: Box3D, b: Box3D) -> float:
    """Volume IoU: BEV intersection area times z overlap over union."""
    _check_box(a)
    _check_box(b)
    return float(geometry.iou_3d_matrix(a.as_array7(), b.as_array7())[0, 0])


def _in_region(boxes: list[Box3D], region) -> list[Box3D]:
    if region is None:
        return list(boxes)
    x0, x1, y0, y1 = region
    return [
        b
        for b in boxes
        if x0 <= b.center[0] <= x1 and y0 <= b.center[1] <= y1
    ]


def _match_frame(
    dets: list[Detection],
    gts: list[Box3D],
    threshold: float,
    iou_kind: IoUKind,
):
    """Greedy confidence-descending matching within one frame.

    Returns (scores, tp_flags) for every detection; each GT matches at
    most once, to the highest-IoU available candidate above threshold.
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))
    if gts:
        gt7 = np.stack([g.as_array7() for g in gts])
    used = [False] * len(gts)
    scores, tps = [], []
    for di in order:
        det = dets[di]
        scores.append(det.score)
        if not gts:
            tps.append(False)
            continue
        det7 = det.as_array7()
        if iou_kind is IoUKind.BEV:
            ious = geometry.iou_bev_matrix(
                geometry.bev_from_box7(det7[None]), geometry.bev_from_box7(gt7)
            )[0]
        else:
            ious = geometry.iou_3d_matrix(det7[None], gt7)[0]
        best, best_iou = -1, threshold
        for gi in range(len(gts)):
            if not used[gi] and ious[gi] >= best_iou:
                best, best_iou = gi, ious[gi]
        if best >= 0:
            used[best] = True
            tps.append(True)
        else:
            tps.append(False)
    return scores, tps


def _ap_from_matches(scores, tp_flags, n_gt: int, mode: APMode) -> float:
    """Interpolated AP (percent) from pooled per-detection match flags."""
    if n_gt == 0:
        return 0.0
    order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")
    tp = np.asarray(tp_flags, dtype=np.float64)[order]
    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(1.0 - tp)
    recall = tp_cum / n_gt
    precision = tp_cum / np.maximum(tp_cum + fp_cum, 1e-12)
    if mode is APMode.AP11:
        grid = np.linspace(0.0, 1.0, 11)
    else:
        grid = np.arange(1, 41) / 40.0
    total = 0.0
    for r in grid:
        mask = recall >= r - 1e-12
        total += precision[mask].max() if mask.any() else 0.0
    return 100.0 * total / len(grid)


def ap_class(
    dets: list[Detection],
    gts: list[Box3D],
    cfg: EvalConfig,
    class_id: ClassId,
    region=None,
) -> float:
    """Average precision for one class over one detection/GT pool."""
    cfg.validate()
    dets = [d for d in _in_region(dets, region) if d.class_id == class_id]
    gts = [g for g in _in_region(gts, region) if g.class_id == class_id]
    for det in dets:
        if det.score is None:
            raise ContractViolation("ap_class needs scored detections")
    scores, tps = _match_frame(
        dets, gts, cfg.iou_thresholds[class_id], cfg.iou_kind
    )
    return _ap_from_matches(scores, tps, len(gts), cfg.mode)


@dataclass
class RegionReport:
    per_class: dict[ClassId, float]
    map: float


@dataclass
class EvalReport:
    mode: APMode
    regions: dict[str, RegionReport]

    def render_kv(self) -> str:
        """Machine-readable key-value lines with fixed formatting."""
        lines = [f"mode {self.mode.value}"]
        for region in sorted(self.regions):
            rep = self.regions[region]
            for class_id in sorted(rep.per_class, key=int):
                lines.append(
                    f"{region}.{class_id.name.lower()}.ap "
                    f"{rep.per_class[class_id]:.4f}"
                )
            lines.append(f"{region}.map {rep.map:.4f}")
        return "\n".join(lines) + "\n"

    def render_text(self) -> str:
        lines = [f"average precision ({self.mode.value}), percent"]
        for region in sorted(self.regions):
            rep = self.regions[region]
            cells = "  ".join(
                f"{cid.name.lower()}={rep.per_class[cid]:7.4f}"
                for cid in sorted(rep.per_class, key=int)
            )
            lines.append(f"  {region:<10} {cells}  mAP={rep.map:7.4f}")
        return "\n".join(lines) + "\n"


def map_eval(
    dets_by_frame: dict[int, list[Detection]],
    gts_by_frame: dict[int, list[Box3D]],
    cfg: EvalConfig,
) -> EvalReport:
    """Two-region evaluation over a frame set.

    Detections are matched per frame, pooled per class across frames, and
    each region's mAP is the unweighted mean over classes that appear in
    its GT or detections.  Frame sets must agree.
    """
    cfg.validate()
    if set(dets_by_frame) != set(gts_by_frame):
        raise ContractViolation(
            "detection and ground-truth frame sets differ: "
            f"{sorted(set(dets_by_frame) ^ set(gts_by_frame))}"
        )
    regions = {"entire": None, "corridor": cfg.corridor}
    out: dict[str, RegionReport] = {}
    for name, region in regions.items():
        per_class: dict[ClassId, float] = {}
        for class_id in cfg.iou_thresholds:
            pooled_scores: list[float] = []
            pooled_tp: list[bool] = []
            n_gt = 0
            seen = False
            for frame_id in sorted(gts_by_frame):
                dets = [
                    d
                    for d in _in_region(dets_by_frame[frame_id], region)
                    if d.class_id == class_id
                ]
                gts = [
                    g
                    for g in _in_region(gts_by_frame[frame_id], region)
                    if g.class_id == class_id
                ]
                if dets or gts:
                    seen = True
                scores, tps = _match_frame(
                    dets, gts, cfg.iou_thresholds[class_id], cfg.iou_kind
                )
                pooled_scores.extend(scores)
                pooled_tp.extend(tps)
                n_gt += len(gts)
            if seen:
                per_class[class_id] = _ap_from_matches(
                    pooled_scores, pooled_tp, n_gt, cfg.mode
                )
        map_value = (
            sum(per_class.values()) / len(per_class) if per_class else 0.0
        )
        out[name] = RegionReport(per_class=per_class, map=map_value)
    return EvalReport(mode=cfg.mode, regions=out)


def heatmap(bev_data: np.ndarray) -> np.ndarray:
    """Per-cell channel-max magnitude of a (C, H, W) feature map."""
    return np.abs(np.asarray(bev_data)).max(axis=0)


def heatmap_contrast(
    bev_data: np.ndarray, grid, labels: list[Box3D]
) -> float:
    """Mean in-box activation over mean background activation of one map.

    Cells count as foreground when their center lies inside a GT box
    footprint.  Returns NaN when either side is empty.
    """
    hm = heatmap(bev_data)
    h, w = hm.shape
    ny, nx = grid.bev_shape
    stride_y, stride_x = ny // h, nx // w
    xs = grid.range_min[0] + (np.arange(w) + 0.5) * grid.voxel_size[0] * stride_x
    ys = grid.range_min[1] + (np.arange(h) + 0.5) * grid.voxel_size[1] * stride_y
    cell_xy = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)
    if labels:
        boxes5 = np.stack([b.bev5() for b in labels])
        fg = geometry.points_in_bev_boxes(cell_xy, boxes5).reshape(h, w)
    else:
        fg = np.zeros((h, w), dtype=bool)
    if not fg.any() or fg.all():
        return float("nan")
    fg_mean = float(hm[fg].mean())
    bg_mean = float(hm[~fg].mean())
    if bg_mean == 0.0:
        return float("inf") if fg_mean > 0 else float("nan")
    return fg_mean / bg_mean
