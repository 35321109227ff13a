"""Anchor-based detection head shared by teacher and student.

Anchors live on the head's BEV grid: one anchor per (class, yaw, cell)
with class-specific size and z. Box regression uses the SECOND-style
normalized-offset / log-size encoding; the yaw delta is the angular
difference wrapped into [-pi/2, pi/2), so encode/decode round-trips are
exact modulo the rectangle's pi symmetry (no direction classifier).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from . import geometry
from .errors import ContractViolation, ValidationError
from .frames import Box3D, ClassId, wrap_yaw
from .voxel import VoxelGridSpec

FOCAL_GAMMA = 2.0
FOCAL_ALPHA = 0.25
SMOOTH_L1_BETA = 1.0 / 9.0


def wrap_half_pi(delta: np.ndarray) -> np.ndarray:
    """Wrap angle differences into [-pi/2, pi/2)."""
    return (delta + 0.5 * math.pi) % math.pi - 0.5 * math.pi


@dataclass
class ClassAnchor:
    size: tuple[float, float, float]
    z_center: float
    pos_iou: float
    neg_iou: float

    def validate(self) -> "ClassAnchor":
        if min(self.size) <= 0.0:
            raise ValidationError(f"anchor size must be positive, got {self.size}")
        if not (0.0 < self.neg_iou < self.pos_iou <= 1.0):
            raise ValidationError(
                f"need 0 < neg_iou < pos_iou <= 1, got "
                f"({self.neg_iou}, {self.pos_iou})"
            )
        return self


@dataclass
class AnchorConfig:
    per_class: dict[ClassId, ClassAnchor] = field(
        default_factory=lambda: {
            ClassId.CAR: ClassAnchor((4.0, 1.8, 1.5), 0.75, 0.45, 0.30),
            ClassId.PEDESTRIAN: ClassAnchor((0.6, 0.6, 1.7), 0.85, 0.35, 0.20),
            ClassId.CYCLIST: ClassAnchor((1.8, 0.6, 1.5), 0.75, 0.35, 0.20),
        }
    )
    yaws: tuple[float, ...] = (0.0, 0.5 * math.pi)

    def validate(self) -> "AnchorConfig":
        if not self.per_class:
            raise ValidationError("anchor config needs at least one class")
        if not self.yaws:
            raise ValidationError("anchor config needs at least one yaw")
        for anchor in self.per_class.values():
            anchor.validate()
        return self

    @property
    def classes(self) -> list[ClassId]:
        return sorted(self.per_class, key=int)

    @property
    def anchors_per_cell(self) -> int:
        return len(self.per_class) * len(self.yaws)


class AnchorGrid:
    """All anchors of a head feature map, flattened in
    (class, yaw, row, col) order."""

    def __init__(self, grid: VoxelGridSpec, total_stride: int, cfg: AnchorConfig):
        cfg.validate()
        self.cfg = cfg
        self.total_stride = total_stride
        ny, nx = grid.bev_shape
        if ny % total_stride or nx % total_stride:
            raise ValidationError(
                f"BEV dims {(ny, nx)} not divisible by head stride {total_stride}"
            )
        self.shape = (ny // total_stride, nx // total_stride)
        h, w = self.shape
        cell_x = grid.voxel_size[0] * total_stride
        cell_y = grid.voxel_size[1] * total_stride
        xs = grid.range_min[0] + (np.arange(w) + 0.5) * cell_x
        ys = grid.range_min[1] + (np.arange(h) + 0.5) * cell_y

        classes = cfg.classes
        boxes = np.zeros((len(classes), len(cfg.yaws), h, w, 7), dtype=np.float64)
        for ci, class_id in enumerate(classes):
            spec = cfg.per_class[class_id]
            for yi, yaw in enumerate(cfg.yaws):
                boxes[ci, yi, :, :, 0] = xs[None, :]
                boxes[ci, yi, :, :, 1] = ys[:, None]
                boxes[ci, yi, :, :, 2] = spec.z_center
                boxes[ci, yi, :, :, 3:6] = spec.size
                boxes[ci, yi, :, :, 6] = yaw
        self.boxes7 = boxes.reshape(-1, 7)
        self.bev5 = geometry.bev_from_box7(self.boxes7)
        self.class_ids = np.repeat(
            [int(c) for c in classes], len(cfg.yaws) * h * w
        )
        self.n_total = len(self.boxes7)
        self._class_block = len(cfg.yaws) * h * w

    def class_slice(self, class_index: int) -> slice:
        start = class_index * self._class_block
        return slice(start, start + self._class_block)


def encode_boxes(boxes7: np.ndarray, anchors7: np.ndarray) -> np.ndarray:
    """Box -> anchor-relative 7-delta encoding."""
    boxes7 = np.atleast_2d(np.asarray(boxes7, dtype=np.float64))
    anchors7 = np.atleast_2d(np.asarray(anchors7, dtype=np.float64))
    diag = np.hypot(anchors7[:, 3], anchors7[:, 4])
    out = np.empty_like(boxes7)
    out[:, 0] = (boxes7[:, 0] - anchors7[:, 0]) / diag
    out[:, 1] = (boxes7[:, 1] - anchors7[:, 1]) / diag
    out[:, 2] = (boxes7[:, 2] - anchors7[:, 2]) / anchors7[:, 5]
    out[:, 3:6] = np.log(boxes7[:, 3:6] / anchors7[:, 3:6])
    out[:, 6] = wrap_half_pi(boxes7[:, 6] - anchors7[:, 6])
    return out


def decode_boxes(deltas: np.ndarray, anchors7: np.ndarray) -> np.ndarray:
    """Inverse of encode_boxes; yaw is wrapped back into [-pi, pi)."""
    deltas = np.atleast_2d(np.asarray(deltas, dtype=np.float64))
    anchors7 = np.atleast_2d(np.asarray(anchors7, dtype=np.float64))
    diag = np.hypot(anchors7[:, 3], anchors7[:, 4])
    out = np.empty_like(deltas)
    out[:, 0] = deltas[:, 0] * diag + anchors7[:, 0]
    out[:, 1] = deltas[:, 1] * diag + anchors7[:, 1]
    out[:, 2] = deltas[:, 2] * anchors7[:, 5] + anchors7[:, 2]
    out[:, 3:6] = np.exp(deltas[:, 3:6]) * anchors7[:, 3:6]
    yaw = anchors7[:, 6] + deltas[:, 6]
    out[:, 6] = (yaw + math.pi) % (2.0 * math.pi) - math.pi
    return out


@dataclass
class HeadOutput:
    """Single-frame head tensors: (A, K, H, W) logits, (A, 7, H, W) deltas."""

    cls_logits: torch.Tensor
    box_deltas: torch.Tensor

    def flat_cls(self) -> torch.Tensor:
        a, k, h, w = self.cls_logits.shape
        return self.cls_logits.permute(0, 2, 3, 1).reshape(-1, k)

    def flat_box(self) -> torch.Tensor:
        a, d, h, w = self.box_deltas.shape
        return self.box_deltas.permute(0, 2, 3, 1).reshape(-1, d)


class DetectionHead(nn.Module):
    """Two 1x1 conv branches on the 2D-block output."""

    def __init__(self, in_channels: int, n_classes: int, n_yaws: int,
                 focal_prior: float = 0.01):
        super().__init__()
        self.in_channels = in_channels
        self.n_classes = n_classes
        self.anchors_per_cell = n_classes * n_yaws
        self.conv_cls = nn.Conv2d(in_channels,
                                  self.anchors_per_cell * n_classes, 1)
        self.conv_box = nn.Conv2d(in_channels, self.anchors_per_cell * 7, 1)
        nn.init.constant_(self.conv_cls.bias,
                          -math.log((1.0 - focal_prior) / focal_prior))
        nn.init.zeros_(self.conv_box.bias)

    def forward(self, features: torch.Tensor):
        if features.ndim != 4 or features.shape[1] != self.in_channels:
            raise ContractViolation(
                f"head expects (B, {self.in_channels}, H, W), "
                f"got {tuple(features.shape)}"
            )
        b, _, h, w = features.shape
        cls = self.conv_cls(features).reshape(
            b, self.anchors_per_cell, self.n_classes, h, w
        )
        box = self.conv_box(features).reshape(b, self.anchors_per_cell, 7, h, w)
        return cls, box

    def predict(self, features: torch.Tensor) -> HeadOutput:
        """Single-frame (C, H, W) -> HeadOutput."""
        cls, box = self.forward(features.unsqueeze(0))
        return HeadOutput(cls_logits=cls[0], box_deltas=box[0])


@dataclass
class Targets:
    """Per-anchor assignment: class target (-1 = background), regression
    deltas for positives, and inclusion weights."""

    cls_target: np.ndarray  # (N,) int64, -1 background, else class id
    cls_weight: np.ndarray  # (N,) float64, 0 = ignored
    reg_target: np.ndarray  # (N, 7) float64
    reg_weight: np.ndarray  # (N,) float64
    n_pos: int


def assign_targets(
    anchors: AnchorGrid, boxes: list[Box3D], cfg: AnchorConfig | None = None
) -> Targets:
    """Match anchors to boxes of their own class by rotated BEV IoU.

    An anchor is positive at IoU >= pos_iou, ignored between the two
    thresholds, negative below; additionally every box claims its
    highest-IoU anchor (if overlap is nonzero) so no box goes unmatched.
    """
    cfg = cfg or anchors.cfg
    n = anchors.n_total
    cls_target = np.full(n, -1, dtype=np.int64)
    cls_weight = np.ones(n, dtype=np.float64)
    reg_target = np.zeros((n, 7), dtype=np.float64)
    reg_weight = np.zeros(n, dtype=np.float64)

    for ci, class_id in enumerate(cfg.classes):
        spec = cfg.per_class[class_id]
        class_boxes = [b for b in boxes if b.class_id == class_id]
        if not class_boxes:
            continue
        sl = anchors.class_slice(ci)
        anchor_bev = anchors.bev5[sl]
        anchor_box7 = anchors.boxes7[sl]
        gt7 = np.stack([b.as_array7() for b in class_boxes])
        iou = geometry.iou_bev_matrix(anchor_bev, geometry.bev_from_box7(gt7))

        best_gt = iou.argmax(axis=1)
        best_iou = iou[np.arange(iou.shape[0]), best_gt]
        pos = best_iou >= spec.pos_iou
        ignore = (best_iou >= spec.neg_iou) & ~pos

        # guarantee at least one anchor per box
        for gi in range(len(class_boxes)):
            ai = int(iou[:, gi].argmax())
            if iou[ai, gi] > 0.0:
                pos[ai] = True
                ignore[ai] = False
                best_gt[ai] = gi

        idx = np.arange(sl.start, sl.stop)
        cls_weight[idx[ignore]] = 0.0
        pos_idx = idx[pos]
        cls_target[pos_idx] = int(class_id)
        cls_weight[pos_idx] = 1.0
        reg_weight[pos_idx] = 1.0
        if len(pos_idx):
            matched = gt7[best_gt[pos]]
            reg_target[pos_idx] = encode_boxes(matched, anchor_box7[pos])

    return Targets(
        cls_target=cls_target,
        cls_weight=cls_weight,
        reg_target=reg_target,
        reg_weight=reg_weight,
        n_pos=int(reg_weight.sum()),
    )


def decode_nms(
    out: HeadOutput,
    anchors: AnchorGrid,
    conf_min: float,
    nms_iou: float,
) -> list[Box3D]:
    """Decode head output to scored boxes and apply per-class rotated NMS.

    Confidence is the max post-sigmoid class probability; survivors come
    back sorted by descending confidence.
    """
    if not (0.0 <= conf_min <= 1.0 and 0.0 <= nms_iou <= 1.0):
        raise ContractViolation("conf_min and nms_iou must lie in [0, 1]")
    probs = torch.sigmoid(out.flat_cls()).detach().cpu().numpy()
    deltas = out.flat_box().detach().cpu().numpy()
    if probs.shape[0] != anchors.n_total:
        raise ContractViolation(
            f"head output has {probs.shape[0]} anchors, grid has {anchors.n_total}"
        )
    conf = probs.max(axis=1)
    pred_cls = probs.argmax(axis=1)
    keep = conf > conf_min
    if not keep.any():
        return []
    idx = np.nonzero(keep)[0]
    boxes7 = decode_boxes(deltas[idx], anchors.boxes7[idx])
    conf = conf[idx]
    pred_cls = pred_cls[idx]

    detections: list[tuple[float, int, Box3D]] = []
    for class_id in np.unique(pred_cls):
        m = pred_cls == class_id
        class_boxes = boxes7[m]
        class_conf = conf[m]
        keep_idx = geometry.rotated_nms(
            geometry.bev_from_box7(class_boxes), class_conf, nms_iou
        )
        for ki in keep_idx:
            b = class_boxes[ki]
            detections.append(
                (
                    float(class_conf[ki]),
                    len(detections),
                    Box3D(
                        center=(b[0], b[1], b[2]),
                        size=(b[3], b[4], b[5]),
                        yaw=float(b[6]),
                        class_id=ClassId(int(class_id)),
                        score=float(class_conf[ki]),
                    ),
                )
            )
    detections.sort(key=lambda t: (-t[0], t[1]))
    return [d for _, _, d in detections]


def focal_loss(
    flat_cls: torch.Tensor,
    cls_target: np.ndarray,
    cls_weight: np.ndarray,
    n_pos: int,
    n_classes: int,
) -> torch.Tensor:
    """Sigmoid focal loss summed over non-ignored anchors and classes,
    normalized by the positive count (floored at one)."""
    device, dtype = flat_cls.device, flat_cls.dtype
    target = torch.zeros_like(flat_cls)
    tgt = torch.from_numpy(cls_target).to(device)
    pos_mask = tgt >= 0
    if pos_mask.any():
        target[pos_mask, tgt[pos_mask]] = 1.0
    weight = torch.from_numpy(cls_weight).to(device=device, dtype=dtype)

    p = torch.sigmoid(flat_cls)
    log_p = torch.nn.functional.logsigmoid(flat_cls)
    log_not_p = torch.nn.functional.logsigmoid(-flat_cls)
    loss = -(
        FOCAL_ALPHA * target * (1.0 - p).pow(FOCAL_GAMMA) * log_p
        + (1.0 - FOCAL_ALPHA) * (1.0 - target) * p.pow(FOCAL_GAMMA) * log_not_p
    )
    loss = (loss * weight[:, None]).sum()
    return loss / max(1, n_pos)


def smooth_l1_loss(
    flat_box: torch.Tensor,
    reg_target: np.ndarray,
    reg_weight: np.ndarray,
    n_pos: int,
) -> torch.Tensor:
    """Smooth-L1 over positive anchors' 7 deltas, normalized like the
    classification term."""
    device, dtype = flat_box.device, flat_box.dtype
    weight = torch.from_numpy(reg_weight).to(device=device, dtype=dtype)
    target = torch.from_numpy(reg_target).to(device=device, dtype=dtype)
    diff = (flat_box - target).abs()
    loss = torch.where(
        diff < SMOOTH_L1_BETA,
        0.5 * diff.square() / SMOOTH_L1_BETA,
        diff - 0.5 * SMOOTH_L1_BETA,
    )
    loss = (loss.sum(dim=1) * weight).sum()
    return loss / max(1, n_pos)


def gt_loss(out: HeadOutput, targets: Targets) -> tuple[torch.Tensor, torch.Tensor]:
    """Classification and regression losses against assigned targets."""
    flat_cls = out.flat_cls()
    flat_box = out.flat_box()
    if flat_cls.shape[0] != targets.cls_target.shape[0]:
        raise ContractViolation(
            f"targets cover {targets.cls_target.shape[0]} anchors, head "
            f"output has {flat_cls.shape[0]}"
        )
    l_cls = focal_loss(
        flat_cls, targets.cls_target, targets.cls_weight, targets.n_pos,
        flat_cls.shape[1],
    )
    l_reg = smooth_l1_loss(flat_box, targets.reg_target, targets.reg_weight,
                           targets.n_pos)
    return l_cls, l_reg
