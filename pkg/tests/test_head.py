import math

import numpy as np
import pytest
import torch

from conftest import finite_difference_check, tiny_anchor_config
from sckd.errors import ContractViolation, ValidationError
from sckd.frames import Box3D, ClassId
from sckd.head import (
    AnchorConfig,
    AnchorGrid,
    ClassAnchor,
    DetectionHead,
    HeadOutput,
    assign_targets,
    decode_boxes,
    decode_nms,
    encode_boxes,
    gt_loss,
    wrap_half_pi,
)
from sckd.metrics import iou_bev
from sckd.voxel import VoxelGridSpec

from oracles import assignment_oracle, greedy_nms_oracle

GRID = VoxelGridSpec(
    range_min=(0.0, -4.8, -1.0),
    range_max=(9.6, 4.8, 1.0),
    voxel_size=(0.3, 0.3, 1.0),
)


def make_grid(stride=2, cfg=None):
    return AnchorGrid(GRID, stride, cfg or tiny_anchor_config())


def random_box(rng, class_id=ClassId.CAR):
    return Box3D(
        center=(rng.uniform(1, 8.6), rng.uniform(-3.8, 3.8), rng.uniform(0.4, 1.0)),
        size=(rng.uniform(1.0, 4.5), rng.uniform(0.5, 2.0), rng.uniform(1.0, 2.0)),
        yaw=rng.uniform(-math.pi, math.pi - 1e-9),
        class_id=class_id,
    )


def test_anchor_grid_layout():
    anchors = make_grid()
    assert anchors.shape == (16, 16)
    assert anchors.n_total == 3 * 2 * 16 * 16
    # first anchor: car class, yaw 0, first cell center
    first = anchors.boxes7[0]
    assert first[0] == pytest.approx(0.3)
    assert first[1] == pytest.approx(-4.5)
    assert first[6] == 0.0
    # class blocks are contiguous
    assert (anchors.class_ids[anchors.class_slice(0)] == 0).all()
    assert (anchors.class_ids[anchors.class_slice(2)] == 2).all()


def test_anchor_config_validation():
    with pytest.raises(ValidationError):
        ClassAnchor((1, 1, 1), 0.5, 0.3, 0.4).validate()
    with pytest.raises(ValidationError):
        ClassAnchor((0, 1, 1), 0.5, 0.5, 0.3).validate()


def test_delta_roundtrip_exact_mod_pi():
    rng = np.random.default_rng(0)
    anchors = np.stack(
        [
            [rng.uniform(0, 9), rng.uniform(-4, 4), rng.uniform(0, 1),
             rng.uniform(0.5, 4), rng.uniform(0.5, 2), rng.uniform(1, 2),
             rng.choice([0.0, math.pi / 2])]
            for _ in range(50)
        ]
    )
    boxes = np.stack([random_box(rng).as_array7() for _ in range(50)])
    back = decode_boxes(encode_boxes(boxes, anchors), anchors)
    np.testing.assert_allclose(back[:, :6], boxes[:, :6], atol=1e-9)
    yaw_err = wrap_half_pi(back[:, 6] - boxes[:, 6])
    np.testing.assert_allclose(yaw_err, 0.0, atol=1e-9)


def test_coincident_anchor_is_positive_with_zero_deltas():
    anchors = make_grid()
    # place a car exactly on an anchor
    idx = 5 * 16 + 7  # cell (row 5, col 7)
    anchor_box = anchors.boxes7[idx]
    box = Box3D(
        center=(anchor_box[0], anchor_box[1], anchor_box[2]),
        size=(anchor_box[3], anchor_box[4], anchor_box[5]),
        yaw=anchor_box[6],
        class_id=ClassId.CAR,
    )
    targets = assign_targets(anchors, [box])
    assert targets.cls_target[idx] == int(ClassId.CAR)
    assert targets.reg_weight[idx] == 1.0
    np.testing.assert_allclose(targets.reg_target[idx], 0.0, atol=1e-12)


def test_assign_empty_boxes_all_negative():
    anchors = make_grid()
    targets = assign_targets(anchors, [])
    assert (targets.cls_target == -1).all()
    assert (targets.cls_weight == 1.0).all()
    assert targets.n_pos == 0


def test_assignment_matches_exhaustive_oracle():
    cfg = tiny_anchor_config()
    anchors = make_grid(cfg=cfg)
    rng = np.random.default_rng(3)
    boxes = [
        random_box(rng, ClassId.CAR),
        random_box(rng, ClassId.CAR),
        random_box(rng, ClassId.PEDESTRIAN),
        random_box(rng, ClassId.CYCLIST),
    ]
    targets = assign_targets(anchors, boxes)
    pos_iou = {int(c): a.pos_iou for c, a in cfg.per_class.items()}
    neg_iou = {int(c): a.neg_iou for c, a in cfg.per_class.items()}

    def pair_iou(a7, b7):
        def as_box(arr):
            return Box3D(
                center=tuple(arr[:3]), size=tuple(arr[3:6]), yaw=float(arr[6]),
                class_id=ClassId.CAR,
            )
        return iou_bev(as_box(a7), as_box(b7))

    want_cls, want_weight, _ = assignment_oracle(
        anchors.boxes7, anchors.class_ids, boxes, pair_iou, pos_iou, neg_iou
    )
    np.testing.assert_array_equal(targets.cls_target, want_cls)
    np.testing.assert_array_equal(targets.cls_weight, want_weight)


def test_predict_zero_weights_bias_only():
    torch.manual_seed(0)
    head = DetectionHead(8, 3, 2)
    with torch.no_grad():
        head.conv_cls.weight.zero_()
        head.conv_cls.bias.fill_(0.37)
        head.conv_box.weight.zero_()
        head.conv_box.bias.fill_(-0.11)
    out = head.predict(torch.randn(8, 16, 16))
    assert torch.allclose(out.cls_logits, torch.full_like(out.cls_logits, 0.37))
    assert torch.allclose(out.box_deltas, torch.full_like(out.box_deltas, -0.11))
    assert out.cls_logits.shape == (6, 3, 16, 16)
    assert out.box_deltas.shape == (6, 7, 16, 16)


def test_head_gradients_match_finite_differences():
    torch.manual_seed(1)
    head = DetectionHead(4, 2, 2).double()
    x = torch.randn(1, 4, 5, 5, dtype=torch.float64, requires_grad=True)

    def loss():
        cls, box = head(x)
        return cls.square().sum() + 0.3 * box.square().sum()

    finite_difference_check(
        loss,
        {"features": x, "cls_weight": head.conv_cls.weight,
         "box_weight": head.conv_box.weight, "cls_bias": head.conv_cls.bias},
        n_coords=12,
    )


def _head_output(anchors, logit_value=-40.0):
    n_cls = len(anchors.cfg.per_class)
    n_yaw = len(anchors.cfg.yaws)
    h, w = anchors.shape
    cls = torch.full((n_cls * n_yaw, n_cls, h, w), logit_value, dtype=torch.float64)
    box = torch.zeros((n_cls * n_yaw, 7, h, w), dtype=torch.float64)
    return HeadOutput(cls_logits=cls, box_deltas=box)


def _set_anchor(out, anchors, flat_idx, class_idx, logit, deltas=None):
    h, w = anchors.shape
    block = h * w
    a = flat_idx // block
    rem = flat_idx % block
    row, col = rem // w, rem % w
    out.cls_logits[a, class_idx, row, col] = logit
    if deltas is not None:
        out.box_deltas[a, :, row, col] = torch.as_tensor(deltas)


def sigmoid_inv(p):
    return math.log(p / (1 - p))


def test_decode_nms_empty_below_threshold():
    anchors = make_grid()
    out = _head_output(anchors, logit_value=sigmoid_inv(0.04))
    assert decode_nms(out, anchors, conf_min=0.05, nms_iou=0.5) == []


def test_decode_nms_identical_boxes_keep_highest():
    anchors = make_grid()
    out = _head_output(anchors)
    target = Box3D(
        center=(4.5, 0.3, 0.75), size=(4.0, 1.8, 1.5), yaw=0.2,
        class_id=ClassId.CAR,
    )
    # two different car anchors regressed onto the same box
    for flat_idx, conf in ((5 * 16 + 5, 0.9), (5 * 16 + 6, 0.8)):
        deltas = encode_boxes(
            target.as_array7()[None], anchors.boxes7[flat_idx][None]
        )[0]
        _set_anchor(out, anchors, flat_idx, 0, sigmoid_inv(conf), deltas)
    dets = decode_nms(out, anchors, conf_min=0.1, nms_iou=0.5)
    assert len(dets) == 1
    assert dets[0].score == pytest.approx(0.9, abs=1e-9)
    assert dets[0].center[0] == pytest.approx(4.5, abs=1e-6)


def test_decode_nms_sorted_and_matches_bruteforce():
    anchors = make_grid()
    out = _head_output(anchors)
    rng = np.random.default_rng(5)
    flat_ids = rng.choice(16 * 16, size=12, replace=False)  # car yaw-0 anchors
    confs = rng.uniform(0.2, 0.95, size=12)
    boxes = []
    for flat_idx, conf in zip(flat_ids, confs):
        box = random_box(rng)
        deltas = encode_boxes(box.as_array7()[None], anchors.boxes7[flat_idx][None])[0]
        _set_anchor(out, anchors, int(flat_idx), 0, sigmoid_inv(conf), deltas)
        boxes.append((float(conf), box))
    dets = decode_nms(out, anchors, conf_min=0.1, nms_iou=0.4)
    got_scores = [d.score for d in dets]
    assert got_scores == sorted(got_scores, reverse=True)

    keep = greedy_nms_oracle(
        iou_bev, [b for _, b in boxes], [c for c, _ in boxes], 0.4
    )
    want_scores = sorted((boxes[i][0] for i in keep), reverse=True)
    np.testing.assert_allclose(got_scores, want_scores, atol=1e-9)


def test_gt_loss_perfect_predictions_near_zero():
    anchors = make_grid()
    rng = np.random.default_rng(7)
    boxes = [random_box(rng), random_box(rng, ClassId.PEDESTRIAN)]
    targets = assign_targets(anchors, boxes)
    out = _head_output(anchors)
    pos = np.nonzero(targets.reg_weight)[0]
    for idx in pos:
        _set_anchor(out, anchors, int(idx), int(targets.cls_target[idx]), 40.0,
                    targets.reg_target[idx])
    l_cls, l_reg = gt_loss(out, targets)
    assert l_cls.item() < 1e-6
    assert l_reg.item() < 1e-6


def test_gt_loss_no_positives_zero_reg():
    anchors = make_grid()
    targets = assign_targets(anchors, [])
    out = _head_output(anchors)
    l_cls, l_reg = gt_loss(out, targets)
    assert l_reg.item() == 0.0
    assert l_cls.item() > 0.0  # all-negative focal loss at logit -40 is tiny but >= 0


def test_gt_loss_gradients_match_finite_differences():
    cfg = AnchorConfig(
        per_class={ClassId.CAR: ClassAnchor((4.0, 1.8, 1.5), 0.75, 0.45, 0.30)},
        yaws=(0.0,),
    )
    grid = VoxelGridSpec((0.0, -2.4, -1.0), (4.8, 2.4, 1.0), (0.6, 0.6, 1.0))
    anchors = AnchorGrid(grid, 2, cfg)
    box = Box3D(center=(2.4, 0.1, 0.75), size=(3.8, 1.7, 1.4), yaw=0.1,
                class_id=ClassId.CAR)
    targets = assign_targets(anchors, [box])
    assert targets.n_pos > 0
    torch.manual_seed(2)
    cls = torch.randn(1, 1, 4, 4, dtype=torch.float64, requires_grad=True)
    box_t = 0.2 * torch.randn(1, 7, 4, 4, dtype=torch.float64, requires_grad=True)

    def loss():
        l_cls, l_reg = gt_loss(HeadOutput(cls, box_t), targets)
        return l_cls + l_reg

    finite_difference_check(loss, {"cls": cls, "box": box_t}, n_coords=20)


def test_gt_loss_shape_mismatch_rejected():
    anchors = make_grid()
    targets = assign_targets(anchors, [])
    bad = HeadOutput(
        cls_logits=torch.zeros(6, 3, 4, 4), box_deltas=torch.zeros(6, 7, 4, 4)
    )
    with pytest.raises(ContractViolation):
        gt_loss(bad, targets)
