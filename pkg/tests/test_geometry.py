import math

import numpy as np
import pytest

from sckd import geometry
from sckd.geometry import _overlap_py

from oracles import mc_iou_bev, mc_iou_3d

try:
    from sckd.geometry import _overlap_cy
except ImportError:
    _overlap_cy = None


def random_box5(rng, scale=10.0):
    return np.array(
        [
            rng.uniform(-scale, scale),
            rng.uniform(-scale, scale),
            rng.uniform(0.5, 5.0),
            rng.uniform(0.5, 5.0),
            rng.uniform(-math.pi, math.pi),
        ]
    )


def test_corners_ccw_and_area():
    box = np.array([1.0, 2.0, 4.0, 2.0, 0.3])
    corners = geometry.box_corners_bev(box)[0]
    # shoelace signed area must be positive (CCW) and equal l*w
    x, y = corners[:, 0], corners[:, 1]
    signed = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    assert signed > 0
    assert signed == pytest.approx(8.0, rel=1e-12)


def test_identical_boxes_iou_one():
    box = np.array([3.0, -1.0, 4.0, 2.0, 0.7])
    assert geometry.iou_bev_matrix(box, box)[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_disjoint_boxes_iou_zero():
    a = np.array([0.0, 0.0, 2.0, 1.0, 0.3])
    b = np.array([100.0, 0.0, 2.0, 1.0, 1.2])
    assert geometry.iou_bev_matrix(a, b)[0, 0] == 0.0


def test_unit_squares_rotated_quarter_pi():
    # same-center unit squares at 0 and pi/4 intersect in a regular
    # octagon; the exact IoU is sqrt(2)/2
    a = np.array([0.0, 0.0, 1.0, 1.0, 0.0])
    b = np.array([0.0, 0.0, 1.0, 1.0, math.pi / 4])
    iou = geometry.iou_bev_matrix(a, b)[0, 0]
    assert iou == pytest.approx(math.sqrt(2) / 2, abs=1e-12)
    assert iou == pytest.approx(mc_iou_bev(a, b, n_samples=200_000), abs=0.01)


def test_against_monte_carlo_sample():
    rng = np.random.default_rng(7)
    for trial in range(25):
        a, b = random_box5(rng, 3.0), random_box5(rng, 3.0)
        exact = geometry.iou_bev_matrix(a, b)[0, 0]
        approx = mc_iou_bev(a, b, n_samples=200_000, seed=trial)
        assert exact == pytest.approx(approx, abs=0.015)


def test_symmetry_and_pi_period():
    rng = np.random.default_rng(3)
    for _ in range(30):
        a, b = random_box5(rng), random_box5(rng)
        ab = geometry.iou_bev_matrix(a, b)[0, 0]
        ba = geometry.iou_bev_matrix(b, a)[0, 0]
        assert ab == pytest.approx(ba, abs=1e-9)
        a_turned = a.copy()
        a_turned[4] = a[4] + math.pi
        assert geometry.iou_bev_matrix(a_turned, b)[0, 0] == pytest.approx(
            ab, abs=1e-9
        )


def test_rigid_transform_invariance():
    rng = np.random.default_rng(11)
    for _ in range(20):
        a, b = random_box5(rng), random_box5(rng)
        base = geometry.iou_bev_matrix(a, b)[0, 0]
        theta = rng.uniform(-math.pi, math.pi)
        tx, ty = rng.uniform(-50, 50, 2)
        c, s = math.cos(theta), math.sin(theta)

        def moved(box):
            out = box.copy()
            out[0] = c * box[0] - s * box[1] + tx
            out[1] = s * box[0] + c * box[1] + ty
            out[4] = box[4] + theta
            return out

        assert geometry.iou_bev_matrix(moved(a), moved(b))[0, 0] == pytest.approx(
            base, abs=1e-9
        )


def test_iou_3d_disjoint_z():
    a = np.array([0.0, 0.0, 0.0, 2.0, 2.0, 1.0, 0.0])
    b = np.array([0.0, 0.0, 5.0, 2.0, 2.0, 1.0, 0.0])
    assert geometry.iou_3d_matrix(a, b)[0, 0] == 0.0


def test_iou_3d_identical():
    a = np.array([1.0, 2.0, 0.5, 2.0, 1.0, 1.5, 0.4])
    assert geometry.iou_3d_matrix(a, a)[0, 0] == pytest.approx(1.0, abs=1e-12)


def test_iou_3d_monte_carlo_sample():
    rng = np.random.default_rng(5)
    for trial in range(15):
        a = np.array([*rng.uniform(-2, 2, 2), rng.uniform(-1, 1),
                      *rng.uniform(0.5, 3.0, 3), rng.uniform(-math.pi, math.pi)])
        b = np.array([*rng.uniform(-2, 2, 2), rng.uniform(-1, 1),
                      *rng.uniform(0.5, 3.0, 3), rng.uniform(-math.pi, math.pi)])
        exact = geometry.iou_3d_matrix(a, b)[0, 0]
        approx = mc_iou_3d(a, b, n_samples=200_000, seed=trial)
        assert exact == pytest.approx(approx, abs=0.015)


def test_matrix_shapes_and_empty():
    rng = np.random.default_rng(0)
    a = np.stack([random_box5(rng) for _ in range(4)])
    b = np.stack([random_box5(rng) for _ in range(6)])
    assert geometry.iou_bev_matrix(a, b).shape == (4, 6)
    assert geometry.iou_bev_matrix(np.zeros((0, 5)), b).shape == (0, 6)


def test_python_and_compiled_agree():
    if _overlap_cy is None:
        pytest.skip("compiled kernel unavailable")
    rng = np.random.default_rng(42)
    a = np.stack([random_box5(rng, 4.0) for _ in range(200)])
    b = np.stack([random_box5(rng, 4.0) for _ in range(200)])
    got_c = _overlap_cy.intersection_areas_pairs(a, b)
    got_py = _overlap_py.intersection_areas_pairs(a, b)
    np.testing.assert_allclose(got_c, got_py, rtol=0, atol=1e-12)


def test_points_in_box():
    box5 = np.array([0.0, 0.0, 4.0, 2.0, math.pi / 2])
    pts = np.array([[0.0, 0.0], [0.9, 0.0], [1.1, 0.0], [0.0, 1.9], [0.0, 2.1]])
    mask = geometry.points_in_bev_boxes(pts, box5[None])
    # yaw pi/2 swaps the footprint axes: half-extents 1.0 in x, 2.0 in y
    assert mask.tolist() == [True, True, False, True, False]


def test_rotated_nms_identical_boxes():
    boxes = np.array([[0.0, 0.0, 2.0, 1.0, 0.3], [0.0, 0.0, 2.0, 1.0, 0.3]])
    keep = geometry.rotated_nms(boxes, np.array([0.9, 0.95]), 0.5)
    assert keep.tolist() == [1]
