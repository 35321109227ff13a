import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sckd.errors import ContractViolation, ValidationError
from sckd.frames import Modality, PointCloudFrame
from sckd.voxel import VoxelGridSpec, VoxelSet, scatter_voxels, voxelize

GRID = VoxelGridSpec(
    range_min=(0.0, -2.0, -1.0),
    range_max=(4.0, 2.0, 1.0),
    voxel_size=(0.5, 0.5, 0.5),
    max_points_per_voxel=5,
)


def lidar_frame(points):
    return PointCloudFrame(
        frame_id=0, modality=Modality.LIDAR,
        points=np.asarray(points, dtype=np.float64),
    )


def test_grid_dims():
    assert GRID.dims == (4, 8, 8)
    assert GRID.bev_shape == (8, 8)


def test_grid_validation():
    with pytest.raises(ValidationError):
        VoxelGridSpec((0, 0, 0), (1, 1, 1), (0.3, 0.5, 0.5)).validate()
    with pytest.raises(ValidationError):
        VoxelGridSpec((0, 0, 0), (0, 1, 1), (0.5, 0.5, 0.5)).validate()


def test_singleton_voxel_keeps_feature():
    frame = lidar_frame([[0.1, -1.9, -0.9, 0.7]])
    vs = voxelize(frame, GRID)
    assert len(vs) == 1
    assert vs.coords.tolist() == [[0, 0, 0]]
    np.testing.assert_allclose(vs.features[0], [0.1, -1.9, -0.9, 0.7])


def test_mean_of_two_points():
    frame = lidar_frame([[0.1, 0.1, 0.1, 0.2], [0.2, 0.2, 0.2, 0.6]])
    vs = voxelize(frame, GRID)
    assert len(vs) == 1
    assert vs.features[0, 3] == pytest.approx(0.4)


def test_out_of_range_dropped():
    frame = lidar_frame([[0.1, 0.1, 0.1, 1.0], [4.1, 0.1, 0.1, 1.0]])
    vs = voxelize(frame, GRID)
    assert len(vs) == 1
    # boundary: a point exactly at range_max is out
    frame2 = lidar_frame([[4.0, 0.1, 0.1, 1.0]])
    assert len(voxelize(frame2, GRID)) == 0


def test_cap_truncates_in_input_order():
    pts = [[0.1, 0.1, 0.1, float(i)] for i in range(8)]
    vs = voxelize(lidar_frame(pts), GRID)
    assert len(vs) == 1
    assert vs.features[0, 3] == pytest.approx(np.mean([0, 1, 2, 3, 4]))


def test_coords_sorted_lexicographically_zyx():
    rng = np.random.default_rng(0)
    pts = np.column_stack(
        [
            rng.uniform(0, 4, 200),
            rng.uniform(-2, 2, 200),
            rng.uniform(-1, 1, 200),
            rng.uniform(0, 1, 200),
        ]
    )
    vs = voxelize(lidar_frame(pts), GRID)
    order = np.lexsort((vs.coords[:, 2], vs.coords[:, 1], vs.coords[:, 0]))
    assert np.array_equal(order, np.arange(len(vs)))


def test_empty_frame():
    vs = voxelize(lidar_frame(np.zeros((0, 4))), GRID)
    assert len(vs) == 0
    dense = scatter_voxels(vs)
    assert dense.shape == (4, 4, 8, 8)
    assert not dense.any()


@settings(max_examples=30, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.floats(0.0, 3.99, allow_nan=False),
            st.floats(-1.99, 1.99, allow_nan=False),
            st.floats(-0.99, 0.99, allow_nan=False),
            st.floats(0.0, 1.0, allow_nan=False),
        ),
        min_size=1,
        max_size=30,
    ),
    st.randoms(use_true_random=False),
)
def test_permutation_invariance_below_cap(points, rnd):
    grid = VoxelGridSpec(
        range_min=(0.0, -2.0, -1.0),
        range_max=(4.0, 2.0, 1.0),
        voxel_size=(0.5, 0.5, 0.5),
        max_points_per_voxel=100,
    )
    base = voxelize(lidar_frame(points), grid)
    shuffled = list(points)
    rnd.shuffle(shuffled)
    other = voxelize(lidar_frame(shuffled), grid)
    assert np.array_equal(base.coords, other.coords)
    np.testing.assert_allclose(base.features, other.features, atol=1e-12)


def test_scatter_center_relative():
    frame = lidar_frame([[0.3, -1.8, -0.8, 0.5]])
    vs = voxelize(frame, GRID)
    dense = scatter_voxels(vs)
    assert dense.shape == (4, 4, 8, 8)
    # voxel (0,0,0) center is (0.25, -1.75, -0.75)
    np.testing.assert_allclose(
        dense[:, 0, 0, 0], [0.3 - 0.25, -1.8 + 1.75, -0.8 + 0.75, 0.5],
        atol=1e-12,
    )


def test_scatter_rejects_out_of_grid_coords():
    vs = voxelize(lidar_frame([[0.1, 0.1, 0.1, 1.0]]), GRID)
    bad = VoxelSet(
        coords=np.array([[9, 0, 0]], dtype=np.int32),
        features=vs.features,
        grid=GRID,
        modality=Modality.LIDAR,
    )
    with pytest.raises(ContractViolation):
        scatter_voxels(bad)
