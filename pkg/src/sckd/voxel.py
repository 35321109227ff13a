"""Voxel grid types and point-cloud voxelization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, ValidationError
from .frames import Modality, PointCloudFrame


@dataclass
class VoxelGridSpec:
    """Axis-aligned voxel grid; ranges must be exact multiples of the
    voxel size on every axis."""

    range_min: tuple[float, float, float]
    range_max: tuple[float, float, float]
    voxel_size: tuple[float, float, float]
    max_points_per_voxel: int = 5

    def validate(self) -> "VoxelGridSpec":
        for axis in range(3):
            if self.range_max[axis] <= self.range_min[axis]:
                raise ValidationError(f"range_max <= range_min on axis {axis}")
            if self.voxel_size[axis] <= 0.0:
                raise ValidationError(f"voxel_size <= 0 on axis {axis}")
            extent = self.range_max[axis] - self.range_min[axis]
            cells = extent / self.voxel_size[axis]
            if abs(cells - round(cells)) > 1e-6:
                raise ValidationError(
                    f"extent {extent} on axis {axis} is not an integer "
                    f"multiple of voxel_size {self.voxel_size[axis]}"
                )
        if self.max_points_per_voxel < 1:
            raise ValidationError("max_points_per_voxel must be >= 1")
        return self

    @property
    def dims(self) -> tuple[int, int, int]:
        """Grid cell counts as (nz, ny, nx)."""
        n = [
            int(round((self.range_max[i] - self.range_min[i]) / self.voxel_size[i]))
            for i in range(3)
        ]
        return (n[2], n[1], n[0])

    @property
    def bev_shape(self) -> tuple[int, int]:
        nz, ny, nx = self.dims
        return (ny, nx)

    def voxel_centers(self, coords: np.ndarray) -> np.ndarray:
        """Centers (V, 3) in (x, y, z) order for (V, 3) coords in (z, y, x)."""
        out = np.empty((len(coords), 3), dtype=np.float64)
        for world_axis, coord_col in ((0, 2), (1, 1), (2, 0)):
            out[:, world_axis] = (
                self.range_min[world_axis]
                + (coords[:, coord_col] + 0.5) * self.voxel_size[world_axis]
            )
        return out


@dataclass
class VoxelSet:
    """Sparse voxelization result: integer coords in (z, y, x) order,
    lexicographically sorted, with the mean feature of up to
    ``max_points_per_voxel`` member points each."""

    coords: np.ndarray  # (V, 3) int32, columns (z, y, x)
    features: np.ndarray  # (V, F) float64
    grid: VoxelGridSpec
    modality: Modality

    def __len__(self) -> int:
        return len(self.coords)


@dataclass
class BEVFeatureMap:
    """Channels-first BEV tensor with its grid geometry attached."""

    data: "object"  # (C, H, W) torch tensor or ndarray
    grid: VoxelGridSpec
    modality: Modality


def voxelize(frame: PointCloudFrame, grid: VoxelGridSpec) -> VoxelSet:
    """Bucket points into grid cells and average their features.

    Out-of-range points are dropped.  Within a cell, only the first
    ``max_points_per_voxel`` points in input order contribute, so the
    result is deterministic under the cap and permutation-invariant
    below it.
    """
    grid.validate()
    points = np.asarray(frame.points, dtype=np.float64)
    nz, ny, nx = grid.dims
    if len(points) == 0:
        return VoxelSet(
            coords=np.zeros((0, 3), dtype=np.int32),
            features=np.zeros((0, points.shape[1] if points.ndim == 2 else 0)),
            grid=grid,
            modality=frame.modality,
        )

    rel = (points[:, :3] - np.asarray(grid.range_min)) / np.asarray(grid.voxel_size)
    idx = np.floor(rel).astype(np.int64)
    in_range = (
        (idx[:, 0] >= 0) & (idx[:, 0] < nx)
        & (idx[:, 1] >= 0) & (idx[:, 1] < ny)
        & (idx[:, 2] >= 0) & (idx[:, 2] < nz)
    )
    idx = idx[in_range]
    feats = points[in_range]
    if len(idx) == 0:
        return VoxelSet(
            coords=np.zeros((0, 3), dtype=np.int32),
            features=np.zeros((0, points.shape[1])),
            grid=grid,
            modality=frame.modality,
        )

    # linear id in (z, y, x) lexicographic order
    linear = (idx[:, 2] * ny + idx[:, 1]) * nx + idx[:, 0]
    order = np.argsort(linear, kind="stable")  # stable keeps input order per voxel
    linear_sorted = linear[order]
    uniq, first, counts = np.unique(
        linear_sorted, return_index=True, return_counts=True
    )
    # rank of each point within its voxel, in input order
    rank = np.arange(len(linear_sorted)) - np.repeat(first, counts)
    keep = rank < grid.max_points_per_voxel
    kept_feats = feats[order][keep]
    kept_voxel = np.repeat(np.arange(len(uniq)), counts)[keep]

    sums = np.zeros((len(uniq), feats.shape[1]), dtype=np.float64)
    np.add.at(sums, kept_voxel, kept_feats)
    kept_counts = np.minimum(counts, grid.max_points_per_voxel)
    means = sums / kept_counts[:, None]

    zs = uniq // (ny * nx)
    ys = (uniq // nx) % ny
    xs = uniq % nx
    coords = np.stack([zs, ys, xs], axis=1).astype(np.int32)
    return VoxelSet(coords=coords, features=means, grid=grid,
                    modality=frame.modality)


def scatter_voxels(voxels: VoxelSet, center_relative: bool = True) -> np.ndarray:
    """Densify a VoxelSet to (F, D, H, W) float64.

    With ``center_relative`` the xyz feature columns become offsets from
    each voxel's center, which makes the dense tensor equivariant under
    whole-pitch translations of the input cloud.
    """
    grid = voxels.grid
    nz, ny, nx = grid.dims
    n_feat = voxels.features.shape[1]
    dense = np.zeros((n_feat, nz, ny, nx), dtype=np.float64)
    if len(voxels) == 0:
        return dense
    coords = voxels.coords
    if (
        coords.min() < 0
        or (coords[:, 0] >= nz).any()
        or (coords[:, 1] >= ny).any()
        or (coords[:, 2] >= nx).any()
    ):
        raise ContractViolation("voxel coordinates outside grid dimensions")
    feats = voxels.features.copy()
    if center_relative:
        feats[:, :3] -= grid.voxel_centers(coords)
    dense[:, coords[:, 0], coords[:, 1], coords[:, 2]] = feats.T
    return dense
