"""Dense BEV encoder and the downstream 2D block.

The encoder replaces a sparse 3D convolution stack with ordinary dense 3D
convolutions over the scattered voxel tensor, then folds the remaining z
cells into channels.  Same input/output contract, no sparse kernels.
Encoder convolutions carry no bias so an empty sweep maps to an exactly
zero feature map.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

from .errors import ContractViolation, ValidationError
from .voxel import BEVFeatureMap, VoxelGridSpec, VoxelSet, scatter_voxels


@dataclass
class EncoderParams:
    """Stage widths/kernels/strides for the 3D stack plus the BEV channel
    count after z-folding (must match across teacher branches and student)."""

    channels: tuple[int, ...] = (16, 16)
    kernels: tuple[int, ...] = (3, 3)
    strides: tuple[tuple[int, int, int], ...] = ((1, 1, 1), (2, 2, 2))
    bev_channels: int = 32

    def validate(self) -> "EncoderParams":
        if not (len(self.channels) == len(self.kernels) == len(self.strides)):
            raise ValidationError("encoder stage lists must have equal length")
        if any(c < 1 for c in self.channels):
            raise ValidationError("encoder channels must be >= 1")
        if any(k < 1 or k % 2 == 0 for k in self.kernels):
            raise ValidationError("encoder kernels must be odd and >= 1")
        if any(s < 1 for stride in self.strides for s in stride):
            raise ValidationError("encoder strides must be >= 1")
        return self


def _out_dim(n: int, stride: int) -> int:
    return (n - 1) // stride + 1


class BEVEncoder(nn.Module):
    """Voxel tensor (B, F, D, H, W) -> BEV features (B, C, H', W')."""

    def __init__(self, grid: VoxelGridSpec, in_channels: int, params: EncoderParams):
        super().__init__()
        params.validate()
        grid.validate()
        self.grid = grid
        self.params = params
        self.in_channels = in_channels

        d, h, w = grid.dims
        convs = []
        prev = in_channels
        for ch, k, stride in zip(params.channels, params.kernels, params.strides):
            convs.append(
                nn.Conv3d(prev, ch, k, stride=stride, padding=k // 2, bias=False)
            )
            prev = ch
            d, h, w = (_out_dim(d, stride[0]), _out_dim(h, stride[1]),
                       _out_dim(w, stride[2]))
        self.convs = nn.ModuleList(convs)
        self.out_depth = d
        self.bev_shape = (h, w)
        if prev * d != params.bev_channels:
            raise ValidationError(
                f"bev_channels {params.bev_channels} != last stage width {prev} "
                f"times folded depth {d}"
            )

    @property
    def dtype(self) -> torch.dtype:
        return self.convs[0].weight.dtype

    def forward(self, dense: torch.Tensor) -> torch.Tensor:
        if dense.ndim != 5 or dense.shape[1] != self.in_channels:
            raise ContractViolation(
                f"encoder expects (B, {self.in_channels}, D, H, W), "
                f"got {tuple(dense.shape)}"
            )
        x = dense
        for conv in self.convs:
            x = torch.relu(conv(x))
        b = x.shape[0]
        return x.reshape(b, self.params.bev_channels, *self.bev_shape)

    def pre_stride_features(self, dense: torch.Tensor) -> torch.Tensor:
        """Activations after the stride-1 prefix of the stack (used to
        check translation equivariance ahead of any downsampling)."""
        x = dense
        for conv, stride in zip(self.convs, self.params.strides):
            if any(s > 1 for s in stride):
                break
            x = torch.relu(conv(x))
        return x

    def encode(self, voxels: VoxelSet) -> BEVFeatureMap:
        """Single-frame convenience wrapper around forward()."""
        if voxels.grid.dims != self.grid.dims:
            raise ContractViolation("voxel set grid does not match encoder grid")
        dense = scatter_voxels(voxels)
        x = torch.from_numpy(dense).to(self.dtype).unsqueeze(0)
        out = self.forward(x)[0]
        return BEVFeatureMap(data=out, grid=self.grid, modality=voxels.modality)


@dataclass
class Ms2dParams:
    hidden: int = 32
    out_channels: int = 32
    stride: int = 1
    bias: bool = True

    def validate(self) -> "Ms2dParams":
        if self.hidden < 1 or self.out_channels < 1 or self.stride < 1:
            raise ValidationError("ms2d dims and stride must be >= 1")
        return self


class Multiscale2D(nn.Module):
    """Small 2D CNN between the (fused) BEV features and the head."""

    def __init__(self, in_channels: int, params: Ms2dParams):
        super().__init__()
        params.validate()
        self.in_channels = in_channels
        self.params = params
        self.conv1 = nn.Conv2d(in_channels, params.hidden, 3,
                               stride=params.stride, padding=1, bias=params.bias)
        self.conv2 = nn.Conv2d(params.hidden, params.out_channels, 3,
                               padding=1, bias=params.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ContractViolation(
                f"ms2d expects (B, {self.in_channels}, H, W), got {tuple(x.shape)}"
            )
        x = torch.relu(self.conv1(x))
        return torch.relu(self.conv2(x))


def frame_to_dense(frame_points_dense: np.ndarray, dtype: torch.dtype) -> torch.Tensor:
    """ndarray (F, D, H, W) -> torch tensor with a leading batch axis."""
    return torch.from_numpy(frame_points_dense).to(dtype).unsqueeze(0)
