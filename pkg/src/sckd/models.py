"""Teacher (Lidar+radar fusion) and student (radar-only) networks."""

from __future__ import annotations

import torch
from torch import nn

from .errors import ValidationError
from .frames import FEATURES_PER_MODALITY, Modality
from .fusion import AdaptiveFusion, GateState
from .head import AnchorConfig, AnchorGrid, DetectionHead, HeadOutput
from .networks import BEVEncoder, EncoderParams, Ms2dParams, Multiscale2D
from .voxel import VoxelGridSpec


def _hw_stride(params: EncoderParams) -> int:
    sh = sw = 1
    for stride in params.strides:
        sh *= stride[1]
        sw *= stride[2]
    if sh != sw:
        raise ValidationError("encoder H/W strides must agree for square anchors")
    return sh


def build_anchor_grid(
    grid: VoxelGridSpec,
    encoder: EncoderParams,
    ms2d: Ms2dParams,
    anchors: AnchorConfig,
) -> AnchorGrid:
    return AnchorGrid(grid, _hw_stride(encoder) * ms2d.stride, anchors)


class TeacherNet(nn.Module):
    """Two encoder branches, adaptive fusion, 2D block, detection head."""

    def __init__(
        self,
        lidar_grid: VoxelGridSpec,
        radar_grid: VoxelGridSpec,
        encoder: EncoderParams,
        ms2d: Ms2dParams,
        anchors: AnchorConfig,
        p_drop: float = 0.2,
        p_l_drop: float = 0.2,
        scalar_weights: bool = False,
    ):
        super().__init__()
        if lidar_grid.dims != radar_grid.dims:
            raise ValidationError("teacher branch grids must share geometry")
        self.lidar_encoder = BEVEncoder(
            lidar_grid, FEATURES_PER_MODALITY[Modality.LIDAR], encoder
        )
        self.radar_encoder = BEVEncoder(
            radar_grid, FEATURES_PER_MODALITY[Modality.RADAR], encoder
        )
        self.af = AdaptiveFusion(
            encoder.bev_channels, p_drop=p_drop, p_l_drop=p_l_drop,
            scalar_weights=scalar_weights,
        )
        self.ms2d = Multiscale2D(2 * encoder.bev_channels, ms2d)
        self.head = DetectionHead(
            ms2d.out_channels, len(anchors.per_class), len(anchors.yaws)
        )

    def forward(
        self,
        lidar_dense: torch.Tensor,
        radar_dense: torch.Tensor,
        gate: GateState | None = None,
    ) -> dict:
        f_lidar = self.lidar_encoder(lidar_dense)
        f_radar = self.radar_encoder(radar_dense)
        f_fusion = self.af.fuse(f_lidar, f_radar, gate)
        feats = self.ms2d(f_fusion)
        cls, box = self.head(feats)
        return {
            "f_lidar": f_lidar,
            "f_radar": f_radar,
            "f_fusion": f_fusion,
            "cls": cls,
            "box": box,
        }


class StudentNet(nn.Module):
    """Radar-only branch with the same encoder/head family."""

    def __init__(
        self,
        radar_grid: VoxelGridSpec,
        encoder: EncoderParams,
        ms2d: Ms2dParams,
        anchors: AnchorConfig,
    ):
        super().__init__()
        self.radar_encoder = BEVEncoder(
            radar_grid, FEATURES_PER_MODALITY[Modality.RADAR], encoder
        )
        self.ms2d = Multiscale2D(encoder.bev_channels, ms2d)
        self.head = DetectionHead(
            ms2d.out_channels, len(anchors.per_class), len(anchors.yaws)
        )

    def forward(self, radar_dense: torch.Tensor) -> dict:
        f_radar = self.radar_encoder(radar_dense)
        feats = self.ms2d(f_radar)
        cls, box = self.head(feats)
        return {"f_radar": f_radar, "cls": cls, "box": box}


def head_output_for_frame(outputs: dict, index: int) -> HeadOutput:
    """Slice one frame's HeadOutput out of a batched forward result."""
    return HeadOutput(
        cls_logits=outputs["cls"][index], box_deltas=outputs["box"][index]
    )
