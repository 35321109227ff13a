"""Distillation losses: feature imitation (Lidar-to-radar and
fusion-to-radar), pseudo-label output supervision, and their weighted sum.

Teacher tensors are detached before any loss so no gradient can reach a
frozen teacher even if a caller forgets to disable grad on its side.
All MSE terms reduce by mean over every element, keeping the loss-weight
defaults independent of grid size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from .errors import ContractViolation, ValidationError
from .frames import Box3D, Detection
from .head import AnchorGrid, HeadOutput, Targets, assign_targets, gt_loss


@dataclass
class DistillConfig:
    """Knobs of the distillation objective."""

    sigma: float = 0.1  # pseudo-label confidence threshold (strict >)
    alpha: float = 3e-4  # weight of the Lidar-feature imitation term
    beta: float = 3e-4  # weight of the fusion-feature imitation term
    use_gt: bool = False  # add a ground-truth loss term (ablations only)
    adapter_kernel: int = 3

    def validate(self) -> "DistillConfig":
        if not (0.0 <= self.sigma <= 1.0):
            raise ValidationError(f"sigma must be in [0, 1], got {self.sigma}")
        if self.alpha < 0.0 or self.beta < 0.0:
            raise ValidationError("alpha and beta must be >= 0")
        if self.adapter_kernel < 1 or self.adapter_kernel % 2 == 0:
            raise ValidationError("adapter_kernel must be odd and >= 1")
        return self


class Adapter(nn.Module):
    """Single same-padding conv layer mapping student feature space toward
    a teacher feature space; supports exact identity initialization."""

    def __init__(self, channels: int, kernel: int = 3, identity_init: bool = True):
        super().__init__()
        if kernel % 2 == 0:
            raise ValidationError("adapter kernel must be odd")
        self.channels = channels
        self.conv = nn.Conv2d(channels, channels, kernel, padding=kernel // 2)
        if identity_init:
            nn.init.dirac_(self.conv.weight)
            nn.init.zeros_(self.conv.bias)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.ndim not in (3, 4) or x.shape[-3] != self.channels:
            raise ContractViolation(
                f"adapter expects {self.channels}-channel maps, "
                f"got {tuple(x.shape)}"
            )
        if x.ndim == 3:
            return self.conv(x.unsqueeze(0))[0]
        return self.conv(x)


def _check_same_shape(a: torch.Tensor, b: torch.Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ContractViolation(
            f"{what}: shapes differ, {tuple(a.shape)} vs {tuple(b.shape)}"
        )


def lrfd_loss(
    student_radar: torch.Tensor,
    teacher_lidar: torch.Tensor,
    adapter_lidar: Adapter,
) -> torch.Tensor:
    """MSE between the adapted student radar map and the teacher's Lidar
    map (detached)."""
    adapted = adapter_lidar(student_radar)
    _check_same_shape(adapted, teacher_lidar, "lidar feature distillation")
    return (adapted - teacher_lidar.detach()).square().mean()


def frfd_loss(
    student_radar: torch.Tensor,
    teacher_fusion: torch.Tensor,
    adapter_to_lidar: Adapter,
    adapter_to_radar: Adapter,
) -> torch.Tensor:
    """MSE between two separately adapted student maps, concatenated on
    channels, and the teacher's fused map (detached)."""
    adapted = torch.cat(
        [adapter_to_lidar(student_radar), adapter_to_radar(student_radar)],
        dim=-3,
    )
    _check_same_shape(adapted, teacher_fusion, "fusion feature distillation")
    return (adapted - teacher_fusion.detach()).square().mean()


def filter_pseudo_labels(detections: list[Detection], sigma: float) -> list[Box3D]:
    """Keep detections with confidence strictly above sigma, strip their
    scores, preserve order."""
    if not (0.0 <= sigma <= 1.0):
        raise ValidationError(f"sigma must be in [0, 1], got {sigma}")
    out = []
    for det in detections:
        if det.score is None:
            raise ContractViolation("pseudo-label filter needs scored detections")
        if det.score > sigma:
            out.append(
                Box3D(center=det.center, size=det.size, yaw=det.yaw,
                      class_id=det.class_id, score=None)
            )
    return out


def ssod_loss(
    student_out: HeadOutput,
    pseudo_labels: list[Box3D],
    anchors: AnchorGrid,
) -> torch.Tensor:
    """Output distillation: the ground-truth losses evaluated against
    teacher pseudo-labels instead of annotations."""
    targets = assign_targets(anchors, pseudo_labels)
    l_cls, l_reg = gt_loss(student_out, targets)
    return l_cls + l_reg


def total_loss(
    l_lrfd: torch.Tensor,
    l_frfd: torch.Tensor,
    l_ssod: torch.Tensor,
    cfg: DistillConfig,
    l_gt: torch.Tensor | None = None,
) -> torch.Tensor:
    """alpha * LRFD + beta * FRFD + SSOD, plus the GT term only when the
    ablation flag asks for it."""
    cfg.validate()
    if cfg.use_gt and l_gt is None:
        raise ContractViolation("use_gt set but no ground-truth loss given")
    components = [l_lrfd, l_frfd, l_ssod] + ([l_gt] if cfg.use_gt else [])
    for value in components:
        scalar = value.detach().item() if isinstance(value, torch.Tensor) else float(value)
        if not math.isfinite(scalar) or scalar < 0.0:
            raise ContractViolation(
                f"loss components must be finite and >= 0, got {scalar}"
            )
    out = cfg.alpha * l_lrfd + cfg.beta * l_frfd + l_ssod
    if cfg.use_gt:
        out = out + l_gt
    return out
