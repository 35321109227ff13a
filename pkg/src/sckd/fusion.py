"""Adaptive fusion of the teacher's Lidar and radar BEV features.

The module has two parts: a Bernoulli dropout gate that zeroes one
modality's features during training (never both), and an adaptive
weighting branch that turns pooled descriptors of both maps into
per-channel softmax weights.  Gates are applied before pooling, so a
dropped modality contributes a zero descriptor to the weighting branch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import ContractViolation, ValidationError


@dataclass
class GateState:
    """Binary keep-gates for (lidar, radar) plus the uniform draws that
    produced them (absent in eval mode)."""

    g_lidar: int
    g_radar: int
    p1: float | None = None
    p2: float | None = None

    @classmethod
    def keep_both(cls) -> "GateState":
        return cls(g_lidar=1, g_radar=1)

    def validate(self) -> "GateState":
        if self.g_lidar not in (0, 1) or self.g_radar not in (0, 1):
            raise ValidationError("gates must be 0 or 1")
        if self.g_lidar == 0 and self.g_radar == 0:
            raise ValidationError("at most one modality may be dropped")
        return self


def dropout_gate(af: "AdaptiveFusion", rng: np.random.Generator) -> GateState:
    """Draw one gate state.

    In training mode two uniforms are always consumed: the first decides
    whether any modality drops at all, the second picks which one.  In
    eval mode no randomness is consumed and both gates stay on.
    """
    if not af.training:
        return GateState.keep_both()
    p1 = float(rng.random())
    p2 = float(rng.random())
    if p1 > af.p_drop:
        g_lidar, g_radar = 1, 1
    elif p2 <= af.p_l_drop:
        g_lidar, g_radar = 0, 1
    else:
        g_lidar, g_radar = 1, 0
    return GateState(g_lidar=g_lidar, g_radar=g_radar, p1=p1, p2=p2).validate()


class AdaptiveFusion(nn.Module):
    """Per-channel (or optionally scalar) softmax weighting of two
    equally-shaped BEV maps, concatenated to a 2C-channel output."""

    def __init__(
        self,
        channels: int,
        p_drop: float = 0.2,
        p_l_drop: float = 0.2,
        scalar_weights: bool = False,
    ):
        super().__init__()
        if not (0.0 <= p_drop <= 1.0 and 0.0 <= p_l_drop <= 1.0):
            raise ValidationError("dropout probabilities must be in [0, 1]")
        self.channels = channels
        self.p_drop = p_drop
        self.p_l_drop = p_l_drop
        self.scalar_weights = scalar_weights
        logits_dim = 2 if scalar_weights else 2 * channels
        self.conv = nn.Conv2d(2 * channels, logits_dim, 1)
        self.bn = nn.BatchNorm2d(logits_dim)

    def init_symmetric_(self) -> "AdaptiveFusion":
        """Tie the weighting branch so identical inputs yield 0.5/0.5.

        The conv weight becomes block-symmetric under swapping the lidar
        and radar halves of the descriptor, and the affine/bias terms are
        shared between the two logit halves.
        """
        with torch.no_grad():
            c = self.channels
            w = self.conv.weight  # (logits, 2C, 1, 1)
            half = w[: w.shape[0] // 2].clone()
            a = half[:, :c]
            b = half[:, c:]
            w[: w.shape[0] // 2, :c] = a
            w[: w.shape[0] // 2, c:] = b
            w[w.shape[0] // 2 :, :c] = b
            w[w.shape[0] // 2 :, c:] = a
            bias_half = self.conv.bias[: w.shape[0] // 2].clone()
            self.conv.bias[w.shape[0] // 2 :] = bias_half
            half_dim = self.bn.num_features // 2
            for t in (self.bn.weight, self.bn.bias, self.bn.running_mean,
                      self.bn.running_var):
                t[half_dim:] = t[:half_dim]
        return self

    def _check_shapes(self, f_lidar: torch.Tensor, f_radar: torch.Tensor) -> None:
        if f_lidar.shape != f_radar.shape:
            raise ContractViolation(
                f"fusion inputs must share shape, got {tuple(f_lidar.shape)} "
                f"vs {tuple(f_radar.shape)}"
            )
        if f_lidar.ndim != 4 or f_lidar.shape[1] != self.channels:
            raise ContractViolation(
                f"fusion expects (B, {self.channels}, H, W), "
                f"got {tuple(f_lidar.shape)}"
            )

    def _batch_norm(self, x: torch.Tensor) -> torch.Tensor:
        """BatchNorm2d semantics, but tolerant of batch size 1 in training
        (nn.BatchNorm2d rejects a single value per channel; the pooled
        descriptor here is 1x1 so that case is a zero-variance batch)."""
        bn = self.bn
        if self.training:
            dims = (0, 2, 3)
            mean = x.mean(dim=dims)
            var = x.var(dim=dims, unbiased=False)
            n = x.numel() // x.shape[1]
            with torch.no_grad():
                momentum = bn.momentum if bn.momentum is not None else 0.1
                unbiased = (
                    var.detach() * n / (n - 1) if n > 1 else torch.zeros_like(var)
                )
                bn.running_mean.mul_(1 - momentum).add_(momentum * mean.detach())
                bn.running_var.mul_(1 - momentum).add_(momentum * unbiased)
                bn.num_batches_tracked += 1
        else:
            mean, var = bn.running_mean, bn.running_var
        x_hat = (x - mean[None, :, None, None]) / torch.sqrt(
            var[None, :, None, None] + bn.eps
        )
        return x_hat * bn.weight[None, :, None, None] + bn.bias[None, :, None, None]

    def adaptive_weights(self, f_lidar: torch.Tensor, f_radar: torch.Tensor):
        """Softmax weights (W_L, W_R), each (B, C, 1, 1) (or (B, 1, 1, 1)
        in scalar mode), normalized across the modality axis."""
        self._check_shapes(f_lidar, f_radar)
        mix = torch.cat(
            [
                f_lidar.mean(dim=(2, 3), keepdim=True),
                f_radar.mean(dim=(2, 3), keepdim=True),
            ],
            dim=1,
        )
        logits = self._batch_norm(self.conv(mix))
        b = logits.shape[0]
        per_modality = logits.reshape(b, 2, -1, 1, 1)
        weights = torch.softmax(per_modality, dim=1)
        return weights[:, 0], weights[:, 1]

    def fuse(
        self,
        f_lidar: torch.Tensor,
        f_radar: torch.Tensor,
        gate: GateState | None = None,
    ) -> torch.Tensor:
        """Gated, weighted concatenation to (B, 2C, H, W).

        Eval mode forces both gates on and batch norm uses its running
        statistics, so the output is a deterministic function of the
        inputs and parameters.
        """
        self._check_shapes(f_lidar, f_radar)
        if gate is None or not self.training:
            gate = GateState.keep_both()
        gate.validate()
        gl = f_lidar * float(gate.g_lidar)
        gr = f_radar * float(gate.g_radar)
        w_lidar, w_radar = self.adaptive_weights(gl, gr)
        return torch.cat([w_lidar * gl, w_radar * gr], dim=1)
