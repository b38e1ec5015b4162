"""Collapse pyramid levels P3..P5 into one stride-8 map by elementwise sum."""
from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F

from ..config import ModelConfig
from .backbone import FeaturePyramid, init_conv_weights


class _UpStep(nn.Module):
    """One upsampling step: 3x3 conv + ReLU, then 2x bilinear upsampling."""

    def __init__(self, channels: int):
        super().__init__()
        # Bias-free so an all-zero level contributes exactly zero to the sum.
        self.conv = nn.Conv2d(channels, channels, 3, padding=1, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = F.relu(self.conv(x))
        return F.interpolate(x, scale_factor=2, mode="bilinear", align_corners=False)


class FeatureMerge(nn.Module):
    """S = S3 + S4 + S5 where S4/S5 are upsampled back to stride 8."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        ch = config.f_dim
        self.conv3 = nn.Conv2d(ch, ch, 3, padding=1, bias=False)
        self.up4 = _UpStep(ch)
        self.up5 = nn.Sequential(_UpStep(ch), _UpStep(ch))
        init_conv_weights(self)

    def branches(self, p3: torch.Tensor, p4: torch.Tensor, p5: torch.Tensor):
        s3 = F.relu(self.conv3(p3))
        s4 = self.up4(p4)
        s5 = self.up5(p5)
        return s3, s4, s5

    def forward(self, pyramid: FeaturePyramid) -> torch.Tensor:
        s3, s4, s5 = self.branches(pyramid.p3, pyramid.p4, pyramid.p5)
        if s3.shape != s4.shape or s3.shape != s5.shape:
            raise RuntimeError(
                f"merge branch shapes disagree: {tuple(s3.shape)} vs {tuple(s4.shape)} "
                f"vs {tuple(s5.shape)}; stride arithmetic is broken")
        return s3 + s4 + s5
