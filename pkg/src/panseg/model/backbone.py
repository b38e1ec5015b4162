"""Plain strided conv backbone producing a five-level feature pyramid."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from ..config import ModelConfig

PYRAMID_STRIDES = (8, 16, 32, 64, 128)


@dataclass
class FeaturePyramid:
    """Levels P3..P7 at strides {8, 16, 32, 64, 128}, all with F_dim channels."""

    p3: torch.Tensor
    p4: torch.Tensor
    p5: torch.Tensor
    p6: torch.Tensor
    p7: torch.Tensor

    def levels(self) -> tuple[torch.Tensor, ...]:
        return (self.p3, self.p4, self.p5, self.p6, self.p7)


def init_conv_weights(module: nn.Module) -> None:
    """Truncated-normal (std 0.01) conv weights, zero biases."""
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            nn.init.trunc_normal_(m.weight, std=0.01)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def _conv_bn_relu(in_ch: int, out_ch: int, stride: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1, bias=False),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(inplace=True),
    )


class ConvBackbone(nn.Module):
    """Stride-2 conv blocks from RGB input down to stride 128.

    The stem reaches stride 4; five further stages emit P3..P7 with a shared
    channel depth. `backbone_depth` adds stride-1 convs per stage.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        width, f_dim = config.backbone_width, config.f_dim
        self.pad_multiple = config.pad_multiple
        self.stem = nn.Sequential(
            _conv_bn_relu(3, width, stride=2),
            _conv_bn_relu(width, width, stride=2),
        )
        stages = []
        in_ch = width
        for _ in PYRAMID_STRIDES:
            blocks = [_conv_bn_relu(in_ch, f_dim, stride=2)]
            blocks += [_conv_bn_relu(f_dim, f_dim, stride=1) for _ in range(config.backbone_depth - 1)]
            stages.append(nn.Sequential(*blocks))
            in_ch = f_dim
        self.stages = nn.ModuleList(stages)
        init_conv_weights(self)

    def forward(self, images: torch.Tensor) -> FeaturePyramid:
        if images.ndim != 4 or images.shape[1] != 3:
            raise ValueError(f"expected [N, 3, H, W] input, got {tuple(images.shape)}")
        _, _, h, w = images.shape
        if h < 1 or w < 1:
            raise ValueError("input image has zero spatial extent")
        if h % self.pad_multiple or w % self.pad_multiple:
            raise ValueError(
                f"input size {(h, w)} must be a multiple of {self.pad_multiple}; pad first")
        x = self.stem(images)
        levels = []
        for stage in self.stages:
            x = stage(x)
            levels.append(x)
        return FeaturePyramid(*levels)


def pad_to_multiple(image: np.ndarray, multiple: int) -> np.ndarray:
    """Zero-pad an [H, W, C] image on the bottom/right to a size multiple."""
    h, w = image.shape[:2]
    ph = (multiple - h % multiple) % multiple
    pw = (multiple - w % multiple) % multiple
    if ph == 0 and pw == 0:
        return image
    return np.pad(image, ((0, ph), (0, pw), (0, 0)))


def normalize_image(image: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Standardize each channel to zero mean, unit variance."""
    image = image.astype(np.float32)
    mean = image.mean(axis=(0, 1), keepdims=True)
    std = image.std(axis=(0, 1), keepdims=True)
    return (image - mean) / (std + eps)
