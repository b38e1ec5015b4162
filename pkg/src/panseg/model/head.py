"""The panoptic head: mask-conditioned dense classification over N_out channels."""
from __future__ import annotations

import torch
import torch.nn as nn

from ..config import ModelConfig
from .backbone import init_conv_weights


def _conv_bn_relu(in_ch: int, out_ch: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, 3, padding=1, bias=False),
        nn.BatchNorm2d(out_ch),
        nn.ReLU(inplace=True),
    )


class PanopticHead(nn.Module):
    """Concatenate attention masks to the feature map, classify every pixel.

    One merging 3x3 conv absorbs the concatenated [masks, features] stack,
    four more 3x3 convs follow, and a final 1x1 conv emits
    N_out = N_att + N_stuff + 2 raw logits per pixel. Channel layout:
    [0, N_att) mask slots, then stuff classes, then unmatched-things, then
    unlabeled.
    """

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.n_att = config.n_att
        self.n_out = config.n_out
        width = config.head_width
        self.merge = _conv_bn_relu(config.n_att + config.f_dim, width)
        self.tower = nn.Sequential(*[_conv_bn_relu(width, width) for _ in range(4)])
        self.classifier = nn.Conv2d(width, self.n_out, 1)
        init_conv_weights(self)

    def forward(self, features: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
        """features: [N, F_dim, H, W]; masks: [N, N_att, H, W] scaled to [0, C_att]."""
        if masks.shape[1] != self.n_att:
            raise ValueError(f"expected {self.n_att} mask channels, got {masks.shape[1]}")
        if masks.shape[2:] != features.shape[2:]:
            raise ValueError(
                f"masks {tuple(masks.shape[2:])} not aligned with features "
                f"{tuple(features.shape[2:])}")
        x = torch.cat([masks, features], dim=1)
        x = self.merge(x)
        x = self.tower(x)
        return self.classifier(x)
