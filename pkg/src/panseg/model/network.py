"""Full network assembly: backbone, feature merge, panoptic head, detector."""
from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from ..config import ModelConfig
from .backbone import ConvBackbone, FeaturePyramid
from .detector import AnchorDetector
from .head import PanopticHead
from .merge import FeatureMerge


class PanopticNet(nn.Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.backbone = ConvBackbone(config)
        self.merge = FeatureMerge(config)
        self.head = PanopticHead(config)
        self.detector = AnchorDetector(config)

    def forward_features(self, images: torch.Tensor) -> tuple[FeaturePyramid, torch.Tensor]:
        pyramid = self.backbone(images)
        return pyramid, self.merge(pyramid)

    def forward(self, images: torch.Tensor, masks: torch.Tensor) -> torch.Tensor:
        """Panoptic logits for already-padded, normalized image tensors."""
        _, features = self.forward_features(images)
        return self.head(features, masks)

    @staticmethod
    def to_tensor(images: np.ndarray) -> torch.Tensor:
        """[N, H, W, 3] or [H, W, 3] float array to an NCHW tensor."""
        if images.ndim == 3:
            images = images[None]
        return torch.from_numpy(np.ascontiguousarray(images.transpose(0, 3, 1, 2))).float()
