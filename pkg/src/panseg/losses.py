"""Training losses: dense softmax cross-entropy, focal + smooth-L1 detection terms."""
from __future__ import annotations

import torch
import torch.nn.functional as F

from .config import TrainConfig

FOCAL_ALPHA = 0.25
FOCAL_GAMMA = 2.0
SMOOTH_L1_BETA = 1.0 / 9.0


def panoptic_loss(logits: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean per-pixel softmax cross-entropy over all pixels.

    logits: [N, N_out, H, W]; target: [N, H, W] channel indices. The void
    channel is a trained class, never ignored.
    """
    if logits.shape[0] != target.shape[0] or logits.shape[2:] != target.shape[1:]:
        raise ValueError(f"logits {tuple(logits.shape)} and target {tuple(target.shape)} disagree")
    return F.cross_entropy(logits, target, reduction="mean")


def focal_loss(cls_logits: torch.Tensor, cls_targets: torch.Tensor,
               alpha: float = FOCAL_ALPHA, gamma: float = FOCAL_GAMMA) -> torch.Tensor:
    """Sigmoid focal loss summed over entries; cls_targets is 0/1 per class."""
    p = torch.sigmoid(cls_logits)
    ce = F.binary_cross_entropy_with_logits(cls_logits, cls_targets, reduction="none")
    p_t = p * cls_targets + (1 - p) * (1 - cls_targets)
    alpha_t = alpha * cls_targets + (1 - alpha) * (1 - cls_targets)
    return (alpha_t * (1 - p_t) ** gamma * ce).sum()


def smooth_l1(pred: torch.Tensor, target: torch.Tensor, beta: float = SMOOTH_L1_BETA) -> torch.Tensor:
    diff = (pred - target).abs()
    loss = torch.where(diff < beta, 0.5 * diff ** 2 / beta, diff - 0.5 * beta)
    return loss.sum()


def detection_loss(cls_logits: torch.Tensor, box_deltas: torch.Tensor,
                   cls_targets: torch.Tensor, box_targets: torch.Tensor,
                   anchor_labels: torch.Tensor) -> torch.Tensor:
    """Focal classification plus smooth-L1 box regression over one image.

    anchor_labels: 1 positive, 0 negative, -1 ignored. Both terms are
    normalized by the positive-anchor count; with no positives only the
    classification term remains.
    """
    valid = anchor_labels >= 0
    positive = anchor_labels == 1
    n_pos = int(positive.sum().item())
    denom = max(n_pos, 1)

    cls_term = focal_loss(cls_logits[valid], cls_targets[valid]) / denom
    if n_pos == 0:
        return cls_term
    box_term = smooth_l1(box_deltas[positive], box_targets[positive]) / denom
    return cls_term + box_term


def total_loss(loss_det: torch.Tensor | float, loss_pan: torch.Tensor | float,
               config: TrainConfig) -> torch.Tensor | float:
    """Weighted sum of the detection and panoptic terms."""
    return config.lambda_det * loss_det + config.lambda_pan * loss_pan
