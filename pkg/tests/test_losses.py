from __future__ import annotations

import math

import pytest
import torch

from panseg.config import TrainConfig
from panseg.losses import (detection_loss, focal_loss, panoptic_loss,
                           smooth_l1, total_loss)


def test_uniform_logits_give_log_n_out():
    logits = torch.zeros(1, 63, 4, 4)
    target = torch.randint(0, 63, (1, 4, 4))
    loss = panoptic_loss(logits, target)
    assert float(loss) == pytest.approx(math.log(63), rel=1e-6)
    assert math.log(63) == pytest.approx(4.143, abs=0.001)


def test_confident_correct_logits_drive_loss_to_zero():
    target = torch.randint(0, 5, (1, 6, 6))
    logits = torch.full((1, 5, 6, 6), -100.0)
    logits.scatter_(1, target[:, None], 100.0)
    assert float(panoptic_loss(logits, target)) < 1e-6


def test_loss_positive_and_shape_checked():
    logits = torch.randn(2, 7, 4, 4)
    target = torch.randint(0, 7, (2, 4, 4))
    assert float(panoptic_loss(logits, target)) > 0
    with pytest.raises(ValueError):
        panoptic_loss(logits, torch.randint(0, 7, (2, 5, 4)))


def test_cross_entropy_gradient_matches_finite_differences():
    torch.manual_seed(0)
    logits = torch.randn(1, 5, 2, 2, dtype=torch.float64, requires_grad=True)
    target = torch.randint(0, 5, (1, 2, 2))
    loss = panoptic_loss(logits, target)
    (analytic,) = torch.autograd.grad(loss, logits)

    eps = 1e-6
    numeric = torch.zeros_like(logits)
    flat = logits.detach().reshape(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + eps
        up = float(panoptic_loss(logits.detach(), target))
        flat[i] = orig - eps
        down = float(panoptic_loss(logits.detach(), target))
        flat[i] = orig
        numeric.reshape(-1)[i] = (up - down) / (2 * eps)

    rel = (analytic - numeric).norm() / numeric.norm()
    assert float(rel) < 1e-6


def test_focal_loss_confident_correct_is_small():
    logits = torch.tensor([[20.0, -20.0], [-20.0, 20.0]])
    targets = torch.tensor([[1.0, 0.0], [0.0, 1.0]])
    assert float(focal_loss(logits, targets)) < 1e-6


def test_smooth_l1_quadratic_then_linear():
    beta = 1.0 / 9.0
    small = torch.tensor([beta / 2])
    large = torch.tensor([1.0])
    zero = torch.tensor([0.0])
    assert float(smooth_l1(small, zero)) == pytest.approx(0.5 * (beta / 2) ** 2 / beta)
    assert float(smooth_l1(large, zero)) == pytest.approx(1.0 - 0.5 * beta)


def test_detection_loss_no_positives_has_no_box_term():
    cls_logits = torch.randn(10, 3)
    box_deltas = torch.randn(10, 4)
    cls_targets = torch.zeros(10, 3)
    box_targets = torch.zeros(10, 4)
    labels = torch.zeros(10, dtype=torch.long)  # all negative
    loss = detection_loss(cls_logits, box_deltas, cls_targets, box_targets, labels)
    expected = focal_loss(cls_logits, cls_targets)
    assert float(loss) == pytest.approx(float(expected))


def test_detection_loss_perfect_predictions_near_zero():
    labels = torch.tensor([1, 0, 0, -1])
    cls_targets = torch.tensor([[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
    cls_logits = torch.where(cls_targets > 0, 30.0, -30.0)
    box_targets = torch.randn(4, 4)
    loss = detection_loss(cls_logits, box_targets.clone(), cls_targets,
                          box_targets, labels)
    assert float(loss) < 1e-6


def test_ignored_anchors_excluded():
    labels = torch.tensor([-1, -1])
    cls_targets = torch.zeros(2, 3)
    cls_logits = torch.full((2, 3), 5.0)  # would be a large loss if counted
    loss = detection_loss(cls_logits, torch.zeros(2, 4), cls_targets,
                          torch.zeros(2, 4), labels)
    assert float(loss) == 0.0


def test_total_loss_weighted_sum():
    config = TrainConfig()
    assert total_loss(2.0, 3.0, config) == pytest.approx(4.0)
    zero_det = TrainConfig(lambda_det=0.0)
    assert total_loss(5.0, 3.0, zero_det) == pytest.approx(3.0)
    assert total_loss(0.0, 0.0, config) == 0.0
    assert total_loss(0.0, 7.0, TrainConfig()) == pytest.approx(7.0)
