"""SGD training loop with the polynomial schedule, matching and target building."""
from __future__ import annotations

import json
import logging
import random
from pathlib import Path

import numpy as np
import torch

from .checkpoint import save_weights
from .config import RunConfig
from .losses import detection_loss, panoptic_loss, total_loss
from .masks import generate_masks, make_hard_masks, shuffle_masks
from .matching import match_masks
from .metrics import PQReport, aggregate_reports, compute_pq
from .model import OracleDetector, PanopticNet, normalize_image, pad_to_multiple
from .model.detector import assign_anchors, encode_deltas
from .pipeline import PanopticPredictor
from .structures import Sample
from .targets import build_target, downsample_labels

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


def seed_all(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % 2 ** 32)
    torch.manual_seed(seed)


def polynomial_lr(step: int, total_steps: int, lr0: float, power: float) -> float:
    """lr(step) = lr0 * (1 - step/total)^power."""
    frac = min(max(step / total_steps, 0.0), 1.0)
    return lr0 * (1.0 - frac) ** power


class MetricsLog:
    """Line-delimited JSON records of training progress."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._fh = open(self.path, "w")

    def write(self, record: dict) -> None:
        self._fh.write(json.dumps(record) + "\n")
        self._fh.flush()

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()


def _prepare_sample(sample: Sample, config: RunConfig):
    """Pad image and labels to the backbone's size multiple."""
    model_cfg = config.model
    padded_image = pad_to_multiple(normalize_image(sample.image), model_cfg.pad_multiple)
    padded_panoptic = sample.panoptic.pad_to(*padded_image.shape[:2])
    feat_h = padded_image.shape[0] // model_cfg.feature_stride
    feat_w = padded_image.shape[1] // model_cfg.feature_stride
    return padded_image, padded_panoptic, (feat_h, feat_w)


def _masks_and_target(sample: Sample, detections, padded_panoptic, feature_hw,
                      config: RunConfig, rng: np.random.Generator):
    build = make_hard_masks if config.hard_masks else generate_masks
    stack = build(detections, *feature_hw, config.model)
    if config.shuffle:
        stack = shuffle_masks(stack, int(rng.integers(0, 2 ** 31)))
    assignment = match_masks(stack, sample.instances, config.match_by)
    low_res = downsample_labels(padded_panoptic, config.model.feature_stride)
    target = build_target(assignment, low_res, stack, sample.instances, config.model)
    return stack, target


def _detector_targets(anchors: np.ndarray, sample: Sample, n_things: int):
    gt_boxes = np.array([inst.box for inst in sample.instances], dtype=np.float64)
    labels, matched = assign_anchors(anchors, gt_boxes)
    cls_targets = np.zeros((len(anchors), n_things), dtype=np.float32)
    box_targets = np.zeros((len(anchors), 4), dtype=np.float32)
    positive = labels == 1
    if positive.any():
        classes = np.array([sample.instances[g].class_id for g in matched[positive]])
        cls_targets[np.nonzero(positive)[0], classes] = 1.0
        box_targets[positive] = encode_deltas(anchors[positive], gt_boxes[matched[positive]])
    return (torch.from_numpy(cls_targets), torch.from_numpy(box_targets),
            torch.from_numpy(labels))


def evaluate(net: PanopticNet, dataset, config: RunConfig,
             max_samples: int | None = None) -> PQReport:
    """Dataset PQ via the full inference path."""
    was_training = net.training
    predictor = PanopticPredictor(net, config)
    n = len(dataset) if max_samples is None else min(len(dataset), max_samples)
    reports = []
    for i in range(n):
        sample = dataset[i]
        rng = np.random.default_rng([config.seed, 2, i])
        pred = predictor.predict(sample.image, sample.instances, rng)
        reports.append(compute_pq(pred, sample.panoptic, config.model.n_things))
    if was_training:
        net.train()
    return aggregate_reports(reports)


def train_loop(net: PanopticNet, train_dataset, val_dataset, config: RunConfig,
               out_dir: str | Path):
    """Run SGD to completion; returns (final PQReport, checkpoint path).

    Attention masks are constants to the panoptic loss (detections are
    decoded without gradients), so no gradient reaches the detector from the
    panoptic head.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_cfg, model_cfg = config.train, config.model
    optimizer = torch.optim.SGD(net.parameters(), lr=train_cfg.lr,
                                momentum=train_cfg.momentum,
                                weight_decay=train_cfg.weight_decay)
    log = MetricsLog(out_dir / "metrics.jsonl")
    rng = np.random.default_rng([config.seed, 1])
    oracle = OracleDetector(config.oracle_jitter, config.oracle_drop_rate)
    use_augment = (train_cfg.scale_min, train_cfg.scale_max) != (1.0, 1.0) \
        or train_cfg.crop_height > 0 or train_cfg.flip_prob > 0
    if use_augment:
        from .data.augment import augment as augment_fn

    net.train()
    ckpt_path = out_dir / "checkpoint_final.wts"
    try:
        for step in range(train_cfg.total_steps):
            lr = polynomial_lr(step, train_cfg.total_steps, train_cfg.lr, train_cfg.lr_power)
            for group in optimizer.param_groups:
                group["lr"] = lr

            indices = rng.integers(0, len(train_dataset), size=train_cfg.batch_size)
            samples = []
            for idx in indices:
                sample = train_dataset[int(idx)]
                if use_augment:
                    crop = None
                    if train_cfg.crop_height > 0:
                        crop = (train_cfg.crop_height, train_cfg.crop_width)
                    sample = augment_fn(sample, model_cfg.n_things, rng,
                                        (train_cfg.scale_min, train_cfg.scale_max),
                                        crop, train_cfg.flip_prob)
                samples.append(sample)

            prepared = [_prepare_sample(s, config) for s in samples]
            feature_hw = prepared[0][2]
            images = torch.stack([net.to_tensor(img)[0] for img, _, _ in prepared])

            pyramid, features = net.forward_features(images)

            loss_det: torch.Tensor | float = 0.0
            detections_per_sample = []
            if config.oracle_detector:
                for sample in samples:
                    detections_per_sample.append(oracle(sample.instances, rng))
            else:
                cls_logits, box_deltas = net.detector(pyramid.p3)
                anchors = net.detector.anchors_for(*feature_hw)
                det_losses = []
                for b, sample in enumerate(samples):
                    cls_t, box_t, labels = _detector_targets(anchors, sample, model_cfg.n_things)
                    det_losses.append(detection_loss(cls_logits[b], box_deltas[b],
                                                     cls_t, box_t, labels))
                    detections_per_sample.append(net.detector.detections(
                        cls_logits[b].detach(), box_deltas[b].detach(), anchors,
                        (samples[b].height, samples[b].width)))
                loss_det = torch.stack(det_losses).mean()

            mask_arrays, target_arrays = [], []
            for b, sample in enumerate(samples):
                _, padded_panoptic, _ = prepared[b]
                stack, target = _masks_and_target(sample, detections_per_sample[b],
                                                  padded_panoptic, feature_hw, config, rng)
                mask_arrays.append(stack.masks)
                target_arrays.append(target)
            mask_tensor = torch.from_numpy(np.stack(mask_arrays))
            target_tensor = torch.from_numpy(np.stack(target_arrays))

            logits = net.head(features, mask_tensor)
            loss_pan = panoptic_loss(logits, target_tensor)
            loss = total_loss(loss_det, loss_pan, train_cfg)

            loss_det_v = float(loss_det.detach()) if torch.is_tensor(loss_det) else float(loss_det)
            loss_pan_v = float(loss_pan.detach())
            loss_v = loss_det_v * train_cfg.lambda_det + loss_pan_v * train_cfg.lambda_pan
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at step {step}: "
                    f"loss_det={loss_det_v:.4g} loss_pan={loss_pan_v:.4g} lr={lr:.4g}")

            optimizer.zero_grad()
            loss.backward()
            optimizer.step()

            record = {"step": step, "loss_det": loss_det_v,
                      "loss_pan": loss_pan_v, "loss": loss_v, "lr": lr}
            log.write(record)
            if step % 100 == 0:
                logger.info("step %d loss %.4f (det %.4f, pan %.4f) lr %.5f",
                            step, loss_v, loss_det_v, loss_pan_v, lr)

            if train_cfg.checkpoint_interval and (step + 1) % train_cfg.checkpoint_interval == 0 \
                    and step + 1 < train_cfg.total_steps:
                save_weights(net, out_dir / f"checkpoint_{step + 1}.wts")
            if train_cfg.eval_interval and (step + 1) % train_cfg.eval_interval == 0 \
                    and step + 1 < train_cfg.total_steps:
                report = evaluate(net, val_dataset, config, train_cfg.eval_samples)
                log.write({"step": step, "val_pq": report.pq,
                           "val_pq_things": report.pq_things,
                           "val_pq_stuff": report.pq_stuff})
                logger.info("step %d val PQ %.4f (things %.4f, stuff %.4f)",
                            step, report.pq, report.pq_things, report.pq_stuff)

        save_weights(net, ckpt_path)
        final_report = evaluate(net, val_dataset, config, train_cfg.eval_samples)
        log.write({"step": train_cfg.total_steps - 1, "val_pq": final_report.pq,
                   "val_pq_things": final_report.pq_things,
                   "val_pq_stuff": final_report.pq_stuff})
        logger.info("final val PQ %.4f (things %.4f, stuff %.4f)",
                    final_report.pq, final_report.pq_things, final_report.pq_stuff)
    finally:
        log.close()
    return final_report, ckpt_path
