"""Attention mask generation: box detections to a stack of soft spatial priors."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .config import ModelConfig
from .structures import Detection

logger = logging.getLogger(__name__)

# Sentinel in the permutation record for slots holding no detection.
EMPTY_SLOT = -1


@dataclass
class AttentionStack:
    """The attention mask slots fed to the panoptic head.

    masks: float32 [N_att, H, W] at feature-map resolution, values in
    [0, C_att]. permutation[s] is the pre-shuffle index of the mask now at
    slot s, or EMPTY_SLOT. slot_detections[s] is the detection the slot was
    generated from, or None for empty slots.
    """

    masks: np.ndarray
    permutation: np.ndarray
    slot_detections: list[Detection | None]

    @property
    def n_att(self) -> int:
        return self.masks.shape[0]

    def non_empty_slots(self) -> list[int]:
        return [s for s, det in enumerate(self.slot_detections) if det is not None]


def _rasterize_box(det: Detection, height: int, width: int, stride: int):
    """Clip the box to the image and round outward to whole feature pixels.

    Returns (r0, r1, c0, c1) in feature coordinates, or None if the clipped
    box has no area at this stride.
    """
    x0, y0, x1, y1 = det.corners()
    x0 = max(x0, 0.0)
    y0 = max(y0, 0.0)
    x1 = min(x1, width * stride)
    y1 = min(y1, height * stride)
    if x1 <= x0 or y1 <= y0:
        return None
    c0 = int(np.floor(x0 / stride))
    c1 = int(np.ceil(x1 / stride))
    r0 = int(np.floor(y0 / stride))
    r1 = int(np.ceil(y1 / stride))
    c0, c1 = max(c0, 0), min(c1, width)
    r0, r1 = max(r0, 0), min(r1, height)
    if r1 <= r0 or c1 <= c0:
        return None
    return r0, r1, c0, c1


def _gaussian_mask(det: Detection, height: int, width: int, config: ModelConfig) -> np.ndarray | None:
    stride = config.feature_stride
    span = _rasterize_box(det, height, width, stride)
    if span is None:
        return None
    r0, r1, c0, c1 = span
    x_c, y_c, w_b, h_b = det.box
    if config.sigma_mode == "std":
        var_x, var_y = (w_b / 4.0) ** 2, (h_b / 4.0) ** 2
    else:
        var_x, var_y = w_b / 4.0, h_b / 4.0

    # Feature pixel (r, c) samples the input-image point at its center.
    xs = (np.arange(c0, c1, dtype=np.float64) + 0.5) * stride
    ys = (np.arange(r0, r1, dtype=np.float64) + 0.5) * stride
    gx = (xs - x_c) ** 2 / (2.0 * var_x)
    gy = (ys - y_c) ** 2 / (2.0 * var_y)
    patch = np.exp(-(gy[:, None] + gx[None, :]))

    mask = np.zeros((height, width), dtype=np.float64)
    mask[r0:r1, c0:c1] = patch / patch.max() * config.c_att
    return mask.astype(np.float32)


def _constant_mask(det: Detection, height: int, width: int, config: ModelConfig) -> np.ndarray | None:
    span = _rasterize_box(det, height, width, config.feature_stride)
    if span is None:
        return None
    r0, r1, c0, c1 = span
    mask = np.zeros((height, width), dtype=np.float32)
    mask[r0:r1, c0:c1] = config.c_att
    return mask


def _build_stack(detections: list[Detection], height: int, width: int,
                 config: ModelConfig, fill) -> AttentionStack:
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].score, i))
    kept = order[:config.n_att]

    masks = np.zeros((config.n_att, height, width), dtype=np.float32)
    permutation = np.full(config.n_att, EMPTY_SLOT, dtype=np.int64)
    slot_detections: list[Detection | None] = [None] * config.n_att
    slot = 0
    for idx in kept:
        det = detections[idx]
        mask = fill(det, height, width, config)
        if mask is None:
            logger.warning("detection box %s has no area at stride %d; slot left empty",
                           det.box, config.feature_stride)
            continue
        masks[slot] = mask
        permutation[slot] = slot
        slot_detections[slot] = det
        slot += 1
    return AttentionStack(masks=masks, permutation=permutation, slot_detections=slot_detections)


def generate_masks(detections: list[Detection], height: int, width: int,
                   config: ModelConfig) -> AttentionStack:
    """Soft Gaussian masks from detections, unshuffled.

    Each kept detection fills its rasterized box with an axis-aligned Gaussian
    centered on the box center, rescaled so the peak equals C_att; pixels
    outside the box stay zero. The N_att highest-scoring detections are kept;
    remaining slots are all-zero masks.
    """
    return _build_stack(detections, height, width, config, _gaussian_mask)


def make_hard_masks(detections: list[Detection], height: int, width: int,
                    config: ModelConfig) -> AttentionStack:
    """Ablation variant: every in-box pixel gets the constant value C_att."""
    return _build_stack(detections, height, width, config, _constant_mask)


def shuffle_masks(stack: AttentionStack, rng_seed: int) -> AttentionStack:
    """Apply a uniformly random permutation jointly to masks and bookkeeping.

    Fisher-Yates over all N_att slots from a seeded generator; the recorded
    permutation maps each post-shuffle slot to its pre-shuffle index.
    """
    n = stack.n_att
    rng = np.random.default_rng(rng_seed)
    perm = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        perm[i], perm[j] = perm[j], perm[i]

    masks = stack.masks[perm]
    permutation = stack.permutation[perm]
    slot_detections = [stack.slot_detections[p] for p in perm]
    return AttentionStack(masks=masks, permutation=permutation, slot_detections=slot_detections)


def unshuffle_masks(stack: AttentionStack) -> AttentionStack:
    """Invert a shuffle using the recorded permutation."""
    n = stack.n_att
    masks = np.zeros_like(stack.masks)
    permutation = np.full(n, EMPTY_SLOT, dtype=np.int64)
    slot_detections: list[Detection | None] = [None] * n
    for s in range(n):
        pre = stack.permutation[s]
        if pre == EMPTY_SLOT:
            continue
        masks[pre] = stack.masks[s]
        permutation[pre] = pre
        slot_detections[pre] = stack.slot_detections[s]
    return AttentionStack(masks=masks, permutation=permutation, slot_detections=slot_detections)
