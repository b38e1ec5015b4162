"""Per-pixel argmax fusion of panoptic logits into a label map, plus overlays."""
from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .config import ModelConfig
from .masks import AttentionStack
from .structures import VOID_CLASS, PanopticLabelMap


def upsample_logits(logits: torch.Tensor, size: tuple[int, int]) -> torch.Tensor:
    """Bilinearly upsample [N, C, h, w] logits to a spatial size."""
    if logits.shape[2:] == size:
        return logits
    return F.interpolate(logits, size=size, mode="bilinear", align_corners=False)


def channel_tables(stack: AttentionStack, config: ModelConfig) -> tuple[np.ndarray, np.ndarray]:
    """Lookup tables mapping each output channel to (class_id, instance_id)."""
    n_att, n_stuff, n_out = config.n_att, config.n_stuff, config.n_out
    class_lut = np.full(n_out, VOID_CLASS, dtype=np.int32)
    inst_lut = np.zeros(n_out, dtype=np.int32)
    for s, det in enumerate(stack.slot_detections):
        if det is not None:
            class_lut[s] = det.class_id
            inst_lut[s] = s + 1
    for k in range(n_stuff):
        class_lut[n_att + k] = config.n_things + k
    # Channels N_out-2 (unmatched things) and N_out-1 (unlabeled) stay void.
    return class_lut, inst_lut


def fuse(logits: torch.Tensor, stack: AttentionStack, config: ModelConfig,
         image_hw: tuple[int, int]) -> PanopticLabelMap:
    """Upsample logits to input resolution and take the per-pixel argmax.

    Slot channels with no detection are suppressed (set to -inf) so no
    phantom instance can win a pixel. `image_hw` is the pre-padding image
    size the output is cropped to. No merging of any kind happens here.
    """
    if logits.ndim == 3:
        logits = logits[None]
    if logits.shape[0] != 1:
        raise ValueError("fuse expects logits for a single image")
    if logits.shape[1] != config.n_out:
        raise ValueError(f"logits have {logits.shape[1]} channels, config says {config.n_out}")
    if stack.n_att != config.n_att:
        raise ValueError(f"stack has {stack.n_att} slots, config says {config.n_att}")

    stride = config.feature_stride
    full = (logits.shape[2] * stride, logits.shape[3] * stride)
    up = upsample_logits(logits, full)[0, :, :image_hw[0], :image_hw[1]]

    up = up.clone()
    for s, det in enumerate(stack.slot_detections):
        if det is None:
            up[s] = float("-inf")
    channels = up.argmax(dim=0).cpu().numpy()

    class_lut, inst_lut = channel_tables(stack, config)
    return PanopticLabelMap(class_lut[channels], inst_lut[channels])


def segment_color(class_id: int, instance_id: int) -> tuple[int, int, int]:
    """Deterministic, well-spread color for one (class, instance) pair."""
    key = (class_id + 1) * 2654435761 + instance_id * 40503
    key &= 0xFFFFFFFF
    hue = (key % 360) / 360.0
    sat = 0.55 + 0.35 * ((key >> 9) % 100) / 100.0
    val = 0.7 + 0.3 * ((key >> 17) % 100) / 100.0
    i = int(hue * 6.0) % 6
    f = hue * 6.0 - int(hue * 6.0)
    p, q, t = val * (1 - sat), val * (1 - f * sat), val * (1 - (1 - f) * sat)
    rgb = [(val, t, p), (q, val, p), (p, val, t), (p, q, val), (t, p, val), (val, p, q)][i]
    return tuple(int(round(255 * c)) for c in rgb)


def render_overlay(image: np.ndarray, panoptic: PanopticLabelMap, path: str | Path,
                   alpha: float = 0.5) -> None:
    """Write an alpha-blended overlay; void pixels keep the input image."""
    if image.shape[:2] != panoptic.shape:
        raise ValueError(f"image {image.shape[:2]} and map {panoptic.shape} disagree")
    base = (np.clip(image, 0.0, 1.0) * 255).astype(np.float32)
    out = base.copy()
    for class_id, instance_id, _ in panoptic.segments():
        color = np.array(segment_color(class_id, instance_id), dtype=np.float32)
        region = panoptic.segment_mask(class_id, instance_id)
        out[region] = (1 - alpha) * base[region] + alpha * color
    try:
        Image.fromarray(out.round().astype(np.uint8)).save(path)
    except OSError as exc:
        raise RuntimeError(f"cannot write overlay {path}: {exc}") from exc
