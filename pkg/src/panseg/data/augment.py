"""Training augmentation: joint random scale, crop and optional flip."""
from __future__ import annotations

import numpy as np
import torch
import torch.nn.functional as F

from ..structures import PanopticLabelMap, Sample, instances_from_map


def _nearest_indices(out_size: int, in_size: int) -> np.ndarray:
    # Sample at output pixel centers, matching the bilinear grid.
    idx = np.floor((np.arange(out_size) + 0.5) * in_size / out_size).astype(np.int64)
    return np.clip(idx, 0, in_size - 1)


def _scale_image(image: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    tensor = torch.from_numpy(image.transpose(2, 0, 1)[None]).float()
    scaled = F.interpolate(tensor, size=out_hw, mode="bilinear", align_corners=False)
    return scaled[0].numpy().transpose(1, 2, 0)


def _scale_labels(panoptic: PanopticLabelMap, out_hw: tuple[int, int]) -> PanopticLabelMap:
    h, w = panoptic.shape
    rows = _nearest_indices(out_hw[0], h)
    cols = _nearest_indices(out_hw[1], w)
    return PanopticLabelMap(panoptic.class_ids[np.ix_(rows, cols)],
                            panoptic.instance_ids[np.ix_(rows, cols)],
                            panoptic.crowd_segments)


def augment(sample: Sample, n_things: int, rng: np.random.Generator,
            scale_range: tuple[float, float] = (0.5, 1.5),
            crop_hw: tuple[int, int] | None = None,
            flip_prob: float = 0.0) -> Sample:
    """Random scale (bilinear image, nearest labels), crop, optional flip.

    A crop larger than the scaled image is padded with void labels and zero
    pixels. Instances cropped out entirely are removed; survivors get tight
    boxes recomputed from their cropped masks.
    """
    scale = float(rng.uniform(scale_range[0], scale_range[1]))
    h, w = sample.height, sample.width
    out_h, out_w = max(int(round(h * scale)), 1), max(int(round(w * scale)), 1)
    if (out_h, out_w) != (h, w):
        image = _scale_image(sample.image, (out_h, out_w))
        panoptic = _scale_labels(sample.panoptic, (out_h, out_w))
    else:
        image = sample.image.copy()
        panoptic = sample.panoptic

    crop_h, crop_w = crop_hw if crop_hw is not None else (h, w)
    pad_h, pad_w = max(crop_h - out_h, 0), max(crop_w - out_w, 0)
    if pad_h or pad_w:
        image = np.pad(image, ((0, pad_h), (0, pad_w), (0, 0)))
        panoptic = panoptic.pad_to(max(out_h, crop_h), max(out_w, crop_w))
        out_h, out_w = out_h + pad_h, out_w + pad_w

    top = int(rng.integers(0, out_h - crop_h + 1))
    left = int(rng.integers(0, out_w - crop_w + 1))
    image = image[top:top + crop_h, left:left + crop_w]
    panoptic = PanopticLabelMap(
        panoptic.class_ids[top:top + crop_h, left:left + crop_w],
        panoptic.instance_ids[top:top + crop_h, left:left + crop_w],
        panoptic.crowd_segments)

    if flip_prob > 0 and rng.random() < flip_prob:
        image = image[:, ::-1].copy()
        panoptic = PanopticLabelMap(panoptic.class_ids[:, ::-1].copy(),
                                    panoptic.instance_ids[:, ::-1].copy(),
                                    panoptic.crowd_segments)

    instances = instances_from_map(panoptic, n_things)
    return Sample(image=np.ascontiguousarray(image, dtype=np.float32),
                  panoptic=panoptic, instances=instances)
