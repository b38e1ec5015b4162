"""Per-pixel channel targets for the panoptic head, order-preserving by slot."""
from __future__ import annotations

import numpy as np

from .config import ModelConfig
from .masks import AttentionStack
from .matching import MatchAssignment
from .structures import VOID_CLASS, GroundTruthInstance, PanopticLabelMap


def downsample_labels(panoptic: PanopticLabelMap, stride: int) -> PanopticLabelMap:
    """Nearest-neighbor downsample at pixel centers to feature resolution."""
    h, w = panoptic.shape
    if h % stride or w % stride:
        raise ValueError(f"label map size {(h, w)} is not a multiple of stride {stride}")
    rows = np.arange(h // stride) * stride + stride // 2
    cols = np.arange(w // stride) * stride + stride // 2
    return PanopticLabelMap(panoptic.class_ids[np.ix_(rows, cols)],
                            panoptic.instance_ids[np.ix_(rows, cols)],
                            panoptic.crowd_segments)


def build_target(assignment: MatchAssignment, gt_panoptic: PanopticLabelMap,
                 stack: AttentionStack, gt_instances: list[GroundTruthInstance],
                 config: ModelConfig) -> np.ndarray:
    """Per-pixel channel indices in [0, N_out) at feature resolution.

    Matched things pixels target their mask's (post-shuffle) slot channel;
    stuff pixels target N_att + stuff index; unmatched things pixels target
    N_out - 2; void pixels target N_out - 1.

    gt_panoptic must already be downsampled to the feature grid.
    """
    n_att, n_things, n_out = config.n_att, config.n_things, config.n_out
    cls_ids = gt_panoptic.class_ids
    inst_ids = gt_panoptic.instance_ids

    bad = (cls_ids != VOID_CLASS) & ((cls_ids < 0) | (cls_ids >= n_things + config.n_stuff))
    if bad.any():
        offending = np.unique(cls_ids[bad])
        raise ValueError(f"ground truth contains unknown class ids {offending.tolist()}")

    target = np.full(gt_panoptic.shape, n_out - 1, dtype=np.int64)

    stuff = (cls_ids >= n_things) & (cls_ids < n_things + config.n_stuff)
    target[stuff] = n_att + (cls_ids[stuff] - n_things)

    gt_to_slot = assignment.gt_to_slot()
    things = (cls_ids >= 0) & (cls_ids < n_things)
    target[things] = n_out - 2
    # Crowd regions carry no usable instance identity; train them as unlabeled.
    for class_id, instance_id in gt_panoptic.crowd_segments:
        target[(cls_ids == class_id) & (inst_ids == instance_id)] = n_out - 1
    for g, inst in enumerate(gt_instances):
        slot = gt_to_slot.get(g)
        if slot is None:
            continue
        pixels = things & (cls_ids == inst.class_id) & (inst_ids == inst.instance_id)
        target[pixels] = slot
    return target
