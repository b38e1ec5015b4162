"""Greedy IoU matching between attention mask slots and ground-truth instances."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .masks import AttentionStack
from .structures import GroundTruthInstance

IOU_THRESHOLD = 0.5


@dataclass
class MatchAssignment:
    """One-to-one slot -> GT pairing; every kept pair has IoU > 0.5."""

    pairs: dict[int, int] = field(default_factory=dict)  # slot -> gt index
    unmatched_gt: list[int] = field(default_factory=list)
    discarded_slots: list[int] = field(default_factory=list)

    def gt_to_slot(self) -> dict[int, int]:
        return {g: s for s, g in self.pairs.items()}


def box_iou(box_a: tuple[float, float, float, float],
            box_b: tuple[float, float, float, float]) -> float:
    """IoU of two (x0, y0, x1, y1) boxes."""
    ax0, ay0, ax1, ay1 = box_a
    bx0, by0, bx1, by1 = box_b
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter
    return inter / union


def box_mask_iou(box: tuple[float, float, float, float], mask: np.ndarray) -> float:
    """IoU between a box region (rasterized at input resolution) and a pixel mask."""
    h, w = mask.shape
    x0, y0, x1, y1 = box
    c0 = max(int(np.floor(x0)), 0)
    r0 = max(int(np.floor(y0)), 0)
    c1 = min(int(np.ceil(x1)), w)
    r1 = min(int(np.ceil(y1)), h)
    box_area = max(r1 - r0, 0) * max(c1 - c0, 0)
    if box_area == 0:
        return 0.0
    inter = int(mask[r0:r1, c0:c1].sum())
    union = box_area + int(mask.sum()) - inter
    return inter / union if union > 0 else 0.0


def _iou_matrix(stack: AttentionStack, gt: list[GroundTruthInstance], match_by: str) -> np.ndarray:
    slots = stack.non_empty_slots()
    ious = np.zeros((stack.n_att, len(gt)), dtype=np.float64)
    for s in slots:
        det_box = stack.slot_detections[s].corners()
        for g, inst in enumerate(gt):
            if match_by == "mask":
                ious[s, g] = box_mask_iou(det_box, inst.mask)
            else:
                ious[s, g] = box_iou(det_box, inst.box)
    return ious


def match_masks(stack: AttentionStack, gt: list[GroundTruthInstance],
                match_by: str = "box") -> MatchAssignment:
    """Assign GT instances to mask slots greedily in descending IoU order.

    Each pair is taken only while both sides are unassigned and its IoU
    exceeds 0.5; ties break toward the lower slot index, then lower GT index.
    """
    ious = _iou_matrix(stack, gt, match_by)
    candidates = []
    for s in stack.non_empty_slots():
        for g in range(len(gt)):
            if ious[s, g] > IOU_THRESHOLD:
                candidates.append((-ious[s, g], s, g))
    candidates.sort()

    assignment = MatchAssignment()
    taken_gt: set[int] = set()
    for _, s, g in candidates:
        if s in assignment.pairs or g in taken_gt:
            continue
        assignment.pairs[s] = g
        taken_gt.add(g)

    assignment.unmatched_gt = [g for g in range(len(gt)) if g not in taken_gt]
    assignment.discarded_slots = [s for s in stack.non_empty_slots()
                                  if s not in assignment.pairs]
    return assignment
