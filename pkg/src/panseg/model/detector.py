"""Simplified single-scale anchor detector on P3, plus a ground-truth oracle."""
from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from ..config import ModelConfig
from ..structures import Detection, GroundTruthInstance
from .backbone import init_conv_weights

ANCHOR_SCALES = (1.0, 2 ** (1 / 3), 2 ** (2 / 3))
ANCHOR_RATIOS = (0.5, 1.0, 2.0)
POSITIVE_IOU = 0.5
NEGATIVE_IOU = 0.4
SCORE_THRESHOLD = 0.05
NMS_IOU = 0.5
MAX_DETECTIONS = 100


def generate_anchors(feat_h: int, feat_w: int, stride: int, base_size: float) -> np.ndarray:
    """Anchor boxes (x0, y0, x1, y1) for every P3 location, 9 per cell."""
    shapes = []
    for scale in ANCHOR_SCALES:
        for ratio in ANCHOR_RATIOS:
            area = (base_size * scale) ** 2
            w = np.sqrt(area / ratio)
            h = w * ratio
            shapes.append((w, h))
    shapes = np.asarray(shapes, dtype=np.float32)

    cx = (np.arange(feat_w, dtype=np.float32) + 0.5) * stride
    cy = (np.arange(feat_h, dtype=np.float32) + 0.5) * stride
    cxs, cys = np.meshgrid(cx, cy)
    centers = np.stack([cxs, cys], axis=-1).reshape(-1, 1, 2)
    half = shapes[None, :, :] / 2
    boxes = np.concatenate([centers - half, centers + half], axis=-1)
    return boxes.reshape(-1, 4)


def box_iou_matrix(boxes_a: np.ndarray, boxes_b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between two (x0, y0, x1, y1) box arrays."""
    if len(boxes_a) == 0 or len(boxes_b) == 0:
        return np.zeros((len(boxes_a), len(boxes_b)), dtype=np.float64)
    a = boxes_a[:, None, :]
    b = boxes_b[None, :, :]
    iw = np.minimum(a[..., 2], b[..., 2]) - np.maximum(a[..., 0], b[..., 0])
    ih = np.minimum(a[..., 3], b[..., 3]) - np.maximum(a[..., 1], b[..., 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (a[..., 2] - a[..., 0]) * (a[..., 3] - a[..., 1])
    area_b = (b[..., 2] - b[..., 0]) * (b[..., 3] - b[..., 1])
    union = area_a + area_b - inter
    out = np.zeros_like(union)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def assign_anchors(anchors: np.ndarray, gt_boxes: np.ndarray):
    """Label anchors by IoU: >= 0.5 positive, < 0.4 negative, else ignored.

    Returns (labels [A], matched_gt [A]) where labels are 1/0/-1 and
    matched_gt holds the best-IoU GT index for each anchor.
    """
    n = len(anchors)
    if len(gt_boxes) == 0:
        return np.zeros(n, dtype=np.int64), np.zeros(n, dtype=np.int64)
    ious = box_iou_matrix(anchors, gt_boxes)
    matched = ious.argmax(axis=1)
    best = ious[np.arange(n), matched]
    labels = np.full(n, -1, dtype=np.int64)
    labels[best >= POSITIVE_IOU] = 1
    labels[best < NEGATIVE_IOU] = 0
    return labels, matched


def encode_deltas(anchors: np.ndarray, boxes: np.ndarray) -> np.ndarray:
    """(dx, dy, dw, dh) targets that map anchors onto boxes."""
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    ax = (anchors[:, 0] + anchors[:, 2]) / 2
    ay = (anchors[:, 1] + anchors[:, 3]) / 2
    bw = boxes[:, 2] - boxes[:, 0]
    bh = boxes[:, 3] - boxes[:, 1]
    bx = (boxes[:, 0] + boxes[:, 2]) / 2
    by = (boxes[:, 1] + boxes[:, 3]) / 2
    return np.stack([(bx - ax) / aw, (by - ay) / ah, np.log(bw / aw), np.log(bh / ah)], axis=1)


def decode_deltas(anchors: np.ndarray, deltas: np.ndarray) -> np.ndarray:
    aw = anchors[:, 2] - anchors[:, 0]
    ah = anchors[:, 3] - anchors[:, 1]
    ax = (anchors[:, 0] + anchors[:, 2]) / 2
    ay = (anchors[:, 1] + anchors[:, 3]) / 2
    bx = ax + deltas[:, 0] * aw
    by = ay + deltas[:, 1] * ah
    bw = aw * np.exp(np.clip(deltas[:, 2], None, 8.0))
    bh = ah * np.exp(np.clip(deltas[:, 3], None, 8.0))
    return np.stack([bx - bw / 2, by - bh / 2, bx + bw / 2, by + bh / 2], axis=1)


def _nms(boxes: np.ndarray, scores: np.ndarray, iou_threshold: float) -> list[int]:
    order = np.argsort(-scores, kind="stable")
    keep = []
    suppressed = np.zeros(len(boxes), dtype=bool)
    for i in order:
        if suppressed[i]:
            continue
        keep.append(int(i))
        ious = box_iou_matrix(boxes[i:i + 1], boxes[order]).ravel()
        suppressed[order[ious > iou_threshold]] = True
    return keep


class AnchorDetector(nn.Module):
    """Two-conv tower on P3 with per-anchor class logits and box deltas."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.n_anchors = len(ANCHOR_SCALES) * len(ANCHOR_RATIOS)
        width = config.head_width
        self.tower = nn.Sequential(
            nn.Conv2d(config.f_dim, width, 3, padding=1),
            nn.ReLU(inplace=True),
            nn.Conv2d(width, width, 3, padding=1),
            nn.ReLU(inplace=True),
        )
        self.cls_head = nn.Conv2d(width, self.n_anchors * config.n_things, 3, padding=1)
        self.box_head = nn.Conv2d(width, self.n_anchors * 4, 3, padding=1)
        init_conv_weights(self)

    def forward(self, p3: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Returns ([N, A, n_things] class logits, [N, A, 4] box deltas)."""
        n = p3.shape[0]
        x = self.tower(p3)
        cls = self.cls_head(x).permute(0, 2, 3, 1).reshape(n, -1, self.config.n_things)
        box = self.box_head(x).permute(0, 2, 3, 1).reshape(n, -1, 4)
        return cls, box

    def anchors_for(self, feat_h: int, feat_w: int) -> np.ndarray:
        return generate_anchors(feat_h, feat_w, self.config.feature_stride,
                                self.config.anchor_size)

    @torch.no_grad()
    def detections(self, cls_logits: torch.Tensor, box_deltas: torch.Tensor,
                   anchors: np.ndarray, image_hw: tuple[int, int]) -> list[Detection]:
        """Decode one image's outputs into scored detections, best first."""
        scores = torch.sigmoid(cls_logits).cpu().numpy()
        deltas = box_deltas.cpu().numpy()
        flat = scores.ravel()
        candidates = np.nonzero(flat > SCORE_THRESHOLD)[0]
        if len(candidates) > MAX_DETECTIONS * 4:
            candidates = candidates[np.argsort(-flat[candidates], kind="stable")[:MAX_DETECTIONS * 4]]
        if len(candidates) == 0:
            return []
        anchor_idx = candidates // self.config.n_things
        class_idx = candidates % self.config.n_things
        boxes = decode_deltas(anchors[anchor_idx], deltas[anchor_idx])
        h, w = image_hw
        boxes[:, 0::2] = boxes[:, 0::2].clip(0, w)
        boxes[:, 1::2] = boxes[:, 1::2].clip(0, h)

        detections = []
        for cid in np.unique(class_idx):
            sel = class_idx == cid
            keep = _nms(boxes[sel], flat[candidates][sel], NMS_IOU)
            sel_idx = np.nonzero(sel)[0][keep]
            for i in sel_idx:
                x0, y0, x1, y1 = boxes[i]
                if x1 - x0 <= 1e-3 or y1 - y0 <= 1e-3:
                    continue
                detections.append(Detection(
                    class_id=int(cid), score=float(flat[candidates][i]),
                    box=((x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0)))
        detections.sort(key=lambda d: -d.score)
        return detections[:MAX_DETECTIONS]


class OracleDetector:
    """Emits ground-truth boxes, optionally jittered and randomly dropped."""

    def __init__(self, jitter: float = 0.0, drop_rate: float = 0.0):
        self.jitter = jitter
        self.drop_rate = drop_rate

    def __call__(self, instances: list[GroundTruthInstance],
                 rng: np.random.Generator | None = None) -> list[Detection]:
        if (self.jitter > 0 or self.drop_rate > 0) and rng is None:
            raise ValueError("jitter/drop require an rng")
        detections = []
        for inst in instances:
            if self.drop_rate > 0 and rng.random() < self.drop_rate:
                continue
            x_c, y_c, w_b, h_b = inst.center_box()
            if self.jitter > 0:
                x_c += rng.normal(0.0, self.jitter * w_b)
                y_c += rng.normal(0.0, self.jitter * h_b)
                w_b = max(w_b * (1.0 + rng.normal(0.0, self.jitter)), 1.0)
                h_b = max(h_b * (1.0 + rng.normal(0.0, self.jitter)), 1.0)
            detections.append(Detection(class_id=inst.class_id, score=1.0,
                                        box=(x_c, y_c, w_b, h_b)))
        return detections
