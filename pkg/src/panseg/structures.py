"""Shared label-map and instance structures used across the pipeline."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

# Reserved class id for pixels without a ground-truth or predicted class.
VOID_CLASS = -1


@dataclass
class Detection:
    """One scored, classed bounding box.

    The box is (x_c, y_c, w_b, h_b): center coordinates, width and height in
    input-image pixels.
    """

    class_id: int
    score: float
    box: tuple[float, float, float, float]

    def __post_init__(self):
        _, _, w_b, h_b = self.box
        if w_b <= 0 or h_b <= 0:
            raise ValueError(f"detection box must have positive size, got {self.box}")

    def corners(self) -> tuple[float, float, float, float]:
        """Box as (x0, y0, x1, y1)."""
        x_c, y_c, w_b, h_b = self.box
        return (x_c - w_b / 2, y_c - h_b / 2, x_c + w_b / 2, y_c + h_b / 2)


@dataclass
class GroundTruthInstance:
    """A ground-truth things instance: binary mask plus its tight box."""

    class_id: int
    instance_id: int
    mask: np.ndarray  # bool [H, W]
    box: tuple[float, float, float, float]  # (x0, y0, x1, y1), tight hull

    @classmethod
    def from_mask(cls, class_id: int, instance_id: int, mask: np.ndarray) -> "GroundTruthInstance":
        if not mask.any():
            raise ValueError("instance mask is empty")
        ys, xs = np.nonzero(mask)
        box = (float(xs.min()), float(ys.min()), float(xs.max() + 1), float(ys.max() + 1))
        return cls(class_id=class_id, instance_id=instance_id, mask=mask.astype(bool), box=box)

    def center_box(self) -> tuple[float, float, float, float]:
        """Box as (x_c, y_c, w_b, h_b)."""
        x0, y0, x1, y1 = self.box
        return ((x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0)


class PanopticLabelMap:
    """Per-pixel (class_id, instance_id) pairs.

    class_ids uses VOID_CLASS for unlabeled pixels; instance_ids is 0 for
    stuff and void pixels and >= 1 for things instances. Instance ids of one
    class are distinct within an image.
    """

    def __init__(self, class_ids: np.ndarray, instance_ids: np.ndarray,
                 crowd_segments: frozenset[tuple[int, int]] = frozenset()):
        class_ids = np.asarray(class_ids, dtype=np.int32)
        instance_ids = np.asarray(instance_ids, dtype=np.int32)
        if class_ids.shape != instance_ids.shape or class_ids.ndim != 2:
            raise ValueError("class_ids and instance_ids must be 2-D arrays of the same shape")
        self.class_ids = class_ids
        self.instance_ids = instance_ids
        # (class_id, instance_id) keys of crowd regions, kept for PQ's ignore
        # handling; empty for synthetic data.
        self.crowd_segments = crowd_segments

    @property
    def shape(self) -> tuple[int, int]:
        return self.class_ids.shape

    @classmethod
    def full_void(cls, height: int, width: int) -> "PanopticLabelMap":
        return cls(np.full((height, width), VOID_CLASS, dtype=np.int32),
                   np.zeros((height, width), dtype=np.int32))

    def segments(self) -> list[tuple[int, int, int]]:
        """All non-void segments as (class_id, instance_id, area)."""
        keys = self.class_ids.astype(np.int64) << 32 | (self.instance_ids.astype(np.int64) & 0xFFFFFFFF)
        keys = keys[self.class_ids != VOID_CLASS]
        uniq, counts = np.unique(keys, return_counts=True)
        out = []
        for key, count in zip(uniq, counts):
            out.append((int(key >> 32), int(key & 0xFFFFFFFF), int(count)))
        return out

    def segment_mask(self, class_id: int, instance_id: int) -> np.ndarray:
        return (self.class_ids == class_id) & (self.instance_ids == instance_id)

    def pad_to(self, height: int, width: int) -> "PanopticLabelMap":
        """Pad bottom/right with void up to (height, width)."""
        h, w = self.shape
        if (h, w) == (height, width):
            return self
        cls_ids = np.full((height, width), VOID_CLASS, dtype=np.int32)
        inst_ids = np.zeros((height, width), dtype=np.int32)
        cls_ids[:h, :w] = self.class_ids
        inst_ids[:h, :w] = self.instance_ids
        return PanopticLabelMap(cls_ids, inst_ids, self.crowd_segments)

    def crop(self, height: int, width: int) -> "PanopticLabelMap":
        return PanopticLabelMap(self.class_ids[:height, :width],
                                self.instance_ids[:height, :width],
                                self.crowd_segments)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PanopticLabelMap):
            return NotImplemented
        return (np.array_equal(self.class_ids, other.class_ids)
                and np.array_equal(self.instance_ids, other.instance_ids)
                and self.crowd_segments == other.crowd_segments)


@dataclass
class ClassCatalog:
    """Names of things and stuff classes with the contiguous id convention.

    Things classes occupy ids [0, n_things); stuff classes occupy
    [n_things, n_things + n_stuff); VOID_CLASS is reserved for unlabeled.
    """

    things: list[str]
    stuff: list[str]

    @property
    def n_things(self) -> int:
        return len(self.things)

    @property
    def n_stuff(self) -> int:
        return len(self.stuff)

    @property
    def n_classes(self) -> int:
        return self.n_things + self.n_stuff

    def is_thing(self, class_id: int) -> bool:
        return 0 <= class_id < self.n_things

    def is_stuff(self, class_id: int) -> bool:
        return self.n_things <= class_id < self.n_classes

    def name(self, class_id: int) -> str:
        if class_id == VOID_CLASS:
            return "void"
        if self.is_thing(class_id):
            return self.things[class_id]
        if self.is_stuff(class_id):
            return self.stuff[class_id - self.n_things]
        raise KeyError(f"unknown class id {class_id}")


@dataclass
class Sample:
    """One dataset element: image, panoptic ground truth and its instances."""

    image: np.ndarray  # float32 [H, W, 3] in [0, 1]
    panoptic: PanopticLabelMap
    instances: list[GroundTruthInstance] = field(default_factory=list)

    @property
    def height(self) -> int:
        return self.image.shape[0]

    @property
    def width(self) -> int:
        return self.image.shape[1]

    def gt_boxes(self) -> list[tuple[float, float, float, float]]:
        return [inst.box for inst in self.instances]


def instances_from_map(panoptic: PanopticLabelMap, n_things: int) -> list[GroundTruthInstance]:
    """Derive the things-instance list from a panoptic map."""
    out = []
    for class_id, instance_id, _area in panoptic.segments():
        if 0 <= class_id < n_things and (class_id, instance_id) not in panoptic.crowd_segments:
            mask = panoptic.segment_mask(class_id, instance_id)
            out.append(GroundTruthInstance.from_mask(class_id, instance_id, mask))
    return out


def iter_segment_masks(panoptic: PanopticLabelMap) -> Iterator[tuple[int, int, np.ndarray]]:
    for class_id, instance_id, _ in panoptic.segments():
        yield class_id, instance_id, panoptic.segment_mask(class_id, instance_id)
