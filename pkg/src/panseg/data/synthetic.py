"""Deterministic shapes-world generator: circles, triangles and squares over
a sky/ground background, with exact per-pixel instance ground truth."""
from __future__ import annotations

import numpy as np

from ..config import DataConfig
from ..structures import (VOID_CLASS, ClassCatalog, PanopticLabelMap, Sample,
                          instances_from_map)

SYNTHETIC_CATALOG = ClassCatalog(things=["circle", "triangle", "square"],
                                 stuff=["sky", "ground"])

CIRCLE, TRIANGLE, SQUARE = 0, 1, 2
SKY, GROUND = 3, 4

_THING_COLORS = {
    CIRCLE: (0.85, 0.25, 0.20),
    TRIANGLE: (0.20, 0.75, 0.30),
    SQUARE: (0.25, 0.35, 0.85),
}


def _shape_mask(kind: int, cx: int, cy: int, half: int, size: int) -> np.ndarray:
    """Rasterize one shape with integer-only geometry."""
    ys, xs = np.mgrid[0:size, 0:size]
    if kind == CIRCLE:
        return (xs - cx) ** 2 + (ys - cy) ** 2 <= half ** 2
    if kind == SQUARE:
        return (np.abs(xs - cx) <= half) & (np.abs(ys - cy) <= half)
    # Triangle: apex at (cx, cy - half), base corners (cx +- half, cy + half);
    # integer half-plane tests keep rasterization exact.
    ax, ay = cx, cy - half
    bx, by = cx - half, cy + half
    qx, qy = cx + half, cy + half
    d1 = (bx - ax) * (ys - ay) - (by - ay) * (xs - ax)
    d2 = (qx - bx) * (ys - by) - (qy - by) * (xs - bx)
    d3 = (ax - qx) * (ys - qy) - (ay - qy) * (xs - qx)
    return ((d1 >= 0) & (d2 >= 0) & (d3 >= 0)) | ((d1 <= 0) & (d2 <= 0) & (d3 <= 0))


def shape_area(kind: int, half: int) -> float:
    """Analytic area of a shape with half-extent `half`.

    Exact pixel count for squares; continuous area for circles and
    triangles (rasterized counts differ by O(half))."""
    if kind == CIRCLE:
        return float(np.pi) * half ** 2
    if kind == SQUARE:
        return float((2 * half + 1) ** 2)
    return 2.0 * half * half


def _paint_background(rng: np.random.Generator, size: int):
    image = np.zeros((size, size, 3), dtype=np.float32)
    class_ids = np.zeros((size, size), dtype=np.int32)

    horizon = int(rng.integers(size * 3 // 10, size * 7 // 10 + 1))
    class_ids[:horizon] = SKY
    class_ids[horizon:] = GROUND

    rows = np.arange(size, dtype=np.float32)[:, None]
    frac = rows / max(size - 1, 1)
    image[:horizon, :, 0] = 0.45 + 0.25 * frac[:horizon]
    image[:horizon, :, 1] = 0.62 + 0.20 * frac[:horizon]
    image[:horizon, :, 2] = 0.95
    # Striped ground texture; stripe phase varies per sample.
    phase = int(rng.integers(0, 8))
    stripes = (((np.arange(size) + phase) // 4) % 2).astype(np.float32)
    image[horizon:, :, 0] = 0.45 + 0.08 * stripes[None, :]
    image[horizon:, :, 1] = 0.35 + 0.08 * stripes[None, :]
    image[horizon:, :, 2] = 0.22
    return image, class_ids, horizon


def generate_sample(config: DataConfig, index: int, seed: int = 0,
                    salt: int = 0) -> Sample:
    """Deterministic function of (seed, salt, index)."""
    size = config.image_size
    rng = np.random.default_rng([seed, salt, index])
    image, class_ids, _ = _paint_background(rng, size)
    instance_ids = np.zeros((size, size), dtype=np.int32)

    count = int(rng.integers(config.min_instances, config.max_instances + 1))
    placed_boxes: list[tuple[int, int, int, int]] = []
    next_id = 1
    for _ in range(count):
        kind = int(rng.integers(0, 3))
        half = int(rng.integers(config.min_shape_size, config.max_shape_size + 1))
        placed = False
        for _attempt in range(25):
            cx = int(rng.integers(half, size - half))
            cy = int(rng.integers(half, size - half))
            box = (cx - half, cy - half, cx + half + 1, cy + half + 1)
            if not config.occlusion:
                overlaps = any(box[0] < b[2] and b[0] < box[2] and
                               box[1] < b[3] and b[1] < box[3] for b in placed_boxes)
                if overlaps:
                    continue
            placed = True
            break
        if not placed:
            continue
        placed_boxes.append(box)
        mask = _shape_mask(kind, cx, cy, half, size)
        base = np.array(_THING_COLORS[kind], dtype=np.float32)
        color = np.clip(base + rng.uniform(-0.08, 0.08, size=3).astype(np.float32), 0.0, 1.0)
        image[mask] = color
        class_ids[mask] = kind
        instance_ids[mask] = next_id
        next_id += 1

    if config.void_bands:
        band = int(rng.integers(2, 5))
        row = int(rng.integers(0, size - band))
        class_ids[row:row + band] = VOID_CLASS
        instance_ids[row:row + band] = 0

    noise = rng.normal(0.0, 0.015, size=image.shape).astype(np.float32)
    image = np.clip(image + noise, 0.0, 1.0)

    panoptic = PanopticLabelMap(class_ids, instance_ids)
    instances = instances_from_map(panoptic, SYNTHETIC_CATALOG.n_things)
    return Sample(image=image, panoptic=panoptic, instances=instances)


class SyntheticDataset:
    """Indexable dataset view; train and val draw from disjoint streams."""

    def __init__(self, config: DataConfig, split: str = "train", seed: int = 0):
        if split not in ("train", "val"):
            raise ValueError(f"unknown split {split!r}")
        self.config = config
        self.split = split
        self.seed = seed
        self._length = config.train_samples if split == "train" else config.val_samples

    def __len__(self) -> int:
        return self._length

    def __getitem__(self, index: int) -> Sample:
        if not (0 <= index < self._length):
            raise IndexError(index)
        salt = 0 if self.split == "train" else 1
        return generate_sample(self.config, index, seed=self.seed, salt=salt)

    @property
    def catalog(self) -> ClassCatalog:
        return SYNTHETIC_CATALOG
