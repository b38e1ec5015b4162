"""COCO-panoptic interchange: JSON metadata plus segment-id PNGs.

Pixel encoding: segment id = R + 256*G + 256^2*B; id 0 is void.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

from ..structures import ClassCatalog, PanopticLabelMap, Sample, VOID_CLASS, instances_from_map

MAX_SEGMENT_ID = 256 ** 3


class CocoFormatError(RuntimeError):
    pass


def encode_segment_ids(id_map: np.ndarray) -> np.ndarray:
    """int id map -> uint8 [H, W, 3] RGB."""
    ids = np.asarray(id_map, dtype=np.int64)
    if ids.min() < 0 or ids.max() >= MAX_SEGMENT_ID:
        raise CocoFormatError(f"segment id out of range [0, {MAX_SEGMENT_ID})")
    rgb = np.zeros((*ids.shape, 3), dtype=np.uint8)
    rgb[..., 0] = ids % 256
    rgb[..., 1] = (ids // 256) % 256
    rgb[..., 2] = ids // (256 ** 2)
    return rgb


def decode_segment_ids(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.int64)
    return rgb[..., 0] + 256 * rgb[..., 1] + 256 ** 2 * rgb[..., 2]


def write_panoptic_png(panoptic: PanopticLabelMap, path: str | Path) -> list[dict]:
    """Write the segment-id PNG for one map; returns its segments_info list.

    Things segments use their instance id as the segment id (so a read-back
    reproduces the map exactly); stuff segments get ids above those.
    """
    segments = panoptic.segments()
    thing_ids = [inst for _, inst, _ in segments if inst > 0]
    if len(set(thing_ids)) != len(thing_ids):
        raise CocoFormatError("instance ids must be unique per image to export")
    next_free = max(thing_ids, default=0) + 1

    id_map = np.zeros(panoptic.shape, dtype=np.int64)
    segments_info = []
    for class_id, instance_id, area in segments:
        if instance_id > 0:
            seg_id = instance_id
        else:
            seg_id = next_free
            next_free += 1
        id_map[panoptic.segment_mask(class_id, instance_id)] = seg_id
        segments_info.append({
            "id": seg_id,
            "category_id": class_id + 1,
            "iscrowd": 1 if (class_id, instance_id) in panoptic.crowd_segments else 0,
            "area": area,
        })
    Image.fromarray(encode_segment_ids(id_map)).save(path)
    return segments_info


def write_coco_panoptic(samples: list[Sample], catalog: ClassCatalog,
                        json_path: str | Path, png_dir: str | Path) -> None:
    """Export samples (labels only) to the COCO-panoptic layout."""
    png_dir = Path(png_dir)
    png_dir.mkdir(parents=True, exist_ok=True)
    images, annotations = [], []
    for i, sample in enumerate(samples):
        file_name = f"{i:06d}.png"
        segments_info = write_panoptic_png(sample.panoptic, png_dir / file_name)
        images.append({"id": i, "file_name": file_name,
                       "width": sample.width, "height": sample.height})
        annotations.append({"image_id": i, "file_name": file_name,
                            "segments_info": segments_info})
    categories = (
        [{"id": c + 1, "name": catalog.things[c], "isthing": 1}
         for c in range(catalog.n_things)]
        + [{"id": catalog.n_things + k + 1, "name": catalog.stuff[k], "isthing": 0}
           for k in range(catalog.n_stuff)]
    )
    payload = {"images": images, "annotations": annotations, "categories": categories}
    Path(json_path).write_text(json.dumps(payload))


def _catalog_from_categories(categories: list[dict]) -> tuple[ClassCatalog, dict[int, int]]:
    things = sorted((c for c in categories if c.get("isthing", 1)), key=lambda c: c["id"])
    stuff = sorted((c for c in categories if not c.get("isthing", 1)), key=lambda c: c["id"])
    catalog = ClassCatalog(things=[c["name"] for c in things],
                           stuff=[c["name"] for c in stuff])
    mapping = {c["id"]: i for i, c in enumerate(things)}
    mapping.update({c["id"]: catalog.n_things + i for i, c in enumerate(stuff)})
    return catalog, mapping


def load_coco_panoptic(json_path: str | Path, png_dir: str | Path,
                       images_dir: str | Path | None = None):
    """Returns (catalog, iterator of Samples).

    Missing PNGs, ids absent from segments_info and malformed ids are hard
    failures naming the offending image. Crowd segments are kept in the map
    (flagged in crowd_segments) so training maps them to unlabeled while PQ
    applies its ignore rules.
    """
    json_path = Path(json_path)
    png_dir = Path(png_dir)
    try:
        payload = json.loads(json_path.read_text())
    except OSError as exc:
        raise CocoFormatError(f"cannot read {json_path}: {exc}") from exc
    catalog, id_map = _catalog_from_categories(payload["categories"])
    annotations = {a["image_id"]: a for a in payload["annotations"]}

    def iterate() -> Iterator[Sample]:
        for info in payload["images"]:
            ann = annotations.get(info["id"])
            if ann is None:
                raise CocoFormatError(f"image {info['file_name']} has no annotation entry")
            png_path = png_dir / ann["file_name"]
            if not png_path.exists():
                raise CocoFormatError(f"missing segment PNG for image {info['file_name']}")
            seg_ids = decode_segment_ids(np.asarray(Image.open(png_path).convert("RGB")))

            by_id = {s["id"]: s for s in ann["segments_info"]}
            class_ids = np.full(seg_ids.shape, VOID_CLASS, dtype=np.int32)
            instance_ids = np.zeros(seg_ids.shape, dtype=np.int32)
            crowd: set[tuple[int, int]] = set()
            for seg_id in np.unique(seg_ids):
                if seg_id == 0:
                    continue
                seg = by_id.get(int(seg_id))
                if seg is None:
                    raise CocoFormatError(
                        f"segment id {seg_id} in PNG of image {info['file_name']} "
                        f"is absent from segments_info")
                internal = id_map.get(seg["category_id"])
                if internal is None:
                    raise CocoFormatError(
                        f"unknown category {seg['category_id']} in image {info['file_name']}")
                region = seg_ids == seg_id
                class_ids[region] = internal
                if catalog.is_thing(internal):
                    # The segment id is the instance identity.
                    instance_ids[region] = int(seg_id)
                    if seg.get("iscrowd", 0):
                        crowd.add((internal, int(seg_id)))

            panoptic = PanopticLabelMap(class_ids, instance_ids, frozenset(crowd))
            image = None
            if images_dir is not None:
                image_path = Path(images_dir) / info["file_name"]
                if image_path.exists():
                    image = np.asarray(Image.open(image_path).convert("RGB"),
                                       dtype=np.float32) / 255.0
            if image is None:
                image = np.zeros((info["height"], info["width"], 3), dtype=np.float32)
            yield Sample(image=image, panoptic=panoptic,
                         instances=instances_from_map(panoptic, catalog.n_things))

    return catalog, iterate()
