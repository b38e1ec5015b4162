from .synthetic import SYNTHETIC_CATALOG, SyntheticDataset, generate_sample
from .coco_panoptic import (
    decode_segment_ids,
    encode_segment_ids,
    load_coco_panoptic,
    write_coco_panoptic,
    write_panoptic_png,
)
from .augment import augment

__all__ = [
    "SYNTHETIC_CATALOG",
    "SyntheticDataset",
    "generate_sample",
    "augment",
    "encode_segment_ids",
    "decode_segment_ids",
    "write_panoptic_png",
    "write_coco_panoptic",
    "load_coco_panoptic",
]
