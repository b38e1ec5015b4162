"""panseg: single-shot panoptic segmentation through attention-mask
conditioned dense classification, with a Panoptic Quality evaluator and a
synthetic shapes-world for verifiable desk-scale training."""

from .config import DataConfig, ModelConfig, RunConfig, TrainConfig
from .structures import (ClassCatalog, Detection, GroundTruthInstance,
                         PanopticLabelMap, Sample, VOID_CLASS)

__version__ = "0.1.0"

__all__ = [
    "ModelConfig",
    "TrainConfig",
    "DataConfig",
    "RunConfig",
    "Detection",
    "GroundTruthInstance",
    "PanopticLabelMap",
    "ClassCatalog",
    "Sample",
    "VOID_CLASS",
]
