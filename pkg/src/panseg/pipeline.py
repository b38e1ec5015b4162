"""End-to-end inference: image in, panoptic label map out, no merging stage."""
from __future__ import annotations

import numpy as np
import torch

from .config import RunConfig
from .fusion import fuse
from .masks import generate_masks, make_hard_masks, shuffle_masks
from .model import OracleDetector, PanopticNet, normalize_image, pad_to_multiple
from .structures import GroundTruthInstance, PanopticLabelMap


class PanopticPredictor:
    """Runs the network stages in order and fuses logits into a label map.

    The stage list is the complete timed call graph used by the benchmark:
    there is no post-network merging stage, by construction.
    """

    def __init__(self, net: PanopticNet, config: RunConfig):
        self.net = net
        self.config = config
        self.net.eval()
        self.stages: tuple[tuple[str, object], ...] = (
            ("prepare_input", self._prepare_input),
            ("extract_features", self._extract_features),
            ("detect", self._detect),
            ("build_masks", self._build_masks),
            ("panoptic_head", self._panoptic_head),
            ("fuse_argmax", self._fuse_argmax),
        )

    @torch.no_grad()
    def run(self, image: np.ndarray,
            instances: list[GroundTruthInstance] | None = None,
            rng: np.random.Generator | None = None) -> dict:
        """image: float [H, W, 3]; instances feed the oracle detector only.

        Returns a dict with "panoptic", "stack", "detections".
        """
        ctx: dict = {"image": image, "instances": instances, "rng": rng}
        for _name, stage in self.stages:
            stage(ctx)
        return ctx

    def predict(self, image: np.ndarray,
                instances: list[GroundTruthInstance] | None = None,
                rng: np.random.Generator | None = None) -> PanopticLabelMap:
        return self.run(image, instances, rng)["panoptic"]

    def _prepare_input(self, ctx: dict) -> None:
        image = ctx["image"]
        ctx["image_hw"] = image.shape[:2]
        padded = pad_to_multiple(normalize_image(image), self.config.model.pad_multiple)
        ctx["tensor"] = self.net.to_tensor(padded)
        ctx["feature_hw"] = (padded.shape[0] // self.config.model.feature_stride,
                             padded.shape[1] // self.config.model.feature_stride)

    def _extract_features(self, ctx: dict) -> None:
        pyramid, features = self.net.forward_features(ctx["tensor"])
        ctx["pyramid"] = pyramid
        ctx["features"] = features

    def _detect(self, ctx: dict) -> None:
        if self.config.oracle_detector:
            if ctx["instances"] is None:
                raise ValueError("oracle detector requires ground-truth instances")
            oracle = OracleDetector(self.config.oracle_jitter, self.config.oracle_drop_rate)
            ctx["detections"] = oracle(ctx["instances"], ctx["rng"])
        else:
            cls_logits, box_deltas = self.net.detector(ctx["pyramid"].p3)
            anchors = self.net.detector.anchors_for(*ctx["feature_hw"])
            ctx["detections"] = self.net.detector.detections(
                cls_logits[0], box_deltas[0], anchors, ctx["image_hw"])

    def _build_masks(self, ctx: dict) -> None:
        build = make_hard_masks if self.config.hard_masks else generate_masks
        stack = build(ctx["detections"], *ctx["feature_hw"], self.config.model)
        if self.config.shuffle:
            stack = shuffle_masks(stack, self.config.inference_shuffle_seed)
        ctx["stack"] = stack
        ctx["mask_tensor"] = torch.from_numpy(stack.masks[None])

    def _panoptic_head(self, ctx: dict) -> None:
        ctx["logits"] = self.net.head(ctx["features"], ctx["mask_tensor"])

    def _fuse_argmax(self, ctx: dict) -> None:
        ctx["panoptic"] = fuse(ctx["logits"], ctx["stack"], self.config.model,
                               ctx["image_hw"])
