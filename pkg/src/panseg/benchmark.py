"""Inference latency harness: warmup, timed runs, no merging stage to report."""
from __future__ import annotations

import time

import numpy as np

from .config import RunConfig
from .pipeline import PanopticPredictor
from .structures import GroundTruthInstance

MERGE_STAGE_MARKERS = ("merge", "merging", "postprocess")


def _benchmark_input(config: RunConfig, resolution: tuple[int, int]):
    """A deterministic random image, plus one boxed instance for oracle mode."""
    h, w = resolution
    rng = np.random.default_rng(config.seed)
    image = rng.random((h, w, 3), dtype=np.float32)
    instances = None
    if config.oracle_detector:
        mask = np.zeros((h, w), dtype=bool)
        mask[h // 4: 3 * h // 4, w // 4: 3 * w // 4] = True
        instances = [GroundTruthInstance.from_mask(0, 1, mask)]
    return image, instances


def assert_no_merge_stage(predictor: PanopticPredictor) -> None:
    """Structural check: the timed call graph has no post-network merge step."""
    names = [name for name, _ in predictor.stages]
    offenders = [n for n in names if any(m in n.lower() for m in MERGE_STAGE_MARKERS)]
    if offenders:
        raise AssertionError(f"timed pipeline contains merging stages: {offenders}")
    if names[-1] != "fuse_argmax":
        raise AssertionError("pipeline must end at the argmax fusion stage")


def run_benchmark(predictor: PanopticPredictor, config: RunConfig,
                  resolution: tuple[int, int], iterations: int,
                  warmup: int = 10) -> dict:
    """Time the end-to-end prediction path; warmup runs are excluded.

    Data loading and PNG encoding are outside the timed region.
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    assert_no_merge_stage(predictor)
    image, instances = _benchmark_input(config, resolution)

    for _ in range(warmup):
        predictor.predict(image, instances)

    samples_ms = []
    for _ in range(iterations):
        start = time.perf_counter()
        predictor.predict(image, instances)
        samples_ms.append((time.perf_counter() - start) * 1000.0)

    return {
        "resolution": [resolution[0], resolution[1]],
        "iterations": iterations,
        "warmup": warmup,
        "inference_ms_mean": float(np.mean(samples_ms)),
        "inference_ms_std": float(np.std(samples_ms)),
        "merging_ms": "n/a",
        "total_ms_mean": float(np.mean(samples_ms)),
        "timed_stages": [name for name, _ in predictor.stages],
    }
