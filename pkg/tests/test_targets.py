from __future__ import annotations

import numpy as np
import pytest

from panseg.config import ModelConfig
from panseg.masks import generate_masks, shuffle_masks
from panseg.matching import match_masks
from panseg.structures import (VOID_CLASS, Detection, PanopticLabelMap,
                               instances_from_map)
from panseg.targets import build_target, downsample_labels


def make_config(n_att=8):
    return ModelConfig(n_att=n_att, c_att=50.0, n_things=3, n_stuff=2,
                       f_dim=16, backbone_width=8, head_width=16)


def synthetic_scene(rng: np.random.Generator, size=128, n_instances=3,
                    with_void=False):
    class_ids = np.zeros((size, size), dtype=np.int32)
    class_ids[: size // 2] = 3  # stuff 0
    class_ids[size // 2:] = 4   # stuff 1
    instance_ids = np.zeros((size, size), dtype=np.int32)
    for i in range(n_instances):
        half = int(rng.integers(12, 24))
        cx = int(rng.integers(half, size - half))
        cy = int(rng.integers(half, size - half))
        class_ids[cy - half:cy + half, cx - half:cx + half] = int(rng.integers(0, 3))
        instance_ids[cy - half:cy + half, cx - half:cx + half] = i + 1
    if with_void:
        class_ids[:8] = VOID_CLASS
        instance_ids[:8] = 0
    panoptic = PanopticLabelMap(class_ids, instance_ids)
    instances = instances_from_map(panoptic, 3)
    return panoptic, instances


def oracle_detections(instances):
    return [Detection(class_id=i.class_id, score=1.0, box=i.center_box())
            for i in instances]


def test_matched_instance_targets_its_slot():
    config = make_config()
    rng = np.random.default_rng(0)
    panoptic, instances = synthetic_scene(rng, n_instances=1)
    stack = generate_masks(oracle_detections(instances), 16, 16, config)
    stack = shuffle_masks(stack, 5)
    assignment = match_masks(stack, instances)
    assert len(assignment.pairs) == 1
    slot = next(iter(assignment.pairs))

    low = downsample_labels(panoptic, 8)
    target = build_target(assignment, low, stack, instances, config)
    inst = instances[assignment.pairs[slot]]
    pixels = (low.class_ids == inst.class_id) & (low.instance_ids == inst.instance_id)
    assert pixels.any()
    assert np.all(target[pixels] == slot)


def test_all_void_targets_last_channel():
    config = make_config()
    panoptic = PanopticLabelMap.full_void(64, 64)
    stack = generate_masks([], 8, 8, config)
    assignment = match_masks(stack, [])
    target = build_target(assignment, downsample_labels(panoptic, 8), stack, [], config)
    assert np.all(target == config.n_out - 1)


def test_unmatched_instance_targets_second_to_last():
    config = make_config()
    rng = np.random.default_rng(1)
    panoptic, instances = synthetic_scene(rng, n_instances=1)
    stack = generate_masks([], 16, 16, config)  # no detections at all
    assignment = match_masks(stack, instances)
    low = downsample_labels(panoptic, 8)
    target = build_target(assignment, low, stack, instances, config)
    inst = instances[0]
    pixels = (low.class_ids == inst.class_id) & (low.instance_ids == inst.instance_id)
    assert pixels.any()
    assert np.all(target[pixels] == config.n_out - 2)


def test_stuff_channels_and_totality():
    config = make_config()
    rng = np.random.default_rng(2)
    panoptic, instances = synthetic_scene(rng, with_void=True)
    stack = generate_masks(oracle_detections(instances), 16, 16, config)
    assignment = match_masks(stack, instances)
    low = downsample_labels(panoptic, 8)
    target = build_target(assignment, low, stack, instances, config)

    assert target.min() >= 0 and target.max() < config.n_out
    stuff0 = low.class_ids == 3
    stuff1 = low.class_ids == 4
    assert np.all(target[stuff0] == config.n_att)
    assert np.all(target[stuff1] == config.n_att + 1)
    void = low.class_ids == VOID_CLASS
    assert np.all(target[void] == config.n_out - 1)


def test_unknown_class_is_hard_failure():
    config = make_config()
    class_ids = np.full((8, 8), 99, dtype=np.int32)
    panoptic = PanopticLabelMap(class_ids, np.zeros((8, 8), dtype=np.int32))
    stack = generate_masks([], 8, 8, config)
    assignment = match_masks(stack, [])
    with pytest.raises(ValueError, match="unknown class"):
        build_target(assignment, panoptic, stack, [], config)


def test_crowd_pixels_become_unlabeled():
    config = make_config()
    class_ids = np.zeros((16, 16), dtype=np.int32)
    class_ids[:] = 3
    class_ids[4:12, 4:12] = 0
    instance_ids = np.zeros((16, 16), dtype=np.int32)
    instance_ids[4:12, 4:12] = 1
    panoptic = PanopticLabelMap(class_ids, instance_ids,
                                crowd_segments=frozenset({(0, 1)}))
    stack = generate_masks([], 16, 16, config)
    target = build_target(match_masks(stack, []), panoptic, stack, [], config)
    assert np.all(target[4:12, 4:12] == config.n_out - 1)


def test_order_preservation_on_random_scenes():
    config = make_config()
    rng = np.random.default_rng(3)
    for _ in range(50):
        panoptic, instances = synthetic_scene(rng, n_instances=int(rng.integers(1, 4)))
        stack = generate_masks(oracle_detections(instances), 16, 16, config)
        stack = shuffle_masks(stack, int(rng.integers(0, 10_000)))
        assignment = match_masks(stack, instances)
        low = downsample_labels(panoptic, 8)
        target = build_target(assignment, low, stack, instances, config)
        for slot, g in assignment.pairs.items():
            inst = instances[g]
            pixels = ((low.class_ids == inst.class_id)
                      & (low.instance_ids == inst.instance_id))
            assert np.all(target[pixels] == slot)


def test_shuffle_consistency_identity():
    """Targets built after shuffling equal the permuted unshuffled targets."""
    config = make_config()
    rng = np.random.default_rng(4)
    for trial in range(20):
        panoptic, instances = synthetic_scene(rng, n_instances=3)
        detections = oracle_detections(instances)
        base = generate_masks(detections, 16, 16, config)
        shuffled = shuffle_masks(base, trial)
        low = downsample_labels(panoptic, 8)

        target_base = build_target(match_masks(base, instances), low, base,
                                   instances, config)
        target_shuf = build_target(match_masks(shuffled, instances), low, shuffled,
                                   instances, config)

        # Slot channel i moved to the slot s with permutation[s] == i.
        remap = np.arange(config.n_out)
        for s, pre in enumerate(shuffled.permutation):
            if pre >= 0:
                remap[pre] = s
        np.testing.assert_array_equal(remap[target_base], target_shuf)


def test_downsample_picks_pixel_centers():
    class_ids = np.zeros((16, 16), dtype=np.int32)
    class_ids[4, 4] = 1  # the center pixel of the first 8x8 cell
    panoptic = PanopticLabelMap(class_ids + 3, np.zeros((16, 16), dtype=np.int32))
    low = downsample_labels(panoptic, 8)
    assert low.shape == (2, 2)
    assert low.class_ids[0, 0] == 4
    assert low.class_ids[0, 1] == 3
