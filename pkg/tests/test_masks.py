from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from panseg.config import ModelConfig
from panseg.masks import (EMPTY_SLOT, generate_masks, make_hard_masks,
                          shuffle_masks, unshuffle_masks)
from panseg.structures import Detection

from conftest import random_detection


def make_config(**kw) -> ModelConfig:
    base = dict(n_att=8, c_att=50.0, n_things=3, n_stuff=2, f_dim=16,
                backbone_width=8, head_width=16)
    base.update(kw)
    return ModelConfig(**base)


from oracles import gaussian_mask_oracle as gaussian_oracle


# Box centered on a feature pixel center: x_c = (12 + 0.5) * 8 = 100.
CENTERED_BOX = Detection(class_id=0, score=1.0, box=(100.0, 100.0, 64.0, 64.0))


def test_peak_value_is_c_att():
    config = make_config()
    stack = generate_masks([CENTERED_BOX], 32, 32, config)
    assert stack.masks[0, 12, 12] == pytest.approx(config.c_att)
    assert stack.masks[0].max() == pytest.approx(config.c_att)


def test_edge_midpoint_value_exp_minus_two():
    # Horizontal edge midpoint of the box sits exactly on feature pixel
    # (12, 16); with sigma = w/4 its value is C_att * e^-2.
    config = make_config()
    stack = generate_masks([CENTERED_BOX], 32, 32, config)
    expected = config.c_att * math.exp(-2.0)
    assert stack.masks[0, 12, 16] == pytest.approx(expected, rel=1e-6)
    assert expected == pytest.approx(0.1353 * config.c_att, abs=0.01 * config.c_att)


def test_matches_per_pixel_oracle():
    config = make_config()
    rng = np.random.default_rng(7)
    for _ in range(10):
        det = random_detection(rng)
        stack = generate_masks([det], 32, 32, config)
        oracle = gaussian_oracle(det, 32, 32, config.c_att)
        np.testing.assert_allclose(stack.masks[0], oracle, rtol=1e-5, atol=1e-6)


def test_selection_keeps_top_scores():
    config = make_config(n_att=50)
    rng = np.random.default_rng(3)
    detections = [random_detection(rng) for _ in range(60)]
    stack = generate_masks(detections, 32, 32, config)
    kept_scores = sorted(d.score for d in stack.slot_detections if d is not None)
    expected = sorted(d.score for d in detections)[10:]
    assert kept_scores == pytest.approx(expected)


def test_few_detections_leave_zero_slots():
    config = make_config(n_att=50)
    rng = np.random.default_rng(4)
    detections = [random_detection(rng) for _ in range(3)]
    stack = generate_masks(detections, 32, 32, config)
    empty = [s for s in range(50) if stack.slot_detections[s] is None]
    assert len(empty) == 47
    for s in empty:
        assert not stack.masks[s].any()
        assert stack.permutation[s] == EMPTY_SLOT


def test_mask_range_and_support():
    config = make_config()
    rng = np.random.default_rng(11)
    for _ in range(20):
        det = random_detection(rng)
        stack = generate_masks([det], 32, 32, config)
        mask = stack.masks[0]
        assert mask.min() >= 0.0
        assert mask.max() <= config.c_att * (1 + 1e-6)
        oracle = gaussian_oracle(det, 32, 32, config.c_att)
        assert not mask[oracle == 0].any()


def test_monotonic_decay_from_center():
    config = make_config()
    stack = generate_masks([CENTERED_BOX], 32, 32, config)
    mask = stack.masks[0]
    row = mask[12, 12:]
    col = mask[12:, 12]
    assert np.all(np.diff(row[row > 0]) <= 1e-9)
    assert np.all(np.diff(col[col > 0]) <= 1e-9)


def test_degenerate_box_leaves_empty_slot(caplog):
    config = make_config()
    # Box entirely beyond the feature map extent clips to zero area.
    det = Detection(class_id=0, score=1.0, box=(400.0, 100.0, 20.0, 10.0))
    with caplog.at_level("WARNING"):
        stack = generate_masks([det], 32, 32, config)
    assert stack.slot_detections[0] is None
    assert "no area" in caplog.text


def test_variance_mode_widens_small_boxes():
    std_cfg = make_config(sigma_mode="std")
    var_cfg = make_config(sigma_mode="variance")
    det = Detection(class_id=0, score=1.0, box=(100.0, 100.0, 64.0, 64.0))
    soft_std = generate_masks([det], 32, 32, std_cfg).masks[0]
    soft_var = generate_masks([det], 32, 32, var_cfg).masks[0]
    assert not np.allclose(soft_std, soft_var)


def test_hard_masks_constant_fill():
    config = make_config()
    stack = make_hard_masks([CENTERED_BOX], 32, 32, config)
    soft = generate_masks([CENTERED_BOX], 32, 32, config)
    mask = stack.masks[0]
    inside = mask > 0
    assert np.all(mask[inside] == config.c_att)
    # Outside the box everything stays zero, and hard >= soft pointwise.
    assert np.all(mask[~inside] == 0)
    assert np.all(mask >= soft.masks[0] - 1e-6)


def test_shuffle_deterministic_and_invertible():
    config = make_config()
    rng = np.random.default_rng(5)
    detections = [random_detection(rng) for _ in range(5)]
    stack = generate_masks(detections, 32, 32, config)
    shuffled_a = shuffle_masks(stack, 123)
    shuffled_b = shuffle_masks(stack, 123)
    np.testing.assert_array_equal(shuffled_a.masks, shuffled_b.masks)
    np.testing.assert_array_equal(shuffled_a.permutation, shuffled_b.permutation)

    restored = unshuffle_masks(shuffled_a)
    np.testing.assert_array_equal(restored.masks, stack.masks)
    np.testing.assert_array_equal(restored.permutation, stack.permutation)
    assert restored.slot_detections == stack.slot_detections


def test_shuffle_preserves_mask_multiset():
    config = make_config()
    rng = np.random.default_rng(6)
    detections = [random_detection(rng) for _ in range(6)]
    stack = generate_masks(detections, 32, 32, config)
    shuffled = shuffle_masks(stack, 99)
    original = sorted(stack.masks.sum(axis=(1, 2)).tolist())
    after = sorted(shuffled.masks.sum(axis=(1, 2)).tolist())
    assert original == pytest.approx(after)


def test_shuffle_uniform_over_permutations():
    config = make_config(n_att=4)
    rng = np.random.default_rng(8)
    detections = [random_detection(rng) for _ in range(4)]
    stack = generate_masks(detections, 32, 32, config)

    counts = {perm: 0 for perm in itertools.permutations(range(4))}
    trials = 10_000
    for seed in range(trials):
        shuffled = shuffle_masks(stack, seed)
        counts[tuple(shuffled.permutation.tolist())] += 1
    for perm, count in counts.items():
        assert abs(count / trials - 1 / 24) < 0.01, f"permutation {perm} frequency off"
