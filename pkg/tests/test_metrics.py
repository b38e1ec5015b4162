from __future__ import annotations

import numpy as np
import pytest

from panseg.metrics import (ClassStats, PQReport, aggregate_reports,
                            compute_pq, format_report)
from panseg.structures import VOID_CLASS, PanopticLabelMap

from oracles import pq_oracle, random_label_map as random_map, reports_equal


def test_perfect_prediction_scores_one():
    rng = np.random.default_rng(0)
    gt = random_map(rng)
    report = compute_pq(gt, gt, n_things=2)
    assert report.pq == pytest.approx(1.0)
    assert report.pq_things == pytest.approx(1.0)
    assert report.pq_stuff == pytest.approx(1.0)


def test_dataset_eval_of_ground_truth_is_perfect():
    from panseg.config import DataConfig
    from panseg.data import SyntheticDataset

    dataset = SyntheticDataset(DataConfig(val_samples=4), "val", seed=0)
    reports = [compute_pq(dataset[i].panoptic, dataset[i].panoptic, 3)
               for i in range(len(dataset))]
    merged = aggregate_reports(reports)
    assert merged.pq == pytest.approx(1.0)
    assert merged.pq_things == pytest.approx(1.0)
    assert merged.pq_stuff == pytest.approx(1.0)


def test_all_void_prediction_is_all_fn():
    rng = np.random.default_rng(1)
    gt = random_map(rng, void_prob=0.0)
    pred = PanopticLabelMap.full_void(*gt.shape)
    report = compute_pq(pred, gt, n_things=2)
    k = len(gt.segments())
    assert sum(s.fn for s in report.stats.values()) == k
    assert sum(s.tp for s in report.stats.values()) == 0
    assert report.pq == 0.0


def test_two_half_overlaps_give_no_tp():
    class_ids = np.zeros((8, 8), dtype=np.int32)
    instance_ids = np.ones((8, 8), dtype=np.int32)
    gt = PanopticLabelMap(class_ids, instance_ids)
    pred_cls = np.zeros((8, 8), dtype=np.int32)
    pred_inst = np.ones((8, 8), dtype=np.int32)
    pred_inst[:, 4:] = 2  # two predictions, each IoU 0.5 (not > 0.5)
    pred = PanopticLabelMap(pred_cls, pred_inst)
    report = compute_pq(pred, gt, n_things=2)
    assert report.stats[0].tp == 0
    assert report.stats[0].fn == 1
    assert report.stats[0].fp == 2


def test_matches_brute_force_oracle():
    rng = np.random.default_rng(42)
    for _ in range(200):
        gt = random_map(rng)
        pred = random_map(rng)
        fast = compute_pq(pred, gt, n_things=2)
        slow = pq_oracle(pred, gt, n_things=2)
        assert reports_equal(fast, slow)


def test_matching_uniqueness_property():
    rng = np.random.default_rng(7)
    for _ in range(100):
        gt = random_map(rng)
        pred = random_map(rng)
        report = compute_pq(pred, gt, n_things=2)
        for cid, stats in report.stats.items():
            gt_count = sum(1 for c, i, _ in gt.segments()
                           if c == cid and (c, i) not in gt.crowd_segments)
            pred_count = sum(1 for c, _, _ in pred.segments() if c == cid)
            assert stats.tp <= min(gt_count, pred_count)
            assert stats.tp + stats.fn == gt_count


def test_relabeling_invariance():
    rng = np.random.default_rng(3)
    gt = random_map(rng)
    pred = random_map(rng)
    base = compute_pq(pred, gt, n_things=2)

    remapped = pred.instance_ids.copy()
    for new, old in enumerate(sorted(np.unique(remapped[remapped > 0])), start=1):
        remapped[pred.instance_ids == old] = new + 100
    shuffled = PanopticLabelMap(pred.class_ids, remapped)
    assert reports_equal(base, compute_pq(shuffled, gt, n_things=2))


def test_monotone_degradation_to_void():
    rng = np.random.default_rng(9)
    gt = random_map(rng, void_prob=0.0)
    pred = PanopticLabelMap(gt.class_ids.copy(), gt.instance_ids.copy())
    base = compute_pq(pred, gt, n_things=2)
    # Flip one row of a TP segment to void.
    cid, iid, _ = gt.segments()[0]
    mask = pred.segment_mask(cid, iid)
    rows = np.nonzero(mask.any(axis=1))[0]
    pred.class_ids[rows[0], mask[rows[0]]] = VOID_CLASS
    pred.instance_ids[rows[0], mask[rows[0]]] = 0
    degraded = compute_pq(pred, gt, n_things=2)
    assert degraded.stats[cid].iou_sum <= base.stats[cid].iou_sum + 1e-12


def test_crowd_segments_ignored():
    class_ids = np.zeros((8, 8), dtype=np.int32)
    instance_ids = np.ones((8, 8), dtype=np.int32)
    gt = PanopticLabelMap(class_ids, instance_ids, crowd_segments=frozenset({(0, 1)}))
    # Prediction entirely inside the crowd region: neither TP nor FP.
    pred = PanopticLabelMap(class_ids.copy(), instance_ids.copy())
    report = compute_pq(pred, gt, n_things=2)
    assert report.stats.get(0, ClassStats()).tp == 0
    assert report.stats.get(0, ClassStats()).fp == 0
    assert report.stats.get(0, ClassStats()).fn == 0


def test_resolution_mismatch_is_error():
    a = PanopticLabelMap.full_void(8, 8)
    b = PanopticLabelMap.full_void(8, 9)
    with pytest.raises(ValueError, match="resolution"):
        compute_pq(a, b, n_things=1)


def test_aggregate_identity_and_neutral_element():
    rng = np.random.default_rng(11)
    gt = random_map(rng)
    pred = random_map(rng)
    report = compute_pq(pred, gt, n_things=2)
    assert reports_equal(aggregate_reports([report]), report)
    empty = PQReport(n_things=2)
    assert reports_equal(aggregate_reports([report, empty]), report)


def test_aggregate_equals_pooled_statistics():
    rng = np.random.default_rng(12)
    pairs = [(random_map(rng), random_map(rng)) for _ in range(8)]
    per_image = [compute_pq(p, g, n_things=2) for p, g in pairs]
    halves = aggregate_reports([aggregate_reports(per_image[:4]),
                                aggregate_reports(per_image[4:])])
    single = aggregate_reports(per_image)
    assert reports_equal(halves, single)


def test_pq_factors_and_bounds():
    rng = np.random.default_rng(13)
    for _ in range(50):
        gt = random_map(rng)
        pred = random_map(rng)
        report = compute_pq(pred, gt, n_things=2)
        assert 0.0 <= report.pq <= 1.0
        for stats in report.stats.values():
            assert 0.0 <= stats.pq <= 1.0
            assert 0.0 <= stats.sq <= 1.0
            assert 0.0 <= stats.rq <= 1.0
            if stats.tp > 0:
                assert stats.pq == pytest.approx(stats.sq * stats.rq)


def test_format_report_layout():
    report = PQReport(n_things=1)
    report.stats[0] = ClassStats(tp=2, fp=1, fn=0, iou_sum=1.6)
    report.stats[1] = ClassStats(tp=1, fp=0, fn=1, iou_sum=0.9)
    table = format_report(report, {0: "circle", 1: "sky"})
    assert "PQ_Th" in table and "PQ_St" in table
    assert "circle" in table and "sky" in table
