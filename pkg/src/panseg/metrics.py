"""Panoptic Quality: segment matching at IoU > 0.5 with standard void handling."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .structures import PanopticLabelMap

MATCH_IOU = 0.5


@dataclass
class ClassStats:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    iou_sum: float = 0.0

    def denominator(self) -> float:
        return self.tp + 0.5 * self.fp + 0.5 * self.fn

    @property
    def pq(self) -> float:
        d = self.denominator()
        return self.iou_sum / d if d > 0 else 0.0

    @property
    def sq(self) -> float:
        return self.iou_sum / self.tp if self.tp > 0 else 0.0

    @property
    def rq(self) -> float:
        d = self.denominator()
        return self.tp / d if d > 0 else 0.0


@dataclass
class PQReport:
    """Per-class counts plus the derived PQ/SQ/RQ aggregates.

    Classes with internal id below n_things are things classes; classes
    absent from both prediction and ground truth never enter the stats and
    are excluded from every mean.
    """

    n_things: int
    stats: dict[int, ClassStats] = field(default_factory=dict)

    def _class_stats(self, class_id: int) -> ClassStats:
        return self.stats.setdefault(class_id, ClassStats())

    def _mean(self, class_ids) -> float:
        values = [self.stats[c].pq for c in class_ids]
        return float(np.mean(values)) if values else 0.0

    def present_classes(self) -> list[int]:
        return sorted(c for c, s in self.stats.items() if s.tp + s.fp + s.fn > 0)

    @property
    def pq(self) -> float:
        return self._mean(self.present_classes())

    @property
    def pq_things(self) -> float:
        return self._mean([c for c in self.present_classes() if c < self.n_things])

    @property
    def pq_stuff(self) -> float:
        return self._mean([c for c in self.present_classes() if c >= self.n_things])

    def to_dict(self) -> dict:
        return {
            "pq": self.pq,
            "pq_things": self.pq_things,
            "pq_stuff": self.pq_stuff,
            "n_things": self.n_things,
            "classes": {
                str(c): {"tp": s.tp, "fp": s.fp, "fn": s.fn, "iou_sum": s.iou_sum,
                         "pq": s.pq, "sq": s.sq, "rq": s.rq}
                for c, s in sorted(self.stats.items())
            },
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def _index_segments(panoptic: PanopticLabelMap):
    """Dense per-pixel segment indices; 0 is the void region."""
    index_map = np.zeros(panoptic.shape, dtype=np.int64)
    segments = []
    for i, (class_id, instance_id, area) in enumerate(panoptic.segments(), start=1):
        index_map[panoptic.segment_mask(class_id, instance_id)] = i
        segments.append((class_id, instance_id, area))
    return index_map, segments


def compute_pq(pred: PanopticLabelMap, gt: PanopticLabelMap, n_things: int) -> PQReport:
    """Match segments of equal class at IoU > 0.5 and tally TP/FP/FN per class.

    GT-void pixels are excluded from each pair's union; an unmatched
    prediction is not an FP when more than half of it lies on GT void or on
    a crowd region of its own class; crowd GT segments are never matched or
    counted as FN.
    """
    if pred.shape != gt.shape:
        raise ValueError(f"resolution mismatch: pred {pred.shape} vs gt {gt.shape}")

    gt_index, gt_segments = _index_segments(gt)
    pred_index, pred_segments = _index_segments(pred)
    n_pred = len(pred_segments)

    combined = gt_index * (n_pred + 1) + pred_index
    keys, counts = np.unique(combined, return_counts=True)
    inter: dict[tuple[int, int], int] = {}
    for key, count in zip(keys.tolist(), counts.tolist()):
        inter[(key // (n_pred + 1), key % (n_pred + 1))] = count

    gt_crowd = [i for i, (c, inst, _) in enumerate(gt_segments, start=1)
                if (c, inst) in gt.crowd_segments]
    crowd_by_class = {gt_segments[i - 1][0]: i for i in gt_crowd}

    report = PQReport(n_things=n_things)
    matched_gt: set[int] = set()
    matched_pred: set[int] = set()
    for (gi, pi), intersection in inter.items():
        if gi == 0 or pi == 0 or gi in gt_crowd:
            continue
        gt_class, _, gt_area = gt_segments[gi - 1]
        pred_class, _, pred_area = pred_segments[pi - 1]
        if gt_class != pred_class:
            continue
        void_overlap = inter.get((0, pi), 0)
        union = gt_area + pred_area - intersection - void_overlap
        iou = intersection / union
        if iou > MATCH_IOU:
            stats = report._class_stats(gt_class)
            stats.tp += 1
            stats.iou_sum += iou
            matched_gt.add(gi)
            matched_pred.add(pi)

    for gi, (class_id, _, _) in enumerate(gt_segments, start=1):
        if gi in matched_gt or gi in gt_crowd:
            continue
        report._class_stats(class_id).fn += 1

    for pi, (class_id, _, area) in enumerate(pred_segments, start=1):
        if pi in matched_pred:
            continue
        ignored = inter.get((0, pi), 0)
        crowd_seg = crowd_by_class.get(class_id)
        if crowd_seg is not None:
            ignored += inter.get((crowd_seg, pi), 0)
        if ignored / area > 0.5:
            continue
        report._class_stats(class_id).fp += 1
    return report


def aggregate_reports(reports: list[PQReport]) -> PQReport:
    """Pool per-class counts; equals a single pass over the concatenated data."""
    if not reports:
        return PQReport(n_things=0)
    merged = PQReport(n_things=reports[0].n_things)
    for report in reports:
        if report.n_things != merged.n_things:
            raise ValueError("cannot aggregate reports with different class splits")
        for class_id, stats in report.stats.items():
            target = merged._class_stats(class_id)
            target.tp += stats.tp
            target.fp += stats.fp
            target.fn += stats.fn
            target.iou_sum += stats.iou_sum
    return merged


def format_report(report: PQReport, class_names: dict[int, str] | None = None) -> str:
    """Text table with the PQ / PQ_Th / PQ_St columns plus per-class rows."""
    lines = []
    lines.append(f"{'':<16}|{'PQ':>8} |{'PQ_Th':>8} |{'PQ_St':>8}")
    lines.append("-" * 46)
    lines.append(f"{'all':<16}|{report.pq:>8.3f} |{report.pq_things:>8.3f} "
                 f"|{report.pq_stuff:>8.3f}")
    lines.append("")
    lines.append(f"{'class':<16}|{'PQ':>8} |{'SQ':>8} |{'RQ':>8} |{'TP':>5} |{'FP':>5} |{'FN':>5}")
    lines.append("-" * 70)
    for class_id in report.present_classes():
        stats = report.stats[class_id]
        name = (class_names or {}).get(class_id, str(class_id))
        lines.append(f"{name:<16}|{stats.pq:>8.3f} |{stats.sq:>8.3f} |{stats.rq:>8.3f} "
                     f"|{stats.tp:>5} |{stats.fp:>5} |{stats.fn:>5}")
    return "\n".join(lines)
