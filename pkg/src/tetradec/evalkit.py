"""Detection evaluation: COCO-protocol AP over tetragon IoU and use-case metrics.

AP uses greedy per-image matching, 101-point precision interpolation, and the
ten equidistant IoU thresholds 0.50 .. 0.95. The use-case report assumes
exactly two ground-truth sides per image, assigns the top-2 detections
left-to-right by centroid, and counts a side as correct at IoU >= 0.8.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import BadGtCardinality
from .decoder import Detection
from .gt_encoder import Annotation
from .geometry import tetragon_iou

__all__ = [
    "COCO_THRESHOLDS",
    "EvalReport",
    "UseCaseReport",
    "match_detections",
    "average_precision",
    "usecase_metrics",
]

COCO_THRESHOLDS: tuple[float, ...] = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_GRID = np.linspace(0.0, 1.0, 101)
USECASE_ASSIGN_IOU = 0.5
USECASE_CORRECT_IOU = 0.8


@dataclass
class EvalReport:
    """COCO-style AP summary; ap is the mean of ap_at over thresholds."""

    ap: float
    ap_at: dict[float, float]
    per_class: dict[int, float] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        return {
            "ap": self.ap,
            "ap_at": {f"{t:.2f}": v for t, v in self.ap_at.items()},
            "per_class": {str(c): v for c, v in self.per_class.items()},
        }


@dataclass
class UseCaseReport:
    """Share of GT sides detected at IoU >= 0.8 and the mean IoU of those."""

    accuracy: float
    mean_iou_positives: float | None

    def to_json_dict(self) -> dict:
        return {"accuracy": self.accuracy, "mean_iou_positives": self.mean_iou_positives}


def match_detections(dets: Sequence[Detection], gts: Sequence[Annotation],
                     iou_thr: float) -> list[int | None]:
    """Greedy single-image matching; dets must already be score-sorted.

    Each detection takes the still-unmatched same-class ground truth with the
    highest IoU >= iou_thr (first such GT on ties). Returns, per detection,
    the index of its matched GT or None.
    """
    taken: set[int] = set()
    out: list[int | None] = []
    for det in dets:
        best = None
        best_iou = 0.0
        for gi, gt in enumerate(gts):
            if gi in taken or gt.class_id != det.class_id:
                continue
            iou = tetragon_iou(det.tetragon, gt.tetragon)
            if iou >= iou_thr and iou > best_iou:
                best, best_iou = gi, iou
        if best is not None:
            taken.add(best)
        out.append(best)
    return out


def _interp_ap(scores: np.ndarray, tp: np.ndarray, n_gt: int) -> float:
    """101-point interpolated AP for one class at one threshold.

    Detections sort by score descending with ties broken by input order.
    """
    if n_gt == 0:
        return 0.0
    if scores.size == 0:
        return 0.0
    order = np.argsort(-scores, kind="stable")
    tp = tp[order]
    cum_tp = np.cumsum(tp)
    recall = cum_tp / n_gt
    precision = cum_tp / np.arange(1, tp.size + 1)
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_GRID, side="left")
    interp = np.where(idx < recall.size, envelope[np.minimum(idx, recall.size - 1)], 0.0)
    return float(np.mean(interp))


def _image_cache(task):
    """Per (image, class) detection scores (score-sorted) and det x gt IoUs."""
    dets, gts, classes = task
    per_class = {}
    for c in classes:
        dsel = [d for d in sorted(dets, key=lambda d: -d.score) if d.class_id == c]
        gsel = [g for g in gts if g.class_id == c]
        ious = np.array([[tetragon_iou(d.tetragon, g.tetragon) for g in gsel]
                         for d in dsel]).reshape(len(dsel), len(gsel))
        per_class[c] = (np.array([d.score for d in dsel]), ious)
    return per_class


def average_precision(dets_per_image: Sequence[Sequence[Detection]],
                      gts_per_image: Sequence[Sequence[Annotation]],
                      thresholds: Sequence[float] = COCO_THRESHOLDS,
                      jobs: int = 1) -> EvalReport:
    """Dataset AP per threshold, averaged over classes, and the overall mean.

    Matching is greedy per image in score order; classes are those present in
    the ground truth. IoU matrices are computed once and reused across
    thresholds; jobs > 1 computes them in a process pool (order-preserving, so
    results are identical to the sequential path).
    """
    classes = sorted({a.class_id for img in gts_per_image for a in img})
    tasks = [(list(dets), list(gts), classes)
             for dets, gts in zip(dets_per_image, gts_per_image)]
    if jobs > 1 and len(tasks) > 1:
        with multiprocessing.Pool(jobs) as pool:
            cache = pool.map(_image_cache, tasks)
    else:
        cache = [_image_cache(t) for t in tasks]

    ap_grid = np.zeros((len(thresholds), len(classes)))
    for ti, thr in enumerate(thresholds):
        for ci, c in enumerate(classes):
            scores_all = []
            tp_all = []
            n_gt = 0
            for per_class in cache:
                scores, ious = per_class[c]
                n_gt += ious.shape[1]
                taken = np.zeros(ious.shape[1], dtype=bool)
                tp = np.zeros(len(scores))
                for di in range(len(scores)):
                    best, best_iou = None, 0.0
                    for gi in range(ious.shape[1]):
                        if taken[gi]:
                            continue
                        if ious[di, gi] >= thr and ious[di, gi] > best_iou:
                            best, best_iou = gi, ious[di, gi]
                    if best is not None:
                        taken[best] = True
                        tp[di] = 1.0
                scores_all.append(scores)
                tp_all.append(tp)
            scores_cat = np.concatenate(scores_all) if scores_all else np.empty(0)
            tp_cat = np.concatenate(tp_all) if tp_all else np.empty(0)
            ap_grid[ti, ci] = _interp_ap(scores_cat, tp_cat, n_gt)

    if not classes:
        ap_at = {float(t): 0.0 for t in thresholds}
        return EvalReport(ap=0.0, ap_at=ap_at, per_class={})
    ap_at = {float(t): float(np.mean(ap_grid[ti])) for ti, t in enumerate(thresholds)}
    per_class = {int(c): float(np.mean(ap_grid[:, ci])) for ci, c in enumerate(classes)}
    return EvalReport(ap=float(np.mean(list(ap_at.values()))), ap_at=ap_at,
                      per_class=per_class)


def _centroid_x(t) -> float:
    return t.centroid().x


def usecase_metrics(dets_per_image: Sequence[Sequence[Detection]],
                    gts_per_image: Sequence[Sequence[Annotation]]) -> UseCaseReport:
    """Two-sides-per-image accuracy and mean IoU over correct detections.

    Per image the two highest-scoring detections are assigned to the two GT
    sides positionally from left to right (centroid x). With fewer than two
    detections, assignment falls back to best IoU >= 0.5. Unassigned sides
    score IoU 0; a side counts as correct at IoU >= 0.8.
    """
    side_ious: list[float] = []
    for img_idx, (dets, gts) in enumerate(zip(dets_per_image, gts_per_image)):
        if len(gts) != 2:
            raise BadGtCardinality(
                f"image index {img_idx}: expected exactly 2 GT sides, got {len(gts)}")
        top = sorted(dets, key=lambda d: -d.score)[:2]
        gt_order = sorted(range(2), key=lambda i: _centroid_x(gts[i].tetragon))
        ious = {0: 0.0, 1: 0.0}
        if len(top) == 2:
            det_order = sorted(top, key=lambda d: _centroid_x(d.tetragon))
            for slot in range(2):
                gi = gt_order[slot]
                ious[gi] = tetragon_iou(det_order[slot].tetragon, gts[gi].tetragon)
        elif len(top) == 1:
            cand = [(tetragon_iou(top[0].tetragon, g.tetragon), gi)
                    for gi, g in enumerate(gts)]
            iou, gi = max(cand)
            if iou >= USECASE_ASSIGN_IOU:
                ious[gi] = iou
        side_ious.extend([ious[0], ious[1]])

    if not side_ious:
        return UseCaseReport(accuracy=0.0, mean_iou_positives=None)
    arr = np.array(side_ious)
    positives = arr[arr >= USECASE_CORRECT_IOU]
    accuracy = float(positives.size / arr.size)
    mean_pos = float(positives.mean()) if positives.size else None
    return UseCaseReport(accuracy=accuracy, mean_iou_positives=mean_pos)
