"""Center-distance average precision split by range bucket."""

from __future__ import annotations

import csv
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..head import PolarBox
from .forward import BUCKETS, Detection, range_bucket

RECALL_POINTS = np.arange(1, 101) / 100.0
_RECALL_TOL = 1e-12


def _as_box(d) -> PolarBox:
    return d.box if isinstance(d, Detection) else d


def _same_class(a: PolarBox, b: PolarBox) -> bool:
    return a.label is None or b.label is None or a.label == b.label


def score_order(dets) -> list[int]:
    """Indices by descending score; ties keep input order."""
    scores = np.array([_as_box(d).score for d in dets], dtype=np.float64)
    return list(np.argsort(-scores, kind="stable"))


def match(dets, gt, threshold: float) -> list[bool]:
    """Greedy one-to-one matching in score order; True marks a true positive.

    Each detection takes the closest still-unmatched ground truth of its class
    whose Cartesian center lies within ``threshold`` meters.
    """
    boxes = [_as_box(d) for d in dets]
    gt = list(gt)
    taken = np.zeros(len(gt), dtype=bool)
    tp = [False] * len(boxes)
    g_xy = np.array([[g.x, g.y] for g in gt]).reshape(-1, 2)
    for i in score_order(boxes):
        b = boxes[i]
        if not gt:
            break
        dist = np.hypot(g_xy[:, 0] - b.x, g_xy[:, 1] - b.y)
        ok = ~taken & (dist <= threshold) & np.array([_same_class(b, g) for g in gt])
        if ok.any():
            j = int(np.argmin(np.where(ok, dist, np.inf)))
            taken[j] = True
            tp[i] = True
    return tp


def average_precision(dets, gt, threshold: float) -> float:
    """Interpolated AP on the recall grid 0.01, 0.02, ..., 1.00.

    Returns nan when there is no ground truth to recall.
    """
    gt = list(gt)
    if not gt:
        return float("nan")
    if not dets:
        return 0.0
    tp = np.array(match(dets, gt, threshold))
    order = score_order(dets)
    hits = tp[order].astype(np.float64)
    cum_tp = np.cumsum(hits)
    precision = cum_tp / np.arange(1, len(hits) + 1)
    recall = cum_tp / len(gt)
    # interpolated precision: best precision at any recall >= r
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    ap = 0.0
    for r in RECALL_POINTS:
        reached = np.nonzero(recall >= r - _RECALL_TOL)[0]
        if reached.size:
            ap += envelope[reached[0]]
    return float(ap / len(RECALL_POINTS))


def evaluate(
    dets,
    gt,
    thresholds=(0.5, 1.0, 2.0, 4.0),
    near_max: float = 18.0,
    far_min: float = 35.0,
) -> dict:
    """AP per bucket ("near", "medium", "far", "all") and threshold, plus "mean".

    Buckets filter detections and ground truth by their own radius.  Buckets
    without ground truth report nan and are left out of the mean.
    """
    boxes = [_as_box(d) for d in dets]
    gt = list(gt)
    result: dict = {}
    for bucket in (*BUCKETS, "all"):
        if bucket == "all":
            d_sel, g_sel = boxes, gt
        else:
            d_sel = [b for b in boxes if range_bucket(b.rho, near_max, far_min) == bucket]
            g_sel = [g for g in gt if range_bucket(g.rho, near_max, far_min) == bucket]
        result[bucket] = {float(t): average_precision(d_sel, g_sel, t) for t in thresholds}
    values = [v for v in result["all"].values() if not np.isnan(v)]
    result["mean"] = float(np.mean(values)) if values else float("nan")
    return result


def mark_matches(dets, gt, threshold: float) -> list[Detection]:
    """Copies of ``dets`` with the matched flag set at ``threshold``."""
    dets = [d if isinstance(d, Detection) else Detection(box=d, bucket=range_bucket(d.rho)) for d in dets]
    return [replace(d, matched=m) for d, m in zip(dets, match(dets, gt, threshold))]


def write_metrics_csv(path, metrics: dict) -> None:
    with open(Path(path), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["bucket", "threshold_m", "ap"])
        for bucket in (*BUCKETS, "all"):
            for t, ap in metrics[bucket].items():
                w.writerow([bucket, repr(t), repr(ap)])
        w.writerow(["mean", "", repr(metrics["mean"])])
