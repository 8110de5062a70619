# -*- coding: utf-8 -*-
"""
Toy BEV detector and VOC-style evaluation.

The detector thresholds a foreground map, labels 4-connected components and
boxes each one axis-aligned. It stands in for a trained detection head, so
its numbers measure alignment quality, not detector quality.
"""

from collections import namedtuple
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..exceptions import ConfigError, ValidationError

AP_METHODS = ("11point", "area")
IOU_THRESHOLDS = (0.5, 0.7)

DETECTOR_NOTE = "toy detector: thresholded foreground map, 4-connected components, axis-aligned boxes"

DetectionResult = namedtuple("DetectionResult", ["ap", "matches", "mean_iou", "detections"])


@dataclass(frozen=True)
class Detection:
    x0: float
    y0: float
    x1: float
    y1: float
    score: float
    cells: int

    def polygon(self):
        return np.array([[self.x0, self.y0], [self.x1, self.y0], [self.x1, self.y1], [self.x0, self.y1]])

    def to_json(self):
        return {
            "box": [self.x0, self.y0, self.x1, self.y1],
            "score": self.score,
            "cells": self.cells,
        }


def detect_boxes(fg_map, spec, threshold=0.5):
    """components of fg_map >= threshold, highest mean score first"""
    grid = np.asarray(fg_map, dtype=np.float64)
    if grid.ndim == 3:
        grid = grid[0]
    if grid.shape != (spec.height, spec.width):
        raise ValidationError("foreground map %s does not fit the BEV spec" % (grid.shape,))
    if grid.size and (grid.min() < 0.0 or grid.max() > 1.0):
        raise ValidationError("foreground map leaves [0, 1]")
    labels, count = ndimage.label(grid >= threshold)
    x0, y0 = spec.origin
    cell = spec.cell_size
    detections = []
    for index, (rows, cols) in enumerate(ndimage.find_objects(labels), start=1):
        member = labels[rows, cols] == index
        detections.append(
            Detection(
                x0 + cols.start * cell,
                y0 + rows.start * cell,
                x0 + cols.stop * cell,
                y0 + rows.stop * cell,
                float(grid[rows, cols][member].mean()),
                int(member.sum()),
            )
        )
    # stable: ties keep label order
    return sorted(detections, key=lambda d: -d.score)


def polygon_area(poly):
    """shoelace; positive for counter-clockwise vertices"""
    if len(poly) < 3:
        return 0.0
    x, y = np.asarray(poly, dtype=np.float64).T
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def clip_polygon(subject, clip):
    """Sutherland-Hodgman: subject clipped by a convex counter-clockwise polygon"""
    output = [tuple(p) for p in subject]
    clip = [tuple(p) for p in clip]
    for i in range(len(clip)):
        if not output:
            break
        (ax, ay), (bx, by) = clip[i - 1], clip[i]

        def inside(p):
            return (bx - ax) * (p[1] - ay) - (by - ay) * (p[0] - ax) >= 0.0

        def crossing(p, q):
            dx, dy = q[0] - p[0], q[1] - p[1]
            denom = (bx - ax) * dy - (by - ay) * dx
            s = ((bx - ax) * (ay - p[1]) - (by - ay) * (ax - p[0])) / denom
            return (p[0] + s * dx, p[1] + s * dy)

        points, output = output, []
        for j in range(len(points)):
            cur, prev = points[j], points[j - 1]
            if inside(cur):
                if not inside(prev):
                    output.append(crossing(prev, cur))
                output.append(cur)
            elif inside(prev):
                output.append(crossing(prev, cur))
    return np.array(output).reshape(-1, 2)


def bev_iou(detection, box):
    """IoU of an axis-aligned detection and an oriented box footprint"""
    det = detection.polygon()
    gt = box.corners_2d()
    inter = abs(polygon_area(clip_polygon(det, gt)))
    union = abs(polygon_area(det)) + box.l * box.w - inter
    return inter / union if union > 0 else 0.0


def match_detections(detections, boxes, iou_threshold):
    """
    VOC matching in score order: each detection looks at the ground-truth
    box it overlaps most, taken or not. It is a true positive when that IoU
    reaches the threshold and the box is still free, otherwise a false
    positive (a duplicate never falls back to a weaker box).
    """
    taken = set()
    matches = []
    for rank, det in enumerate(detections):
        best, best_iou = None, 0.0
        for g, box in enumerate(boxes):
            iou = bev_iou(det, box)
            if iou > best_iou:
                best, best_iou = g, iou
        tp = best is not None and best_iou >= iou_threshold and best not in taken
        if tp:
            taken.add(best)
        matches.append({
            "detection": rank,
            "gt": best if tp else None,
            "iou": best_iou,
            "score": det.score,
            "tp": tp,
        })
    return matches


def average_precision(tp, n_gt, method="11point"):
    """AP of a ranked list of true/false positive flags"""
    if method not in AP_METHODS:
        raise ConfigError("detect.ap_method", "must be one of %s" % (AP_METHODS,))
    tp = np.asarray(tp, dtype=np.float64)
    if n_gt == 0:
        return 1.0 if tp.size == 0 else 0.0
    if tp.size == 0:
        return 0.0
    tp_cum = np.cumsum(tp)
    rec = tp_cum / n_gt
    prec = tp_cum / np.arange(1, tp.size + 1)
    if method == "11point":
        ap = 0.0
        for t in [i / 10.0 for i in range(11)]:
            hit = rec >= t
            ap += (np.max(prec[hit]) if hit.any() else 0.0) / 11.0
        return float(ap)
    mrec = np.concatenate(([0.0], rec, [1.0]))
    mpre = np.concatenate(([0.0], prec, [0.0]))
    mpre = np.maximum.accumulate(mpre[::-1])[::-1]
    i = np.flatnonzero(mrec[1:] != mrec[:-1])
    return float(np.sum((mrec[i + 1] - mrec[i]) * mpre[i + 1]))


def evaluate_detection(fg_map, boxes, spec, threshold=0.5, iou_thresholds=IOU_THRESHOLDS,
                       method="11point"):
    detections = detect_boxes(fg_map, spec, threshold)
    ap, all_matches = {}, {}
    for iou_threshold in iou_thresholds:
        matches = match_detections(detections, boxes, iou_threshold)
        ap["%.2f" % iou_threshold] = average_precision(
            [m["tp"] for m in matches], len(boxes), method
        )
        all_matches["%.2f" % iou_threshold] = matches
    if boxes:
        best = [max([bev_iou(d, b) for d in detections] or [0.0]) for b in boxes]
        mean_iou = float(np.mean(best))
    else:
        mean_iou = 0.0
    return DetectionResult(ap, all_matches, mean_iou, detections)
