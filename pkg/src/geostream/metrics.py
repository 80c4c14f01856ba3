"""Rotated-box IoU and 40-recall-point average precision."""

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import bev_corners

N_RECALL_POINTS = 40
RECALL_POINTS = np.arange(1, N_RECALL_POINTS + 1) / N_RECALL_POINTS


@dataclass
class Detection:
    box: object
    score: float
    label: str = "Car"

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValueError("detection score must be finite")


def _ccw(poly):
    x, y = poly[:, 0], poly[:, 1]
    area2 = np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)
    return poly if area2 >= 0 else poly[::-1]


def polygon_area(poly):
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def clip_convex(subject, clip):
    """Sutherland-Hodgman: intersection of two convex polygons (CCW, (N, 2))."""
    output = [tuple(p) for p in subject]
    n = len(clip)
    for i in range(n):
        if not output:
            break
        ax, ay = clip[i]
        bx, by = clip[(i + 1) % n]
        ex, ey = bx - ax, by - ay

        def side(p):
            return ex * (p[1] - ay) - ey * (p[0] - ax)

        inputs, output = output, []
        prev = inputs[-1]
        s_prev = side(prev)
        for cur in inputs:
            s_cur = side(cur)
            if s_cur >= 0:
                if s_prev < 0:
                    output.append(_cross_point(prev, cur, s_prev, s_cur))
                output.append(cur)
            elif s_prev >= 0:
                output.append(_cross_point(prev, cur, s_prev, s_cur))
            prev, s_prev = cur, s_cur
    return np.array(output, dtype=float).reshape(-1, 2)


def _cross_point(p, q, sp, sq):
    t = sp / (sp - sq)
    return (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))


def bev_polygon(box):
    """BEV footprint as a CCW polygon in the (x, z) plane."""
    return _ccw(bev_corners(box)[:, [0, 2]])


def bev_intersection_area(a, b):
    return polygon_area(clip_convex(bev_polygon(a), bev_polygon(b)))


def iou_bev(a, b):
    inter = bev_intersection_area(a, b)
    union = a.l * a.w + b.l * b.w - inter
    return inter / union if union > 0 else 0.0


def iou_3d(a, b):
    top = max(a.center[1] - a.h / 2, b.center[1] - b.h / 2)
    bottom = min(a.center[1] + a.h / 2, b.center[1] + b.h / 2)
    overlap_h = max(0.0, bottom - top)
    if overlap_h == 0.0:
        return 0.0
    inter = bev_intersection_area(a, b) * overlap_h
    union = a.volume + b.volume - inter
    return inter / union if union > 0 else 0.0


_IOU = {"3d": iou_3d, "bev": iou_bev}


def iou_matrix(boxes_a, boxes_b, mode="3d"):
    fn = _IOU[mode.lower()]
    out = np.zeros((len(boxes_a), len(boxes_b)))
    for i, a in enumerate(boxes_a):
        for j, b in enumerate(boxes_b):
            out[i, j] = fn(a, b)
    return out


@dataclass
class EvalReport:
    mode: str
    iou_threshold: float
    ap: float
    precision: np.ndarray = field(repr=False)
    recall_points: np.ndarray = field(default_factory=lambda: RECALL_POINTS.copy(), repr=False)
    matches: list = field(default_factory=list, repr=False)
    n_gt: int = 0
    n_det: int = 0

    def as_dict(self):
        return {
            "mode": self.mode,
            "iou_threshold": self.iou_threshold,
            "ap": self.ap,
            "precision": [float(p) for p in self.precision],
            "recall_points": [float(r) for r in self.recall_points],
            "matches": [[int(m) for m in frame] for frame in self.matches],
            "n_gt": self.n_gt,
            "n_det": self.n_det,
        }


def _as_iou(iou, n_det):
    # keep a (0, n_gt) matrix intact so frames without detections still count their GTs
    iou = np.asarray(iou, dtype=float)
    return iou if iou.ndim == 2 else iou.reshape(n_det, -1)


def greedy_match(scores, iou, threshold):
    """Match detections in descending score order to the best free GT.

    Returns, per detection (in input order), the matched GT index or -1.
    """
    scores = np.asarray(scores, dtype=float)
    iou = _as_iou(iou, len(scores))
    taken = np.zeros(iou.shape[1], dtype=bool)
    assign = np.full(len(scores), -1)
    for d in np.argsort(-scores, kind="stable"):
        cand = np.where(~taken & (iou[d] >= threshold), iou[d], -np.inf)
        if cand.size and np.isfinite(cand.max()):
            g = int(np.argmax(cand))
            taken[g] = True
            assign[d] = g
    return assign


def ap_from_matches(frames, threshold):
    """AP|R40 over frames given ``(scores, iou_matrix)`` per frame.

    Returns ``(ap, interpolated_precision, matches)``.
    """
    all_scores, all_tp, matches = [], [], []
    n_gt = 0
    for scores, iou in frames:
        scores = np.asarray(scores, dtype=float)
        iou = _as_iou(iou, len(scores))
        n_gt += iou.shape[1]
        assign = greedy_match(scores, iou, threshold)
        matches.append(assign)
        all_scores.append(scores)
        all_tp.append(assign >= 0)
    precision = np.zeros(N_RECALL_POINTS)
    if n_gt == 0:
        return 0.0, precision, matches
    scores = np.concatenate(all_scores) if all_scores else np.zeros(0)
    tp = np.concatenate(all_tp) if all_tp else np.zeros(0, dtype=bool)
    order = np.argsort(-scores, kind="stable")
    scores, tp = scores[order], tp[order]
    tp_cum = np.cumsum(tp)
    # operating points only at the last detection of each tie group
    ends = np.flatnonzero(np.append(scores[1:] != scores[:-1], True)) if scores.size else []
    for e in ends:
        n_tp = int(tp_cum[e])
        prec = n_tp / (e + 1)
        # recall point i/40 is reached when n_tp / n_gt >= i / 40
        reached = np.arange(1, N_RECALL_POINTS + 1) * n_gt <= n_tp * N_RECALL_POINTS
        precision = np.where(reached, np.maximum(precision, prec), precision)
    return math.fsum(precision) / N_RECALL_POINTS, precision, matches


def ap_r40(detections, gts, iou_threshold=0.7, mode="3d"):
    """Average precision over 40 recall points for one frame.

    ``detections`` is a list of :class:`Detection`, ``gts`` a list of boxes.
    For multiple frames pass lists of lists to :func:`ap_r40_frames`.
    """
    return ap_r40_frames([(detections, gts)], iou_threshold, mode)


def ap_r40_frames(frames, iou_threshold=0.7, mode="3d"):
    if not 0 < iou_threshold <= 1:
        raise ValueError("iou_threshold must lie in (0, 1]")
    mode = mode.lower()
    inputs = []
    n_det = n_gt = 0
    for dets, gts in frames:
        scores = [d.score for d in dets]
        iou = iou_matrix([d.box for d in dets], gts, mode)
        inputs.append((scores, iou))
        n_det += len(dets)
        n_gt += len(gts)
    ap, precision, matches = ap_from_matches(inputs, iou_threshold)
    return EvalReport(mode, iou_threshold, ap, precision, RECALL_POINTS.copy(), matches, n_gt, n_det)


def evaluate(frames, iou_threshold=0.7):
    """3D and BEV reports for the same detections."""
    return {m: ap_r40_frames(frames, iou_threshold, m) for m in ("3d", "bev")}
