"""Independent reference computations used by the tests.

Nothing here calls the code path it checks: objectives are rebuilt from foot
points, AP is recomputed from scratch at every score threshold, IoU is
estimated by sampling, depth by marching along the ray.
"""

import math

import numpy as np
from scipy.optimize import least_squares


def box_frame(box):
    s, c = np.sin(box.theta), np.cos(box.theta)
    # rows: heading, lateral, vertical
    return np.array([[s, 0.0, c], [c, 0.0, -s], [0.0, 1.0, 0.0]])


def inside_box(points, box, pad=0.0):
    local = (np.asarray(points) - box.center) @ box_frame(box).T
    half = np.array([box.l, box.w, box.h]) / 2 + pad
    return np.all(np.abs(local) <= half, axis=-1)


# faces: front, back, left, right, top, bottom
_FACE_ROW = [0, 0, 1, 1, 2, 2]
_FACE_SIGN = [1, -1, -1, 1, -1, 1]


def face_normal_list(theta):
    s, c = np.sin(theta), np.cos(theta)
    heading = np.array([s, 0.0, c])
    lateral = np.array([c, 0.0, -s])
    down = np.array([0.0, 1.0, 0.0])
    return [heading, -heading, -lateral, lateral, -down, down]


def backproject_points(cam, pixels, depth):
    pixels = np.asarray(pixels, float)
    x = (pixels[:, 0] - cam.cx) * depth / cam.fx
    y = (pixels[:, 1] - cam.cy) * depth / cam.fy
    return np.stack([x, y, depth], axis=1)


def plane_fit_objective_residuals(params, P, R, U, theta, prior_lwh, coefs_lwh, mass="total"):
    """Square-root residual vector of the full recovery objective.

    ``params`` = (cx, cy, cz, L, W, H). Built from the foot points
    ``B = P + R_j n_j`` and the plane equation of each face.
    """
    C = params[:3]
    dims = {0: params[3], 1: params[4], 2: params[5]}
    normals = face_normal_list(theta)
    w = np.maximum(0.0, 1.0 - U)
    res = []
    for j, n in enumerate(normals):
        B = P + R[:, j:j + 1] * n
        plane = B @ n - n @ C - dims[_FACE_ROW[j]] / 2
        res.append(np.sqrt(w[:, j]) * plane)
    for k in range(3):
        if mass == "total":
            m = U.sum()
        else:
            m = sum(U[:, j].sum() for j in range(6) if _FACE_ROW[j] == k)
        lam = coefs_lwh[k] * m
        res.append(np.atleast_1d(np.sqrt(lam) * (dims[k] - prior_lwh[k])))
    return np.concatenate(res)


def minimize_objective(P, R, U, theta, prior_lwh, coefs_lwh, x0, mass="total"):
    sol = least_squares(
        plane_fit_objective_residuals, x0,
        args=(P, R, U, theta, prior_lwh, coefs_lwh, mass),
        xtol=1e-15, ftol=1e-15, gtol=1e-15, method="lm",
    )
    return sol.x


def central_difference(f, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        cols.append((np.asarray(f(xp)) - np.asarray(f(xm))) / (2 * h))
    return np.stack(cols, axis=-1)


def monte_carlo_iou_3d(a, b, n=1_000_000, seed=0):
    """Estimate 3D IoU by sampling uniformly inside box ``a``."""
    rng = np.random.default_rng(seed)
    local = rng.uniform(-0.5, 0.5, size=(n, 3)) * np.array([a.l, a.w, a.h])
    pts = a.center + local @ box_frame(a)
    frac = inside_box(pts, b).mean()
    va, vb = a.l * a.w * a.h, b.l * b.w * b.h
    inter = frac * va
    return inter / (va + vb - inter)


def march_depth(ray, boxes, t_max=200.0, step=0.01):
    """Depth (z) of the first point along ``ray`` (unit z) inside any box."""
    ts = np.arange(step, t_max, step)
    pts = ts[:, None] * ray
    inside = np.zeros(ts.size, dtype=bool)
    for b in boxes:
        inside |= inside_box(pts, b)
    if not inside.any():
        return None
    k = int(np.argmax(inside))
    lo, hi = ts[k] - step, ts[k]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if any(inside_box(mid * ray, b) for b in boxes):
            hi = mid
        else:
            lo = mid
    return hi


def _greedy(scores, iou, thr):
    order = sorted(range(len(scores)), key=lambda i: -scores[i])
    used = set()
    tp = 0
    for d in order:
        best, best_g = None, None
        for g in range(len(iou[d]) if len(iou) else 0):
            if g in used or iou[d][g] < thr:
                continue
            if best is None or iou[d][g] > best:
                best, best_g = iou[d][g], g
        if best_g is not None:
            used.add(best_g)
            tp += 1
    return tp


def brute_force_ap40(frames, thr):
    """AP|R40 by rematching from scratch at every distinct score threshold.

    ``frames`` is a list of ``(scores, iou_rows, n_gt)``; returns
    ``(ap, precisions)``.
    """
    n_gt = sum(f[2] for f in frames)
    if n_gt == 0:
        return 0.0, [0.0] * 40
    thresholds = sorted({s for scores, _, _ in frames for s in scores}, reverse=True)
    curve = []
    for t in thresholds:
        tp = n_det = 0
        for scores, iou, _ in frames:
            keep = [i for i, s in enumerate(scores) if s >= t]
            n_det += len(keep)
            tp += _greedy([scores[i] for i in keep], [iou[i] for i in keep], thr)
        curve.append((tp / n_gt, tp / n_det))
    precisions = []
    for i in range(1, 41):
        r = i / 40
        ps = [p for rec, p in curve if rec >= r]
        precisions.append(max(ps) if ps else 0.0)
    return math.fsum(precisions) / 40, precisions
