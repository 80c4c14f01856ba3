"""Input checks shared by the estimator and the CLI."""

import numbers

import numpy as np

from .dbr import RoiPatch
from .geometry import Box3D, Camera


def check_camera(cam):
    if isinstance(cam, Camera):
        return cam
    if isinstance(cam, dict):
        return Camera.from_dict(cam)
    raise TypeError(f"expected a Camera or dict of intrinsics, got {type(cam).__name__}")


def check_theta(theta):
    if not isinstance(theta, numbers.Real) or not np.isfinite(theta):
        raise ValueError(f"heading must be a finite real number, got {theta!r}")
    return float(theta)


def check_patch(patch):
    if not isinstance(patch, RoiPatch):
        raise TypeError(f"expected a RoiPatch, got {type(patch).__name__}")
    v = patch.valid
    if not np.all(np.isfinite(patch.pixels[v])):
        raise ValueError("patch has non-finite pixel coordinates")
    if not np.all(np.isfinite(patch.depth[v])) or np.any(patch.depth[v] <= 0):
        raise ValueError("valid patch pixels need finite positive depth")
    if not np.all(np.isfinite(patch.residuals[v])) or not np.all(np.isfinite(patch.uncertainty[v])):
        raise ValueError("patch has non-finite residuals or uncertainties")
    return patch


def check_patches(X):
    """Validate a sequence of ``(patch, theta)`` pairs."""
    out = []
    for i, item in enumerate(X):
        try:
            patch, theta = item
        except (TypeError, ValueError):
            raise TypeError(f"sample {i}: expected a (RoiPatch, theta) pair") from None
        out.append((check_patch(patch), check_theta(theta)))
    return out


def check_boxes(y):
    boxes = list(y)
    for i, b in enumerate(boxes):
        if not isinstance(b, Box3D):
            raise TypeError(f"target {i}: expected Box3D, got {type(b).__name__}")
    return boxes


def boxes_to_array(boxes):
    """Rows of ``(x, y, z, h, w, l, theta)``."""
    return np.array([[*b.params(), b.theta] for b in boxes], dtype=float).reshape(-1, 7)


def array_to_boxes(arr):
    arr = np.asarray(arr, dtype=float).reshape(-1, 7)
    return [Box3D(r[:3], h=r[3], w=r[4], l=r[5], theta=r[6]) for r in arr]
