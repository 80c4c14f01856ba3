"""Ground-truth depth-bounding-box residuals (DBR).

For a point ``P`` and a face ``j`` of a box, the residual ``R_j`` is the signed
distance along the outward normal from ``P`` to the face plane, so that the
foot point ``P + R_j n_j`` lies on the face. Negative values mean ``P`` lies
outside the face's half-space.
"""

from dataclasses import dataclass, replace

import numpy as np

from .geometry import face_normals, half_extents

DEFAULT_U_OCCLUDED = 0.9


def gt_dbr(P, box):
    """Residuals of point(s) ``P`` (..., 3) to all six faces, shape (..., 6)."""
    P = np.asarray(P, dtype=float)
    normals = face_normals(box.theta)
    return half_extents(box) - (P - box.center) @ normals.T


def foot_points(P, R, theta):
    """Projections ``B_j = P + R_j n_j`` onto each face plane, shape (..., 6, 3)."""
    P = np.asarray(P, dtype=float)
    normals = face_normals(theta)
    return P[..., None, :] + np.asarray(R)[..., :, None] * normals


def visibility_uncertainty(P, box, cam=None, u_occluded=DEFAULT_U_OCCLUDED):
    """Two-level visibility stand-in for learned per-face uncertainty.

    A face gets 0 when its outward normal points back toward the camera as seen
    from ``P`` (``n_j . P < 0``, camera at the origin) and ``u_occluded``
    otherwise. ``cam`` is accepted for interface symmetry; only the camera
    center matters and it is the origin of the frame.
    """
    if not 0.0 <= u_occluded <= 1.0:
        raise ValueError(f"u_occluded must lie in [0, 1], got {u_occluded}")
    P = np.asarray(P, dtype=float)
    facing = P @ face_normals(box.theta).T < 0
    return np.where(facing, 0.0, u_occluded)


@dataclass
class RoiPatch:
    """Per-object region of interest on the (strided) field grid.

    Arrays are aligned on the first axis, one entry per cell in the region.

    Attributes
    ----------
    pixels : (N, 2) pixel coordinates of the cell centers
    depth : (N,) depth (z) in meters
    residuals : (N, 6) DBR per face
    uncertainty : (N, 6) per-face uncertainty in [0, 1]
    valid : (N,) bool
    cells : (N, 2) integer (row, col) indices into the field grid, optional
    """

    pixels: np.ndarray
    depth: np.ndarray
    residuals: np.ndarray
    uncertainty: np.ndarray
    valid: np.ndarray
    cells: np.ndarray = None

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=float).reshape(-1, 2)
        n = len(self.pixels)
        self.depth = np.asarray(self.depth, dtype=float).reshape(n)
        self.residuals = np.asarray(self.residuals, dtype=float).reshape(n, 6)
        self.uncertainty = np.asarray(self.uncertainty, dtype=float).reshape(n, 6)
        self.valid = np.asarray(self.valid, dtype=bool).reshape(n)
        if self.cells is not None:
            self.cells = np.asarray(self.cells, dtype=int).reshape(n, 2)

    def __len__(self):
        return len(self.pixels)

    @property
    def n_valid(self):
        return int(self.valid.sum())

    def copy(self, **changes):
        fields = {
            "pixels": self.pixels.copy(),
            "depth": self.depth.copy(),
            "residuals": self.residuals.copy(),
            "uncertainty": self.uncertainty.copy(),
            "valid": self.valid.copy(),
            "cells": None if self.cells is None else self.cells.copy(),
        }
        fields.update(changes)
        return replace(self, **fields)
