"""scikit-learn style wrapper around the closed-form box recovery."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import GeostreamError
from .geometry import SizePrior
from .metrics import iou_3d
from .recovery import SolverConfig, recover_box
from .validation import (
    array_to_boxes,
    boxes_to_array,
    check_boxes,
    check_camera,
    check_patches,
)


class BoxRecoveryEstimator(RegressorMixin, BaseEstimator):
    """Recover 3D boxes from DBR patches with a size prior learned in ``fit``.

    Parameters
    ----------
    camera : Camera or dict
        Intrinsics the patches were produced with.
    alpha, beta, gamma : float
        Prior weights for width, length and height.
    prior : SizePrior or None
        Fixed prior. When None, ``fit`` uses the mean size of the training
        boxes (or the library default when fitted without targets).
    min_weight_det : float
        Degeneracy threshold on each axis' normal-matrix determinant.
    uncertainty_mass : {"total", "per_axis"}
    on_error : {"raise", "nan"}
        What ``predict`` does with an object that cannot be recovered.

    Attributes
    ----------
    prior_ : SizePrior
    config_ : SolverConfig
    n_failed_ : int
        Failures in the last ``predict`` call when ``on_error="nan"``.

    Notes
    -----
    ``X`` is a sequence of ``(RoiPatch, theta)`` pairs and ``y`` a sequence of
    :class:`~geostream.geometry.Box3D`. Predictions are rows of
    ``(x, y, z, h, w, l, theta)``.
    """

    def __init__(self, camera=None, alpha=1e-3, beta=1e-3, gamma=1e-3, prior=None,
                 min_weight_det=1e-9, uncertainty_mass="total", on_error="raise"):
        self.camera = camera
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.prior = prior
        self.min_weight_det = min_weight_det
        self.uncertainty_mass = uncertainty_mass
        self.on_error = on_error

    def fit(self, X=None, y=None):
        if self.camera is None:
            raise ValueError("camera is required")
        check_camera(self.camera)
        if self.on_error not in ("raise", "nan"):
            raise ValueError(f"on_error must be 'raise' or 'nan', got {self.on_error!r}")
        if X is not None:
            check_patches(X)
        if self.prior is not None:
            prior = self.prior
        elif y is not None:
            sizes = boxes_to_array(check_boxes(y))[:, 3:6]
            if len(sizes) == 0:
                raise ValueError("cannot learn a size prior from zero boxes")
            h, w, l = sizes.mean(axis=0)
            prior = SizePrior(w=float(w), l=float(l), h=float(h))
        else:
            prior = SizePrior()
        self.prior_ = prior
        self.config_ = SolverConfig(
            alpha=self.alpha,
            beta=self.beta,
            gamma=self.gamma,
            prior=prior,
            min_weight_det=self.min_weight_det,
            uncertainty_mass=self.uncertainty_mass,
        )
        return self

    def predict(self, X):
        check_is_fitted(self, "config_")
        cam = check_camera(self.camera)
        samples = check_patches(X)
        out = np.full((len(samples), 7), np.nan)
        self.n_failed_ = 0
        for i, (patch, theta) in enumerate(samples):
            try:
                box = recover_box(patch, theta, cam, self.config_).box
            except GeostreamError:
                if self.on_error == "raise":
                    raise
                self.n_failed_ += 1
                continue
            out[i] = boxes_to_array([box])[0]
        return out

    def predict_boxes(self, X):
        """Like ``predict`` but returns :class:`Box3D` objects (None on failure)."""
        rows = self.predict(X)
        return [None if np.isnan(r).any() else array_to_boxes(r)[0] for r in rows]

    def score(self, X, y, sample_weight=None):
        """Mean 3D IoU between recovered and target boxes."""
        preds = self.predict_boxes(X)
        targets = check_boxes(y)
        ious = np.array([0.0 if p is None else iou_3d(p, t) for p, t in zip(preds, targets)])
        return float(np.average(ious, weights=sample_weight))
