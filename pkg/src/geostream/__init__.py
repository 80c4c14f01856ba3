"""Closed-form 3D box recovery from face-distance fields, BEV depth constraints, losses and metrics."""

from .bev import (
    BevCornerField,
    EdgeHypothesis,
    aggregate_corner_x,
    depth_closed_form,
    depth_from_edge,
    edge_hypotheses,
    edge_weight,
)
from .dbr import RoiPatch, gt_dbr, visibility_uncertainty
from .estimator import BoxRecoveryEstimator
from .exceptions import (
    DegenerateEdge,
    EmptyPatch,
    EmptyRoi,
    ExhaustedSampling,
    GeostreamError,
    InsufficientConstraints,
    MalformedLine,
    NonPositiveDepth,
    NonPositiveUncertainty,
)
from .geometry import (
    FACES,
    Box3D,
    Camera,
    SizePrior,
    backproject,
    bev_corners,
    box_axes,
    box_corners,
    face_normals,
    face_specs,
    project,
)
from .kitti import KittiLabelRow, parse_kitti_labels, serialize_kitti_labels
from .losses import l_bpc, l_cg, lau, loss_report
from .metrics import Detection, EvalReport, ap_r40, ap_r40_frames, iou_3d, iou_bev
from .pipeline import RunConfig, run_pipeline
from .recovery import RecoveredBox, SolverConfig, objective, recover_box, recover_box_gradient
from .simulator import NoiseSpec, Scene, SceneRanges, add_noise, render, sample_scene

__version__ = "0.1.0"
