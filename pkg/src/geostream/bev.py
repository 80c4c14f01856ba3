"""Object depth from projected BEV box edges.

The vertical edges of a box project to vertical image lines, so only the
x-coordinate of each of the four BEV corner projections is used. Pixels vote
for each corner location; two corners sharing a BEV edge, together with the
box size and heading, pin down the object's depth.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from .exceptions import DegenerateEdge, EmptyRoi
from .geometry import BEV_CORNER_SIGNS, BEV_EDGES, bev_corners, box_axes

DEFAULT_EDGE_RATE = 0.05
DEGENERATE_DET = 1e-9


@dataclass
class BevCornerField:
    """Per-pixel x displacements to the four projected BEV corners.

    Attributes
    ----------
    pixels_x : (N,) x coordinate of each pixel in the region
    displacement : (N, 4) ``d`` per pixel and corner
    score : (N, 4) log-weight ``u`` per pixel and corner
    """

    pixels_x: np.ndarray
    displacement: np.ndarray
    score: np.ndarray

    def __post_init__(self):
        self.pixels_x = np.asarray(self.pixels_x, dtype=float).reshape(-1)
        n = self.pixels_x.size
        self.displacement = np.asarray(self.displacement, dtype=float).reshape(n, 4)
        self.score = np.asarray(self.score, dtype=float).reshape(n, 4)

    def __len__(self):
        return self.pixels_x.size


@dataclass
class EdgeHypothesis:
    corners: tuple
    rho_a: float
    rho_b: float
    visible: int
    weight: float
    z_c: float = None  # None marks a degenerate edge

    @property
    def degenerate(self):
        return self.z_c is None


def aggregate_corner_x(field, corner):
    """Exponentially weighted mean of the per-pixel votes ``p_x + d`` for one corner."""
    if len(field) == 0:
        raise EmptyRoi("no pixel to aggregate")
    votes = field.pixels_x + field.displacement[:, corner]
    return float(softmax(field.score[:, corner]) @ votes)


def aggregate_corners(field):
    return np.array([aggregate_corner_x(field, i) for i in range(4)])


def depth_from_edge(rho_a, rho_b, signs_a, signs_b, l, w, theta, cam):
    """Depth of the box center from the x projections of two BEV corners.

    Each corner ``P = C + a (L/2) n1 + b (W/2) n2`` projecting to column
    ``rho`` satisfies ``fx P_x + (cx - rho) P_z = 0``; the two equations are
    solved for ``(C_x, C_z)`` and ``C_z`` is returned.

    Raises
    ------
    DegenerateEdge
        If the 2x2 system is singular (coincident projections).
    """
    n1, n2 = box_axes(theta)
    A = np.empty((2, 2))
    rhs = np.empty(2)
    for row, (rho, (a, b)) in enumerate(((rho_a, signs_a), (rho_b, signs_b))):
        offset = a * (l / 2) * n1 + b * (w / 2) * n2
        A[row] = (cam.fx, cam.cx - rho)
        rhs[row] = -cam.fx * offset[0] - (cam.cx - rho) * offset[2]
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if not np.isfinite(det) or abs(det) < DEGENERATE_DET:
        raise DegenerateEdge(f"edge projections coincide (det={det:.3e})")
    # Cramer's rule for the z component
    return float((A[0, 0] * rhs[1] - A[1, 0] * rhs[0]) / det)


def depth_closed_form(rho_1, rho_2, l, w, theta, cam):
    """Closed-form depth for the corner pair ``C + W/2 m +- L/2 n1``.

    ``m = (-cos theta, 0, sin theta)`` is the lateral direction whose z
    component equals ``n_x``; in this package's corner order that pair is
    corner 4 (``rho_1``) and corner 3 (``rho_2``). Kept as an independent
    check of :func:`depth_from_edge`.
    """
    n_x, n_z = np.sin(theta), np.cos(theta)
    d = rho_1 - rho_2
    return float(
        (cam.fx * n_x + cam.cx * n_z) / d * l
        - n_z * (rho_1 + rho_2) / (2 * d) * l
        - n_x / 2 * w
    )


def edge_weight(visible, rho_a, rho_b, k=DEFAULT_EDGE_RATE):
    """Weight of an edge hypothesis: ``v * (1 - exp(-k |rho_a - rho_b|))``."""
    if not k > 0:
        raise ValueError("edge rate k must be positive")
    return float(visible) * -np.expm1(-k * abs(rho_a - rho_b))


def gt_corner_x(box, cam):
    """Exact x projections of the four BEV corners; NaN for corners behind the camera."""
    corners = bev_corners(box)
    z = corners[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(z > 0, cam.fx * corners[:, 0] / z + cam.cx, np.nan)
    return rho


def edge_hypotheses(rho, visibility, l, w, theta, cam, k=DEFAULT_EDGE_RATE):
    """Build one :class:`EdgeHypothesis` per BEV edge from aggregated corner columns."""
    hyps = []
    for e, (i, j) in enumerate(BEV_EDGES):
        v = int(visibility[e])
        ra, rb = float(rho[i]), float(rho[j])
        if not (np.isfinite(ra) and np.isfinite(rb)):
            hyps.append(EdgeHypothesis((i, j), ra, rb, 0, 0.0, None))
            continue
        try:
            z = depth_from_edge(ra, rb, BEV_CORNER_SIGNS[i], BEV_CORNER_SIGNS[j], l, w, theta, cam)
        except DegenerateEdge:
            z = None
        weight = edge_weight(v, ra, rb, k) if z is not None else 0.0
        hyps.append(EdgeHypothesis((i, j), ra, rb, v, weight, z))
    return hyps
