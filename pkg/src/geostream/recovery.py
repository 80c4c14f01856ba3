"""Closed-form, occlusion-aware recovery of a 3D box from depth and DBR.

Every valid pixel is back-projected to ``P_p`` and pushed onto each face plane
with its residual, giving the face coordinate ``a_pj = n_j . P_p + R_pj``.
With the heading known, the squared plane-fit error plus the size-prior
regularizer splits into three independent problems, one per box axis, each
with unknowns ``u`` (center coordinate along the axis) and ``D`` (dimension)::

    sum_+ w (a - u - D/2)^2 + sum_- w (a + u - D/2)^2 + lam (D - D_prior)^2

where ``+``/``-`` are the two faces whose outward normals point along/against
the axis, ``w = max(0, 1 - U)`` and ``lam = coef * sum(U)``. Each is a convex
quadratic solved exactly from its 2x2 normal equations.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import EmptyPatch, GeostreamError, InsufficientConstraints
from .geometry import (
    AXIS_NAMES,
    FACE_AXIS,
    FACE_SIGN,
    VERTICAL,
    Box3D,
    SizePrior,
    box_axes,
    face_normals,
    pixel_rays,
)

PARAMS = ("x", "y", "z", "h", "w", "l")

# face indices per axis: (face along +axis, face along -axis)
_PLUS = np.array([int(np.flatnonzero((FACE_AXIS == k) & (FACE_SIGN > 0))[0]) for k in range(3)])
_MINUS = np.array([int(np.flatnonzero((FACE_AXIS == k) & (FACE_SIGN < 0))[0]) for k in range(3)])


class NonPositiveDimension(GeostreamError, ArithmeticError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    """Regularization and degeneracy settings for :func:`recover_box`.

    ``alpha``, ``beta`` and ``gamma`` weight the width, length and height
    priors. ``uncertainty_mass`` selects whether the prior weight scales with
    the uncertainty summed over all six faces (``"total"``) or only over the
    two faces of the axis being regularized (``"per_axis"``).
    """

    alpha: float = 1e-3
    beta: float = 1e-3
    gamma: float = 1e-3
    prior: SizePrior = field(default_factory=SizePrior)
    min_weight_det: float = 1e-9
    uncertainty_mass: str = "total"

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0:
            raise ValueError("alpha, beta, gamma must be non-negative")
        if not self.min_weight_det > 0:
            raise ValueError("min_weight_det must be positive")
        if self.uncertainty_mass not in ("total", "per_axis"):
            raise ValueError(f"unknown uncertainty_mass {self.uncertainty_mass!r}")

    def axis_coefs(self):
        """Regularization coefficient per (length, width, height) axis."""
        return np.array([self.beta, self.alpha, self.gamma])


@dataclass(frozen=True)
class RecoveredBox:
    box: Box3D
    condition: np.ndarray
    objective: float
    determinant: np.ndarray


@dataclass
class _Terms:
    """Per-pixel and per-axis quantities shared by the solve and its gradient."""

    index: np.ndarray  # patch rows of the valid pixels
    rays: np.ndarray  # (N, 3)
    normals: np.ndarray  # (6, 3)
    axes: np.ndarray  # (3, 3) rows: length, width, height directions
    a: np.ndarray  # (N, 6) face coordinates
    w: np.ndarray  # (N, 6) data weights
    active: np.ndarray  # (N, 6) where w = 1 - U (not clamped)
    sp: np.ndarray  # (3,) sum of weights on the + face of each axis
    sm: np.ndarray
    ap: np.ndarray  # (3,) weighted sums of face coordinates
    am: np.ndarray
    lam: np.ndarray  # (3,) prior weights
    prior: np.ndarray  # (3,) prior dimension per axis


def _terms(patch, theta, cam, cfg):
    index = np.flatnonzero(patch.valid)
    if index.size == 0:
        raise EmptyPatch("patch has no valid pixel")
    depth = patch.depth[index]
    if np.any(depth <= 0):
        raise ValueError("valid pixels must have positive depth")
    rays = pixel_rays(cam, patch.pixels[index])
    points = rays * depth[:, None]
    normals = face_normals(theta)
    a = points @ normals.T + patch.residuals[index]
    u = patch.uncertainty[index]
    w_raw = 1.0 - u
    active = w_raw > 0
    w = np.where(active, w_raw, 0.0)

    if cfg.uncertainty_mass == "total":
        mass = np.full(3, u.sum())
    else:
        mass = u[:, _PLUS].sum(axis=0) + u[:, _MINUS].sum(axis=0)

    n1, n2 = box_axes(theta)
    return _Terms(
        index=index,
        rays=rays,
        normals=normals,
        axes=np.stack([n1, n2, VERTICAL]),
        a=a,
        w=w,
        active=active,
        sp=w[:, _PLUS].sum(axis=0),
        sm=w[:, _MINUS].sum(axis=0),
        ap=(w * a)[:, _PLUS].sum(axis=0),
        am=(w * a)[:, _MINUS].sum(axis=0),
        lam=cfg.axis_coefs() * mass,
        prior=cfg.prior.as_axes(),
    )


def _normal_system(sp, sm, ap, am, lam, prior):
    """Half-Hessian and right-hand side of one axis' quadratic in (u, D)."""
    M = np.array([[sp + sm, (sp - sm) / 2], [(sp - sm) / 2, (sp + sm) / 4 + lam]])
    b = np.array([ap - am, (ap + am) / 2 + lam * prior])
    return M, b


def _solve_axes(t, min_det):
    solutions, dets, conds, systems = [], [], [], []
    for k in range(3):
        M, b = _normal_system(t.sp[k], t.sm[k], t.ap[k], t.am[k], t.lam[k], t.prior[k])
        det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
        if det < min_det:
            dimension = None
            if t.lam[k] > 0 and M[0, 0] == 0:
                dimension = float(b[1] / M[1, 1])
            raise InsufficientConstraints(AXIS_NAMES[k], float(det), dimension)
        x = np.linalg.solve(M, b)
        solutions.append(x)
        dets.append(det)
        conds.append(np.linalg.cond(M))
        systems.append(M)
    return np.array(solutions), np.array(dets), np.array(conds), systems


def _objective(t, u, D):
    """Value of the full objective for per-axis centers ``u`` and dims ``D``."""
    face_u = u[FACE_AXIS] * FACE_SIGN
    face_d = D[FACE_AXIS] / 2
    data = (t.w * (t.a - face_u - face_d) ** 2).sum()
    return float(data + (t.lam * (D - t.prior) ** 2).sum())


def objective(patch, theta, cam, box, cfg=None):
    """Evaluate the recovery objective at an arbitrary box (its heading is ignored)."""
    cfg = cfg or SolverConfig()
    t = _terms(patch, theta, cam, cfg)
    return _objective(t, t.axes @ box.center, box.size)


def recover_box(patch, theta, cam, cfg=None):
    """Recover center and size of a box with known heading from a DBR patch.

    Parameters
    ----------
    patch : RoiPatch
        Depth, residuals and uncertainties of the object's pixels.
    theta : float
        Heading of the box (radians), taken as given.
    cam : Camera
    cfg : SolverConfig, optional

    Returns
    -------
    RecoveredBox

    Raises
    ------
    EmptyPatch
        If the patch has no valid pixel.
    InsufficientConstraints
        If an axis' 2x2 normal matrix is (near) singular.
    """
    cfg = cfg or SolverConfig()
    t = _terms(patch, theta, cam, cfg)
    sol, dets, conds, _ = _solve_axes(t, cfg.min_weight_det)
    u, D = sol[:, 0], sol[:, 1]
    if np.any(D <= 0):
        raise NonPositiveDimension(f"recovered non-positive dimensions {D}")
    center = u @ t.axes
    box = Box3D(center, h=float(D[2]), w=float(D[1]), l=float(D[0]), theta=float(theta))
    return RecoveredBox(box=box, condition=conds, objective=_objective(t, u, D), determinant=dets)


def recover_box_gradient(patch, theta, cam, cfg=None, wrt=("depth", "residuals")):
    """Analytic Jacobian of the recovered ``(x, y, z, h, w, l)``.

    Differentiates the normal-equation solution of every axis. Returned arrays
    are indexed by patch row; invalid rows are zero.

    Returns
    -------
    dict
        ``"depth"`` -> (6, N), ``"residuals"`` -> (6, N, 6) and
        ``"uncertainty"`` -> (6, N, 6), for the selectors requested in ``wrt``.
    """
    cfg = cfg or SolverConfig()
    if isinstance(wrt, str):
        wrt = (wrt,)
    unknown = set(wrt) - {"depth", "residuals", "uncertainty"}
    if unknown:
        raise ValueError(f"unknown gradient selectors {sorted(unknown)}")

    t = _terms(patch, theta, cam, cfg)
    sol, _, _, systems = _solve_axes(t, cfg.min_weight_det)

    # sensitivity of (u_k, D_k) to q = (sp, sm, ap, am, lam), shape (3, 2, 5)
    dM = [
        np.array([[1.0, 0.5], [0.5, 0.25]]),
        np.array([[1.0, -0.5], [-0.5, 0.25]]),
        np.zeros((2, 2)),
        np.zeros((2, 2)),
        np.array([[0.0, 0.0], [0.0, 1.0]]),
    ]
    sens = np.empty((3, 2, 5))
    for k in range(3):
        db = [np.zeros(2), np.zeros(2), np.array([1.0, 0.5]), np.array([-1.0, 0.5]),
              np.array([0.0, t.prior[k]])]
        Minv = np.linalg.inv(systems[k])
        for q in range(5):
            sens[k, :, q] = Minv @ (db[q] - dM[q] @ sol[k])

    # map per-axis (du_k, dD_k) onto the six outputs
    out_u = np.zeros((6, 3))
    out_u[:3, :] = t.axes.T
    out_d = np.zeros((6, 3))
    out_d[3, 2] = out_d[4, 1] = out_d[5, 0] = 1.0

    def to_outputs(dq):
        # dq: (3, 5, ...) derivative of each axis' q w.r.t. some input block
        dx = np.einsum("kiq,kq...->ki...", sens, dq)
        return np.einsum("ok,k...->o...", out_u, dx[:, 0]) + np.einsum("ok,k...->o...", out_d, dx[:, 1])

    n_rows = len(patch)
    n = t.index.size
    result = {}

    if "depth" in wrt:
        proj = t.rays @ t.normals.T  # d a_pj / d z_p
        dq = np.zeros((3, 5, n))
        dq[:, 2] = (t.w[:, _PLUS] * proj[:, _PLUS]).T
        dq[:, 3] = (t.w[:, _MINUS] * proj[:, _MINUS]).T
        full = np.zeros((6, n_rows))
        full[:, t.index] = to_outputs(dq)
        result["depth"] = full

    if "residuals" in wrt:
        dq = np.zeros((3, 5, n, 6))
        for k in range(3):
            dq[k, 2, :, _PLUS[k]] = t.w[:, _PLUS[k]]
            dq[k, 3, :, _MINUS[k]] = t.w[:, _MINUS[k]]
        full = np.zeros((6, n_rows, 6))
        full[:, t.index] = to_outputs(dq)
        result["residuals"] = full

    if "uncertainty" in wrt:
        dw = -t.active.astype(float)
        coefs = cfg.axis_coefs()
        dq = np.zeros((3, 5, n, 6))
        for k in range(3):
            jp, jm = _PLUS[k], _MINUS[k]
            dq[k, 0, :, jp] = dw[:, jp]
            dq[k, 1, :, jm] = dw[:, jm]
            dq[k, 2, :, jp] = dw[:, jp] * t.a[:, jp]
            dq[k, 3, :, jm] = dw[:, jm] * t.a[:, jm]
            if cfg.uncertainty_mass == "total":
                dq[k, 4] = coefs[k]
            else:
                dq[k, 4, :, jp] = dq[k, 4, :, jm] = coefs[k]
        full = np.zeros((6, n_rows, 6))
        full[:, t.index] = to_outputs(dq)
        result["uncertainty"] = full

    return result
