"""Camera model, oriented boxes and face planes.

Coordinate convention (camera frame, KITTI style):

- x points right, y points down, z points forward (away from the camera)
- a box's heading ``theta`` rotates about the vertical y axis; ``theta = 0``
  heads along +z
- ``n1 = (sin theta, 0, cos theta)`` is the heading (length) axis and
  ``n2 = (cos theta, 0, -sin theta)`` the lateral (width) axis

Faces are ordered ``front, back, left, right, top, bottom`` everywhere in the
package. Every face plane is written as ``n_j . (X - C) = e_j`` with an outward
unit normal ``n_j`` and a positive half-extent ``e_j``.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import NonPositiveDepth

FACES = ("front", "back", "left", "right", "top", "bottom")

# index of the box axis each face lies on (0: length/n1, 1: width/n2, 2: height/y)
FACE_AXIS = np.array([0, 0, 1, 1, 2, 2])
# sign of the outward normal relative to its axis direction
FACE_SIGN = np.array([1.0, -1.0, -1.0, 1.0, -1.0, 1.0])

AXIS_NAMES = ("length", "width", "height")

# (a_i, b_i) multipliers of (L/2) n1 and (W/2) n2 for the four BEV corners
BEV_CORNER_SIGNS = ((1, 1), (-1, 1), (-1, -1), (1, -1))
# corner index pairs forming the four BEV edges
BEV_EDGES = ((0, 1), (1, 2), (2, 3), (3, 0))

VERTICAL = np.array([0.0, 1.0, 0.0])


@dataclass(frozen=True)
class Camera:
    """Pinhole intrinsics. All quantities in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int = 1280
    height: int = 380

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (self.width > 0 and self.height > 0):
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")

    @property
    def K(self):
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def to_dict(self):
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            float(d["fx"]),
            float(d["fy"]),
            float(d["cx"]),
            float(d["cy"]),
            int(d.get("width", 1280)),
            int(d.get("height", 380)),
        )


@dataclass(frozen=True)
class Box3D:
    """Oriented 3D box: geometric center, size (H, W, L) and yaw heading."""

    center: np.ndarray
    h: float
    w: float
    l: float
    theta: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(3).copy()
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        if not (self.h > 0 and self.w > 0 and self.l > 0):
            raise ValueError(f"box dimensions must be positive, got H={self.h}, W={self.w}, L={self.l}")

    @property
    def size(self):
        """Dimensions along the (length, width, height) axes."""
        return np.array([self.l, self.w, self.h])

    @property
    def volume(self):
        return self.h * self.w * self.l

    def axes(self):
        return box_axes(self.theta)

    def rotation(self):
        """Columns are the box's (length, width, height) axes in camera frame."""
        n1, n2 = box_axes(self.theta)
        return np.stack([n1, n2, VERTICAL], axis=1)

    def params(self):
        """(x, y, z, h, w, l) as a flat array."""
        return np.array([*self.center, self.h, self.w, self.l])

    def __eq__(self, other):
        if not isinstance(other, Box3D):
            return NotImplemented
        return (
            np.array_equal(self.center, other.center)
            and (self.h, self.w, self.l, self.theta) == (other.h, other.w, other.l, other.theta)
        )

    def __hash__(self):
        return hash((tuple(self.center), self.h, self.w, self.l, self.theta))


@dataclass(frozen=True)
class SizePrior:
    """Mean object size used to regularize poorly observed dimensions."""

    w: float = 1.63
    l: float = 3.88
    h: float = 1.53

    def __post_init__(self):
        if not (self.w > 0 and self.l > 0 and self.h > 0):
            raise ValueError("size prior must be strictly positive")

    def as_axes(self):
        """Prior dimension for the (length, width, height) axes."""
        return np.array([self.l, self.w, self.h])


@dataclass(frozen=True)
class FaceSpec:
    face: str
    normal: np.ndarray = field(repr=False)
    half_extent: float


def project(cam, P):
    """Project camera-frame point(s) ``P`` (..., 3) to pixels (..., 2)."""
    P = np.asarray(P, dtype=float)
    z = P[..., 2]
    if np.any(z <= 0):
        raise NonPositiveDepth("cannot project a point with z <= 0")
    u = cam.fx * P[..., 0] / z + cam.cx
    v = cam.fy * P[..., 1] / z + cam.cy
    return np.stack([u, v], axis=-1)


def backproject(cam, pixel, z):
    """Lift pixel(s) (..., 2) at depth(s) ``z`` to camera-frame points (..., 3)."""
    pixel = np.asarray(pixel, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(z <= 0):
        raise NonPositiveDepth("depth must be positive")
    x = (pixel[..., 0] - cam.cx) / cam.fx * z
    y = (pixel[..., 1] - cam.cy) / cam.fy * z
    return np.stack(np.broadcast_arrays(x, y, z), axis=-1)


def pixel_rays(cam, pixel):
    """Ray directions with unit z component, so ``backproject == z * ray``."""
    pixel = np.asarray(pixel, dtype=float)
    rx = (pixel[..., 0] - cam.cx) / cam.fx
    ry = (pixel[..., 1] - cam.cy) / cam.fy
    return np.stack([rx, ry, np.ones_like(rx)], axis=-1)


def box_axes(theta):
    """Heading axis ``n1`` and lateral axis ``n2`` for yaw ``theta``."""
    s, c = np.sin(theta), np.cos(theta)
    return np.array([s, 0.0, c]), np.array([c, 0.0, -s])


def face_normals(theta):
    """Outward unit normals of the six faces, shape (6, 3)."""
    n1, n2 = box_axes(theta)
    axes = np.stack([n1, n2, VERTICAL])
    return FACE_SIGN[:, None] * axes[FACE_AXIS]


def half_extents(box):
    """Half-extent of each face plane from the center, shape (6,)."""
    return box.size[FACE_AXIS] / 2.0


def face_specs(box):
    normals = face_normals(box.theta)
    extents = half_extents(box)
    return [FaceSpec(name, normals[j], float(extents[j])) for j, name in enumerate(FACES)]


def bev_corners(box):
    """The four BEV corners at the box's center height, shape (4, 3).

    Order follows :data:`BEV_CORNER_SIGNS`: (+,+), (-,+), (-,-), (+,-).
    """
    n1, n2 = box.axes()
    signs = np.array(BEV_CORNER_SIGNS, dtype=float)
    offsets = signs[:, :1] * (box.l / 2) * n1 + signs[:, 1:] * (box.w / 2) * n2
    return box.center + offsets


def box_corners(box):
    """All eight corners, shape (8, 3); first four are the top (y - H/2) layer."""
    bev = bev_corners(box)
    up = np.array([0.0, -box.h / 2, 0.0])
    return np.concatenate([bev + up, bev - up])
