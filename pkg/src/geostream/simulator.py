"""Synthetic scenes and exact ray-cast ground truth.

A :class:`Scene` is a camera plus a list of oriented boxes. :func:`render`
casts one ray per field cell (cells are ``stride x stride`` pixel blocks)
against every box with the slab method and produces, per object, the DBR
patch over its 2D box, the BEV corner field and the visibility of its four
BEV edges. :func:`add_noise` corrupts those fields with Laplacian noise.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .bev import BevCornerField, gt_corner_x
from .dbr import DEFAULT_U_OCCLUDED, RoiPatch, gt_dbr, visibility_uncertainty
from .exceptions import ExhaustedSampling
from .geometry import BEV_EDGES, Box3D, Camera, bev_corners, box_corners, pixel_rays

NEAR_PLANE = 0.5
DEFAULT_STRIDE = 4


def default_camera():
    """KITTI-like intrinsics for a 1280x380 image."""
    return Camera(fx=721.5377, fy=721.5377, cx=640.0, cy=190.0, width=1280, height=380)


@dataclass
class Scene:
    camera: Camera
    boxes: list = field(default_factory=list)
    ids: list = None
    stride: int = DEFAULT_STRIDE

    def __post_init__(self):
        if self.ids is None:
            self.ids = list(range(len(self.boxes)))
        if len(self.ids) != len(self.boxes):
            raise ValueError("one id per box required")
        if len(set(self.ids)) != len(self.ids):
            raise ValueError("instance ids must be unique")
        if any(i < 0 for i in self.ids):
            raise ValueError("instance ids must be non-negative")
        for b in self.boxes:
            if not b.center[2] > 0:
                raise ValueError("box centers must lie in front of the camera")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")

    def box(self, obj_id):
        return self.boxes[self.ids.index(obj_id)]

    def to_dict(self):
        return {
            "camera": self.camera.to_dict(),
            "boxes": [
                {
                    "id": i,
                    "center": [float(c) for c in b.center],
                    "h": b.h,
                    "w": b.w,
                    "l": b.l,
                    "theta": b.theta,
                }
                for i, b in zip(self.ids, self.boxes)
            ],
            "stride": self.stride,
        }

    @classmethod
    def from_dict(cls, d):
        boxes = [
            Box3D(b["center"], h=float(b["h"]), w=float(b["w"]), l=float(b["l"]), theta=float(b["theta"]))
            for b in d.get("boxes", [])
        ]
        ids = [int(b["id"]) for b in d.get("boxes", [])]
        return cls(Camera.from_dict(d["camera"]), boxes, ids, int(d.get("stride", DEFAULT_STRIDE)))

    def to_json(self):
        # json writes floats with repr, which round-trips exactly
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class SceneRanges:
    """Uniform sampling ranges (low, high) for box parameters."""

    x: tuple = (-12.0, 12.0)
    y: tuple = (0.7, 1.0)
    z: tuple = (6.0, 45.0)
    h: tuple = (1.35, 1.75)
    w: tuple = (1.45, 1.9)
    l: tuple = (3.3, 4.6)
    theta: tuple = (-np.pi, np.pi)

    def __post_init__(self):
        for name in ("x", "y", "z", "h", "w", "l", "theta"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"empty range for {name}: {lo} > {hi}")

    def contains(self, box):
        checks = (
            (self.x, box.center[0]),
            (self.y, box.center[1]),
            (self.z, box.center[2]),
            (self.h, box.h),
            (self.w, box.w),
            (self.l, box.l),
            (self.theta, box.theta),
        )
        return all(lo <= v <= hi for (lo, hi), v in checks)


@dataclass(frozen=True)
class NoiseSpec:
    sigma_depth: float = 0.0
    sigma_dbr: float = 0.0
    sigma_corner: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.sigma_depth, self.sigma_dbr, self.sigma_corner) < 0:
            raise ValueError("noise scales must be non-negative")


def _bev_overlap(a, b):
    # separating-axis test on the two BEV rectangles
    ca, cb = bev_corners(a)[:, [0, 2]], bev_corners(b)[:, [0, 2]]
    for poly in (ca, cb):
        for i in range(4):
            edge = poly[(i + 1) % 4] - poly[i]
            axis = np.array([-edge[1], edge[0]])
            pa, pb = ca @ axis, cb @ axis
            if pa.max() <= pb.min() or pb.max() <= pa.min():
                return False
    return True


def _center_in_view(box, cam):
    x, y, z = box.center
    u, v = cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy
    return 0 <= u < cam.width and 0 <= v < cam.height


def sample_scene(seed, n_boxes, ranges=None, camera=None, stride=DEFAULT_STRIDE,
                 allow_overlap=False, in_view=True, max_tries=1000):
    """Sample a random scene; the same seed always yields the same scene.

    Boxes whose center or any corner lies at or before the near plane are
    resampled, as are boxes overlapping an earlier one in BEV unless
    ``allow_overlap``, and boxes whose center projects outside the image
    when ``in_view``.

    Raises
    ------
    ExhaustedSampling
        If a box cannot be placed within ``max_tries`` draws.
    """
    if n_boxes < 0:
        raise ValueError("n_boxes must be >= 0")
    ranges = ranges or SceneRanges()
    camera = camera or default_camera()
    rng = np.random.default_rng(seed)
    boxes = []
    for _ in range(n_boxes):
        for _ in range(max_tries):
            center = [rng.uniform(*ranges.x), rng.uniform(*ranges.y), rng.uniform(*ranges.z)]
            box = Box3D(
                center,
                h=rng.uniform(*ranges.h),
                w=rng.uniform(*ranges.w),
                l=rng.uniform(*ranges.l),
                theta=rng.uniform(*ranges.theta),
            )
            if box.center[2] <= NEAR_PLANE or box_corners(box)[:, 2].min() <= NEAR_PLANE:
                continue
            if in_view and not _center_in_view(box, camera):
                continue
            if not allow_overlap and any(_bev_overlap(box, other) for other in boxes):
                continue
            boxes.append(box)
            break
        else:
            raise ExhaustedSampling(f"could not place box {len(boxes)} after {max_tries} draws")
    return Scene(camera, boxes, list(range(n_boxes)), stride)


def ray_box_interval(directions, box, origin=None):
    """Slab-method entry/exit parameters of rays ``origin + t * d`` with a box.

    Returns ``(t_near, t_far)``, each shaped like ``directions[..., 0]``. A ray
    misses when ``t_near > t_far``.
    """
    directions = np.asarray(directions, dtype=float)
    R = box.rotation()
    origin = np.zeros(3) if origin is None else np.asarray(origin, dtype=float)
    o = (origin - box.center) @ R
    d = directions @ R
    ext = box.size / 2
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = (-ext - o) / d
        t2 = (ext - o) / d
    lo = np.minimum(t1, t2)
    hi = np.maximum(t1, t2)
    # rays parallel to a slab: inside it for all t, or never
    parallel = d == 0
    inside = np.abs(o) <= ext
    lo = np.where(parallel, np.where(inside, -np.inf, np.inf), lo)
    hi = np.where(parallel, np.where(inside, np.inf, -np.inf), hi)
    return lo.max(axis=-1), hi.min(axis=-1)


def cast(rays, boxes):
    """Nearest forward hit of each ray over all boxes.

    Returns ``(t, owner)`` where ``owner`` is the box index or -1 on a miss.
    """
    n = rays.shape[0]
    best_t = np.full(n, np.inf)
    owner = np.full(n, -1)
    for k, box in enumerate(boxes):
        t_near, t_far = ray_box_interval(rays, box)
        hit = (t_near <= t_far) & (t_near > 0) & (t_near < best_t)
        best_t = np.where(hit, t_near, best_t)
        owner = np.where(hit, k, owner)
    return best_t, owner


@dataclass
class DepthMap:
    depth: np.ndarray  # (rows, cols) meters, 0 where invalid
    instance: np.ndarray  # (rows, cols) instance id, -1 where invalid
    valid: np.ndarray  # (rows, cols) bool
    stride: int = DEFAULT_STRIDE

    @property
    def shape(self):
        return self.depth.shape

    def cell_pixels(self):
        return cell_centers(self.shape, self.stride)


def cell_centers(shape, stride):
    """Pixel coordinates (rows, cols, 2) of the field cell centers."""
    rows, cols = shape
    off = (stride - 1) / 2.0
    u = np.arange(cols) * stride + off
    v = np.arange(rows) * stride + off
    uu, vv = np.meshgrid(u, v)
    return np.stack([uu, vv], axis=-1)


@dataclass
class Rendering:
    scene: Scene
    depth_map: DepthMap
    patches: dict  # id -> RoiPatch
    bev_fields: dict  # id -> BevCornerField
    edge_visibility: dict  # id -> (4,) int array
    u_occluded: float = DEFAULT_U_OCCLUDED


def _roi_cells(box, cam, pixels, owned):
    """Boolean mask of cells whose center lies in the box's projected 2D extent."""
    corners = box_corners(box)
    if corners[:, 2].min() > 0:
        uv = cam.fx * corners[:, 0] / corners[:, 2] + cam.cx, cam.fy * corners[:, 1] / corners[:, 2] + cam.cy
        u0, u1 = uv[0].min(), uv[0].max()
        v0, v1 = uv[1].min(), uv[1].max()
    elif owned.any():
        u0, u1 = pixels[owned][:, 0].min(), pixels[owned][:, 0].max()
        v0, v1 = pixels[owned][:, 1].min(), pixels[owned][:, 1].max()
    else:
        return np.zeros(pixels.shape[:-1], dtype=bool)
    u0, u1 = max(u0, 0.0), min(u1, cam.width - 1.0)
    v0, v1 = max(v0, 0.0), min(v1, cam.height - 1.0)
    return (
        (pixels[..., 0] >= u0) & (pixels[..., 0] <= u1)
        & (pixels[..., 1] >= v0) & (pixels[..., 1] <= v1)
    )


def edge_visibility(box, cam, scene, rtol=1e-9):
    """Visibility flag per BEV edge (see :data:`geostream.geometry.BEV_EDGES`).

    A corner is visible when the ray from the camera to it enters no box,
    including its own, before reaching it; an edge is visible when both of its
    corners are.
    """
    corners = bev_corners(box)
    corner_vis = np.ones(4, dtype=bool)
    for i, q in enumerate(corners):
        if q[2] <= 0:
            corner_vis[i] = False
            continue
        ray = q / q[2]
        tol = rtol * q[2]
        for other in scene.boxes:
            t_near, t_far = ray_box_interval(ray[None], other)
            t_near, t_far = t_near[0], t_far[0]
            if t_near <= t_far and t_far > 0 and t_near < q[2] - tol:
                corner_vis[i] = False
                break
    return np.array([int(corner_vis[i] and corner_vis[j]) for i, j in BEV_EDGES])


def render(scene, u_occluded=DEFAULT_U_OCCLUDED):
    """Ray-cast the scene onto its field grid and build per-object ground truth."""
    cam = scene.camera
    shape = (cam.height // scene.stride, cam.width // scene.stride)
    pixels = cell_centers(shape, scene.stride)
    rays = pixel_rays(cam, pixels.reshape(-1, 2))
    t, owner = cast(rays, scene.boxes)
    valid = owner >= 0
    ids = np.array(scene.ids + [-1])
    depth = np.where(valid, t, 0.0)
    depth_map = DepthMap(
        depth=depth.reshape(shape),
        instance=ids[owner].reshape(shape),
        valid=valid.reshape(shape),
        stride=scene.stride,
    )

    rows, cols = np.indices(shape)
    cells_all = np.stack([rows, cols], axis=-1).reshape(-1, 2)
    flat_pixels = pixels.reshape(-1, 2)
    points = rays * depth[:, None]

    patches, fields, vis = {}, {}, {}
    for k, (obj_id, box) in enumerate(zip(scene.ids, scene.boxes)):
        owned = (owner == k).reshape(shape)
        roi = _roi_cells(box, cam, pixels, owned).reshape(-1)
        idx = np.flatnonzero(roi)
        cell_valid = valid[idx]
        own = owner[idx] == k
        P = points[idx]

        residuals = np.zeros((idx.size, 6))
        residuals[cell_valid] = gt_dbr(P[cell_valid], box)
        uncertainty = np.ones((idx.size, 6))
        uncertainty[cell_valid] = u_occluded
        if own.any():
            uncertainty[own] = visibility_uncertainty(P[own], box, cam, u_occluded)

        patches[obj_id] = RoiPatch(
            pixels=flat_pixels[idx],
            depth=depth[idx],
            residuals=residuals,
            uncertainty=uncertainty,
            valid=cell_valid,
            cells=cells_all[idx],
        )
        rho = gt_corner_x(box, cam)
        px = flat_pixels[idx, 0]
        fields[obj_id] = BevCornerField(
            pixels_x=px,
            displacement=rho[None, :] - px[:, None],
            score=np.zeros((idx.size, 4)),
        )
        vis[obj_id] = edge_visibility(box, cam, scene)
    return Rendering(scene, depth_map, patches, fields, vis, u_occluded)


MIN_NOISY_DEPTH = 1e-3

_DEPTH_STREAM, _DBR_STREAM, _CORNER_STREAM = 0, 1, 2


def _laplace(seed, stream, obj_id, size):
    rng = np.random.default_rng([seed, stream, obj_id])
    return rng.laplace(0.0, 1.0, size)


def add_noise(rendering, spec):
    """Return a copy of ``rendering`` with Laplacian noise added to its fields.

    Depth noise is drawn once per field cell and shared by every patch that
    contains the cell; DBR and corner noise are drawn per object. Each
    (field, object) pair has its own random stream derived from ``spec.seed``,
    so results do not depend on processing order.
    """
    dm = rendering.depth_map
    depth = dm.depth.copy()
    if spec.sigma_depth > 0:
        noise = _laplace(spec.seed, _DEPTH_STREAM, 0, depth.shape)
        depth = np.where(dm.valid, np.maximum(depth + spec.sigma_depth * noise, MIN_NOISY_DEPTH), depth)
    depth_map = DepthMap(depth, dm.instance.copy(), dm.valid.copy(), dm.stride)

    patches, fields = {}, {}
    for obj_id, patch in rendering.patches.items():
        p = patch.copy()
        if spec.sigma_depth > 0 and p.cells is not None:
            p.depth = np.where(p.valid, depth[p.cells[:, 0], p.cells[:, 1]], p.depth)
        if spec.sigma_dbr > 0:
            noise = _laplace(spec.seed, _DBR_STREAM, obj_id, p.residuals.shape)
            p.residuals = np.where(p.valid[:, None], p.residuals + spec.sigma_dbr * noise, p.residuals)
        patches[obj_id] = p

        f = rendering.bev_fields[obj_id]
        disp = f.displacement.copy()
        if spec.sigma_corner > 0:
            disp = disp + spec.sigma_corner * _laplace(spec.seed, _CORNER_STREAM, obj_id, disp.shape)
        fields[obj_id] = BevCornerField(f.pixels_x.copy(), disp, f.score.copy())

    vis = {k: v.copy() for k, v in rendering.edge_visibility.items()}
    return Rendering(rendering.scene, depth_map, patches, fields, vis, rendering.u_occluded)
