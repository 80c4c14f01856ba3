"""Quick oracle checks runnable from the CLI (``geostream selftest``)."""

import numpy as np
from scipy.optimize import minimize_scalar

from .bev import BEV_CORNER_SIGNS, depth_from_edge, gt_corner_x
from .geometry import BEV_EDGES, Box3D, backproject, project
from .losses import lau
from .metrics import Detection, ap_r40, iou_3d
from .recovery import recover_box
from .simulator import default_camera, render, sample_scene


def _roundtrip():
    worst = 0.0
    for seed in range(10):
        scene = sample_scene(seed, 1)
        r = render(scene)
        patch = r.patches[0]
        patch = patch.copy(uncertainty=np.zeros_like(patch.uncertainty))
        gt = scene.boxes[0]
        rec = recover_box(patch, gt.theta, scene.camera).box
        worst = max(worst, np.max(np.abs(rec.params() - gt.params()) / np.abs(gt.params()).clip(1e-3)))
    return worst < 1e-6, f"max relative error {worst:.2e}"


def _projection():
    cam = default_camera()
    rng = np.random.default_rng(0)
    px = rng.uniform(0, [cam.width, cam.height], size=(100, 2))
    z = rng.uniform(0.5, 80, size=100)
    err = np.abs(project(cam, backproject(cam, px, z)) - px).max()
    return err < 1e-9, f"max pixel error {err:.2e}"


def _bev_depth():
    cam = default_camera()
    worst = 0.0
    for seed in range(20):
        box = sample_scene(seed, 1).boxes[0]
        rho = gt_corner_x(box, cam)
        for i, j in BEV_EDGES:
            if abs(rho[i] - rho[j]) <= 1:
                continue
            z = depth_from_edge(rho[i], rho[j], BEV_CORNER_SIGNS[i], BEV_CORNER_SIGNS[j],
                                box.l, box.w, box.theta, cam)
            worst = max(worst, abs(z - box.center[2]))
    return worst < 1e-6, f"max depth error {worst:.2e} m"


def _lau():
    err = 0.37
    res = minimize_scalar(lambda u: lau(err, 0.0, u), bounds=(1e-3, 10), method="bounded",
                          options={"xatol": 1e-10})
    dev = abs(res.x - np.sqrt(2) * err)
    return dev < 1e-4, f"|argmin - sqrt(2) err| = {dev:.2e}"


def _ap():
    gt = Box3D([0, 1, 20], 1.5, 1.6, 3.9, 0.3)
    far = Box3D([10, 1, 40], 1.5, 1.6, 3.9, 0.3)
    close = Box3D([0.1, 1, 20.1], 1.5, 1.6, 3.9, 0.3)
    ap = ap_r40([Detection(far, 0.95), Detection(close, 0.9)], [gt]).ap
    return ap == 0.5 and iou_3d(close, gt) > 0.7, f"AP = {ap}"


CHECKS = (
    ("projection round trip", _projection),
    ("noiseless box recovery", _roundtrip),
    ("BEV edge depth", _bev_depth),
    ("LAU stationarity", _lau),
    ("AP|R40 worked example", _ap),
)


def run_selftest(verbose=False):
    ok = True
    for name, check in CHECKS:
        passed, detail = check()
        ok &= passed
        if verbose:
            print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    return ok
