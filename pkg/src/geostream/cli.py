"""Command-line entry point: ``geostream <subcommand> ...``.

Exit codes: 0 success, 1 configuration error, 2 some objects failed,
3 fatal error.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import fields

import numpy as np

from .bev import aggregate_corners, edge_hypotheses
from .exceptions import GeostreamError, MalformedLine
from .kitti import KittiLabelRow, parse_kitti_labels, serialize_kitti_labels
from .metrics import Detection, evaluate
from .pipeline import ConfigError, RunConfig, run_pipeline
from .recovery import SolverConfig, recover_box
from .simulator import NoiseSpec, Scene, add_noise, render, sample_scene

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL, EXIT_FATAL = 0, 1, 2, 3

logger = logging.getLogger("geostream")


def _read_scene(path):
    try:
        with open(path) as fh:
            return Scene.from_json(fh.read())
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot load scene {path}: {exc}") from None


def _noise_args(p):
    p.add_argument("--sigma-depth", type=float, default=0.0)
    p.add_argument("--sigma-dbr", type=float, default=0.0)
    p.add_argument("--sigma-corner", type=float, default=0.0)
    p.add_argument("--noise-seed", type=int, default=0)
    p.add_argument("--u-occluded", type=float, default=0.9)


def _rendered(args):
    scene = _read_scene(args.scene)
    spec = NoiseSpec(args.sigma_depth, args.sigma_dbr, args.sigma_corner, args.noise_seed)
    return scene, add_noise(render(scene, args.u_occluded), spec)


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_simulate(args):
    if args.n_scenes == 1 and args.out and args.out.endswith(".json"):
        scene = sample_scene(args.seed, args.n_boxes)
        _emit(scene.to_json() + "\n", args.out)
        return EXIT_OK
    if not args.out:
        scene = sample_scene(args.seed, args.n_boxes)
        _emit(scene.to_json() + "\n", None)
        return EXIT_OK
    os.makedirs(args.out, exist_ok=True)
    for i in range(args.n_scenes):
        scene = sample_scene([args.seed, i], args.n_boxes)
        with open(os.path.join(args.out, f"{i:06d}.json"), "w") as fh:
            fh.write(scene.to_json() + "\n")
    return EXIT_OK


def cmd_render(args):
    scene, r = _rendered(args)
    arrays = {
        "depth": r.depth_map.depth,
        "instance": r.depth_map.instance,
        "valid": r.depth_map.valid,
    }
    for obj_id, p in r.patches.items():
        arrays[f"obj{obj_id}_cells"] = p.cells
        arrays[f"obj{obj_id}_residuals"] = p.residuals
        arrays[f"obj{obj_id}_uncertainty"] = p.uncertainty
        arrays[f"obj{obj_id}_corner_displacement"] = r.bev_fields[obj_id].displacement
        arrays[f"obj{obj_id}_edge_visibility"] = r.edge_visibility[obj_id]
    np.savez_compressed(args.out, **arrays)
    print(f"wrote {args.out}: {int(r.depth_map.valid.sum())} valid cells, {len(r.patches)} objects")
    return EXIT_OK


def cmd_recover(args):
    scene, r = _rendered(args)
    cfg = SolverConfig(alpha=args.alpha, beta=args.beta, gamma=args.gamma)
    results, rows, failed = [], [], 0
    for obj_id, gt in zip(scene.ids, scene.boxes):
        try:
            rec = recover_box(r.patches[obj_id], gt.theta, scene.camera, cfg)
        except GeostreamError as exc:
            failed += 1
            results.append({"object_id": obj_id, "error": f"{type(exc).__name__}: {exc}"})
            continue
        b = rec.box
        results.append({
            "object_id": obj_id,
            "center": [float(c) for c in b.center],
            "h": b.h, "w": b.w, "l": b.l, "theta": b.theta,
            "condition": [float(c) for c in rec.condition],
            "objective": rec.objective,
        })
        rows.append(KittiLabelRow.from_box(b, score=1.0, cam=scene.camera))
    if args.labels:
        with open(args.labels, "w") as fh:
            fh.write(serialize_kitti_labels(rows))
    _emit(json.dumps(results, indent=2) + "\n", args.out)
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_bev_depth(args):
    scene, r = _rendered(args)
    out, failed = [], 0
    for obj_id, gt in zip(scene.ids, scene.boxes):
        try:
            hyps = edge_hypotheses(
                aggregate_corners(r.bev_fields[obj_id]), r.edge_visibility[obj_id],
                gt.l, gt.w, gt.theta, scene.camera, args.edge_rate,
            )
        except GeostreamError as exc:
            failed += 1
            out.append({"object_id": obj_id, "error": f"{type(exc).__name__}: {exc}"})
            continue
        out.append({
            "object_id": obj_id,
            "gt_z": float(gt.center[2]),
            "edges": [
                {"corners": list(h.corners), "rho": [h.rho_a, h.rho_b], "visible": h.visible,
                 "omega": h.weight, "z_c": h.z_c}
                for h in hyps
            ],
        })
    _emit(json.dumps(out, indent=2) + "\n", args.out)
    return EXIT_PARTIAL if failed else EXIT_OK


def _read_labels(path):
    with open(path) as fh:
        text = fh.read()
    rows, errors = parse_kitti_labels(text)
    for e in errors:
        logger.warning("%s: %s", path, e)
    return rows


def cmd_eval(args):
    names = sorted(f for f in os.listdir(args.gt_dir) if f.endswith(".txt"))
    frames = []
    for name in names:
        gts = [r.to_box() for r in _read_labels(os.path.join(args.gt_dir, name)) if r.type != "DontCare"]
        det_path = os.path.join(args.det_dir, name)
        dets = []
        if os.path.exists(det_path):
            dets = [Detection(r.to_box(), 1.0 if r.score is None else r.score, r.type)
                    for r in _read_labels(det_path)]
        frames.append((dets, gts))
    reports = evaluate(frames, args.iou_threshold)
    out = {m: rep.as_dict() for m, rep in reports.items()}
    _emit(json.dumps(out, indent=2) + "\n", args.out)
    print(f"AP_3D@{args.iou_threshold}: {reports['3d'].ap:.6f}  AP_BEV: {reports['bev'].ap:.6f}",
          file=sys.stderr)
    return EXIT_OK


def cmd_pipeline(args):
    data = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
    for f in fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            data[f.name] = value
    cfg = RunConfig.from_dict(data)
    result = run_pipeline(cfg)
    print(f"AP_3D@{cfg.iou_threshold}: {result.report['ap_3d']:.6f}  "
          f"AP_BEV: {result.report['ap_bev']:.6f}  failed objects: {result.n_failed}")
    return EXIT_PARTIAL if result.n_failed else EXIT_OK


def cmd_selftest(args):
    from .selftest import run_selftest

    ok = run_selftest(verbose=True)
    return EXIT_OK if ok else EXIT_FATAL


def build_parser():
    parser = argparse.ArgumentParser(prog="geostream", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="sample random scenes to JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-boxes", type=int, default=3)
    p.add_argument("--n-scenes", type=int, default=1)
    p.add_argument("--out", help="scene .json file, or a directory for several scenes")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("render", help="ray-cast a scene into depth / DBR / BEV fields (.npz)")
    p.add_argument("scene")
    p.add_argument("--out", required=True)
    _noise_args(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("recover", help="recover boxes of a scene from its rendered fields")
    p.add_argument("scene")
    p.add_argument("--out")
    p.add_argument("--labels", help="also write recovered boxes as KITTI labels")
    p.add_argument("--alpha", type=float, default=1e-3)
    p.add_argument("--beta", type=float, default=1e-3)
    p.add_argument("--gamma", type=float, default=1e-3)
    _noise_args(p)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("bev-depth", help="object depth hypotheses from BEV edge projections")
    p.add_argument("scene")
    p.add_argument("--out")
    p.add_argument("--edge-rate", type=float, default=0.05)
    _noise_args(p)
    p.set_defaults(func=cmd_bev_depth)

    p = sub.add_parser("eval", help="AP|R40 of KITTI label files against ground truth")
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--det-dir", required=True)
    p.add_argument("--iou-threshold", type=float, default=0.7)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pipeline", help="full simulate-recover-evaluate run")
    p.add_argument("--config", help="JSON config; flags override its values")
    p.add_argument("--scene-files", nargs="*", default=None)
    p.add_argument("--n-scenes", type=int)
    p.add_argument("--boxes-per-scene", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--sigma-depth", type=float)
    p.add_argument("--sigma-dbr", type=float)
    p.add_argument("--sigma-corner", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--u-occluded", type=float)
    p.add_argument("--edge-rate", type=float)
    p.add_argument("--theta-noise", type=float)
    p.add_argument("--iou-threshold", type=float)
    p.add_argument("--output-dir")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("selftest", help="run the built-in oracle checks")
    p.set_defaults(func=cmd_selftest)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors, which would read as partial failure
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, MalformedLine, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        print(f"fatal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
