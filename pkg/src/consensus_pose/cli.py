"""Command-line interface: ``consensus-pose {synth,calibrate,fuse,evaluate,decode}``.

Exit codes: 0 success, 2 usage, 3 validation, 4 degenerate geometry,
5 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import io
from .consensus import OptimizerConfig, calibrate_rig
from .decode import DecodeConfig, decode_pose
from .errors import ConsensusPoseError, InvalidInputError, ValidationError
from .fusion import fuse_frame
from .metrics import METRIC_NAMES, evaluate
from .synth import NoiseModel, generate_scene, write_scene

log = logging.getLogger("consensus_pose")

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_DEGENERATE, EXIT_NUMERICAL = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


def _floats(text: str, count: tuple[int, ...]) -> tuple[float, ...]:
    try:
        values = tuple(float(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if len(values) not in count:
        raise argparse.ArgumentTypeError(f"expected {' or '.join(map(str, count))} values, got {text!r}")
    return values


def _unit_interval(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {value}")
    return value


def _non_negative(text: str) -> float:
    value = float(text)
    if not value >= 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {value}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def cmd_synth(args) -> int:
    scene = generate_scene(
        n_cameras=args.cameras,
        n_frames=args.frames,
        n_joints=args.joints,
        noise=NoiseModel(args.noise_uv_px, args.noise_z_mm),
        occlusion_rate=args.occlusion,
        seed=args.seed,
    )
    write_scene(scene, args.out_poses, args.out_gt_calib, args.out_gt_poses)
    log.info("wrote %d frames from %d cameras", scene.n_frames, len(scene.camera_ids))
    return EXIT_OK


def _observed_image_size(data: io.PosesData) -> tuple[float, float]:
    # no image size recorded: use the bounding box of observed pixels, centered on its midpoint
    uv = np.concatenate([a[..., :2].reshape(-1, 2) for a in data.uvz.values()])
    uv = uv[np.all(np.isfinite(uv), axis=1)]
    lo, hi = uv.min(axis=0), uv.max(axis=0)
    return float(lo[0] + hi[0]), float(lo[1] + hi[1])


def cmd_calibrate(args) -> int:
    data = io.read_poses(args.poses)
    if len(data.camera_ids) < 2:
        raise UsageError(f"calibration needs at least 2 cameras, {args.poses} has {len(data.camera_ids)}")
    reference = args.ref_camera or data.camera_ids[0]
    if reference not in data.camera_ids:
        raise UsageError(f"reference camera {reference!r} not in {data.camera_ids}")

    initial = {}
    if args.init_calib:
        init_calib = io.read_calibration(args.init_calib)
        missing = [c for c in data.camera_ids if c not in init_calib]
        if missing:
            raise ValidationError(f"{args.init_calib} lacks cameras {missing}")
        initial = {c: init_calib.intrinsics[c] for c in data.camera_ids}

    image_size = data.image_size
    if image_size is None and not initial and (args.init_focal is None or args.init_center is None):
        image_size = _observed_image_size(data)
        log.warning("poses file has no image_size; assuming %gx%g from observed pixels", *image_size)
    cfg = OptimizerConfig(
        max_iter=args.max_iter,
        rel_tol=args.rel_tol,
        conf_threshold=args.conf_threshold,
        init_focal_px=args.init_focal,
        init_center_px=args.init_center,
        image_size=image_size,
        freeze_intrinsics=args.freeze_intrinsics,
        weighted=args.weighted,
    )
    rig = calibrate_rig(data.uvz, reference, cfg, data.conf, initial, n_jobs=args.jobs)
    io.write_calibration(args.out, rig.calibration)
    if args.trace:
        io.write_trace(args.trace, {cid: pair.trace for cid, pair in rig.pairs.items()})
    for cid, pair in rig.pairs.items():
        log.info(
            "%s -> %s: %d points, %d iterations, rms residual %.6g mm%s",
            cid, reference, pair.n_points, pair.n_iterations, pair.rms_residual,
            " (converged)" if pair.converged else "",
        )
    return EXIT_OK


def cmd_fuse(args) -> int:
    data = io.read_poses(args.poses)
    calib = io.read_calibration(args.calib)
    missing = [c for c in data.camera_ids if c not in calib]
    if missing:
        raise ValidationError(f"calibration {args.calib} has no entry for camera(s) {', '.join(missing)}")
    fused = np.empty((len(data.frame_ids), data.skeleton.n_joints, 3))
    for f, frame_id in enumerate(data.frame_ids):
        observed = [c for c in data.camera_ids if data.observed(c, f)]
        if not observed:
            raise ValidationError(f"frame {frame_id!r} has no observations")
        fused[f] = fuse_frame(
            {c: data.uvz[c][f] for c in observed},
            {c: data.conf[c][f] for c in observed},
            calib,
            args.conf_threshold,
        )
    io.write_absolute_poses(args.out, io.AbsolutePoses(data.skeleton, data.frame_ids, fused, calib.reference))
    return EXIT_OK


def _key(frame_id):
    import json

    return json.dumps(frame_id)


def cmd_evaluate(args) -> int:
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = [m for m in metrics if m not in METRIC_NAMES]
    if unknown or not metrics:
        raise UsageError(f"unknown metric(s) {unknown}; choose from {', '.join(METRIC_NAMES)}")
    pred = io.read_absolute_poses(args.pred)
    gt = io.read_absolute_poses(args.gt)
    if pred.skeleton.n_joints != gt.skeleton.n_joints:
        raise ValidationError(f"joint counts differ: {pred.skeleton.n_joints} vs {gt.skeleton.n_joints}")
    pred_index = {_key(fid): i for i, fid in enumerate(pred.frame_ids)}
    gt_index = {_key(fid): i for i, fid in enumerate(gt.frame_ids)}
    missing_pred = [fid for fid in gt.frame_ids if _key(fid) not in pred_index]
    missing_gt = [fid for fid in pred.frame_ids if _key(fid) not in gt_index]
    if missing_pred or missing_gt:
        raise ValidationError(
            f"frame ids do not match; missing from prediction: {missing_pred}, missing from ground truth: {missing_gt}"
        )
    order = [pred_index[_key(fid)] for fid in gt.frame_ids]
    root = gt.skeleton.root_index if args.root is None else args.root
    report = evaluate(
        pred.poses[order], gt.poses, metrics, root=root, pck_threshold_mm=args.pck_threshold,
        joint_names=gt.skeleton.joint_names,
    )
    print(report.to_table())
    if args.out:
        io.atomic_write_text(args.out, report.to_json() + "\n")
    return EXIT_OK


def cmd_decode(args) -> int:
    maps = io.read_maps(args.maps)
    cfg = DecodeConfig(rho=args.rho, beta=args.beta, depth_range_mm=args.depth_range)
    n_f, n_j = len(maps.frame_ids), maps.skeleton.n_joints
    uvz = {c: np.full((n_f, n_j, 3), np.nan) for c in maps.camera_ids}
    conf = {c: np.zeros((n_f, n_j)) for c in maps.camera_ids}
    for f, observations in enumerate(maps.observations):
        for obs in observations:
            try:
                uvz[obs.camera_id][f] = decode_pose(obs.heatmaps, obs.depth_maps, obs.alpha_z, cfg, obs.crop)
            except InvalidInputError as exc:
                raise ValidationError(f"frame {maps.frame_ids[f]!r}, camera {obs.camera_id!r}: {exc}") from None
            conf[obs.camera_id][f] = obs.conf
    io.write_poses(args.out, io.PosesData(maps.skeleton, maps.camera_ids, maps.frame_ids, uvz, conf, maps.image_size))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="consensus-pose", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic multi-camera scene")
    p.add_argument("--cameras", type=_positive_int, default=4)
    p.add_argument("--frames", type=_positive_int, default=100)
    p.add_argument("--joints", type=_positive_int, default=17)
    p.add_argument("--noise-uv-px", type=_non_negative, default=0.0)
    p.add_argument("--noise-z-mm", type=_non_negative, default=0.0)
    p.add_argument("--occlusion", type=_unit_interval, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-poses", required=True)
    p.add_argument("--out-gt-calib", required=True)
    p.add_argument("--out-gt-poses", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("calibrate", help="self-calibrate the rig from frustum predictions")
    p.add_argument("--poses", required=True)
    p.add_argument("--ref-camera")
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--rel-tol", type=_non_negative, default=1e-10)
    p.add_argument("--conf-threshold", type=_unit_interval, default=0.5)
    p.add_argument("--init-focal", type=lambda s: _floats(s, (1, 2)), help="f or fx,fy in pixels")
    p.add_argument("--init-center", type=lambda s: _floats(s, (2,)), help="cx,cy in pixels")
    p.add_argument("--init-calib", help="calibration file providing per-camera initial intrinsics")
    p.add_argument("--freeze-intrinsics", action="store_true")
    p.add_argument("--weighted", action="store_true", help="weight the objective by joint confidences")
    p.add_argument("--jobs", type=_positive_int, default=1)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", help="CSV file for the per-substep objective trace")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("fuse", help="fuse all views into reference-frame absolute poses")
    p.add_argument("--poses", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--conf-threshold", type=_unit_interval, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("evaluate", help="compare predicted and ground-truth absolute poses")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--metrics", default=",".join(METRIC_NAMES))
    p.add_argument("--pck-threshold", type=_non_negative, default=150.0)
    p.add_argument("--root", type=int)
    p.add_argument("--out", help="JSON report path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("decode", help="decode heatmaps and depth maps into a poses file")
    p.add_argument("--maps", required=True)
    p.add_argument("--rho", type=float, default=10000.0)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--depth-range", type=float, default=2000.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decode)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{parser.prog} {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConsensusPoseError as exc:
        print(f"{parser.prog} {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"{parser.prog} {args.command}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
