"""``egoctl`` command line.

Exit codes: 0 success, 2 input/validation error, 3 clean negative result
(video discarded by the quality filter, or no qualifying clip).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from egoctl import __version__, pipeline, tensorfile
from egoctl.calibration import AnnotationError, ChainError, KinematicChain, forward_kinematics_series
from egoctl.config import ConfigError, config_to_dict, load_config, with_overrides
from egoctl.geometry import CameraIntrinsics
from egoctl.tensorfile import TensorFileError
from egoctl.tracking import Detection
from egoctl.trajectory import JointTrajectory, TrajectoryError, read_jsonl, write_jsonl

log = logging.getLogger("egoctl")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NEGATIVE = 3

IMAGE_SUFFIXES = (".png", ".ppm", ".pgm")


class InputError(Exception):
    pass


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: {e}") from None


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _outdir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load_images(directory):
    from PIL import Image

    files = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    out = []
    for f in files:
        with Image.open(f) as im:
            a = np.asarray(im)
        if a.dtype != np.uint8:
            raise InputError(f"{f}: expected 8-bit image, got {a.dtype}")
        out.append(a.astype(np.float64) / 255.0)
    return out


# --------------------------------------------------------------------------
# subcommands


def cmd_track(args, cfg):
    cfg = with_overrides(cfg, tracker={"lambda_hand": args.lambda_hand, "tau_swap": args.tau_swap, "tau_gap": args.tau_gap})
    detections = [Detection.from_record(r) for r in read_jsonl(args.detections)]
    k = CameraIntrinsics.from_dict(_read_json(args.intrinsics)) if args.intrinsics else None
    run = pipeline.run_track(detections, cfg, args.frames_total, k, mirror_right=not args.no_mirror, fps=args.fps)
    out = _outdir(args.out)
    write_jsonl(out / "tracks.jsonl", run.records)
    _write_json(out / "verdict.json", run.verdict)
    if run.trajectory is not None:
        run.trajectory.write(out / "trajectory.jsonl")
    log.info("track: keep=%s reasons=%s swaps=%d", run.verdict["keep"], run.verdict["reasons"], run.verdict["swaps"])
    return EXIT_OK if run.verdict["keep"] else EXIT_NEGATIVE


def cmd_condition(args, cfg):
    cfg = with_overrides(
        cfg,
        grid={"scale": args.scale, "sigma": args.sigma},
        occlusion={"lambda_depth": args.lambda_depth},
        embed={"seed": args.seed},
    )
    traj = JointTrajectory.read(args.trajectory)
    latent = tensorfile.read(args.latent)
    reference = tensorfile.read(args.reference) if args.reference else None
    try:
        run = pipeline.run_condition(traj, latent, cfg, reference)
    except ValueError as e:
        raise InputError(str(e)) from None
    out = _outdir(args.out)
    for name in ("y", "f_motion", "f_geo", "c_geo"):
        tensorfile.write(out / f"{name}.egoc", getattr(run, name))
    manifest = dict(run.manifest)
    manifest["inputs"] = {"trajectory": Path(args.trajectory).name, "latent": Path(args.latent).name,
                          "reference": Path(args.reference).name if args.reference else None}
    _write_json(out / "manifest.json", manifest)
    return EXIT_OK


def cmd_calibrate(args, cfg):
    cfg = with_overrides(cfg, calibration={"grouping": args.grouping})
    chain = KinematicChain.from_dict(_read_json(args.chain))
    q_records = read_jsonl(args.configs)
    ann = _read_json(args.annotations)
    ann = ann["annotations"] if isinstance(ann, dict) else ann
    k = CameraIntrinsics.from_dict(_read_json(args.intrinsics))
    run = pipeline.run_calibrate(chain, q_records, ann, k, cfg, fps=args.fps)
    out = _outdir(args.out)
    _write_json(out / "report.json", {**run.report, "config": config_to_dict(cfg.calibration)})
    run.trajectory.write(out / "trajectory.jsonl")
    return EXIT_OK


def cmd_fk(args, cfg):
    chain = KinematicChain.from_dict(_read_json(args.chain))
    q_records = sorted(read_jsonl(args.configs), key=lambda r: int(r["frame"]))
    kw = forward_kinematics_series(chain, [r["q"] for r in q_records])
    write_jsonl(args.out, [
        {"frame": int(r["frame"]), "keypoints": [[float(v) for v in p] for p in kw[n]]}
        for n, r in enumerate(q_records)
    ])
    return EXIT_OK


def cmd_clip(args, cfg):
    cfg = with_overrides(cfg, clip={"multi": True if args.multi else None})
    traj = JointTrajectory.read(args.trajectory)
    run = pipeline.run_clip(traj, cfg)
    episode = args.episode or Path(args.trajectory).stem
    out = _outdir(args.out)
    _write_json(out / "clips.json", [c.to_dict(episode) for c in run.clips])
    for n, c in enumerate(run.clips):
        traj.slice(c.start, c.end).write(out / f"clip_{n:02d}.jsonl")
    if not run.clips:
        log.info("clip: no qualifying center in %d frames", traj.n_frames)
        return EXIT_NEGATIVE
    return EXIT_OK


def cmd_metrics(args, cfg):
    cfg = with_overrides(cfg, metrics={"align": False if args.no_align else None, "pa_mode": args.pa_mode})
    pred = JointTrajectory.read(args.pred)
    ref = JointTrajectory.read(args.ref)
    pv = tensorfile.read(args.pred_vertices) if args.pred_vertices else None
    rv = tensorfile.read(args.ref_vertices) if args.ref_vertices else None
    if (pv is None) != (rv is None):
        raise InputError("--pred-vertices and --ref-vertices go together")
    pi = _load_images(args.pred_images) if args.pred_images else None
    ri = _load_images(args.ref_images) if args.ref_images else None
    if (pi is None) != (ri is None):
        raise InputError("--pred-images and --ref-images go together")
    try:
        report = pipeline.run_metrics(pred, ref, cfg, pv, rv, pi, ri)
    except ValueError as e:
        raise InputError(str(e)) from None
    _write_json(args.out, report)
    return EXIT_OK


def cmd_mask(args, cfg):
    cfg = with_overrides(cfg, mask={"rate": args.rate, "per_frame": True if args.per_frame else None})
    traj = JointTrajectory.read(args.trajectory)
    masked, sel = pipeline.run_mask(traj, cfg.mask.rate, args.seed, cfg.mask.per_frame)
    masked.write(args.out)
    manifest = {
        "input": Path(args.trajectory).name,
        "rate": cfg.mask.rate,
        "seed": args.seed,
        "per_frame": cfg.mask.per_frame,
        "masked": np.argwhere(sel).tolist() if cfg.mask.per_frame else np.flatnonzero(sel).tolist(),
    }
    _write_json(str(args.out) + ".manifest.json", manifest)
    return EXIT_OK


def _guess_kind(path: Path) -> str:
    if path.suffix == ".egoc":
        return "tensor"
    if path.suffix == ".jsonl":
        first = path.read_text().split("\n", 1)[0]
        return "trajectory" if '"header"' in first else "detections"
    data = _read_json(path)
    if isinstance(data, dict) and "links" in data:
        return "chain"
    if isinstance(data, dict) and {"fx", "fy"} <= set(data):
        return "intrinsics"
    return "config"


def cmd_validate(args, cfg):
    path = Path(args.file)
    kind = args.kind or _guess_kind(path)
    if kind == "tensor":
        a = tensorfile.read(path)
        detail = f"shape {list(a.shape)}"
    elif kind == "trajectory":
        t = JointTrajectory.read(path)
        detail = f"{t.n_frames} frames x {t.n_joints} joints"
    elif kind == "detections":
        dets = [Detection.from_record(r) for r in read_jsonl(path)]
        detail = f"{len(dets)} detections"
    elif kind == "chain":
        c = KinematicChain.from_dict(_read_json(path))
        detail = f"{len(c.links)} links, {c.n_dof} dof, {c.n_keypoints} keypoints"
    elif kind == "intrinsics":
        CameraIntrinsics.from_dict(_read_json(path))
        detail = "intrinsics"
    else:
        load_config(path)
        detail = "config"
    print(f"OK {kind}: {detail}")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="egoctl", description="Hand-trajectory conditioning toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("--config", help="pipeline config JSON")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("track", help="resolve detections into left/right tracks and filter the video")
    s.add_argument("detections", help="detections JSONL")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--frames-total", type=int, help="video length (default: last detected frame + 1)")
    s.add_argument("--intrinsics", help="camera intrinsics JSON; enables trajectory.jsonl output")
    s.add_argument("--fps", type=float, default=30.0)
    s.add_argument("--no-mirror", action="store_true", help="keep right-hand joints unmirrored")
    s.add_argument("--lambda-hand", type=float)
    s.add_argument("--tau-swap", type=float)
    s.add_argument("--tau-gap", type=int)
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("condition", help="build y, F_motion, F_geo and C_geo tensors")
    s.add_argument("trajectory")
    s.add_argument("latent", help="source latent tensor (C, gh, gw)")
    s.add_argument("--reference", help="reference features for y[0] (default: the latent)")
    s.add_argument("--out", required=True)
    s.add_argument("--scale", type=float)
    s.add_argument("--sigma", type=float)
    s.add_argument("--lambda-depth", type=float)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_condition)

    s = sub.add_parser("calibrate", help="fit camera extrinsics from 2D annotations")
    s.add_argument("--chain", required=True)
    s.add_argument("--configs", required=True, help="joint configuration JSONL {frame, q}")
    s.add_argument("--annotations", required=True)
    s.add_argument("--intrinsics", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--grouping", choices=("platform", "scene"))
    s.add_argument("--fps", type=float, default=30.0)
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("fk", help="root-frame keypoints from joint configurations")
    s.add_argument("--chain", required=True)
    s.add_argument("--configs", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fk)

    s = sub.add_parser("clip", help="select visibility-anchored 121-frame clips")
    s.add_argument("trajectory")
    s.add_argument("--out", required=True)
    s.add_argument("--episode")
    s.add_argument("--multi", action="store_true", help="also extract further non-overlapping clips")
    s.set_defaults(func=cmd_clip)

    s = sub.add_parser("metrics", help="MPJPE/MPVPE/PSNR/SSIM report")
    s.add_argument("pred")
    s.add_argument("ref")
    s.add_argument("--out", required=True)
    s.add_argument("--pred-vertices")
    s.add_argument("--ref-vertices")
    s.add_argument("--pred-images")
    s.add_argument("--ref-images")
    s.add_argument("--no-align", action="store_true")
    s.add_argument("--pa-mode", choices=("frame-hand", "sequence"))
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("mask", help="randomly drop whole joints")
    s.add_argument("trajectory")
    s.add_argument("--out", required=True)
    s.add_argument("--rate", type=float)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--per-frame", action="store_true")
    s.set_defaults(func=cmd_mask)

    s = sub.add_parser("validate", help="check a file against its format")
    s.add_argument("file")
    s.add_argument("--kind", choices=("tensor", "trajectory", "detections", "chain", "intrinsics", "config"))
    s.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (InputError, ConfigError, TrajectoryError, TensorFileError, AnnotationError, ChainError,
            FileNotFoundError, KeyError, ValueError) as e:
        msg = f"missing field {e}" if isinstance(e, KeyError) else str(e)
        print(f"egoctl {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
