"""End-to-end runs behind each CLI subcommand.

Functions here take parsed inputs and return plain data (arrays, dicts,
trajectories) so that the CLI only handles files and exit codes.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from egoctl import calibration as calib
from egoctl import clipper, metrics, tracking
from egoctl.conditioning import compress_temporal, inject_condition, motion_volume
from egoctl.config import PipelineConfig, config_to_dict
from egoctl.geoembed import GeoStream, causal_head, mask_joints
from egoctl.geometry import CameraIntrinsics, GridSpec, in_bounds, project_points
from egoctl.tracking import Hand
from egoctl.trajectory import SIDE_SLOTS, JointTrajectory

log = logging.getLogger(__name__)


def array_digest(a) -> str:
    return hashlib.sha256(np.ascontiguousarray(a, dtype="<f8").tobytes()).hexdigest()


# --------------------------------------------------------------------------
# track


@dataclass
class TrackRun:
    records: list[dict]
    verdict: dict
    trajectory: JointTrajectory | None


def run_track(detections, cfg: PipelineConfig, frames_total=None, intrinsics: CameraIntrinsics | None = None,
              mirror_right: bool = True, fps: float = 30.0) -> TrackRun:
    tracker = tracking.track_sequence(detections, cfg.tracker)
    by_frame: dict[int, list[tracking.Detection]] = {}
    for det in detections:
        by_frame.setdefault(det.frame, []).append(det)

    records = []
    for dec in tracker.decisions:
        dets = by_frame[dec.frame]
        rec = {"frame": dec.frame, "swapped": dec.swapped, "swap_rejected": dec.swap_rejected,
               "flushed": ["L" if j == 0 else "R" for j in dec.flushed], "L": None, "R": None}
        for i, j in dec.matching:
            rec["L" if j == 0 else "R"] = {
                "detection": i,
                "handedness": dets[i].handedness.value,
                "translation": [float(v) for v in dets[i].translation],
                "cost": float(dec.cost[i, j]),
            }
        records.append(rec)

    stats = tracking.VideoStats.from_detections(detections, frames_total)
    keep, reasons = tracking.quality_filter(stats)
    verdict = {
        "keep": keep,
        "reasons": reasons,
        "stats": {
            "frames_total": stats.frames_total,
            "frames_with_valid_hand": stats.frames_with_valid_hand,
            "frames_with_valid_params": stats.frames_with_valid_params,
            "frames_with_more_than_two_hands": stats.frames_with_more_than_two_hands,
        },
        "swaps": tracker.swaps,
        "tracker": config_to_dict(cfg.tracker),
        "mirror_right": mirror_right,
    }

    traj = None
    has_joints = any(d.joints is not None for d in detections)
    if intrinsics is not None and has_joints and stats.frames_total > 0:
        f = stats.frames_total
        pos = np.zeros((f, 2 * SIDE_SLOTS, 3))
        val = np.zeros((f, 2 * SIDE_SLOTS), dtype=bool)
        for dec in tracker.decisions:
            if dec.frame >= f:
                continue
            dets = by_frame[dec.frame]
            for i, j in dec.matching:
                joints = dets[i].joints
                if joints is None:
                    continue
                cols = slice(j * SIDE_SLOTS, (j + 1) * SIDE_SLOTS)
                pos[dec.frame, cols] = tracking.mirror_right_hand(joints) if (mirror_right and j == 1) else joints
                val[dec.frame, cols] = True
        traj = JointTrajectory(
            positions=pos, valid=val,
            handedness=[Hand.LEFT] * SIDE_SLOTS + [Hand.RIGHT] * SIDE_SLOTS,
            semantic_id=list(range(SIDE_SLOTS)) * 2,
            fps=fps, intrinsics=intrinsics,
            meta={"source": "track", "mirror_right": mirror_right},
        )
    return TrackRun(records=records, verdict=verdict, trajectory=traj)


# --------------------------------------------------------------------------
# condition


@dataclass
class ConditionRun:
    y: np.ndarray
    f_motion: np.ndarray
    f_geo: np.ndarray
    c_geo: np.ndarray
    manifest: dict


def condition_grid(traj: JointTrajectory, latent_shape, scale: float) -> GridSpec:
    gh, gw = int(latent_shape[-2]), int(latent_shape[-1])
    k = traj.intrinsics
    if (int(k.height // scale), int(k.width // scale)) != (gh, gw):
        raise ValueError(
            f"latent grid {gh}x{gw} does not match image {k.width}x{k.height} at {scale} px/cell"
        )
    return GridSpec(gh, gw, scale)


def run_condition(traj: JointTrajectory, latent, cfg: PipelineConfig, reference=None) -> ConditionRun:
    latent = np.asarray(latent, dtype=np.float64)
    if latent.ndim != 3:
        raise ValueError(f"source latent must be (C, gh, gw), got shape {latent.shape}")
    ref = latent if reference is None else np.asarray(reference, dtype=np.float64)
    grid = condition_grid(traj, latent.shape, cfg.grid.scale)
    res = motion_volume(traj.positions, traj.valid, latent, traj.intrinsics, grid, cfg.occlusion, cfg.grid.sigma)

    e = cfg.embed
    stream = GeoStream.init(
        motion_channels=latent.shape[0], encoding=cfg.encoding, n_max=e.n_max, id_dim=e.id_dim,
        geo_dim=e.geo_dim, hidden=e.hidden, out_channels=e.out_channels, kernel=e.kernel, seed=e.seed,
    )
    f_geo = stream.geo_volume(res.grid_uv, res.disparity, traj.identity_indices(), res.heatmaps)
    motion_c = compress_temporal(res.motion)
    c_geo = causal_head(compress_temporal(f_geo), motion_c, stream.head)
    y = inject_condition(ref, motion_c)

    manifest = {
        "frames": traj.n_frames,
        "latent_frames": int(y.shape[0]),
        "joints": traj.n_joints,
        "grid": {"gh": grid.gh, "gw": grid.gw, "scale": grid.scale},
        "seeds": {"identity": stream.table.seed, "mlp": stream.mlp.seed, "head": stream.head.seed},
        "param_sha256": {k: array_digest(v) for k, v in stream.parameters().items()},
        "shapes": {
            "y": list(y.shape), "f_motion": list(res.motion.shape),
            "f_geo": list(f_geo.shape), "c_geo": list(c_geo.shape),
        },
        "channel_order": ["c_geo", "noisy_latent", "y"],
        "off_grid_joints": np.flatnonzero(res.features.off_grid).tolist(),
        "config": config_to_dict(cfg),
    }
    return ConditionRun(y=y, f_motion=res.motion, f_geo=f_geo, c_geo=c_geo, manifest=manifest)


# --------------------------------------------------------------------------
# calibrate


@dataclass
class CalibrationRun:
    report: dict
    trajectory: JointTrajectory
    keypoints_w: np.ndarray


def _keypoint_descriptors(chain: calib.KinematicChain):
    hands, ids, counters = [], [], {Hand.LEFT: 0, Hand.RIGHT: 0}
    for kp in chain.keypoints:
        h = Hand.parse(kp.handedness) if kp.handedness else Hand.LEFT
        hands.append(h)
        ids.append(counters[h])
        counters[h] += 1
    return hands, ids


def run_calibrate(chain: calib.KinematicChain, q_records, annotations, k: CameraIntrinsics,
                  cfg: PipelineConfig, fps: float = 30.0) -> CalibrationRun:
    """``q_records``: ``[{frame, q, scene?}]``; ``annotations``: ``[{frame, joint_id, u, scene?}]``."""
    q_records = sorted(q_records, key=lambda r: int(r["frame"]))
    frames = [int(r["frame"]) for r in q_records]
    if len(set(frames)) != len(frames):
        raise ValueError("duplicate frame in joint-configuration series")
    index = {f: n for n, f in enumerate(frames)}
    kw = calib.forward_kinematics_series(chain, [r["q"] for r in q_records])

    c = cfg.calibration
    if c.grouping == "scene":
        scene_of = {int(r["frame"]): str(r.get("scene", "default")) for r in q_records}
    else:
        scene_of = {f: "default" for f in frames}

    groups: dict[str, list[calib.Annotation]] = {}
    for a in annotations:
        f = int(a["frame"])
        if f not in index:
            raise calib.AnnotationError(f"annotation references missing frame {f} (joint {a['joint_id']})")
        ann = calib.Annotation(frame=index[f], joint_id=int(a["joint_id"]), u_star=tuple(map(float, a["u"])))
        if not 0 <= ann.joint_id < chain.n_keypoints:
            raise calib.AnnotationError(f"annotation references missing joint {ann.joint_id} in frame {f}")
        groups.setdefault(scene_of[f], []).append(ann)
    if not groups:
        raise calib.AnnotationError("no annotations given")

    bounds = calib.ExtrinsicParams.default_bounds(c.nominal, c.angle_bound, c.translation_bound)
    init = calib.ExtrinsicParams.at_midpoint(bounds)
    thetas, group_reports = {}, []
    for scene in sorted(groups):
        anns = groups[scene]
        problem = calib.ReprojectionProblem(anns, kw, k)
        res = calib.solve_extrinsics(problem, bounds, init)
        thetas[scene] = res.theta
        r = res.residuals.reshape(-1, 2)
        group_reports.append({
            "scene": scene,
            "theta": [float(v) for v in res.theta],
            "cost": res.cost,
            "initial_cost": res.initial_cost,
            "rms_px": res.rms,
            "status": res.status,
            "converged": res.converged,
            "iterations": res.iterations,
            "residuals": [
                {"frame": frames[a.frame], "joint_id": a.joint_id, "residual": [float(r[n, 0]), float(r[n, 1])]}
                for n, a in enumerate(anns)
            ],
        })

    pos = np.zeros_like(kw)
    front = np.zeros(kw.shape[:2], dtype=bool)
    for f, n in index.items():
        scene = scene_of[f]
        theta = thetas.get(scene, thetas[sorted(thetas)[0]])
        bp = calib.batch_project(theta, kw[n], k)
        pos[n], front[n] = bp.points_c, bp.front
    hands, ids = _keypoint_descriptors(chain)
    traj = JointTrajectory(
        positions=pos, valid=front, handedness=hands, semantic_id=ids, fps=fps, intrinsics=k,
        frame_ids=np.asarray(frames), meta={"source": "calibrate", "platform": chain.platform},
    )
    report = {
        "groups": group_reports,
        "bounds": bounds.tolist(),
        "initial": [float(v) for v in init.theta],
        "grouping": c.grouping,
    }
    if len(group_reports) == 1:
        report["theta"] = group_reports[0]["theta"]
        report["status"] = group_reports[0]["status"]
    return CalibrationRun(report=report, trajectory=traj, keypoints_w=kw)


# --------------------------------------------------------------------------
# clip


def trajectory_in_bounds(traj: JointTrajectory) -> np.ndarray:
    u, _, front = project_points(traj.positions, traj.intrinsics)
    return in_bounds(u, front & traj.valid, traj.intrinsics)


@dataclass
class ClipRun:
    clips: list[clipper.ClipIndex]
    raw: np.ndarray
    smoothed: np.ndarray


def run_clip(traj: JointTrajectory, cfg: PipelineConfig) -> ClipRun:
    raw = clipper.visibility_score(trajectory_in_bounds(traj))
    smoothed = clipper.smooth_series(raw, cfg.clip.window)
    clips = clipper.select_clips(raw, smoothed, cfg.clip.thresholds, multi=cfg.clip.multi)
    return ClipRun(clips=clips, raw=raw, smoothed=smoothed)


# --------------------------------------------------------------------------
# metrics


def _groups(traj: JointTrajectory):
    out = {}
    for n, h in enumerate(traj.handedness):
        out.setdefault(h.value, []).append(n)
    return out


def pose_errors(pred: JointTrajectory, ref: JointTrajectory, align: bool, pa_mode: str = "frame-hand"):
    """Per-frame, per-hand MPJPE (mm). ``None`` where fewer than 3 joints are comparable."""
    if pred.n_frames != ref.n_frames or pred.n_joints != ref.n_joints:
        raise ValueError(
            f"prediction has {pred.n_frames}x{pred.n_joints} frames x joints, reference {ref.n_frames}x{ref.n_joints}"
        )
    both = pred.valid & ref.valid
    per_frame = [dict() for _ in range(pred.n_frames)]
    for hand, cols in sorted(_groups(ref).items()):
        cols = np.asarray(cols)
        if pa_mode == "sequence" and align:
            m = both[:, cols]
            p = pred.positions[:, cols][m]
            r = ref.positions[:, cols][m]
            tf = metrics.procrustes_align(p, r) if len(p) >= 3 else None
        for t in range(pred.n_frames):
            m = both[t, cols]
            p, r = pred.positions[t, cols][m], ref.positions[t, cols][m]
            if len(p) < 3 and align or len(p) == 0:
                per_frame[t][hand] = None
                continue
            if not align:
                per_frame[t][hand] = metrics.mpjpe(p, r, align=False)
            elif pa_mode == "sequence":
                per_frame[t][hand] = None if tf is None else float(np.linalg.norm(tf.apply(p) - r, axis=-1).mean() * 1000.0)
            else:
                try:
                    per_frame[t][hand] = metrics.mpjpe(p, r, align=True)
                except metrics.AlignmentError:
                    per_frame[t][hand] = None
    return per_frame


def _mean(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def run_metrics(pred: JointTrajectory, ref: JointTrajectory, cfg: PipelineConfig,
                pred_vertices=None, ref_vertices=None, pred_images=None, ref_images=None) -> dict:
    m = cfg.metrics
    errs = pose_errors(pred, ref, m.align, m.pa_mode)
    report = {
        "frames": pred.n_frames,
        "align": m.align,
        "pa_mode": m.pa_mode,
        "per_frame": [{"frame": int(f), "mpjpe": e} for f, e in zip(ref.frame_ids, errs)],
        "aggregate": {"mpjpe": _mean(v for e in errs for v in e.values())},
        "excluded": ["fid", "fvd"],
    }
    if pred_vertices is not None:
        pv, rv = np.asarray(pred_vertices), np.asarray(ref_vertices)
        if pv.shape != rv.shape:
            raise ValueError(f"vertex arrays differ in shape: {pv.shape} vs {rv.shape}")
        vals = [metrics.mpvpe(pv[t], rv[t], m.align) for t in range(pv.shape[0])]
        for rec, v in zip(report["per_frame"], vals):
            rec["mpvpe"] = v
        report["aggregate"]["mpvpe"] = _mean(vals)
    if pred_images is not None:
        if len(pred_images) != len(ref_images):
            raise ValueError(f"{len(pred_images)} predicted images vs {len(ref_images)} reference images")
        ps = [metrics.psnr(a, b) for a, b in zip(pred_images, ref_images)]
        ss = [metrics.ssim(a, b) for a, b in zip(pred_images, ref_images)]
        report["images"] = [{"index": i, "psnr": p, "ssim": s} for i, (p, s) in enumerate(zip(ps, ss))]
        report["aggregate"]["psnr"] = _mean(ps)
        report["aggregate"]["ssim"] = _mean(ss)
    return report


# --------------------------------------------------------------------------
# mask


def run_mask(traj: JointTrajectory, rate: float, seed: int, per_frame: bool = False):
    pos, val, sel = mask_joints(traj.positions, traj.valid, rate, seed, per_frame)
    if not sel.any():
        return traj, sel
    return traj.with_data(pos, val), sel
