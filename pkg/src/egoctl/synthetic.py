"""Seeded synthetic inputs for tests, the acceptance suite and benchmarks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from egoctl.calibration import Annotation, KinematicChain, Keypoint, Link, forward_kinematics_series
from egoctl.geometry import CameraIntrinsics, RigidPose, project_points, transform_points, euler_to_rotation
from egoctl.tracking import Detection, Hand

DEFAULT_K = CameraIntrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)


def robot_hand_chain(platform: str | None = "inspire") -> KinematicChain:
    """A 12-keypoint single hand on a 3-DoF prismatic base.

    Links: base slides in x/y/z, a wrist rotates about two axes, five
    fingers with two flexion joints each. Keypoints: wrist, palm, and the
    middle/tip of each finger.
    """
    links = [
        Link(parent=-1, name="root"),
        Link(parent=0, joint_type="prismatic", axis=[1, 0, 0], name="slide_x"),
        Link(parent=1, joint_type="prismatic", axis=[0, 1, 0], name="slide_y"),
        Link(parent=2, joint_type="prismatic", axis=[0, 0, 1], name="slide_z",
             offset=RigidPose(np.eye(3), [0.0, 0.05, 0.45])),
        Link(parent=3, joint_type="revolute", axis=[0, 0, 1], name="wrist_roll"),
        Link(parent=4, joint_type="revolute", axis=[1, 0, 0], name="wrist_pitch"),
    ]
    keypoints = [Keypoint(link=5, offset=np.zeros(3), name="wrist"),
                 Keypoint(link=5, offset=np.array([0.0, -0.05, 0.0]), name="palm")]
    spread = [-0.04, -0.02, 0.0, 0.02, 0.04]
    for f, x in enumerate(spread):
        base = len(links)
        links.append(Link(parent=5, joint_type="revolute", axis=[1, 0, 0], name=f"f{f}_0",
                          offset=RigidPose(np.eye(3), [x, -0.09, 0.0])))
        links.append(Link(parent=base, joint_type="revolute", axis=[1, 0, 0], name=f"f{f}_1",
                          offset=RigidPose(np.eye(3), [0.0, -0.03, 0.0])))
        keypoints.append(Keypoint(link=base + 1, offset=np.zeros(3), name=f"f{f}_mid"))
        keypoints.append(Keypoint(link=base + 1, offset=np.array([0.0, -0.025, 0.0]), name=f"f{f}_tip"))
    return KinematicChain(links, keypoints, platform=platform)


@dataclass
class CalibrationScene:
    chain: KinematicChain
    q: np.ndarray  # (F, D)
    keypoints_w: np.ndarray  # (F, N, 3)
    theta_true: np.ndarray
    annotations: list[Annotation]
    k: CameraIntrinsics


def calibration_scene(seed: int = 0, frames: int = 5, noise_px: float = 0.0,
                      theta_true=(0.05, -0.08, 0.03, 0.02, -0.05, 0.04)) -> CalibrationScene:
    """12 keypoints x ``frames`` frames, every keypoint annotated."""
    rng = np.random.default_rng(seed)
    chain = robot_hand_chain()
    q = np.zeros((frames, chain.n_dof))
    q[:, 0] = rng.uniform(-0.15, 0.15, frames)
    q[:, 1] = rng.uniform(-0.08, 0.08, frames)
    q[:, 2] = rng.uniform(-0.1, 0.15, frames)
    q[:, 3] = rng.uniform(-0.6, 0.6, frames)
    q[:, 4] = rng.uniform(-0.5, 0.5, frames)
    q[:, 5:] = rng.uniform(0.0, 1.0, (frames, chain.n_dof - 5))
    kw = forward_kinematics_series(chain, q)
    theta = np.asarray(theta_true, dtype=np.float64)
    pc = transform_points(euler_to_rotation(*theta[:3]), theta[3:], kw)
    u, _, front = project_points(pc, DEFAULT_K)
    if not front.all():
        raise RuntimeError("synthetic scene placed a keypoint behind the camera")
    u = u + rng.normal(0.0, noise_px, u.shape) if noise_px > 0 else u
    anns = [Annotation(frame=f, joint_id=j, u_star=(float(u[f, j, 0]), float(u[f, j, 1])))
            for f in range(frames) for j in range(chain.n_keypoints)]
    return CalibrationScene(chain, q, kw, theta, anns, DEFAULT_K)


# --------------------------------------------------------------------------
# Occlusion scenes


@dataclass
class CrossingScene:
    grid_uv: np.ndarray  # (N, 2)
    disparity: np.ndarray  # (N,)
    features: np.ndarray  # (N, C)


def finger_crossing_scene(rng, gh: int = 32, gw: int = 32, channels: int = 4, joints_per_finger: int = 3) -> CrossingScene:
    """Two fingers whose projected polylines cross at different depths."""
    center = np.array([gw / 2, gh / 2]) + rng.uniform(-3, 3, 2)
    angles = rng.uniform(0, np.pi) + np.array([0.0, rng.uniform(np.pi / 4, 3 * np.pi / 4)])
    depths = np.sort(rng.uniform(0.3, 0.7, 2))  # finger 0 nearer
    uv, disp = [], []
    for a, z in zip(angles, depths):
        direction = np.array([np.cos(a), np.sin(a)])
        offsets = np.linspace(-1.0, 1.0, joints_per_finger) * rng.uniform(2.5, 5.0)
        for o in offsets:
            uv.append(center + o * direction)
            disp.append(1.0 / (z + rng.uniform(-0.01, 0.01)))
    feats = np.repeat(rng.normal(size=(2, channels)), joints_per_finger, axis=0)
    return CrossingScene(np.asarray(uv), np.asarray(disp), feats)


# --------------------------------------------------------------------------
# Two-hand detection sequences


def crossing_detections(rng, frames: int = 20, label_noise: float = 0.1, jitter: float = 0.01):
    """Two hands sweeping past each other; labels occasionally flipped."""
    t = np.linspace(0.0, 1.0, frames)
    y0 = rng.uniform(-0.05, 0.05)
    left = np.stack([-0.15 + 0.3 * t, np.full(frames, y0), 0.45 + 0.02 * np.sin(6 * t)], axis=1)
    right = np.stack([0.15 - 0.3 * t, np.full(frames, y0 + rng.uniform(-0.03, 0.03)), 0.5 + 0.0 * t], axis=1)
    per_frame = []
    for f in range(frames):
        dets = []
        for pos, hand in ((left[f], Hand.LEFT), (right[f], Hand.RIGHT)):
            label = hand
            if rng.random() < label_noise:
                label = Hand.RIGHT if hand is Hand.LEFT else Hand.LEFT
            dets.append(Detection(translation=pos + rng.normal(0, jitter, 3), handedness=label, frame=f))
        order = rng.permutation(2)
        per_frame.append([dets[i] for i in order])
    return per_frame
