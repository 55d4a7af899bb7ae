"""Occlusion-aware motion conditioning.

Two stages run on the latent grid:

* context aggregation in the source frame, where each joint pools the
  source latent under its heatmap and is gated by how strongly any other
  joint sits in front of it;
* propagation to every target frame through a soft Z-buffer, a per-cell
  softmax over joints whose logits add scaled disparity to the log heatmap.

Invalid joints (behind the camera or masked) are dropped from every
reduction instead of being given sentinel depths.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from egoctl import kernels
from egoctl.geometry import CameraIntrinsics, GridSpec, gaussian_heatmaps, project_points

log = logging.getLogger(__name__)

# heatmap mass below this is treated as "joint fell off the grid"
OFF_GRID_MASS = 1e-12


@dataclass(frozen=True)
class OcclusionParams:
    tau: float = 1.5
    gamma_depth: float = 50.0
    lambda_depth: float = 1.0
    epsilon: float = 1e-6

    def __post_init__(self):
        if not (self.tau > 0 and self.gamma_depth > 0 and self.epsilon > 0):
            raise ValueError("tau, gamma_depth and epsilon must be positive")


@dataclass
class JointFeatures:
    """Gated per-joint context vectors.

    ``vectors`` is ``(N, C)``; ``visibility`` holds the gate ``1 - max_j P[i, j]``
    (0 for invalid joints); ``off_grid`` flags joints whose heatmap had no mass.
    """

    vectors: np.ndarray
    visibility: np.ndarray
    off_grid: np.ndarray


def _valid_mask(valid, n):
    if valid is None:
        return np.ones(n, dtype=bool)
    valid = np.asarray(valid, dtype=bool)
    if valid.shape != (n,):
        raise ValueError(f"valid mask has shape {valid.shape}, expected ({n},)")
    return valid


def occlusion_penalty(u, d, params: OcclusionParams, valid=None) -> np.ndarray:
    """Pairwise ``P[i, j]``: likelihood that joint ``j`` hides joint ``i``.

    ``u`` are grid coordinates ``(N, 2)``, ``d`` disparities ``(N,)``. The
    diagonal and every row/column of an invalid joint are zero.
    """
    u = np.asarray(u, dtype=np.float64).reshape(-1, 2)
    d = np.asarray(d, dtype=np.float64).reshape(-1)
    n = len(d)
    valid = _valid_mask(valid, n)
    uu = np.where(valid[:, None], u, 0.0)
    dd = np.where(valid, d, 0.0)
    dist2 = ((uu[:, None, :] - uu[None, :, :]) ** 2).sum(-1)
    overlap = np.exp(-dist2 / (2.0 * params.tau**2))
    ordering = expit(params.gamma_depth * (dd[None, :] - dd[:, None]))
    p = overlap * ordering
    p[~valid, :] = 0.0
    p[:, ~valid] = 0.0
    np.fill_diagonal(p, 0.0)
    return p


def visibility_gate(penalty: np.ndarray) -> np.ndarray:
    p = np.asarray(penalty, dtype=np.float64)
    if p.shape[0] < 2:
        return np.ones(p.shape[0])
    off = p.copy()
    np.fill_diagonal(off, -np.inf)
    return 1.0 - off.max(axis=1)


def aggregate_context(latent, heatmaps, penalty, epsilon: float, valid=None) -> JointFeatures:
    """Gated heatmap-weighted average of the source latent for each joint.

    ``latent`` is ``(C, gh, gw)``, ``heatmaps`` ``(N, gh, gw)``.
    """
    latent = np.asarray(latent, dtype=np.float64)
    heat = np.asarray(heatmaps, dtype=np.float64)
    if latent.shape[1:] != heat.shape[1:]:
        raise ValueError(f"latent grid {latent.shape[1:]} != heatmap grid {heat.shape[1:]}")
    n = heat.shape[0]
    valid = _valid_mask(valid, n)
    mass = heat.reshape(n, -1).sum(axis=1)
    pooled = np.einsum("nyx,cyx->nc", heat, latent) / (mass + epsilon)[:, None]
    gate = np.where(valid, visibility_gate(penalty), 0.0)
    off_grid = valid & (mass < OFF_GRID_MASS)
    if off_grid.any():
        log.warning("joints %s have no heatmap mass on the grid", np.flatnonzero(off_grid).tolist())
    vectors = gate[:, None] * pooled
    vectors[off_grid | ~valid] = 0.0
    return JointFeatures(vectors=vectors, visibility=gate, off_grid=off_grid)


def depth_weight_field(heatmaps, disparities, params: OcclusionParams, valid=None) -> np.ndarray:
    """Soft Z-buffer weights ``(N, gh, gw)``; each cell sums to 1 over valid joints."""
    heat = np.asarray(heatmaps, dtype=np.float64)
    n = heat.shape[0]
    if n < 1:
        raise ValueError("need at least one joint")
    valid = _valid_mask(valid, n)
    d = np.where(valid, np.asarray(disparities, dtype=np.float64), 0.0)
    return kernels.depth_weights(heat, d, valid, params.lambda_depth, params.epsilon)


def depth_weight_jacobian(attention, params: OcclusionParams, valid=None) -> np.ndarray:
    """Analytic ``dA[i](x) / dd[k]`` as an ``(N, N, gh, gw)`` array.

    Softmax derivative: ``lambda * A_i * (delta_ik - A_k)`` over valid joints.
    """
    a = np.asarray(attention, dtype=np.float64)
    n = a.shape[0]
    valid = _valid_mask(valid, n)
    eye = np.eye(n)[:, :, None, None]
    jac = params.lambda_depth * a[:, None] * (eye - a[None, :])
    jac[~valid] = 0.0
    jac[:, ~valid] = 0.0
    return jac


def propagate_motion(features, attention, heatmaps, valid=None) -> np.ndarray:
    """One target frame: ``(sum_i A_i f_i) * (sum_j M_j)`` as ``(C, gh, gw)``."""
    f = features.vectors if isinstance(features, JointFeatures) else np.asarray(features, dtype=np.float64)
    heat = np.asarray(heatmaps, dtype=np.float64)
    a = np.asarray(attention, dtype=np.float64)
    if a.shape != heat.shape:
        raise ValueError(f"attention {a.shape} and heatmaps {heat.shape} disagree")
    if f.shape[0] != heat.shape[0]:
        raise ValueError(f"{f.shape[0]} features for {heat.shape[0]} heatmaps")
    valid = _valid_mask(valid, heat.shape[0])
    return kernels.propagate(f, a, heat, valid)


def latent_frame_count(t: int) -> int:
    return 1 + -(-(t - 1) // 4)


def compress_temporal(volume) -> np.ndarray:
    """Keep frame 0, then average consecutive groups of up to 4 frames."""
    v = np.asarray(volume, dtype=np.float64)
    t = v.shape[0]
    if t < 1:
        raise ValueError("volume has no frames")
    out = [v[0]]
    for start in range(1, t, 4):
        out.append(v[start : start + 4].mean(axis=0))
    return np.stack(out)


def inject_condition(reference, compressed_motion) -> np.ndarray:
    """Condition tensor ``y``: reference features at latent frame 0, motion after."""
    ref = np.asarray(reference, dtype=np.float64)
    motion = np.asarray(compressed_motion, dtype=np.float64)
    if ref.shape != motion.shape[1:]:
        raise ValueError(f"reference {ref.shape} does not match motion frames {motion.shape[1:]}")
    y = motion.copy()
    y[0] = ref
    return y


# --------------------------------------------------------------------------
# Whole-trajectory driver


@dataclass
class MotionResult:
    motion: np.ndarray  # (T, C, gh, gw)
    heatmaps: np.ndarray  # (T, N, gh, gw)
    grid_uv: np.ndarray  # (T, N, 2)
    disparity: np.ndarray  # (T, N)
    valid: np.ndarray  # (T, N)
    features: JointFeatures


def project_to_grid(positions, valid, k: CameraIntrinsics, grid: GridSpec):
    """Camera-frame joints ``(..., N, 3)`` to grid coords, disparity and validity."""
    u, d, front = project_points(positions, k)
    ok = front & np.asarray(valid, dtype=bool)
    g = np.where(ok[..., None], grid.pixel_to_grid(np.nan_to_num(u)), 0.0)
    return g, np.where(ok, d, 0.0), ok


def motion_volume(
    positions,
    valid,
    latent,
    k: CameraIntrinsics,
    grid: GridSpec,
    params: OcclusionParams,
    sigma: float,
) -> MotionResult:
    """Run both conditioning stages over a ``(T, N, 3)`` trajectory.

    Frame 0 is the source frame whose latent ``(C, gh, gw)`` supplies context.
    """
    positions = np.asarray(positions, dtype=np.float64)
    t_len, n, _ = positions.shape
    latent = np.asarray(latent, dtype=np.float64)
    if latent.shape[1:] != grid.shape:
        raise ValueError(f"latent grid {latent.shape[1:]} != configured grid {grid.shape}")
    g, d, ok = project_to_grid(positions, valid, k, grid)
    heat = gaussian_heatmaps(g.reshape(-1, 2), sigma, grid).reshape(t_len, n, grid.gh, grid.gw)
    heat[~ok] = 0.0

    pen = occlusion_penalty(g[0], d[0], params, valid=ok[0])
    feats = aggregate_context(latent, heat[0], pen, params.epsilon, valid=ok[0])

    motion = np.zeros((t_len, latent.shape[0], grid.gh, grid.gw))
    for t in range(t_len):
        # joints invalid in the source frame still occlude, with a zero feature
        if not ok[t].any():
            continue
        att = depth_weight_field(heat[t], d[t], params, valid=ok[t])
        motion[t] = propagate_motion(feats.vectors, att, heat[t], valid=ok[t])
    return MotionResult(motion=motion, heatmaps=heat, grid_uv=g, disparity=d, valid=ok, features=feats)
