"""Pinhole camera, rigid transforms and Gaussian heatmap fields.

Units are meters for positions and 1/m for disparity. Conditioning fields
live on a coarse grid; pixel ``u`` maps to grid coordinate ``u / scale - 0.5``
so that the center of grid cell ``c`` covers pixel ``(c + 0.5) * scale``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from egoctl import kernels

Z_MIN = 1e-4


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(
                f"principal point ({self.cx}, {self.cy}) outside image {self.width}x{self.height}"
            )

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        missing = {"fx", "fy", "cx", "cy", "width", "height"} - set(d)
        if missing:
            raise ValueError(f"intrinsics missing keys: {sorted(missing)}")
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )

    def to_dict(self) -> dict:
        return {
            "fx": float(self.fx),
            "fy": float(self.fy),
            "cx": float(self.cx),
            "cy": float(self.cy),
            "width": int(self.width),
            "height": int(self.height),
        }

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class ProjectedJoint:
    u: np.ndarray
    d: float
    valid: bool


def project_points(points, k: CameraIntrinsics, z_min: float = Z_MIN):
    """Vectorized pinhole projection.

    Returns ``(u, d, valid)`` with ``u`` of shape ``(..., 2)``. Points with
    ``z <= z_min`` are flagged invalid and get ``d = 0``; their pixel
    coordinates are still evaluated when ``z != 0`` (NaN otherwise).
    """
    p = np.asarray(points, dtype=np.float64)
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    valid = z > z_min
    with np.errstate(divide="ignore", invalid="ignore"):
        zs = np.where(z == 0.0, np.nan, z)
        u = np.stack([k.fx * x / zs + k.cx, k.fy * y / zs + k.cy], axis=-1)
        d = np.where(valid, 1.0 / zs, 0.0)
    return u, d, valid


def project(point, k: CameraIntrinsics, z_min: float = Z_MIN) -> ProjectedJoint:
    u, d, valid = project_points(np.asarray(point, dtype=np.float64).reshape(3), k, z_min)
    return ProjectedJoint(u=u, d=float(d), valid=bool(valid))


def unproject(u, d, k: CameraIntrinsics) -> np.ndarray:
    """Inverse of :func:`project_points` for valid points."""
    u = np.asarray(u, dtype=np.float64)
    z = 1.0 / np.asarray(d, dtype=np.float64)
    x = (u[..., 0] - k.cx) * z / k.fx
    y = (u[..., 1] - k.cy) * z / k.fy
    return np.stack([x, y, z], axis=-1)


def in_bounds(u, valid, k: CameraIntrinsics) -> np.ndarray:
    u = np.asarray(u)
    with np.errstate(invalid="ignore"):
        inside = (u[..., 0] >= 0) & (u[..., 0] < k.width) & (u[..., 1] >= 0) & (u[..., 1] < k.height)
    return inside & np.asarray(valid, dtype=bool)


# --------------------------------------------------------------------------
# Rigid transforms


def _rx(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _ry(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rz(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_to_rotation(pitch: float, yaw: float, roll: float) -> np.ndarray:
    """``Rz(roll) @ Ry(yaw) @ Rx(pitch)`` (fixed-axis x, then y, then z)."""
    return _rz(roll) @ _ry(yaw) @ _rx(pitch)


def axis_angle_to_rotation(axis, angle: float) -> np.ndarray:
    a = np.asarray(axis, dtype=np.float64)
    a = a / np.linalg.norm(a)
    kx = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
    return np.eye(3) + math.sin(angle) * kx + (1.0 - math.cos(angle)) * (kx @ kx)


def transform_points(rotation, translation, points) -> np.ndarray:
    """``R p + t`` over the last axis, with a fixed summation order.

    Single points and batches go through identical arithmetic, which keeps
    batch and per-point results bit-identical.
    """
    p = np.asarray(points, dtype=np.float64)
    r = np.asarray(rotation, dtype=np.float64)
    t = np.asarray(translation, dtype=np.float64)
    return p[..., 0:1] * r[:, 0] + p[..., 1:2] * r[:, 1] + p[..., 2:3] * r[:, 2] + t


@dataclass(frozen=True)
class RigidPose:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {r.shape}")
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation is not a proper orthonormal matrix")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def from_euler(cls, pitch, yaw, roll, translation=(0.0, 0.0, 0.0)) -> "RigidPose":
        return cls(euler_to_rotation(pitch, yaw, roll), np.asarray(translation, dtype=np.float64))

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "RigidPose") -> "RigidPose":
        """``self ∘ other``: apply ``other`` first."""
        return RigidPose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def apply(self, points) -> np.ndarray:
        return transform_points(self.rotation, self.translation, points)


def apply_pose(pose: RigidPose, p) -> np.ndarray:
    return pose.apply(p)


# --------------------------------------------------------------------------
# Grid and heatmaps


@dataclass(frozen=True)
class GridSpec:
    gh: int
    gw: int
    scale: float = 8.0

    def __post_init__(self):
        if self.gh < 1 or self.gw < 1:
            raise ValueError(f"grid must be at least 1x1, got {self.gh}x{self.gw}")
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.gh, self.gw)

    def pixel_to_grid(self, u) -> np.ndarray:
        return np.asarray(u, dtype=np.float64) / self.scale - 0.5

    def grid_to_pixel(self, g) -> np.ndarray:
        return (np.asarray(g, dtype=np.float64) + 0.5) * self.scale

    @classmethod
    def for_image(cls, k: CameraIntrinsics, scale: float = 8.0) -> "GridSpec":
        return cls(gh=int(k.height // scale), gw=int(k.width // scale), scale=scale)


@dataclass(frozen=True)
class Heatmap:
    values: np.ndarray
    center: tuple[float, float]


def gaussian_heatmap(center, sigma: float, grid: GridSpec) -> Heatmap:
    """Gaussian field ``exp(-|x - center|^2 / 2 sigma^2)`` at the cell centers.

    ``center`` is ``(x, y)`` in grid coordinates and may lie off the grid.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    c = np.asarray(center, dtype=np.float64).reshape(2)
    values = kernels.heatmaps(c[None], sigma, grid.gh, grid.gw)[0]
    return Heatmap(values=values, center=(float(c[0]), float(c[1])))


def gaussian_heatmaps(centers, sigma: float, grid: GridSpec) -> np.ndarray:
    """Stacked heatmaps ``(N, gh, gw)`` for ``N`` grid-coordinate centers."""
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    return kernels.heatmaps(centers, sigma, grid.gh, grid.gw)
