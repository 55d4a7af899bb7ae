"""Robot hand keypoints in the egocentric camera.

Forward kinematics of a rigid link tree gives keypoints in the robot root
frame. A 6-DoF extrinsic ``[pitch, yaw, roll, tx, ty, tz]`` is then fitted
to sparse 2D annotations by bounded nonlinear least squares, and applied to
every frame.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from egoctl.geometry import (
    Z_MIN,
    CameraIntrinsics,
    RigidPose,
    axis_angle_to_rotation,
    euler_to_rotation,
    in_bounds,
    project_points,
    transform_points,
)

log = logging.getLogger(__name__)

JOINT_TYPES = ("revolute", "prismatic", "fixed")

# keypoints per hand side for the supported embodiments
PLATFORM_KEYPOINTS = {"inspire": 12, "dex3-1": 7}

BEHIND_CAMERA_PENALTY = 1e4


class ChainError(ValueError):
    pass


class AnnotationError(ValueError):
    pass


# --------------------------------------------------------------------------
# Kinematic chain


@dataclass
class Link:
    parent: int
    offset: RigidPose = field(default_factory=RigidPose)
    joint_type: str = "fixed"
    axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    name: str = ""

    def __post_init__(self):
        if self.joint_type not in JOINT_TYPES:
            raise ChainError(f"unknown joint type {self.joint_type!r}")
        self.axis = np.asarray(self.axis, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(self.axis) - 1.0) > 1e-9:
            raise ChainError(f"joint axis of link {self.name or '?'} is not unit length")


@dataclass
class Keypoint:
    link: int
    offset: np.ndarray
    name: str = ""
    handedness: str | None = None


def _pose_from_dict(d: dict | None) -> RigidPose:
    if not d:
        return RigidPose()
    t = d.get("translation", [0.0, 0.0, 0.0])
    if "rotation" in d:
        return RigidPose(np.asarray(d["rotation"], dtype=np.float64), t)
    pitch, yaw, roll = d.get("euler", [0.0, 0.0, 0.0])
    return RigidPose.from_euler(pitch, yaw, roll, t)


class KinematicChain:
    """Rigid link tree with revolute/prismatic/fixed joints and named keypoints.

    Non-fixed joints consume entries of ``q`` in link order.
    """

    def __init__(self, links: list[Link], keypoints: list[Keypoint], platform: str | None = None):
        self.links = list(links)
        self.keypoints = list(keypoints)
        self.platform = platform
        self.order = self._topological_order()
        self.dof_index = {}
        for i, link in enumerate(self.links):
            if link.joint_type != "fixed":
                self.dof_index[i] = len(self.dof_index)
        for kp in self.keypoints:
            if not 0 <= kp.link < len(self.links):
                raise ChainError(f"keypoint {kp.name or '?'} references missing link {kp.link}")
        if platform is not None:
            self._check_platform()

    def _topological_order(self):
        n = len(self.links)
        roots = [i for i, l in enumerate(self.links) if l.parent == -1]
        if len(roots) != 1:
            raise ChainError(f"chain needs exactly one root link, found {len(roots)}")
        children: dict[int, list[int]] = {i: [] for i in range(n)}
        for i, link in enumerate(self.links):
            if link.parent != -1:
                if not 0 <= link.parent < n:
                    raise ChainError(f"link {i} has invalid parent {link.parent}")
                children[link.parent].append(i)
        order, stack = [], [roots[0]]
        while stack:
            i = stack.pop()
            order.append(i)
            stack.extend(reversed(children[i]))
        if len(order) != n:
            raise ChainError("link parents contain a cycle or a detached subtree")
        return order

    def _check_platform(self):
        per_side = PLATFORM_KEYPOINTS.get(self.platform.lower())
        if per_side is None:
            raise ChainError(f"unknown platform {self.platform!r}; known: {sorted(PLATFORM_KEYPOINTS)}")
        if len(self.keypoints) not in (per_side, 2 * per_side):
            raise ChainError(
                f"platform {self.platform} expects {per_side} keypoints per side, chain has {len(self.keypoints)}"
            )

    @property
    def n_dof(self) -> int:
        return len(self.dof_index)

    @property
    def n_keypoints(self) -> int:
        return len(self.keypoints)

    @classmethod
    def from_dict(cls, d: dict) -> "KinematicChain":
        raw_links = d["links"]
        names = {l.get("name", str(i)): i for i, l in enumerate(raw_links)}

        def ref(v):
            if v is None:
                return -1
            if isinstance(v, str):
                if v not in names:
                    raise ChainError(f"unknown link name {v!r}")
                return names[v]
            return int(v)

        links = []
        for i, l in enumerate(raw_links):
            joint = l.get("joint", {"type": "fixed"})
            links.append(
                Link(
                    parent=ref(l.get("parent")),
                    offset=_pose_from_dict(l.get("offset")),
                    joint_type=joint.get("type", "fixed"),
                    axis=joint.get("axis", [0.0, 0.0, 1.0]),
                    name=l.get("name", str(i)),
                )
            )
        kps = [
            Keypoint(
                link=ref(k["link"]),
                offset=np.asarray(k.get("offset", [0.0, 0.0, 0.0]), dtype=np.float64),
                name=k.get("name", ""),
                handedness=k.get("handedness"),
            )
            for k in d["keypoints"]
        ]
        return cls(links, kps, platform=d.get("platform"))

    def to_dict(self) -> dict:
        return {
            "platform": self.platform,
            "links": [
                {
                    "name": l.name,
                    "parent": l.parent if l.parent >= 0 else None,
                    "offset": {"rotation": l.offset.rotation.tolist(), "translation": l.offset.translation.tolist()},
                    "joint": {"type": l.joint_type, "axis": l.axis.tolist()},
                }
                for l in self.links
            ],
            "keypoints": [
                {"link": k.link, "offset": k.offset.tolist(), "name": k.name, "handedness": k.handedness}
                for k in self.keypoints
            ],
        }


def link_poses(chain: KinematicChain, q) -> list[tuple[np.ndarray, np.ndarray]]:
    """World ``(R, t)`` of every link at configuration ``q``."""
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    if q.shape[0] != chain.n_dof:
        raise ChainError(f"chain has {chain.n_dof} joints, got q of length {q.shape[0]}")
    poses: list = [None] * len(chain.links)
    for i in chain.order:
        link = chain.links[i]
        if link.parent == -1:
            r, t = np.eye(3), np.zeros(3)
        else:
            r, t = poses[link.parent]
        # parent * offset
        t = r @ link.offset.translation + t
        r = r @ link.offset.rotation
        if link.joint_type == "revolute":
            r = r @ axis_angle_to_rotation(link.axis, q[chain.dof_index[i]])
        elif link.joint_type == "prismatic":
            t = t + r @ (link.axis * q[chain.dof_index[i]])
        poses[i] = (r, t)
    return poses


def forward_kinematics(chain: KinematicChain, q) -> np.ndarray:
    """Keypoint positions ``(N, 3)`` in the root frame."""
    poses = link_poses(chain, q)
    out = np.empty((chain.n_keypoints, 3))
    for n, kp in enumerate(chain.keypoints):
        r, t = poses[kp.link]
        out[n] = r @ kp.offset + t
    return out


def forward_kinematics_series(chain: KinematicChain, qs) -> np.ndarray:
    qs = np.asarray(qs, dtype=np.float64)
    return np.stack([forward_kinematics(chain, q) for q in qs]) if len(qs) else np.zeros((0, chain.n_keypoints, 3))


# --------------------------------------------------------------------------
# Extrinsics


@dataclass
class ExtrinsicParams:
    theta: np.ndarray
    bounds: np.ndarray  # (6, 2)

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64).reshape(6)
        self.bounds = np.asarray(self.bounds, dtype=np.float64).reshape(6, 2)
        if (self.bounds[:, 0] > self.bounds[:, 1]).any():
            raise ValueError("lower bound above upper bound")
        if (self.theta < self.bounds[:, 0]).any() or (self.theta > self.bounds[:, 1]).any():
            raise ValueError("theta outside bounds")

    @staticmethod
    def default_bounds(nominal=(0.0,) * 6, angle: float = 0.5, translation: float = 0.3) -> np.ndarray:
        nominal = np.asarray(nominal, dtype=np.float64).reshape(6)
        half = np.array([angle] * 3 + [translation] * 3)
        return np.stack([nominal - half, nominal + half], axis=1)

    @classmethod
    def at_midpoint(cls, bounds) -> "ExtrinsicParams":
        b = np.asarray(bounds, dtype=np.float64).reshape(6, 2)
        return cls(b.mean(axis=1), b)

    @property
    def rotation(self) -> np.ndarray:
        return euler_to_rotation(*self.theta[:3])

    @property
    def translation(self) -> np.ndarray:
        return self.theta[3:].copy()

    def pose(self) -> RigidPose:
        return RigidPose(self.rotation, self.translation)


@dataclass(frozen=True)
class Annotation:
    frame: int
    joint_id: int
    u_star: tuple[float, float]

    def __post_init__(self):
        if not np.isfinite(self.u_star).all():
            raise AnnotationError(f"non-finite annotation at frame {self.frame}, joint {self.joint_id}")


class ReprojectionProblem:
    """Stacked residuals ``u* - pi(R p_w + t)`` for a fixed annotation set."""

    def __init__(self, annotations, keypoints_w, k: CameraIntrinsics, z_min: float = Z_MIN):
        self.annotations = list(annotations)
        self.k = k
        self.z_min = z_min
        pts, targets = [], []
        for a in self.annotations:
            try:
                frame_pts = keypoints_w[a.frame]
            except (KeyError, IndexError):
                raise AnnotationError(f"annotation references missing frame {a.frame} (joint {a.joint_id})") from None
            frame_pts = np.asarray(frame_pts)
            if not 0 <= a.joint_id < frame_pts.shape[0]:
                raise AnnotationError(f"annotation references missing joint {a.joint_id} in frame {a.frame}")
            pts.append(frame_pts[a.joint_id])
            targets.append(a.u_star)
        self.points = np.asarray(pts, dtype=np.float64).reshape(-1, 3)
        self.targets = np.asarray(targets, dtype=np.float64).reshape(-1, 2)

    def __call__(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=np.float64)
        pc = transform_points(euler_to_rotation(*theta[:3]), theta[3:], self.points)
        z = pc[:, 2]
        front = z > self.z_min
        zs = np.where(front, z, 1.0)
        u = np.stack([self.k.fx * pc[:, 0] / zs + self.k.cx, self.k.fy * pc[:, 1] / zs + self.k.cy], axis=1)
        r = self.targets - u
        penalty = BEHIND_CAMERA_PENALTY * (self.z_min - z + 1.0)
        r = np.where(front[:, None], r, penalty[:, None])
        return r.reshape(-1)


def reprojection_residuals(theta, annotations, keypoints_w, k: CameraIntrinsics) -> np.ndarray:
    th = theta.theta if isinstance(theta, ExtrinsicParams) else theta
    return ReprojectionProblem(annotations, keypoints_w, k)(th)


# --------------------------------------------------------------------------
# Bounded trust-region least squares


def numeric_jacobian(fun, x, step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian."""
    x = np.asarray(x, dtype=np.float64)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step
        cols.append((fun(x + e) - fun(x - e)) / (2.0 * step))
    return np.stack(cols, axis=1)


def _tr_step(g, h, radius):
    """Minimize ``g.p + p.H.p/2`` over ``|p| <= radius`` via LM damping."""
    w, v = np.linalg.eigh(h)
    w = np.maximum(w, 0.0)
    gv = v.T @ g

    def step(mu):
        return -v @ (gv / (w + mu))

    wmax = w.max() if w.size else 0.0
    if w.size and w.min() > 1e-12 * max(wmax, 1e-300):
        p = step(0.0)
        if np.linalg.norm(p) <= radius:
            return p
    lo, hi = 0.0, max(np.linalg.norm(g) / radius, 1e-300)
    while np.linalg.norm(step(hi)) > radius:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if np.linalg.norm(step(mid)) > radius:
            lo = mid
        else:
            hi = mid
    return step(hi)


def _reflect(x, lo, hi):
    y = np.where(x < lo, 2.0 * lo - x, x)
    y = np.where(y > hi, 2.0 * hi - y, y)
    return np.clip(y, lo, hi)


@dataclass
class SolveResult:
    theta: np.ndarray
    cost: float
    initial_cost: float
    status: str
    iterations: int
    nfev: int
    residuals: np.ndarray
    iterates: list[np.ndarray]
    costs: list[float]

    @property
    def converged(self) -> bool:
        return self.status in ("ftol", "gtol", "xtol")

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.residuals**2))) if self.residuals.size else 0.0


def solve_extrinsics(
    residual_fn,
    bounds,
    initial,
    max_iter: int = 200,
    ftol: float = 1e-12,
    gtol: float = 1e-10,
    jac_step: float = 1e-6,
) -> SolveResult:
    """Bounded trust-region Gauss-Newton for ``min sum r(x)^2``.

    Each iteration damps the normal equations to fit the trust radius,
    holds variables pinned at a bound whose gradient points outward, and
    reflects/clips the trial point into the box; the better of the two by
    the quadratic model is tried. The radius follows the gain ratio. Every
    iterate lies inside ``bounds``. ``cost`` is the plain sum of squares.
    """
    b = np.asarray(bounds, dtype=np.float64).reshape(-1, 2)
    lo, hi = b[:, 0], b[:, 1]
    x = np.asarray(initial.theta if isinstance(initial, ExtrinsicParams) else initial, dtype=np.float64).copy()
    if (x < lo).any() or (x > hi).any():
        raise ValueError("initial point outside bounds")

    nfev = 0

    def fun(z):
        nonlocal nfev
        nfev += 1
        return np.asarray(residual_fn(z), dtype=np.float64)

    r = fun(x)
    cost = float(r @ r)
    initial_cost = cost
    jac = numeric_jacobian(fun, x, jac_step)
    radius = max(1.0, float(np.linalg.norm(x)))
    iterates, costs = [x.copy()], [cost]
    status = "max_iter"
    it = 0
    while it < max_iter:
        it += 1
        g = jac.T @ r  # gradient of cost / 2
        free = ~(((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0)))
        if np.abs(g[free]).max(initial=0.0) < gtol:
            status = "gtol"
            break
        h = jac.T @ jac
        p = np.zeros_like(x)
        if free.any():
            p[free] = _tr_step(g[free], h[np.ix_(free, free)], radius)

        best = None
        for cand in (_reflect(x + p, lo, hi), np.clip(x + p, lo, hi)):
            s = cand - x
            pred = -(g @ s + 0.5 * s @ h @ s)
            if best is None or pred > best[2]:
                best = (cand, s, pred)
        x_new, s, pred = best
        step_norm = float(np.linalg.norm(s))
        if pred <= 0 or step_norm == 0.0:
            radius = 0.25 * max(step_norm, radius * 0.25)
            if radius < 1e-15 * (1.0 + np.linalg.norm(x)):
                status = "xtol"
                break
            continue

        r_new = fun(x_new)
        cost_new = float(r_new @ r_new)
        actual = 0.5 * (cost - cost_new)
        rho = actual / pred
        if rho < 0.25:
            radius = 0.25 * step_norm
        elif rho > 0.75 and step_norm >= 0.95 * radius:
            radius *= 2.0

        if rho > 1e-4 and cost_new < cost:
            change = cost - cost_new
            x, r, cost = x_new, r_new, cost_new
            iterates.append(x.copy())
            costs.append(cost)
            if change < ftol:
                status = "ftol"
                break
            jac = numeric_jacobian(fun, x, jac_step)
        elif radius < 1e-15 * (1.0 + np.linalg.norm(x)):
            status = "xtol"
            break
    log.debug("solve_extrinsics: %s after %d iterations, cost %.6g", status, it, cost)
    return SolveResult(
        theta=x,
        cost=cost,
        initial_cost=initial_cost,
        status=status,
        iterations=it,
        nfev=nfev,
        residuals=r,
        iterates=iterates,
        costs=costs,
    )


# --------------------------------------------------------------------------
# Batch projection


@dataclass
class BatchProjection:
    points_c: np.ndarray  # (F, N, 3)
    pixels: np.ndarray  # (F, N, 2)
    in_bounds: np.ndarray  # (F, N)
    front: np.ndarray  # (F, N)


def batch_project(theta, keypoints_w, k: CameraIntrinsics) -> BatchProjection:
    """Move root-frame keypoints into the camera and project them."""
    th = theta.theta if isinstance(theta, ExtrinsicParams) else np.asarray(theta, dtype=np.float64)
    pc = transform_points(euler_to_rotation(*th[:3]), th[3:], keypoints_w)
    u, _, front = project_points(pc, k)
    return BatchProjection(points_c=pc, pixels=u, in_bounds=in_bounds(u, front, k), front=front)
