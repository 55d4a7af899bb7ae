"""The shared joint-trajectory file (JSON Lines).

First line is a header, then one record per frame::

    {"type": "header", "version": 1, "fps": 30.0,
     "intrinsics": {"fx": ..., "fy": ..., "cx": ..., "cy": ..., "width": ..., "height": ...},
     "joints": [{"handedness": "Left", "semantic_id": 0}, ...], "meta": {...}}
    {"frame": 0, "positions": [[x, y, z], ...], "valid": [true, ...]}

Positions are camera-frame metres. Human hands use 21 joints per side, robot
hands their platform's keypoint count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from egoctl.geometry import CameraIntrinsics
from egoctl.tracking import Hand

MAX_JOINTS = 42
SIDE_SLOTS = 21
FORMAT_VERSION = 1


class TrajectoryError(ValueError):
    pass


@dataclass
class JointTrajectory:
    positions: np.ndarray  # (F, N, 3)
    valid: np.ndarray  # (F, N)
    handedness: list[Hand]
    semantic_id: list[int]
    fps: float
    intrinsics: CameraIntrinsics
    frame_ids: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.positions.ndim != 3 or self.positions.shape[2] != 3:
            raise TrajectoryError(f"positions must be (F, N, 3), got {self.positions.shape}")
        f, n, _ = self.positions.shape
        if self.valid.shape != (f, n):
            raise TrajectoryError(f"valid mask {self.valid.shape} does not match positions {(f, n)}")
        if n > MAX_JOINTS:
            raise TrajectoryError(f"{n} joints exceeds the limit of {MAX_JOINTS}")
        self.handedness = [Hand.parse(h) for h in self.handedness]
        self.semantic_id = [int(s) for s in self.semantic_id]
        if len(self.handedness) != n or len(self.semantic_id) != n:
            raise TrajectoryError("joint descriptors do not match joint count")
        keys = list(zip(self.handedness, self.semantic_id))
        if len(set(keys)) != n:
            raise TrajectoryError("semantic ids must be unique per handedness")
        if any(not 0 <= s < SIDE_SLOTS for s in self.semantic_id):
            raise TrajectoryError(f"semantic ids must lie in [0, {SIDE_SLOTS})")
        if self.frame_ids is None:
            self.frame_ids = np.arange(f)
        self.frame_ids = np.asarray(self.frame_ids, dtype=np.int64)
        if not np.isfinite(self.positions[self.valid]).all():
            raise TrajectoryError("valid joints must have finite positions")

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]

    @property
    def n_joints(self) -> int:
        return self.positions.shape[1]

    def identity_indices(self) -> np.ndarray:
        """Row of each joint in the identity table: left ids first, right ids offset by 21."""
        return np.array(
            [s + (SIDE_SLOTS if h is Hand.RIGHT else 0) for h, s in zip(self.handedness, self.semantic_id)],
            dtype=np.int64,
        )

    def slice(self, start: int, end: int) -> "JointTrajectory":
        """Frames ``start..end`` inclusive."""
        sl = slice(start, end + 1)
        return JointTrajectory(
            self.positions[sl],
            self.valid[sl],
            self.handedness,
            self.semantic_id,
            self.fps,
            self.intrinsics,
            self.frame_ids[sl],
            dict(self.meta),
        )

    def with_data(self, positions, valid, **meta) -> "JointTrajectory":
        return JointTrajectory(
            positions, valid, self.handedness, self.semantic_id, self.fps, self.intrinsics, self.frame_ids,
            {**self.meta, **meta},
        )

    # ----------------------------------------------------------------------

    def header(self) -> dict:
        return {
            "type": "header",
            "version": FORMAT_VERSION,
            "fps": self.fps,
            "intrinsics": self.intrinsics.to_dict(),
            "joints": [{"handedness": h.value, "semantic_id": s} for h, s in zip(self.handedness, self.semantic_id)],
            "meta": self.meta,
        }

    def to_lines(self) -> list[str]:
        lines = [json.dumps(self.header(), sort_keys=True)]
        for t in range(self.n_frames):
            rec = {
                "frame": int(self.frame_ids[t]),
                "positions": [[float(v) for v in p] for p in np.nan_to_num(self.positions[t], nan=0.0, posinf=0.0, neginf=0.0)],
                "valid": [bool(v) for v in self.valid[t]],
            }
            lines.append(json.dumps(rec, sort_keys=True))
        return lines

    def write(self, path) -> None:
        Path(path).write_text("\n".join(self.to_lines()) + "\n")

    @classmethod
    def from_lines(cls, lines) -> "JointTrajectory":
        recs = [json.loads(l) for l in lines if l.strip()]
        if not recs or recs[0].get("type") != "header":
            raise TrajectoryError("trajectory file must start with a header record")
        head, frames = recs[0], recs[1:]
        if head.get("version") != FORMAT_VERSION:
            raise TrajectoryError(f"unsupported trajectory version {head.get('version')}")
        joints = head["joints"]
        n = len(joints)
        pos = np.zeros((len(frames), n, 3))
        val = np.zeros((len(frames), n), dtype=bool)
        ids = []
        for t, rec in enumerate(frames):
            p = np.asarray(rec["positions"], dtype=np.float64).reshape(-1, 3) if n else np.zeros((0, 3))
            if p.shape[0] != n:
                raise TrajectoryError(f"frame {rec.get('frame')} has {p.shape[0]} joints, header declares {n}")
            pos[t] = p
            val[t] = rec.get("valid", [True] * n)
            ids.append(int(rec["frame"]))
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise TrajectoryError("frame indices must be strictly increasing")
        return cls(
            positions=pos,
            valid=val,
            handedness=[j["handedness"] for j in joints],
            semantic_id=[j["semantic_id"] for j in joints],
            fps=float(head.get("fps", 30.0)),
            intrinsics=CameraIntrinsics.from_dict(head["intrinsics"]),
            frame_ids=np.asarray(ids, dtype=np.int64),
            meta=head.get("meta", {}),
        )

    @classmethod
    def read(cls, path) -> "JointTrajectory":
        return cls.from_lines(Path(path).read_text().splitlines())


def read_jsonl(path) -> list[dict]:
    out = []
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        if line.strip():
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise ValueError(f"{path}:{n}: {e}") from None
    return out


def write_jsonl(path, records) -> None:
    Path(path).write_text("".join(json.dumps(r, sort_keys=True) + "\n" for r in records))
