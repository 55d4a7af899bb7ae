"""Two-slot (left/right) hand tracking over independent per-frame detections.

Identity continuity is judged against the detector's handedness labels: an
assignment is *crossed* when a labelled hand is routed to the slot of the
opposite class. A frame whose optimal matching flips the crossed state of
the previous decided frame is a swap, and is only accepted when it beats
the best non-swapping matching by more than ``tau_swap``. The crossed
state is only defined when two detections with different labels are both
assigned; other frames take the plain optimum and leave the state alone.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

import numpy as np
from scipy.optimize import linear_sum_assignment

log = logging.getLogger(__name__)

N_HAND_JOINTS = 21


class Hand(str, Enum):
    LEFT = "Left"
    RIGHT = "Right"

    @classmethod
    def parse(cls, s) -> "Hand":
        if isinstance(s, Hand):
            return s
        key = str(s).strip().lower()
        if key in ("left", "l"):
            return cls.LEFT
        if key in ("right", "r"):
            return cls.RIGHT
        raise ValueError(f"unknown handedness {s!r}")


@dataclass
class Detection:
    translation: np.ndarray
    handedness: Hand
    frame: int
    joints: np.ndarray | None = None
    has_params: bool = True

    def __post_init__(self):
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.isfinite(self.translation).all():
            raise ValueError(f"non-finite translation in frame {self.frame}")
        self.handedness = Hand.parse(self.handedness)
        if self.joints is not None:
            self.joints = np.asarray(self.joints, dtype=np.float64)
            if self.joints.shape != (N_HAND_JOINTS, 3):
                raise ValueError(f"joints must be {N_HAND_JOINTS}x3, got {self.joints.shape}")

    @classmethod
    def from_record(cls, rec: dict) -> "Detection":
        return cls(
            translation=rec["translation"],
            handedness=rec["handedness"],
            frame=int(rec["frame"]),
            joints=rec.get("joints"),
            has_params=bool(rec.get("has_params", True)),
        )


@dataclass
class TrackSlot:
    nominal_class: Hand
    last_translation: np.ndarray | None = None
    last_seen: int | None = None
    segments: list[tuple[int, int]] = field(default_factory=list)

    def flush(self):
        self.last_translation = None
        self.last_seen = None


@dataclass(frozen=True)
class TrackerConfig:
    lambda_hand: float = 0.05
    tau_swap: float = 0.02
    tau_gap: int = 10

    def __post_init__(self):
        if self.lambda_hand < 0 or self.tau_swap < 0 or self.tau_gap < 0:
            raise ValueError("tracker parameters must be nonnegative")


def assignment_cost(detections, slots, cfg: TrackerConfig) -> np.ndarray:
    """``C[i, j] = |T_i - T_j^last| + lambda * [label_i != class_j]``.

    A slot without history contributes no spatial term.
    """
    cost = np.zeros((len(detections), len(slots)))
    for i, det in enumerate(detections):
        for j, slot in enumerate(slots):
            spatial = 0.0 if slot.last_translation is None else float(np.linalg.norm(det.translation - slot.last_translation))
            cost[i, j] = spatial + cfg.lambda_hand * (det.handedness != slot.nominal_class)
    return cost


def solve_assignment(cost) -> list[tuple[int, int]]:
    """Minimum-total-cost one-to-one matching as ``(row, col)`` pairs."""
    cost = np.asarray(cost, dtype=np.float64)
    if cost.size == 0:
        return []
    rows, cols = linear_sum_assignment(cost)
    return [(int(r), int(c)) for r, c in zip(rows, cols)]


def _crossed(matching, detections, slots):
    labels = {detections[i].handedness for i, _ in matching}
    if len(matching) != 2 or len(labels) != 2:
        return None
    return any(detections[i].handedness != slots[j].nominal_class for i, j in matching)


def _total(cost, matching):
    return float(sum(cost[i, j] for i, j in matching))


@dataclass
class FrameDecision:
    frame: int
    matching: list[tuple[int, int]]
    cost: np.ndarray
    swapped: bool = False
    swap_rejected: bool = False
    flushed: list[int] = field(default_factory=list)


class HandTracker:
    """Sequential tracker state; feed frames in increasing order."""

    def __init__(self, cfg: TrackerConfig | None = None):
        self.cfg = cfg or TrackerConfig()
        self.slots = [TrackSlot(Hand.LEFT), TrackSlot(Hand.RIGHT)]
        self.crossed = False
        self.last_frame: int | None = None
        self.swaps = 0
        self.decisions: list[FrameDecision] = []

    def update(self, detections, frame: int) -> FrameDecision:
        if self.last_frame is not None and frame <= self.last_frame:
            raise ValueError(f"frame {frame} is not after {self.last_frame}")
        self.last_frame = frame

        flushed = []
        for j, slot in enumerate(self.slots):
            if slot.last_seen is not None and frame - slot.last_seen > self.cfg.tau_gap:
                slot.flush()
                flushed.append(j)
        if all(slot.last_translation is None for slot in self.slots):
            self.crossed = False

        cost = assignment_cost(detections, self.slots, self.cfg)
        matching = solve_assignment(cost)
        decision = FrameDecision(frame=frame, matching=matching, cost=cost, flushed=flushed)

        state = _crossed(matching, detections, self.slots)
        if state is not None and state != self.crossed:
            # the other full matching over the same two detections
            (i0, j0), (i1, j1) = matching
            keep = [(i0, j1), (i1, j0)]
            delta = _total(cost, keep) - _total(cost, matching)
            if delta > self.cfg.tau_swap:
                self.crossed = state
                self.swaps += 1
                decision.swapped = True
            else:
                decision.matching = sorted(keep)
                decision.swap_rejected = True

        for i, j in decision.matching:
            slot = self.slots[j]
            slot.last_translation = detections[i].translation.copy()
            slot.last_seen = frame
            slot.segments.append((frame, i))
        self.decisions.append(decision)
        return decision


def update_tracks(tracker: HandTracker, detections, frame: int, cfg: TrackerConfig | None = None) -> FrameDecision:
    if cfg is not None and cfg != tracker.cfg:
        raise ValueError("tracker was built with a different config")
    return tracker.update(detections, frame)


def track_sequence(detections, cfg: TrackerConfig | None = None) -> HandTracker:
    """Run the tracker over a flat detection list grouped by frame."""
    tracker = HandTracker(cfg)
    by_frame: dict[int, list[Detection]] = {}
    for det in detections:
        by_frame.setdefault(det.frame, []).append(det)
    for frame in sorted(by_frame):
        tracker.update(by_frame[frame], frame)
    return tracker


# --------------------------------------------------------------------------
# Quality filter


@dataclass(frozen=True)
class VideoStats:
    frames_total: int
    frames_with_valid_hand: int
    frames_with_valid_params: int
    frames_with_more_than_two_hands: int

    def __post_init__(self):
        for name in ("frames_with_valid_hand", "frames_with_valid_params", "frames_with_more_than_two_hands"):
            v = getattr(self, name)
            if v < 0 or v > self.frames_total:
                raise ValueError(f"{name}={v} outside [0, {self.frames_total}]")

    @classmethod
    def from_detections(cls, detections, frames_total: int | None = None) -> "VideoStats":
        per_frame: dict[int, list[Detection]] = {}
        for det in detections:
            per_frame.setdefault(det.frame, []).append(det)
        if frames_total is None:
            frames_total = max(per_frame) + 1 if per_frame else 0
        return cls(
            frames_total=frames_total,
            frames_with_valid_hand=len(per_frame),
            frames_with_valid_params=sum(any(d.has_params for d in ds) for ds in per_frame.values()),
            frames_with_more_than_two_hands=sum(len(ds) > 2 for ds in per_frame.values()),
        )


MIN_HAND_RATIO = Fraction(1, 5)
MIN_PARAMS_RATIO = Fraction(1, 20)
MAX_MULTI_HAND_RATIO = Fraction(1, 4)


def filter_ratios(hand_ratio, params_ratio, multi_hand_ratio) -> tuple[bool, list[str]]:
    """Strict thresholds: fewer than 20% hand frames, below 5% params, over 25% crowded."""
    reasons = []
    if hand_ratio < MIN_HAND_RATIO:
        reasons.append("hand-presence")
    if params_ratio < MIN_PARAMS_RATIO:
        reasons.append("param-density")
    if multi_hand_ratio > MAX_MULTI_HAND_RATIO:
        reasons.append("multi-hand")
    return (not reasons, reasons)


def quality_filter(stats: VideoStats) -> tuple[bool, list[str]]:
    """Return ``(keep, reasons)``; every violated rule is listed."""
    total = stats.frames_total
    if total == 0:
        return filter_ratios(0, 0, 0)
    return filter_ratios(
        Fraction(stats.frames_with_valid_hand, total),
        Fraction(stats.frames_with_valid_params, total),
        Fraction(stats.frames_with_more_than_two_hands, total),
    )


def mirror_right_hand(joints) -> np.ndarray:
    """Reflect across the x = 0 plane."""
    out = np.array(joints, dtype=np.float64, copy=True)
    out[..., 0] = -out[..., 0]
    return out
