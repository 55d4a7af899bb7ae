"""Visibility-anchored clip extraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CLIP_HALF = 60
CLIP_LEN = 2 * CLIP_HALF + 1
DEFAULT_THRESHOLDS = (8, 4, 2, 0)


@dataclass(frozen=True)
class ClipIndex:
    center: int
    start: int
    end: int
    tier: int
    score: float

    def to_dict(self, episode: str | None = None) -> dict:
        d = {"center": self.center, "start": self.start, "end": self.end, "tier": self.tier, "score": self.score}
        if episode is not None:
            d = {"episode": episode, **d}
        return d


def visibility_score(in_bounds) -> np.ndarray:
    """Per-frame count of in-bounds keypoints, ``(F, N) -> (F,)``."""
    flags = np.asarray(in_bounds, dtype=bool)
    return flags.reshape(flags.shape[0], -1).sum(axis=1).astype(np.int64)


def smooth_series(raw, window: int = 5) -> np.ndarray:
    """Centered moving average; edge windows are truncated and renormalized."""
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 1, got {window}")
    x = np.asarray(raw, dtype=np.float64)
    if x.size == 0:
        return x.copy()
    half = window // 2
    n = x.size
    csum = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, n)
    return (csum[hi] - csum[lo]) / (hi - lo)


def select_clip(raw, smoothed, thresholds=DEFAULT_THRESHOLDS, half: int = CLIP_HALF, exclude=None) -> ClipIndex | None:
    """Pick the clip center for the strictest tier that has any candidate.

    A candidate admits the full window and has raw count >= tier; the best
    candidate maximizes the smoothed score, earliest index on ties.
    ``exclude`` is an optional boolean mask of frames that may not be centers.
    """
    thresholds = list(thresholds)
    if any(a <= b for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError(f"thresholds must be strictly decreasing, got {thresholds}")
    raw = np.asarray(raw)
    smoothed = np.asarray(smoothed, dtype=np.float64)
    n = raw.shape[0]
    if smoothed.shape[0] != n:
        raise ValueError("raw and smoothed series differ in length")
    if n < 2 * half + 1:
        return None
    window_ok = np.zeros(n, dtype=bool)
    window_ok[half : n - half] = True
    if exclude is not None:
        window_ok &= ~np.asarray(exclude, dtype=bool)
    for tier in thresholds:
        cand = window_ok & (raw >= tier)
        if not cand.any():
            continue
        scores = np.where(cand, smoothed, -np.inf)
        c = int(np.argmax(scores))
        return ClipIndex(center=c, start=c - half, end=c + half, tier=int(tier), score=float(smoothed[c]))
    return None


def select_clips(raw, smoothed, thresholds=DEFAULT_THRESHOLDS, half: int = CLIP_HALF, multi: bool = False) -> list[ClipIndex]:
    """One clip by default; ``multi`` keeps adding non-overlapping clips."""
    first = select_clip(raw, smoothed, thresholds, half)
    if first is None:
        return []
    clips = [first]
    if not multi:
        return clips
    n = len(raw)
    taken = np.zeros(n, dtype=bool)
    while True:
        c = clips[-1]
        # any center within 2*half of a chosen center would overlap its window
        taken[max(0, c.center - 2 * half) : c.center + 2 * half + 1] = True
        nxt = select_clip(raw, smoothed, thresholds, half, exclude=taken)
        if nxt is None:
            return sorted(clips, key=lambda k: k.center)
        clips.append(nxt)
