"""Geometric and image-quality metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PSNR_CAP = 99.0


class AlignmentError(ValueError):
    pass


@dataclass(frozen=True)
class SimilarityTransform:
    scale: float
    rotation: np.ndarray
    translation: np.ndarray

    def apply(self, points) -> np.ndarray:
        return self.scale * np.asarray(points, dtype=np.float64) @ self.rotation.T + self.translation


def procrustes_align(predicted, reference) -> SimilarityTransform:
    """Least-squares similarity ``s R p + t ~ r`` (Umeyama), proper rotation."""
    p = np.asarray(predicted, dtype=np.float64)
    r = np.asarray(reference, dtype=np.float64)
    if p.shape != r.shape or p.ndim != 2 or p.shape[1] != 3:
        raise ValueError(f"need matching (M, 3) point sets, got {p.shape} and {r.shape}")
    if p.shape[0] < 3:
        raise AlignmentError("alignment needs at least 3 points")
    mp, mr = p.mean(axis=0), r.mean(axis=0)
    pc, rc = p - mp, r - mr
    sv = np.linalg.svd(pc, compute_uv=False)
    if sv[0] == 0.0 or sv[1] <= 1e-12 * sv[0]:
        raise AlignmentError("predicted points are degenerate (rank < 2)")
    cov = rc.T @ pc / p.shape[0]
    u, d, vt = np.linalg.svd(cov)
    s = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        s[2] = -1.0
    rot = u @ np.diag(s) @ vt
    var_p = (pc**2).sum() / p.shape[0]
    scale = float((d * s).sum() / var_p)
    return SimilarityTransform(scale=scale, rotation=rot, translation=mr - scale * rot @ mp)


def _mean_error_mm(predicted, reference, align: bool) -> float:
    p = np.asarray(predicted, dtype=np.float64)
    r = np.asarray(reference, dtype=np.float64)
    if p.shape != r.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {r.shape}")
    if align:
        p = procrustes_align(p, r).apply(p)
    return float(np.linalg.norm(p - r, axis=-1).mean() * 1000.0)


def mpjpe(predicted, reference, align: bool = True) -> float:
    """Mean per-joint position error in millimetres (inputs in metres)."""
    return _mean_error_mm(predicted, reference, align)


def mpvpe(predicted, reference, align: bool = True) -> float:
    """Mean per-vertex position error in millimetres; vertices correspond by index."""
    return _mean_error_mm(predicted, reference, align)


def _check_images(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a, b = a[..., None], b[..., None]
    return a, b


def psnr(a, b) -> float:
    """PSNR in dB for intensities in [0, 1]; identical images give 99 dB."""
    a, b = _check_images(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(1.0 / mse))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _filter_valid(img, w):
    # separable correlation, 'valid' region only
    rows = sliding_window_view(img, w.size, axis=0) @ w
    return sliding_window_view(rows, w.size, axis=1) @ w


def ssim(a, b, win: int = 11, sigma: float = 1.5, k1: float = 0.01, k2: float = 0.03, data_range: float = 1.0) -> float:
    """Mean SSIM over valid window positions, averaged over channels."""
    a, b = _check_images(a, b)
    if a.shape[0] < win or a.shape[1] < win:
        raise ValueError(f"images must be at least {win}x{win}")
    w = gaussian_window(win, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    scores = []
    for ch in range(a.shape[2]):
        x, y = a[..., ch], b[..., ch]
        mx, my = _filter_valid(x, w), _filter_valid(y, w)
        sxx = _filter_valid(x * x, w) - mx * mx
        syy = _filter_valid(y * y, w) - my * my
        sxy = _filter_valid(x * y, w) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        scores.append(float(np.mean(num / den)))
    return float(np.mean(scores))
