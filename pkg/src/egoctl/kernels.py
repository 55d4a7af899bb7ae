"""Dense per-frame kernels with a numba path and a pure-numpy path.

Every public function here dispatches on :data:`egoctl._accel.BACKEND` at
call time. The ``*_numpy`` and ``*_numba`` variants are importable directly
so tests and the benchmark can pit them against each other.

Grid convention: a field has shape ``(gh, gw)``; cell ``(row, col)`` has its
center at grid coordinates ``(x=col, y=row)``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from egoctl import _accel
from egoctl._accel import njit


# --------------------------------------------------------------------------
# Gaussian heatmaps


def heatmaps_numpy(centers, sigma, gh, gw):
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    xs = np.arange(gw, dtype=np.float64)
    ys = np.arange(gh, dtype=np.float64)
    dx2 = (xs[None, :] - centers[:, 0:1]) ** 2
    dy2 = (ys[None, :] - centers[:, 1:2]) ** 2
    d2 = dy2[:, :, None] + dx2[:, None, :]
    return np.exp(-d2 / (2.0 * sigma * sigma))


@njit
def _heatmaps_loops(centers, sigma, gh, gw):
    n = centers.shape[0]
    out = np.empty((n, gh, gw))
    inv = 1.0 / (2.0 * sigma * sigma)
    for i in range(n):
        cx = centers[i, 0]
        cy = centers[i, 1]
        for r in range(gh):
            dy2 = (r - cy) * (r - cy)
            for c in range(gw):
                dx2 = (c - cx) * (c - cx)
                out[i, r, c] = np.exp(-(dy2 + dx2) * inv)
    return out


def heatmaps_numba(centers, sigma, gh, gw):
    centers = np.ascontiguousarray(np.asarray(centers, dtype=np.float64).reshape(-1, 2))
    return _heatmaps_loops(centers, float(sigma), int(gh), int(gw))


def heatmaps(centers, sigma, gh, gw):
    """Unnormalized Gaussian fields, one per center: ``(N, gh, gw)``."""
    if _accel.BACKEND == "numba":
        return heatmaps_numba(centers, sigma, gh, gw)
    return heatmaps_numpy(centers, sigma, gh, gw)


# --------------------------------------------------------------------------
# Soft Z-buffer: per-cell softmax over joints of log(M + eps) + lam * d


def depth_weights_numpy(heat, disp, valid, lam, eps):
    heat = np.asarray(heat, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    out = np.zeros_like(heat)
    if not valid.any():
        return out
    logits = np.log(heat[valid] + eps) + lam * np.asarray(disp, dtype=np.float64)[valid, None, None]
    logits -= logits.max(axis=0, keepdims=True)
    w = np.exp(logits)
    out[valid] = w / w.sum(axis=0, keepdims=True)
    return out


@njit
def _depth_weights_loops(heat, disp, valid, lam, eps):
    n, gh, gw = heat.shape
    out = np.zeros((n, gh, gw))
    if not valid.any():
        return out
    top = np.full((gh, gw), -np.inf)
    for i in range(n):
        if not valid[i]:
            continue
        bias = lam * disp[i]
        for r in range(gh):
            for c in range(gw):
                v = np.log(heat[i, r, c] + eps) + bias
                out[i, r, c] = v
                if v > top[r, c]:
                    top[r, c] = v
    total = np.zeros((gh, gw))
    for i in range(n):
        if not valid[i]:
            continue
        for r in range(gh):
            for c in range(gw):
                e = np.exp(out[i, r, c] - top[r, c])
                out[i, r, c] = e
                total[r, c] += e
    for i in range(n):
        if not valid[i]:
            continue
        for r in range(gh):
            for c in range(gw):
                out[i, r, c] /= total[r, c]
    return out


def depth_weights_numba(heat, disp, valid, lam, eps):
    return _depth_weights_loops(
        np.ascontiguousarray(heat, dtype=np.float64),
        np.ascontiguousarray(disp, dtype=np.float64),
        np.ascontiguousarray(valid, dtype=np.bool_),
        float(lam),
        float(eps),
    )


def depth_weights(heat, disp, valid, lam, eps):
    """Attention field ``(N, gh, gw)``; invalid joints get weight 0."""
    if _accel.BACKEND == "numba":
        return depth_weights_numba(heat, disp, valid, lam, eps)
    return depth_weights_numpy(heat, disp, valid, lam, eps)


# --------------------------------------------------------------------------
# Occlusion-aware propagation: (sum_i A_i f_i) * (sum_j M_j)


def propagate_numpy(features, attention, heat, valid):
    valid = np.asarray(valid, dtype=bool)
    norm = np.einsum("nc,nyx->cyx", np.asarray(features, dtype=np.float64)[valid], attention[valid])
    opacity = heat[valid].sum(axis=0)
    return norm * opacity[None]


@njit
def _propagate_loops(features, attention, heat, valid):
    n, ch = features.shape
    _, gh, gw = heat.shape
    out = np.zeros((ch, gh, gw))
    opacity = np.zeros((gh, gw))
    # joint-outer order keeps the innermost loop contiguous over cells
    for i in range(n):
        if not valid[i]:
            continue
        for r in range(gh):
            for c in range(gw):
                opacity[r, c] += heat[i, r, c]
        for k in range(ch):
            f = features[i, k]
            for r in range(gh):
                for c in range(gw):
                    out[k, r, c] += attention[i, r, c] * f
    for k in range(ch):
        for r in range(gh):
            for c in range(gw):
                out[k, r, c] *= opacity[r, c]
    return out


def propagate_numba(features, attention, heat, valid):
    return _propagate_loops(
        np.ascontiguousarray(features, dtype=np.float64),
        np.ascontiguousarray(attention, dtype=np.float64),
        np.ascontiguousarray(heat, dtype=np.float64),
        np.ascontiguousarray(valid, dtype=np.bool_),
    )


def propagate(features, attention, heat, valid):
    """One frame of the motion volume, ``(C, gh, gw)``."""
    if _accel.BACKEND == "numba":
        return propagate_numba(features, attention, heat, valid)
    return propagate_numpy(features, attention, heat, valid)


# --------------------------------------------------------------------------
# Heatmap-weighted splatting of per-joint vectors


def splat_numpy(vectors, heat):
    return np.einsum("nd,nyx->dyx", np.asarray(vectors, dtype=np.float64), np.asarray(heat, dtype=np.float64))


@njit
def _splat_loops(vectors, heat):
    n, dim = vectors.shape
    _, gh, gw = heat.shape
    out = np.zeros((dim, gh, gw))
    for i in range(n):
        for k in range(dim):
            v = vectors[i, k]
            for r in range(gh):
                for c in range(gw):
                    out[k, r, c] += heat[i, r, c] * v
    return out


def splat_numba(vectors, heat):
    vectors = np.ascontiguousarray(vectors, dtype=np.float64)
    heat = np.ascontiguousarray(heat, dtype=np.float64)
    if vectors.shape[0] == 0:
        return np.zeros((vectors.shape[1],) + heat.shape[1:])
    return _splat_loops(vectors, heat)


def splat(vectors, heat):
    """``sum_i heat[i] * vectors[i]`` laid out as ``(D, gh, gw)``."""
    if _accel.BACKEND == "numba":
        return splat_numba(vectors, heat)
    return splat_numpy(vectors, heat)


# --------------------------------------------------------------------------
# Causal 3D convolution. Input (T, Cin, H, W), weight (Cout, Cin, kt, kh, kw).
# Zero padding: kt-1 frames in the past only, kh//2 and kw//2 spatially.


def _check_conv(x, weight):
    if x.ndim != 4 or weight.ndim != 5:
        raise ValueError("expected x (T, Cin, H, W) and weight (Cout, Cin, kt, kh, kw)")
    if x.shape[1] != weight.shape[1]:
        raise ValueError(f"input has {x.shape[1]} channels, kernel expects {weight.shape[1]}")
    if weight.shape[3] % 2 == 0 or weight.shape[4] % 2 == 0:
        raise ValueError("spatial kernel extents must be odd")


def causal_conv3d_numpy(x, weight, bias):
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    _check_conv(x, weight)
    t_len, cin, h, w = x.shape
    cout, _, kt, kh, kw = weight.shape
    ph, pw = kh // 2, kw // 2
    xp = np.zeros((t_len + kt - 1, cin, h + 2 * ph, w + 2 * pw))
    xp[kt - 1 :, :, ph : ph + h, pw : pw + w] = x
    wmat = weight.reshape(cout, cin * kt * kh * kw).T
    out = np.empty((t_len, cout, h, w))
    # one fixed-shape product per output frame keeps prefixes bit-identical
    for t in range(t_len):
        win = sliding_window_view(xp[t : t + kt], (kh, kw), axis=(2, 3))  # kt, cin, h, w, kh, kw
        patches = np.ascontiguousarray(win.transpose(2, 3, 1, 0, 4, 5)).reshape(h * w, -1)
        out[t] = (patches @ wmat + bias).T.reshape(cout, h, w)
    return out


@njit
def _causal_conv3d_loops(x, wmat, bias, kt, kh, kw):
    t_len, cin, h, w = x.shape
    cout = wmat.shape[1]
    ph = kh // 2
    pw = kw // 2
    out = np.empty((t_len, cout, h, w))
    patches = np.empty((h * w, cin * kt * kh * kw))
    for t in range(t_len):
        # im2col with zero padding, column order (cin, kt, kh, kw) to match the weight reshape
        col = 0
        for i in range(cin):
            for a in range(kt):
                ts = t - (kt - 1) + a
                for b in range(kh):
                    for e in range(kw):
                        for r in range(h):
                            rr = r + b - ph
                            for c in range(w):
                                cc = c + e - pw
                                if ts < 0 or rr < 0 or rr >= h or cc < 0 or cc >= w:
                                    patches[r * w + c, col] = 0.0
                                else:
                                    patches[r * w + c, col] = x[ts, i, rr, cc]
                        col += 1
        res = np.dot(patches, wmat)
        for o in range(cout):
            for r in range(h):
                for c in range(w):
                    out[t, o, r, c] = res[r * w + c, o] + bias[o]
    return out


def causal_conv3d_numba(x, weight, bias):
    x = np.ascontiguousarray(x, dtype=np.float64)
    weight = np.ascontiguousarray(weight, dtype=np.float64)
    _check_conv(x, weight)
    cout, cin, kt, kh, kw = weight.shape
    wmat = np.ascontiguousarray(weight.reshape(cout, cin * kt * kh * kw).T)
    return _causal_conv3d_loops(x, wmat, np.ascontiguousarray(bias, dtype=np.float64), kt, kh, kw)


def causal_conv3d(x, weight, bias):
    """Causal in time, 'same' in space. Returns ``(T, Cout, H, W)``."""
    if _accel.BACKEND == "numba":
        return causal_conv3d_numba(x, weight, bias)
    return causal_conv3d_numpy(x, weight, bias)
