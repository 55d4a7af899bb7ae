"""Independent reference implementations used only by the tests.

Everything here is written the slow, obvious way (scalar loops, explicit
enumeration, 4x4 matrices) and shares no code with the package beyond the
plain data classes it consumes.
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.spatial.transform import Rotation


# --------------------------------------------------------------------------
# conditioning


def heatmap_oracle(cx, cy, sigma, gh, gw):
    out = np.zeros((gh, gw))
    for r in range(gh):
        for c in range(gw):
            out[r, c] = math.exp(-((c - cx) ** 2 + (r - cy) ** 2) / (2.0 * sigma * sigma))
    return out


def penalty_oracle(u, d, tau, gamma):
    n = len(d)
    p = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            dist2 = (u[i][0] - u[j][0]) ** 2 + (u[i][1] - u[j][1]) ** 2
            p[i, j] = math.exp(-dist2 / (2.0 * tau * tau)) / (1.0 + math.exp(-gamma * (d[j] - d[i])))
    return p


def aggregate_oracle(latent, heat, penalty, eps):
    """Double loop over joints and cells."""
    c_n, gh, gw = latent.shape
    n = heat.shape[0]
    out = np.zeros((n, c_n))
    for i in range(n):
        gate = 1.0
        if n > 1:
            gate = 1.0 - max(penalty[i, j] for j in range(n) if j != i)
        mass = 0.0
        for r in range(gh):
            for c in range(gw):
                mass += heat[i, r, c]
        for ch in range(c_n):
            acc = 0.0
            for r in range(gh):
                for c in range(gw):
                    acc += heat[i, r, c] / (mass + eps) * latent[ch, r, c]
            out[i, ch] = gate * acc
    return out


def softmax_cell_oracle(heat_vals, disp, lam, eps):
    logits = [math.log(m + eps) + lam * d for m, d in zip(heat_vals, disp)]
    top = max(logits)
    e = [math.exp(v - top) for v in logits]
    s = sum(e)
    return [v / s for v in e]


def depth_weights_oracle(heat, disp, lam, eps):
    n, gh, gw = heat.shape
    out = np.zeros_like(heat)
    for r in range(gh):
        for c in range(gw):
            w = softmax_cell_oracle([heat[i, r, c] for i in range(n)], disp, lam, eps)
            for i in range(n):
                out[i, r, c] = w[i]
    return out


def propagate_oracle(features, attention, heat):
    n, c_n = features.shape
    _, gh, gw = heat.shape
    out = np.zeros((c_n, gh, gw))
    for r in range(gh):
        for c in range(gw):
            opacity = sum(heat[j, r, c] for j in range(n))
            for ch in range(c_n):
                out[ch, r, c] = sum(attention[i, r, c] * features[i, ch] for i in range(n)) * opacity
    return out


def hard_zbuffer_oracle(features, disparity, heat, coverage):
    """Per cell: feature of the nearest joint whose heatmap reaches ``coverage``, times opacity."""
    n, c_n = features.shape
    _, gh, gw = heat.shape
    out = np.zeros((c_n, gh, gw))
    covered = np.zeros((gh, gw), dtype=bool)
    for r in range(gh):
        for c in range(gw):
            best = None
            for i in range(n):
                if heat[i, r, c] >= coverage and (best is None or disparity[i] > disparity[best]):
                    best = i
            if best is None:
                continue
            covered[r, c] = True
            out[:, r, c] = features[best] * heat[:, r, c].sum()
    return out, covered


# --------------------------------------------------------------------------
# geoembed


def causal_conv_oracle(x, weight, bias):
    """Direct sum with explicit past-only zero padding."""
    t_len, cin, h, w = x.shape
    cout, _, kt, kh, kw = weight.shape
    out = np.zeros((t_len, cout, h, w))
    for t in range(t_len):
        for o in range(cout):
            for r in range(h):
                for c in range(w):
                    acc = bias[o]
                    for a in range(kt):
                        ts = t - (kt - 1) + a
                        for b in range(kh):
                            for e in range(kw):
                                rr, cc = r + b - kh // 2, c + e - kw // 2
                                if ts < 0 or not (0 <= rr < h and 0 <= cc < w):
                                    continue
                                acc += float(weight[o, :, a, b, e] @ x[ts, :, rr, cc])
                    out[t, o, r, c] = acc
    return out


# --------------------------------------------------------------------------
# kinematics


def homogeneous(rotation=np.eye(3), translation=(0.0, 0.0, 0.0)):
    m = np.eye(4)
    m[:3, :3] = rotation
    m[:3, 3] = translation
    return m


def fk_homogeneous(chain, q):
    """Root-frame keypoints by multiplying 4x4 matrices down each path."""
    q = np.asarray(q, dtype=np.float64)
    dof = 0
    joint_q = {}
    for i, link in enumerate(chain.links):
        if link.joint_type != "fixed":
            joint_q[i] = q[dof]
            dof += 1

    def world(i):
        link = chain.links[i]
        m = homogeneous(link.offset.rotation, link.offset.translation)
        if link.joint_type == "revolute":
            m = m @ homogeneous(Rotation.from_rotvec(link.axis * joint_q[i]).as_matrix())
        elif link.joint_type == "prismatic":
            m = m @ homogeneous(translation=link.axis * joint_q[i])
        return m if link.parent < 0 else world(link.parent) @ m

    out = []
    for kp in chain.keypoints:
        out.append((world(kp.link) @ np.append(kp.offset, 1.0))[:3])
    return np.array(out)


# --------------------------------------------------------------------------
# tracking


def enumerate_matchings(n_rows, n_cols):
    """Every maximum-cardinality injective matching as a sorted tuple of pairs."""
    k = min(n_rows, n_cols)
    out = []
    for rows in itertools.combinations(range(n_rows), k):
        for cols in itertools.permutations(range(n_cols), k):
            out.append(tuple(sorted(zip(rows, cols))))
    return out


def best_matching(cost):
    cost = np.asarray(cost)
    cands = enumerate_matchings(*cost.shape)
    return min(cands, key=lambda m: sum(cost[i, j] for i, j in m))


def _cost(dets, history, lam):
    """``dets``: list of (translation, label); ``history``: slot -> translation or None."""
    classes = ("Left", "Right")
    c = np.zeros((len(dets), 2))
    for i, (t, label) in enumerate(dets):
        for j in range(2):
            spatial = 0.0 if history[j] is None else float(np.sqrt(((np.asarray(t) - history[j]) ** 2).sum()))
            c[i, j] = spatial + (lam if label != classes[j] else 0.0)
    return c


def track_sequence_oracle(frames, lam=0.05, tau_swap=0.02, tau_gap=10):
    """Exhaustive search over per-frame slot assignments.

    ``frames`` is a list of ``(frame_index, [(translation, label), ...])``.
    Every frame branches over all maximum matchings; a branch survives when
    it is the choice the stated rules allow (optimal matching, unless it
    flips the left/right crossing relative to the running identity state
    without improving the total cost by more than ``tau_swap``, in which
    case only the other full matching is allowed). Returns the surviving
    sequences of matchings.
    """
    classes = ("Left", "Right")

    def crossing(m, dets):
        labels = {dets[i][1] for i, _ in m}
        if len(m) != 2 or len(labels) != 2:
            return None
        return any(dets[i][1] != classes[j] for i, j in m)

    def total(c, m):
        return sum(c[i, j] for i, j in m)

    def allowed(m, dets, c, crossed):
        cands = enumerate_matchings(*c.shape)
        best = min(total(c, x) for x in cands)
        optimal = [x for x in cands if total(c, x) <= best + 1e-15]
        opt = optimal[0]
        state = crossing(opt, dets)
        if state is None or state == crossed:
            return m in optimal, crossed
        other = tuple(sorted([(opt[0][0], opt[1][1]), (opt[1][0], opt[0][1])]))
        if total(c, other) - total(c, opt) > tau_swap:
            return m in optimal, state
        return m == other, crossed

    results = []

    def dfs(k, history, seen, crossed, path):
        if k == len(frames):
            results.append(list(path))
            return
        f, dets = frames[k]
        history, seen = list(history), list(seen)
        for j in range(2):
            if seen[j] is not None and f - seen[j] > tau_gap:
                history[j] = None
        if history[0] is None and history[1] is None:
            crossed = False
        c = _cost(dets, history, lam)
        for m in enumerate_matchings(len(dets), 2):
            ok, new_crossed = allowed(m, dets, c, crossed)
            if not ok:
                continue
            h2, s2 = list(history), list(seen)
            for i, j in m:
                h2[j] = np.asarray(dets[i][0], dtype=np.float64)
                s2[j] = f
            path.append(m)
            dfs(k + 1, h2, s2, new_crossed, path)
            path.pop()

    dfs(0, [None, None], [None, None], False, [])
    return results


# --------------------------------------------------------------------------
# clipper


def smooth_oracle(raw, window=5):
    half = window // 2
    out = []
    for t in range(len(raw)):
        vals = [raw[s] for s in range(t - half, t + half + 1) if 0 <= s < len(raw)]
        out.append(sum(vals) / len(vals))
    return np.array(out, dtype=np.float64)


def clip_scan_oracle(raw, smoothed, thresholds=(8, 4, 2, 0), half=60):
    """Scan every tier and every frame; return ``(center, tier)`` or None."""
    n = len(raw)
    for tier in thresholds:
        best = None
        for t in range(n):
            if t - half < 0 or t + half > n - 1 or raw[t] < tier:
                continue
            if best is None or smoothed[t] > smoothed[best]:
                best = t
        if best is not None:
            return best, tier
    return None


# --------------------------------------------------------------------------
# metrics


def ssim_constant_oracle(a, b, k1=0.01, k2=0.03, data_range=1.0):
    """SSIM of two constant images: variances vanish, only luminance remains."""
    c1 = (k1 * data_range) ** 2
    return (2 * a * b + c1) / (a * a + b * b + c1)
