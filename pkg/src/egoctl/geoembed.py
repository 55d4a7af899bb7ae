"""3D geometric embedding stream.

Each joint gets a sinusoidal code of its grid position and disparity,
concatenated with a per-joint identity vector and mixed by a two-layer MLP.
The resulting vectors are splatted with the joints' heatmaps, concatenated
with the motion volume and passed through a causal conv + LayerNorm head.

All parameters are drawn once from a seeded generator (uniform in
``±1/sqrt(fan_in)``) and then held fixed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from egoctl import kernels


@dataclass(frozen=True)
class EncodingSpec:
    bands: int = 8
    base_freq: float = math.pi / 64

    def __post_init__(self):
        if self.bands < 1 or not self.base_freq > 0:
            raise ValueError("bands must be >= 1 and base_freq > 0")

    @property
    def dim(self) -> int:
        return 6 * self.bands


def sincos_encode(u, d, spec: EncodingSpec) -> np.ndarray:
    """Encode ``(u_x, u_y, d)``; output has ``6 * bands`` trailing entries.

    Per scalar and octave ``k`` the pair ``sin(2^k w s), cos(2^k w s)`` is
    emitted, scalars outermost. Leading dimensions broadcast.
    """
    u = np.asarray(u, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    s = np.concatenate([u, d[..., None]], axis=-1)  # (..., 3)
    freqs = spec.base_freq * (2.0 ** np.arange(spec.bands))
    ang = s[..., :, None] * freqs  # (..., 3, bands)
    pairs = np.stack([np.sin(ang), np.cos(ang)], axis=-1)  # (..., 3, bands, 2)
    return pairs.reshape(*s.shape[:-1], spec.dim)


def _uniform(rng, shape, fan_in):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class IdentityTable:
    entries: np.ndarray
    seed: int | None = None

    @classmethod
    def init(cls, n_max: int = 42, dim: int = 16, seed: int = 0) -> "IdentityTable":
        rng = np.random.default_rng(seed)
        return cls(entries=_uniform(rng, (n_max, dim), dim), seed=seed)

    @property
    def n_max(self) -> int:
        return self.entries.shape[0]

    @property
    def dim(self) -> int:
        return self.entries.shape[1]

    def lookup(self, ids) -> np.ndarray:
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= self.n_max):
            raise IndexError(f"joint index out of range [0, {self.n_max})")
        return self.entries[ids]


def _gelu(x):
    # tanh approximation
    return 0.5 * x * (1.0 + np.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x**3)))


_ACTIVATIONS = {"gelu": _gelu, "linear": lambda x: x}


@dataclass
class MlpProjector:
    w1: np.ndarray  # (hidden, in)
    b1: np.ndarray
    w2: np.ndarray  # (out, hidden)
    b2: np.ndarray
    activation: str = "gelu"
    seed: int | None = None

    @classmethod
    def init(cls, in_dim: int, out_dim: int = 32, hidden: int = 32, seed: int = 1) -> "MlpProjector":
        rng = np.random.default_rng(seed)
        return cls(
            w1=_uniform(rng, (hidden, in_dim), in_dim),
            b1=_uniform(rng, (hidden,), in_dim),
            w2=_uniform(rng, (out_dim, hidden), hidden),
            b2=_uniform(rng, (out_dim,), hidden),
            seed=seed,
        )

    @classmethod
    def identity(cls, dim: int) -> "MlpProjector":
        """Linear pass-through, for checking wiring."""
        return cls(np.eye(dim), np.zeros(dim), np.eye(dim), np.zeros(dim), activation="linear")

    @property
    def in_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[0]

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"MLP expects {self.in_dim} inputs, got {x.shape[-1]}")
        h = _ACTIVATIONS[self.activation](x @ self.w1.T + self.b1)
        return h @ self.w2.T + self.b2


def joint_embedding(enc, id_index, table: IdentityTable, mlp: MlpProjector) -> np.ndarray:
    """``mlp([enc ; table[id_index]])``; vectorizes over leading axes."""
    ident = table.lookup(id_index)
    enc = np.asarray(enc, dtype=np.float64)
    ident = np.broadcast_to(ident, enc.shape[:-1] + (table.dim,))
    return mlp(np.concatenate([enc, ident], axis=-1))


def splat_geo(embeddings, heatmaps) -> np.ndarray:
    """``sum_i M_i(x) z_i`` as ``(D, gh, gw)``."""
    z = np.asarray(embeddings, dtype=np.float64)
    heat = np.asarray(heatmaps, dtype=np.float64)
    if z.shape[0] != heat.shape[0]:
        raise ValueError(f"{z.shape[0]} embeddings for {heat.shape[0]} heatmaps")
    return kernels.splat(z, heat)


@dataclass
class CausalConvHead:
    weight: np.ndarray  # (Cout, Cin, kt, kh, kw)
    bias: np.ndarray
    ln_gamma: np.ndarray
    ln_beta: np.ndarray
    ln_eps: float = 1e-6
    seed: int | None = None

    @classmethod
    def init(cls, in_channels: int, out_channels: int = 16, kernel=(3, 3, 3), seed: int = 2) -> "CausalConvHead":
        kt, kh, kw = kernel
        fan_in = in_channels * kt * kh * kw
        rng = np.random.default_rng(seed)
        return cls(
            weight=_uniform(rng, (out_channels, in_channels, kt, kh, kw), fan_in),
            bias=_uniform(rng, (out_channels,), fan_in),
            ln_gamma=np.ones(out_channels),
            ln_beta=np.zeros(out_channels),
            seed=seed,
        )

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def temporal_padding(self) -> int:
        return self.weight.shape[2] - 1


def layer_norm(x, gamma, beta, eps: float, axis: int = 1) -> np.ndarray:
    mean = x.mean(axis=axis, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=axis, keepdims=True)
    shape = [1] * x.ndim
    shape[axis] = -1
    return (x - mean) / np.sqrt(var + eps) * np.reshape(gamma, shape) + np.reshape(beta, shape)


def causal_head(geo, motion, head: CausalConvHead) -> np.ndarray:
    """``LayerNorm(CausalConv3D([geo ; motion]))`` over ``(T, C, gh, gw)`` volumes."""
    geo = np.asarray(geo, dtype=np.float64)
    motion = np.asarray(motion, dtype=np.float64)
    if geo.ndim != 4 or motion.ndim != 4:
        raise ValueError("geo and motion must be (T, C, gh, gw)")
    if geo.shape[0] != motion.shape[0] or geo.shape[2:] != motion.shape[2:]:
        raise ValueError(f"geo {geo.shape} and motion {motion.shape} disagree on T or grid")
    x = np.concatenate([geo, motion], axis=1)
    if x.shape[1] != head.in_channels:
        raise ValueError(f"head expects {head.in_channels} channels, got {x.shape[1]}")
    y = kernels.causal_conv3d(x, head.weight, head.bias)
    return layer_norm(y, head.ln_gamma, head.ln_beta, head.ln_eps, axis=1)


# --------------------------------------------------------------------------
# Stochastic joint masking


def mask_joints(positions, valid, rate: float, seed: int, per_frame: bool = False):
    """Zero out randomly selected joints.

    Whole joints (every frame) are selected independently with probability
    ``rate``; ``per_frame=True`` draws per (frame, joint) instead. Returns
    ``(positions, valid, selected)`` without modifying the inputs.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must be in [0, 1], got {rate}")
    pos = np.array(positions, dtype=np.float64, copy=True)
    val = np.array(valid, dtype=bool, copy=True)
    f, n = val.shape
    rng = np.random.default_rng(seed)
    if per_frame:
        sel = rng.random((f, n)) < rate
        pos[sel] = 0.0
        val[sel] = False
    else:
        sel = rng.random(n) < rate
        pos[:, sel] = 0.0
        val[:, sel] = False
    return pos, val, sel


# --------------------------------------------------------------------------
# Stream assembly


@dataclass
class GeoStream:
    encoding: EncodingSpec = field(default_factory=EncodingSpec)
    table: IdentityTable = field(default_factory=IdentityTable.init)
    mlp: MlpProjector | None = None
    head: CausalConvHead | None = None

    @classmethod
    def init(
        cls,
        motion_channels: int,
        encoding: EncodingSpec | None = None,
        n_max: int = 42,
        id_dim: int = 16,
        geo_dim: int = 32,
        hidden: int = 32,
        out_channels: int = 16,
        kernel=(3, 3, 3),
        seed: int = 0,
    ) -> "GeoStream":
        enc = encoding or EncodingSpec()
        table = IdentityTable.init(n_max, id_dim, seed=seed)
        mlp = MlpProjector.init(enc.dim + id_dim, geo_dim, hidden, seed=seed + 1)
        head = CausalConvHead.init(geo_dim + motion_channels, out_channels, kernel, seed=seed + 2)
        return cls(encoding=enc, table=table, mlp=mlp, head=head)

    def embed(self, grid_uv, disparity, ids) -> np.ndarray:
        enc = sincos_encode(grid_uv, disparity, self.encoding)
        return joint_embedding(enc, ids, self.table, self.mlp)

    def geo_volume(self, grid_uv, disparity, ids, heatmaps) -> np.ndarray:
        """``(T, D_geo, gh, gw)`` from per-frame ``(T, N, ...)`` joint data."""
        z = self.embed(grid_uv, disparity, ids)
        return np.stack([splat_geo(z[t], heatmaps[t]) for t in range(z.shape[0])])

    def parameters(self) -> dict[str, np.ndarray]:
        return {
            "identity": self.table.entries,
            "mlp.w1": self.mlp.w1,
            "mlp.b1": self.mlp.b1,
            "mlp.w2": self.mlp.w2,
            "mlp.b2": self.mlp.b2,
            "head.weight": self.head.weight,
            "head.bias": self.head.bias,
            "head.ln_gamma": self.head.ln_gamma,
            "head.ln_beta": self.head.ln_beta,
        }
