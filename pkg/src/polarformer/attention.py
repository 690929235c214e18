"""Forward-pass attention kernels.

Covers the cross-plane encoder (polar-ray queries attending to one image
column), ray stacking, sinusoidal positional encoding, and multi-scale
deformable attention used by the BEV encoder and the decoder.

All kernels compute in float64 and never mutate their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PE_MODES = ("fixed-sine", "learned", "point-3d", "none")
NORM_EPS = 1e-5


def sine_positional_encoding(length: int, dim: int) -> np.ndarray:
    if dim % 2:
        raise ValueError(f"positional encoding dim must be even, got {dim}")
    pos = np.arange(length, dtype=np.float64)[:, None]
    return _sine_table(pos, dim)


def _sine_table(pos: np.ndarray, dim: int) -> np.ndarray:
    # pos: (L, 1) real-valued positions
    i = np.arange(dim // 2, dtype=np.float64)
    freq = 1.0 / 10000.0 ** (2.0 * i / dim)
    angles = pos * freq[None, :]
    pe = np.empty((pos.shape[0], dim))
    pe[:, 0::2] = np.sin(angles)
    pe[:, 1::2] = np.cos(angles)
    return pe


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    x = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(x)
    return e / np.sum(e, axis=axis, keepdims=True)


def layer_norm(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = NORM_EPS) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x**3)))


# -- parameter containers ----------------------------------------------------


@dataclass(frozen=True)
class AttentionParams:
    """Per-head projections ``w_q/w_k/w_v`` of shape (h, d_model, d_model/h) and ``w_o``."""

    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_o: np.ndarray

    def __post_init__(self):
        h, d, dk = np.shape(self.w_q)
        if d % h or dk != d // h:
            raise ValueError(f"per-head width must be d_model/h, got h={h}, d={d}, dk={dk}")
        for name in ("w_k", "w_v"):
            if np.shape(getattr(self, name)) != (h, d, dk):
                raise ValueError(f"{name} shape {np.shape(getattr(self, name))} != {(h, d, dk)}")
        if np.shape(self.w_o) != (h * dk, d):
            raise ValueError(f"w_o shape {np.shape(self.w_o)} != {(h * dk, d)}")
        for name in ("w_q", "w_k", "w_v", "w_o"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"{name} has non-finite entries")

    @property
    def heads(self) -> int:
        return self.w_q.shape[0]

    @property
    def d_model(self) -> int:
        return self.w_q.shape[1]

    @classmethod
    def random(cls, rng: np.random.Generator, d_model: int, heads: int) -> "AttentionParams":
        if d_model % heads:
            raise ValueError(f"d_model={d_model} not divisible by heads={heads}")
        dk = d_model // heads
        std = 1.0 / np.sqrt(d_model)
        return cls(
            w_q=rng.normal(0.0, std, (heads, d_model, dk)),
            w_k=rng.normal(0.0, std, (heads, d_model, dk)),
            w_v=rng.normal(0.0, std, (heads, d_model, dk)),
            w_o=rng.normal(0.0, std, (d_model, d_model)),
        )


@dataclass(frozen=True)
class FeedForwardParams:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return gelu(x @ self.w1 + self.b1) @ self.w2 + self.b2

    @classmethod
    def random(cls, rng: np.random.Generator, d_model: int, hidden: int | None = None) -> "FeedForwardParams":
        hidden = hidden or 2 * d_model
        return cls(
            w1=rng.normal(0.0, 1.0 / np.sqrt(d_model), (d_model, hidden)),
            b1=np.zeros(hidden),
            w2=rng.normal(0.0, 1.0 / np.sqrt(hidden), (hidden, d_model)),
            b2=np.zeros(d_model),
        )


@dataclass(frozen=True)
class NormParams:
    gamma: np.ndarray
    beta: np.ndarray

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return layer_norm(x, self.gamma, self.beta)

    @classmethod
    def identity(cls, d_model: int) -> "NormParams":
        return cls(gamma=np.ones(d_model), beta=np.zeros(d_model))


@dataclass(frozen=True)
class CrossPlaneLayerParams:
    attn: AttentionParams
    norm1: NormParams
    ffn: FeedForwardParams
    norm2: NormParams

    @classmethod
    def random(cls, rng, d_model: int, heads: int) -> "CrossPlaneLayerParams":
        return cls(
            attn=AttentionParams.random(rng, d_model, heads),
            norm1=NormParams.identity(d_model),
            ffn=FeedForwardParams.random(rng, d_model),
            norm2=NormParams.identity(d_model),
        )


@dataclass(frozen=True)
class DeformAttnParams:
    """Multi-scale deformable attention parameters.

    ``offset_w/offset_b`` produce ``(M, U, K, 2)`` sampling offsets in level
    pixel units (column, row); ``weight_w/weight_b`` produce ``(M, U*K)``
    logits normalized per head.  ``value_proj`` columns ``m*dh:(m+1)*dh``
    form head m's value map, ``output_proj`` rows the matching output map.
    """

    heads: int
    levels: int
    points: int
    value_proj: np.ndarray
    output_proj: np.ndarray
    offset_w: np.ndarray
    offset_b: np.ndarray
    weight_w: np.ndarray
    weight_b: np.ndarray

    def __post_init__(self):
        d = self.value_proj.shape[0]
        if d % self.heads:
            raise ValueError(f"d_model={d} not divisible by heads={self.heads}")
        n = self.heads * self.levels * self.points
        if self.offset_w.shape != (d, 2 * n) or self.offset_b.shape != (2 * n,):
            raise ValueError("offset generator shape mismatch")
        if self.weight_w.shape != (d, n) or self.weight_b.shape != (n,):
            raise ValueError("attention-weight generator shape mismatch")
        if self.value_proj.shape != (d, d) or self.output_proj.shape != (d, d):
            raise ValueError("value/output projections must be d_model x d_model")

    @property
    def d_model(self) -> int:
        return self.value_proj.shape[0]

    @classmethod
    def random(cls, rng, d_model: int, heads: int, levels: int, points: int, offset_scale: float = 1.0):
        n = heads * levels * points
        std = 1.0 / np.sqrt(d_model)
        # spread initial sampling points around the reference, as in deformable DETR
        thetas = np.arange(heads) * (2.0 * np.pi / heads)
        grid = np.stack([np.cos(thetas), np.sin(thetas)], -1)
        grid = grid / np.abs(grid).max(-1, keepdims=True)
        grid = np.tile(grid[:, None, None, :], (1, levels, points, 1))
        grid *= (np.arange(points) + 1.0)[None, None, :, None]
        return cls(
            heads=heads,
            levels=levels,
            points=points,
            value_proj=rng.normal(0.0, std, (d_model, d_model)),
            output_proj=rng.normal(0.0, std, (d_model, d_model)),
            offset_w=rng.normal(0.0, 0.01 * std, (d_model, 2 * n)),
            offset_b=offset_scale * grid.reshape(-1),
            weight_w=rng.normal(0.0, std, (d_model, n)),
            weight_b=np.zeros(n),
        )


@dataclass(frozen=True)
class BevEncoderLayerParams:
    deform: DeformAttnParams
    norm1: NormParams
    ffn: FeedForwardParams
    norm2: NormParams

    @classmethod
    def random(cls, rng, d_model: int, heads: int, levels: int, points: int):
        return cls(
            deform=DeformAttnParams.random(rng, d_model, heads, levels, points),
            norm1=NormParams.identity(d_model),
            ffn=FeedForwardParams.random(rng, d_model),
            norm2=NormParams.identity(d_model),
        )


# -- dense multi-head attention ------------------------------------------------


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("attention inputs must be finite")


def multi_head_attention(query, key, value, params: AttentionParams, return_weights: bool = False):
    """Scaled dot-product attention with ``h`` heads; leading batch axes allowed.

    ``query`` is (..., Lq, d_model), ``key``/``value`` are (..., Lk, d_model).
    """
    q = np.asarray(query, dtype=np.float64)
    k = np.asarray(key, dtype=np.float64)
    v = np.asarray(value, dtype=np.float64)
    d = params.d_model
    if q.shape[-1] != d or k.shape[-1] != d or v.shape[-1] != d:
        raise ValueError(f"feature width mismatch: expected {d}, got {q.shape[-1]}, {k.shape[-1]}, {v.shape[-1]}")
    if k.shape[-2] != v.shape[-2]:
        raise ValueError(f"key/value length mismatch: {k.shape[-2]} vs {v.shape[-2]}")
    if k.shape[-2] == 0:
        raise ValueError("attention needs at least one key")
    _check_finite(q, k, v)

    dk = params.w_q.shape[-1]
    # (..., h, L, dk)
    qh = np.einsum("...ld,hde->...hle", q, params.w_q)
    kh = np.einsum("...ld,hde->...hle", k, params.w_k)
    vh = np.einsum("...ld,hde->...hle", v, params.w_v)
    scores = qh @ np.swapaxes(kh, -1, -2) / np.sqrt(dk)
    weights = softmax(scores, axis=-1)
    heads = weights @ vh
    concat = np.moveaxis(heads, -3, -2).reshape(*heads.shape[:-3], heads.shape[-2], -1)
    out = concat @ params.w_o
    if return_weights:
        return out, weights
    return out


# -- cross-plane encoder ---------------------------------------------------------


def _positional_encodings(pe_mode: str, n_rows: int, n_range: int, dim: int, pe_tables=None, ray_radii=None):
    if pe_mode not in PE_MODES:
        raise ValueError(f"unknown pe_mode {pe_mode!r}; expected one of {PE_MODES}")
    if pe_mode == "none":
        return 0.0, 0.0
    if pe_mode == "learned":
        if pe_tables is None:
            raise ValueError("pe_mode='learned' needs pe_tables=(key_table, query_table)")
        key_table, query_table = pe_tables
        return np.asarray(key_table)[:n_rows], np.asarray(query_table)[:n_range]
    key_pe = sine_positional_encoding(n_rows, dim)
    if pe_mode == "point-3d":
        if ray_radii is None:
            raise ValueError("pe_mode='point-3d' needs ray_radii")
        return key_pe, _sine_table(np.asarray(ray_radii, dtype=np.float64)[:, None], dim)
    return key_pe, sine_positional_encoding(n_range, dim)


def cross_plane_encode(
    column_features,
    queries,
    layers,
    pe_mode: str = "fixed-sine",
    pe_tables=None,
    ray_radii=None,
):
    """Turn image columns into polar-ray features.

    ``column_features`` is (H, C) for one column or (..., H, C) for a batch of
    columns; each column is processed independently.  ``queries`` is the
    (R, C) polar-ray query matrix shared by all columns of this scale.
    Returns (R, C) or (..., R, C).
    """
    f = np.asarray(column_features, dtype=np.float64)
    x = np.asarray(queries, dtype=np.float64)
    if f.ndim < 2:
        raise ValueError("column_features must be at least 2-D (H, C)")
    n_rows, dim = f.shape[-2:]
    n_range = x.shape[0]
    if x.shape[-1] != dim:
        raise ValueError(f"query width {x.shape[-1]} != feature width {dim}")
    x = np.broadcast_to(x, f.shape[:-2] + x.shape).copy()
    if not layers:
        return x
    key_pe, query_pe = _positional_encodings(pe_mode, n_rows, n_range, dim, pe_tables, ray_radii)
    keys = f + key_pe
    for layer in layers:
        attn = multi_head_attention(x + query_pe, keys, f, layer.attn)
        x = layer.norm1(x + attn)
        x = layer.norm2(x + layer.ffn(x))
    return x


def stack_rays(rays) -> np.ndarray:
    """Stack W per-column ray features (R, C) into an (R, W, C) polar map."""
    rays = [np.asarray(r) for r in rays]
    if not rays:
        raise ValueError("need at least one ray")
    shape = rays[0].shape
    if len(shape) != 2 or any(r.shape != shape for r in rays):
        raise ValueError(f"ragged ray input: {[r.shape for r in rays]}")
    return np.stack(rays, axis=1)


# -- multi-scale deformable attention -------------------------------------------


def _level_shapes(maps):
    return [np.shape(m)[:2] for m in maps]


def deformable_sampling(queries, params: DeformAttnParams):
    """Offsets (Q, M, U, K, 2) and normalized weights (Q, M, U, K) for each query."""
    q = np.asarray(queries, dtype=np.float64)
    n_q = q.shape[0]
    m, u, k = params.heads, params.levels, params.points
    offsets = (q @ params.offset_w + params.offset_b).reshape(n_q, m, u, k, 2)
    logits = (q @ params.weight_w + params.weight_b).reshape(n_q, m, u * k)
    weights = softmax(logits, axis=-1).reshape(n_q, m, u, k)
    return offsets, weights


def ms_deformable_attention_batch(queries, refs, maps, params: DeformAttnParams, return_weights: bool = False):
    """Deformable attention for a batch of queries.

    ``queries`` (Q, d), ``refs`` (Q, 2) normalized (column, row) in [0, 1],
    ``maps`` a list of U arrays (rows_u, cols_u, d).
    """
    q = np.asarray(queries, dtype=np.float64)
    refs = np.asarray(refs, dtype=np.float64)
    if refs.shape != (q.shape[0], 2):
        raise ValueError(f"refs must be (Q, 2), got {refs.shape}")
    if np.any(refs < 0.0) or np.any(refs > 1.0) or not np.all(np.isfinite(refs)):
        raise ValueError("reference points must lie in [0, 1]^2")
    if len(maps) != params.levels:
        raise ValueError(f"expected {params.levels} levels, got {len(maps)}")
    d = params.d_model
    n_heads = params.heads
    dh = d // n_heads
    offsets, weights = deformable_sampling(q, params)
    acc = np.zeros((q.shape[0], n_heads, dh))
    head_idx = np.arange(n_heads)[None, :, None]
    for u, level_map in enumerate(maps):
        g = np.asarray(level_map, dtype=np.float64)
        if g.shape[-1] != d:
            raise ValueError(f"level {u} feature width {g.shape[-1]} != {d}")
        rows, cols = g.shape[:2]
        value = (g @ params.value_proj).reshape(rows, cols, n_heads, dh)
        # zeta_u: normalized reference -> continuous index on level u
        col = refs[:, 0, None, None] * (cols - 1) + offsets[:, :, u, :, 0]
        row = refs[:, 1, None, None] * (rows - 1) + offsets[:, :, u, :, 1]
        # gather each head's channels only: grid is (rows, cols, M, dh)
        sampled = _bilinear_per_head(value, col, row, head_idx)
        acc += np.einsum("qmk,qmkd->qmd", weights[:, :, u], sampled)
    out = acc.reshape(q.shape[0], d) @ params.output_proj
    if return_weights:
        return out, weights
    return out


def _bilinear_per_head(value, col, row, head_idx):
    rows, cols = value.shape[:2]
    col = np.clip(col, 0.0, cols - 1)
    row = np.clip(row, 0.0, rows - 1)
    c0 = np.floor(col).astype(np.intp)
    r0 = np.floor(row).astype(np.intp)
    c1 = np.minimum(c0 + 1, cols - 1)
    r1 = np.minimum(r0 + 1, rows - 1)
    fc = (col - c0)[..., None]
    fr = (row - r0)[..., None]
    top = value[r0, c0, head_idx] * (1.0 - fc) + value[r0, c1, head_idx] * fc
    bottom = value[r1, c0, head_idx] * (1.0 - fc) + value[r1, c1, head_idx] * fc
    return top * (1.0 - fr) + bottom * fr


def ms_deformable_attention(query, ref, maps, params: DeformAttnParams) -> np.ndarray:
    """Single-query deformable attention; returns a d_model vector."""
    out = ms_deformable_attention_batch(
        np.asarray(query, dtype=np.float64)[None, :], np.asarray(ref, dtype=np.float64)[None, :], maps, params
    )
    return out[0]


def cell_reference_points(rows: int, cols: int) -> np.ndarray:
    """Normalized (column, row) coordinates of every node of a rows x cols map."""
    cx = np.arange(cols) / (cols - 1) if cols > 1 else np.zeros(1)
    ry = np.arange(rows) / (rows - 1) if rows > 1 else np.zeros(1)
    cc, rr = np.meshgrid(cx, ry)
    return np.stack([cc.reshape(-1), rr.reshape(-1)], axis=-1)


def bev_encoder_forward(maps, layers) -> list[np.ndarray]:
    """Refine multi-scale polar maps; every cell queries all levels."""
    maps = [np.asarray(m, dtype=np.float64) for m in maps]
    if not layers:
        return [m.copy() for m in maps]
    shapes = [m.shape for m in maps]
    refs = np.concatenate([cell_reference_points(s[0], s[1]) for s in shapes])
    sizes = [s[0] * s[1] for s in shapes]
    x = np.concatenate([m.reshape(-1, s[2]) for m, s in zip(maps, shapes)])
    for layer in layers:
        current = _split_levels(x, shapes, sizes)
        attn = ms_deformable_attention_batch(x, refs, current, layer.deform)
        x = layer.norm1(x + attn)
        x = layer.norm2(x + layer.ffn(x))
    return _split_levels(x, shapes, sizes)


def _split_levels(x, shapes, sizes):
    parts = np.split(x, np.cumsum(sizes)[:-1])
    return [p.reshape(s) for p, s in zip(parts, shapes)]


__all__ = [
    "AttentionParams",
    "BevEncoderLayerParams",
    "CrossPlaneLayerParams",
    "DeformAttnParams",
    "FeedForwardParams",
    "NormParams",
    "bev_encoder_forward",
    "cell_reference_points",
    "cross_plane_encode",
    "deformable_sampling",
    "layer_norm",
    "ms_deformable_attention",
    "ms_deformable_attention_batch",
    "multi_head_attention",
    "sine_positional_encoding",
    "softmax",
    "stack_rays",
]
