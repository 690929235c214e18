"""Polar detection head: targets, decoder forward pass and losses.

Positions are regressed as offsets from a per-query reference point living in
normalized cylindrical coordinates.  Orientation and velocity are expressed
relative to the object's azimuth and split into tangential (``*_phi``) and
radial (``*_rho``) components.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .attention import (
    AttentionParams,
    DeformAttnParams,
    FeedForwardParams,
    NormParams,
    ms_deformable_attention_batch,
    multi_head_attention,
)
from .geometry import wrap_angle
from .polar_grid import PolarGridSpec

NUM_CLASSES = 10
TARGET_DIM = 10
PROB_CLAMP = 1e-7
_REF_EPS = 1e-12


@dataclass(frozen=True)
class PolarBox:
    rho: float
    phi: float
    z: float
    l: float
    w: float
    h: float
    theta_ori: float = 0.0
    v_abs: float = 0.0
    theta_v: float = 0.0
    scores: tuple = field(default_factory=tuple)
    label: int | None = None

    def __post_init__(self):
        if min(self.l, self.w, self.h) <= 0:
            raise ValueError(f"box sizes must be positive, got {(self.l, self.w, self.h)}")
        if self.v_abs < 0:
            raise ValueError(f"speed must be >= 0, got {self.v_abs}")
        object.__setattr__(self, "phi", wrap_angle(self.phi))
        object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))

    @property
    def x(self) -> float:
        return self.rho * math.sin(self.phi)

    @property
    def y(self) -> float:
        return self.rho * math.cos(self.phi)

    @property
    def vx(self) -> float:
        return self.v_abs * math.sin(self.theta_v)

    @property
    def vy(self) -> float:
        return self.v_abs * math.cos(self.theta_v)

    @property
    def score(self) -> float:
        return max(self.scores) if self.scores else 1.0

    def to_dict(self) -> dict:
        d = {
            "rho": self.rho,
            "phi": self.phi,
            "z": self.z,
            "l": self.l,
            "w": self.w,
            "h": self.h,
            "theta_ori": self.theta_ori,
            "v_abs": self.v_abs,
            "theta_v": self.theta_v,
            "scores": list(self.scores),
        }
        if self.label is not None:
            d["label"] = self.label
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PolarBox":
        d = dict(d)
        d["scores"] = tuple(d.get("scores", ()))
        return cls(**d)


@dataclass(frozen=True)
class RegressionTarget:
    d_rho: float
    d_phi: float
    d_z: float
    log_l: float
    log_w: float
    log_h: float
    theta_phi: float
    theta_rho: float
    v_phi: float
    v_rho: float

    def to_array(self) -> np.ndarray:
        return np.array(
            [self.d_rho, self.d_phi, self.d_z, self.log_l, self.log_w, self.log_h,
             self.theta_phi, self.theta_rho, self.v_phi, self.v_rho]
        )

    @classmethod
    def from_array(cls, a) -> "RegressionTarget":
        return cls(*(float(v) for v in np.asarray(a).reshape(TARGET_DIM)))


@dataclass(frozen=True)
class ReferencePoint:
    rho: float
    phi: float
    z: float

    def __post_init__(self):
        for v in (self.rho, self.phi, self.z):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"reference components must lie in [0, 1], got {self}")

    def to_array(self) -> np.ndarray:
        return np.array([self.rho, self.phi, self.z])


# -- normalized cylindrical coordinates ---------------------------------------


def normalize_position(rho, phi, z, spec: PolarGridSpec):
    rho_n = (np.asarray(rho, dtype=np.float64) - spec.r_min) / (spec.r_max - spec.r_min)
    phi_n = (np.asarray(phi, dtype=np.float64) + np.pi) / (2.0 * np.pi)
    z_n = (np.asarray(z, dtype=np.float64) - spec.z_min) / (spec.z_max - spec.z_min)
    return rho_n, phi_n, z_n


def denormalize_position(rho_n, phi_n, z_n, spec: PolarGridSpec):
    rho = np.asarray(rho_n, dtype=np.float64) * (spec.r_max - spec.r_min) + spec.r_min
    phi = wrap_angle(np.asarray(phi_n, dtype=np.float64) * 2.0 * np.pi - np.pi)
    z = np.asarray(z_n, dtype=np.float64) * (spec.z_max - spec.z_min) + spec.z_min
    return rho, phi, z


def _wrap_unit(x):
    """Wrap a normalized azimuth difference into [-0.5, 0.5)."""
    return np.mod(np.asarray(x, dtype=np.float64) + 0.5, 1.0) - 0.5


# -- target encoding -----------------------------------------------------------


def encode_targets_array(boxes: np.ndarray, refs: np.ndarray, spec: PolarGridSpec) -> np.ndarray:
    """Vectorized encoding.

    ``boxes`` columns: rho, phi, z, l, w, h, theta_ori, v_abs, theta_v.
    ``refs`` columns: normalized rho, phi, z.  Returns (n, 10) targets.
    """
    b = np.asarray(boxes, dtype=np.float64)
    r = np.asarray(refs, dtype=np.float64)
    if np.any(b[:, 3:6] <= 0):
        raise ValueError("box sizes must be positive")
    rho_n, phi_n, z_n = normalize_position(b[:, 0], b[:, 1], b[:, 2], spec)
    rel_yaw = b[:, 6] - b[:, 1]
    rel_vel = b[:, 8] - b[:, 1]
    return np.stack(
        [
            rho_n - r[:, 0],
            _wrap_unit(phi_n - r[:, 1]),
            z_n - r[:, 2],
            np.log(b[:, 3]),
            np.log(b[:, 4]),
            np.log(b[:, 5]),
            np.sin(rel_yaw),
            np.cos(rel_yaw),
            b[:, 7] * np.sin(rel_vel),
            b[:, 7] * np.cos(rel_vel),
        ],
        axis=-1,
    )


def decode_prediction_array(targets: np.ndarray, refs: np.ndarray, spec: PolarGridSpec) -> np.ndarray:
    """Inverse of ``encode_targets_array``; returns (n, 9) box parameters."""
    t = np.asarray(targets, dtype=np.float64)
    r = np.asarray(refs, dtype=np.float64)
    rho, phi, z = denormalize_position(r[:, 0] + t[:, 0], r[:, 1] + t[:, 1], r[:, 2] + t[:, 2], spec)
    rho = np.maximum(rho, 0.0)
    yaw = wrap_angle(np.arctan2(t[:, 6], t[:, 7]) + phi)
    speed = np.hypot(t[:, 8], t[:, 9])
    vel_dir = wrap_angle(np.arctan2(t[:, 8], t[:, 9]) + phi)
    return np.stack(
        [rho, phi, z, np.exp(t[:, 3]), np.exp(t[:, 4]), np.exp(t[:, 5]), yaw, speed, vel_dir], axis=-1
    )


def box_to_row(box: PolarBox) -> np.ndarray:
    return np.array([box.rho, box.phi, box.z, box.l, box.w, box.h, box.theta_ori, box.v_abs, box.theta_v])


def encode_targets(box: PolarBox, ref: ReferencePoint, spec: PolarGridSpec) -> RegressionTarget:
    row = encode_targets_array(box_to_row(box)[None], ref.to_array()[None], spec)[0]
    return RegressionTarget.from_array(row)


def decode_prediction(t: RegressionTarget, ref: ReferencePoint, spec: PolarGridSpec, scores=(), label=None) -> PolarBox:
    row = decode_prediction_array(t.to_array()[None], ref.to_array()[None], spec)[0]
    return PolarBox(*(float(v) for v in row), scores=tuple(scores), label=label)


def refine_reference(ref, offsets):
    """Update normalized references by (d_rho, d_phi, d_z) offsets.

    Radius and height go through logit/sigmoid so they saturate inside
    [0, 1]; azimuth wraps modulo 1.  Accepts a ReferencePoint or (n, 3) arrays.
    """
    single = isinstance(ref, ReferencePoint)
    r = ref.to_array()[None] if single else np.asarray(ref, dtype=np.float64)
    d = np.asarray(offsets, dtype=np.float64).reshape(r.shape)
    out = np.empty_like(r)
    for c in (0, 2):
        p = np.clip(r[:, c], _REF_EPS, 1.0 - _REF_EPS)
        out[:, c] = 1.0 / (1.0 + np.exp(-(np.log(p) - np.log1p(-p) + d[:, c])))
    out[:, 1] = np.mod(r[:, 1] + d[:, 1], 1.0)
    if single:
        return ReferencePoint(*(float(v) for v in out[0]))
    return out


# -- decoder -------------------------------------------------------------------


@dataclass(frozen=True)
class DecoderLayerParams:
    self_attn: AttentionParams
    norm1: NormParams
    cross_attn: DeformAttnParams
    norm2: NormParams
    ffn: FeedForwardParams
    norm3: NormParams
    cls_w: np.ndarray
    cls_b: np.ndarray
    reg_w: np.ndarray
    reg_b: np.ndarray

    @classmethod
    def random(cls, rng, d_model: int, heads: int, levels: int, points: int, num_classes: int = NUM_CLASSES):
        std = 1.0 / np.sqrt(d_model)
        return cls(
            self_attn=AttentionParams.random(rng, d_model, heads),
            norm1=NormParams.identity(d_model),
            cross_attn=DeformAttnParams.random(rng, d_model, heads, levels, points),
            norm2=NormParams.identity(d_model),
            ffn=FeedForwardParams.random(rng, d_model),
            norm3=NormParams.identity(d_model),
            cls_w=rng.normal(0.0, std, (d_model, num_classes)),
            cls_b=np.zeros(num_classes),
            reg_w=rng.normal(0.0, 0.1 * std, (d_model, TARGET_DIM)),
            reg_b=np.zeros(TARGET_DIM),
        )


@dataclass(frozen=True)
class DecoderLayerOutput:
    scores: np.ndarray  # (Q, O) in (0, 1)
    targets: np.ndarray  # (Q, 10)
    refs: np.ndarray  # (Q, 3) normalized references the targets are relative to


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def decoder_forward(queries, refs, maps, layers, self_attention: bool = True) -> list[DecoderLayerOutput]:
    """Run the polar decoder; one output record per layer."""
    x = np.asarray(queries, dtype=np.float64)
    r = np.asarray(refs, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("need at least one query")
    if r.shape != (x.shape[0], 3):
        raise ValueError(f"refs must be (Q, 3), got {r.shape}")
    if not layers:
        raise ValueError("decoder needs at least one layer")
    outputs = []
    for layer in layers:
        if self_attention:
            x = layer.norm1(x + multi_head_attention(x, x, x, layer.self_attn))
        # BEV projection of the cylindrical reference: column <- azimuth, row <- radius
        bev_ref = np.stack([r[:, 1], r[:, 0]], axis=-1)
        x = layer.norm2(x + ms_deformable_attention_batch(x, bev_ref, maps, layer.cross_attn))
        x = layer.norm3(x + layer.ffn(x))
        scores = sigmoid(x @ layer.cls_w + layer.cls_b)
        targets = x @ layer.reg_w + layer.reg_b
        outputs.append(DecoderLayerOutput(scores=scores, targets=targets, refs=r))
        r = refine_reference(r, targets[:, :3])
    return outputs


# -- losses --------------------------------------------------------------------


def focal_loss(scores, labels, alpha: float = 0.25, gamma: float = 2.0) -> float:
    """Sigmoid focal loss summed over classes, averaged over queries.

    ``labels`` holds a class index per query, or -1 / None for background.
    """
    p = np.clip(np.asarray(scores, dtype=np.float64), PROB_CLAMP, 1.0 - PROB_CLAMP)
    if p.ndim == 1:
        p = p[None]
    n_q, n_cls = p.shape
    labels = [-1 if lab is None else int(lab) for lab in np.atleast_1d(np.asarray(labels, dtype=object))]
    if len(labels) != n_q:
        raise ValueError(f"{len(labels)} labels for {n_q} queries")
    target = np.zeros_like(p)
    for q, lab in enumerate(labels):
        if lab >= 0:
            target[q, lab] = 1.0
    pos = -alpha * (1.0 - p) ** gamma * np.log(p)
    neg = -(1.0 - alpha) * p**gamma * np.log(1.0 - p)
    loss = np.where(target == 1.0, pos, neg)
    return float(loss.sum(axis=1).mean())


def _box_terms(box: PolarBox, mode: str) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    sizes = np.log([box.l, box.w, box.h])
    if mode == "cartesian":
        position = np.array([box.x, box.y, box.z])
        orientation = np.array([math.sin(box.theta_ori), math.cos(box.theta_ori)])
        velocity = np.array([box.vx, box.vy])
    elif mode == "polar":
        position = np.array([box.rho, box.phi, box.z])
        rel = box.theta_ori - box.phi
        orientation = np.array([math.sin(rel), math.cos(rel)])
        rel_v = box.theta_v - box.phi
        velocity = box.v_abs * np.array([math.sin(rel_v), math.cos(rel_v)])
    else:
        raise ValueError(f"unknown loss mode {mode!r}")
    return position, sizes, orientation, velocity


def localization_terms(pred: PolarBox, gt: PolarBox, mode: str = "cartesian") -> dict[str, float]:
    names = ("position", "size", "orientation", "velocity")
    return {
        name: float(np.abs(a - b).sum())
        for name, a, b in zip(names, _box_terms(pred, mode), _box_terms(gt, mode))
    }


def localization_loss(pred: PolarBox, gt: PolarBox, mode: str = "cartesian") -> float:
    """L1 regression loss; ``mode='polar'`` exists only to expose the azimuth wrap."""
    return sum(localization_terms(pred, gt, mode).values())


def greedy_match(preds, gts) -> list[tuple[int, int]]:
    """One-to-one nearest-center matching in Cartesian BEV, closest pairs first."""
    if not preds or not gts:
        return []
    p = np.array([[b.x, b.y] for b in preds])
    g = np.array([[b.x, b.y] for b in gts])
    dist = np.linalg.norm(p[:, None, :] - g[None, :, :], axis=-1)
    order = np.argsort(dist, axis=None, kind="stable")
    used_p, used_g, pairs = set(), set(), []
    for flat in order:
        i, j = np.unravel_index(flat, dist.shape)
        if i in used_p or j in used_g:
            continue
        used_p.add(i)
        used_g.add(j)
        pairs.append((int(i), int(j)))
    return pairs


def detection_loss(preds, scores, gts, mode: str = "cartesian", alpha: float = 0.25, gamma: float = 2.0) -> dict:
    """Desk-scale loss harness: greedy matching, focal classification, L1 regression."""
    pairs = greedy_match(list(preds), list(gts))
    labels = [-1] * len(preds)
    reg = 0.0
    for i, j in pairs:
        labels[i] = gts[j].label if gts[j].label is not None else -1
        reg += localization_loss(preds[i], gts[j], mode)
    cls = focal_loss(scores, labels, alpha, gamma) if len(preds) else 0.0
    return {"classification": cls, "regression": reg / max(len(pairs), 1), "matches": len(pairs)}
