"""End-to-end forward pass: synthetic features to polar detections.

Kernels compute in float64, but every stage hands its output on as float32
values, so writing an intermediate tensor to disk and reading it back is an
exact no-op for the following stage.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..alignment import PolarBEVMap, aggregate_bev
from ..attention import bev_encoder_forward, cross_plane_encode
from ..head import PolarBox, decode_prediction_array, decoder_forward
from ..polar_grid import ray_spec_for
from ..scene_sim import SyntheticScene, rasterize_scene_features
from .config import RunConfig
from .params import ModelParams

BUCKETS = ("near", "medium", "far")


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
        self.stage = stage


def _stage(name):
    def wrap(fn):
        def run(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except StageError:
                raise
            except Exception as exc:  # noqa: BLE001 - relabel and re-raise
                raise StageError(name, exc) from exc

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run

    return wrap


def to_stage(a) -> np.ndarray:
    """Round to the float32 handoff precision, computing onward in float64."""
    return np.asarray(a, dtype=np.float32).astype(np.float64)


def range_bucket(rho: float, near_max: float = 18.0, far_min: float = 35.0) -> str:
    if rho < near_max:
        return "near"
    if rho > far_min:
        return "far"
    return "medium"


@dataclass(frozen=True)
class Detection:
    box: PolarBox
    matched: bool = False
    bucket: str = "near"

    def __post_init__(self):
        if self.bucket not in BUCKETS:
            raise ValueError(f"unknown range bucket {self.bucket!r}")

    def to_record(self) -> dict:
        b = self.box
        return {
            "class": b.label,
            "score": b.score,
            "rho": b.rho,
            "phi": b.phi,
            "z": b.z,
            "l": b.l,
            "w": b.w,
            "h": b.h,
            "yaw": b.theta_ori,
            "vx": b.vx,
            "vy": b.vy,
            "x": b.x,
            "y": b.y,
            "bucket": self.bucket,
            "matched": self.matched,
        }


@dataclass(frozen=True)
class ForwardResult:
    detections: list[Detection]
    aligned: list[PolarBEVMap]  # per scale, before the BEV encoder
    encoded: list[np.ndarray]  # per scale, after the BEV encoder


# -- stages -------------------------------------------------------------------


@_stage("rasterize")
def rasterize_stage(scene: SyntheticScene, config: RunConfig) -> list[np.ndarray]:
    return [
        to_stage(
            rasterize_scene_features(
                scene, u, config.model.feature_encoding, config.grid.feature_dim, config.scene
            )
        )
        for u in range(len(config.grid))
    ]


@_stage("cross_plane")
def cross_plane_stage(features, params: ModelParams, config: RunConfig) -> list[np.ndarray]:
    """Per-camera polar-ray maps (N, R_u, W_u, C) for every scale."""
    out = []
    for u, (f, sp) in enumerate(zip(features, params.cross_plane)):
        level = config.grid[u]
        # (N, H, W, C) -> columns (N, W, H, C); rays come back as (N, W, R, C)
        rays = cross_plane_encode(
            np.swapaxes(f, 1, 2),
            sp.queries,
            sp.layers,
            pe_mode=config.model.pe_mode,
            pe_tables=(sp.key_pe, sp.query_pe),
            ray_radii=level.radii(),
        )
        out.append(to_stage(np.swapaxes(rays, 1, 2)))
    return out


@_stage("alignment")
def alignment_stage(ray_maps, scene: SyntheticScene, config: RunConfig) -> list[PolarBEVMap]:
    bev = []
    for u, maps in enumerate(ray_maps):
        level = config.grid[u]
        ray = ray_spec_for(level, maps.shape[2])
        m = aggregate_bev(list(maps), scene.rig, level, ray)
        bev.append(PolarBEVMap(to_stage(m.data), m.spec, m.coverage))
    return bev


@_stage("bev_encoder")
def bev_encoder_stage(bev_maps, params: ModelParams) -> list[np.ndarray]:
    data = [np.asarray(m.data if isinstance(m, PolarBEVMap) else m, dtype=np.float64) for m in bev_maps]
    return [to_stage(m) for m in bev_encoder_forward(data, params.bev_encoder)]


@_stage("decoder")
def decoder_stage(encoded, params: ModelParams, config: RunConfig) -> list[Detection]:
    outputs = decoder_forward(
        params.query_embed,
        params.initial_references(),
        encoded,
        params.decoder,
        self_attention=config.model.decoder_self_attention,
    )
    last = outputs[-1]
    rows = decode_prediction_array(last.targets, last.refs, config.grid[0])
    dets = []
    for scores, row in zip(last.scores, rows):
        box = PolarBox(*(float(v) for v in row), scores=tuple(float(s) for s in scores), label=int(np.argmax(scores)))
        dets.append(Detection(box=box, bucket=range_bucket(box.rho, config.eval.near_max, config.eval.far_min)))
    return dets


def run_forward(scene: SyntheticScene, config: RunConfig, params: ModelParams) -> ForwardResult:
    if len(params.cross_plane) != len(config.grid):
        raise StageError("setup", ValueError("parameter archive and grid disagree on the number of scales"))
    features = rasterize_stage(scene, config)
    rays = cross_plane_stage(features, params, config)
    aligned = alignment_stage(rays, scene, config)
    encoded = bev_encoder_stage(aligned, params)
    detections = decoder_stage(encoded, params, config)
    return ForwardResult(detections=detections, aligned=aligned, encoded=encoded)


# -- detection files --------------------------------------------------------------


def write_detections(path, detections) -> None:
    with open(Path(path), "w", encoding="utf-8") as fh:
        for det in detections:
            fh.write(json.dumps(det.to_record(), sort_keys=True) + "\n")


def read_detections(path) -> list[Detection]:
    dets = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        r = json.loads(line)
        speed = float(np.hypot(r["vx"], r["vy"]))
        box = PolarBox(
            rho=r["rho"],
            phi=r["phi"],
            z=r["z"],
            l=r["l"],
            w=r["w"],
            h=r["h"],
            theta_ori=r["yaw"],
            v_abs=speed,
            theta_v=float(np.arctan2(r["vx"], r["vy"])),
            scores=(r["score"],),
            label=r["class"],
        )
        dets.append(Detection(box=box, matched=bool(r.get("matched", False)), bucket=r.get("bucket", "near")))
    return dets
