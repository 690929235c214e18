"""Deterministic synthetic surround-view scenes and idealized image features.

Stands in for the image backbone: every ground-truth box center is projected
into each camera and splatted as a class-coded feature.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .alignment import visibility_array
from .geometry import CameraExtrinsics, CameraIntrinsics, CameraView, check_rig, wrap_angle
from .head import NUM_CLASSES, PolarBox

ENCODINGS = ("one-hot-class", "gaussian-splat")


@dataclass(frozen=True)
class SceneConfig:
    num_cameras: int = 6
    image_width: float = 1600.0
    image_height: float = 900.0
    fx: float = 800.0
    fy: float = 800.0
    mount_radius: float = 0.5
    mount_height: float = 1.5
    yaw_offset: float = 0.0
    num_boxes: int = 8
    num_classes: int = NUM_CLASSES
    r_range: tuple[float, float] = (1.0, 51.0)
    z_range: tuple[float, float] = (-1.0, 1.0)
    feature_height: int = 56
    feature_width: int = 100
    splat_sigma: float = 1.0

    def __post_init__(self):
        if self.num_cameras < 1:
            raise ValueError("scene needs at least one camera")
        if self.num_boxes < 0:
            raise ValueError("num_boxes must be >= 0")
        if not self.r_range[0] < self.r_range[1] or not self.z_range[0] < self.z_range[1]:
            raise ValueError("empty box sampling range")
        if self.feature_height < 1 or self.feature_width < 1:
            raise ValueError("feature map must be at least 1x1")

    @classmethod
    def from_dict(cls, d: dict) -> "SceneConfig":
        d = dict(d)
        for key in ("r_range", "z_range"):
            if key in d:
                d[key] = tuple(d[key])
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


@dataclass(frozen=True)
class SyntheticScene:
    rig: tuple[CameraView, ...]
    boxes: tuple[PolarBox, ...] = field(default_factory=tuple)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "rig", tuple(self.rig))
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if not self.rig:
            raise ValueError("scene needs at least one camera")
        check_rig(self.rig)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "rig": [cam.to_dict() for cam in self.rig],
            "boxes": [box.to_dict() for box in self.boxes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticScene":
        return cls(
            rig=tuple(CameraView.from_dict(c) for c in d["rig"]),
            boxes=tuple(PolarBox.from_dict(b) for b in d["boxes"]),
            seed=int(d.get("seed", 0)),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "SyntheticScene":
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_rig(config: SceneConfig) -> tuple[CameraView, ...]:
    k = CameraIntrinsics(
        fx=config.fx,
        fy=config.fy,
        u0=config.image_width / 2.0,
        v0=config.image_height / 2.0,
        width=config.image_width,
        height=config.image_height,
    )
    rig = []
    for n in range(config.num_cameras):
        yaw = wrap_angle(config.yaw_offset + n * 2.0 * math.pi / config.num_cameras)
        pos = (
            config.mount_radius * math.sin(yaw),
            config.mount_radius * math.cos(yaw),
            config.mount_height,
        )
        rig.append(CameraView(k, CameraExtrinsics.from_yaw(yaw, pos), id=n + 1))
    return tuple(rig)


def generate_scene(seed: int, config: SceneConfig | None = None) -> SyntheticScene:
    config = config or SceneConfig()
    rng = np.random.default_rng(seed)
    boxes = []
    for _ in range(config.num_boxes):
        boxes.append(
            PolarBox(
                rho=float(rng.uniform(*config.r_range)),
                phi=float(rng.uniform(-math.pi, math.pi)),
                z=float(rng.uniform(*config.z_range)),
                l=float(rng.uniform(0.5, 5.0)),
                w=float(rng.uniform(0.5, 2.5)),
                h=float(rng.uniform(1.0, 3.0)),
                theta_ori=float(rng.uniform(-math.pi, math.pi)),
                v_abs=float(rng.uniform(0.0, 10.0)),
                theta_v=float(rng.uniform(-math.pi, math.pi)),
                label=int(rng.integers(config.num_classes)),
            )
        )
    return SyntheticScene(rig=build_rig(config), boxes=tuple(boxes), seed=seed)


def rotate_extrinsics(ext: CameraExtrinsics, dphi: float) -> CameraExtrinsics:
    """Extrinsics of a camera carried along by a world rotation phi -> phi + dphi."""
    c, s = math.cos(dphi), math.sin(dphi)
    # inverse of the world rotation that maps azimuth phi to phi + dphi
    inv = np.eye(4)
    inv[:2, :2] = [[c, -s], [s, c]]
    return CameraExtrinsics(ext.matrix @ inv)


def rotate_scene(scene: SyntheticScene, dphi: float) -> SyntheticScene:
    rig = tuple(replace(cam, extrinsics=rotate_extrinsics(cam.extrinsics, dphi)) for cam in scene.rig)
    boxes = tuple(
        replace(
            b,
            phi=b.phi + dphi,
            theta_ori=float(wrap_angle(b.theta_ori + dphi)),
            theta_v=float(wrap_angle(b.theta_v + dphi)),
        )
        for b in scene.boxes
    )
    return SyntheticScene(rig=rig, boxes=boxes, seed=scene.seed)


def feature_size(config: SceneConfig, level: int) -> tuple[int, int]:
    """(H_u, W_u) of pyramid level ``level`` (0-based); halves per level."""
    return (max(1, config.feature_height >> level), max(1, config.feature_width >> level))


def _splat_weights(col: float, row: float, shape, encoding: str, sigma: float):
    rows, cols = shape
    if encoding == "one-hot-class":
        c0 = min(int(math.floor(col)), cols - 1)
        r0 = min(int(math.floor(row)), rows - 1)
        fc, fr = col - c0, row - r0
        c1, r1 = min(c0 + 1, cols - 1), min(r0 + 1, rows - 1)
        out = [
            (r0, c0, (1 - fr) * (1 - fc)),
            (r0, c1, (1 - fr) * fc),
            (r1, c0, fr * (1 - fc)),
            (r1, c1, fr * fc),
        ]
        return [(r, c, w) for r, c, w in out if w > 0]
    if encoding == "gaussian-splat":
        reach = int(math.ceil(3 * sigma))
        rr = np.arange(max(0, int(row) - reach), min(rows, int(row) + reach + 2))
        cc = np.arange(max(0, int(col) - reach), min(cols, int(col) + reach + 2))
        g = np.exp(-((rr[:, None] - row) ** 2 + (cc[None, :] - col) ** 2) / (2 * sigma**2))
        g /= g.sum()
        return [(int(r), int(c), float(g[i, j])) for i, r in enumerate(rr) for j, c in enumerate(cc)]
    raise ValueError(f"unknown encoding {encoding!r}; expected one of {ENCODINGS}")


def rasterize_scene_features(
    scene: SyntheticScene,
    level: int = 0,
    encoding: str = "one-hot-class",
    feature_dim: int = 32,
    config: SceneConfig | None = None,
) -> np.ndarray:
    """Per-camera feature maps ``(N, H_u, W_u, C)`` for pyramid level ``level``.

    Image pixel x maps to feature column ``x / width * (W_u - 1)`` and likewise
    for rows, matching the ray-index normalization used by alignment.
    """
    config = config or SceneConfig()
    if encoding not in ENCODINGS:
        raise ValueError(f"unknown encoding {encoding!r}; expected one of {ENCODINGS}")
    shape = feature_size(config, level)
    maps = np.zeros((len(scene.rig), *shape, feature_dim))
    for n, cam in enumerate(scene.rig):
        k = cam.intrinsics
        for box in scene.boxes:
            vis, x_img, y_img = visibility_array(box.rho, box.phi, box.z, cam)
            if not vis:
                continue
            col = float(x_img) / k.width * (shape[1] - 1)
            row = float(y_img) / k.height * (shape[0] - 1)
            channel = (box.label or 0) % feature_dim
            for r, c, w in _splat_weights(col, row, shape, encoding, config.splat_sigma):
                maps[n, r, c, channel] += w
    return maps
