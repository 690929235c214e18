"""Run configuration loaded from JSON; every field has a desk-scale default."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..attention import PE_MODES
from ..head import NUM_CLASSES
from ..polar_grid import MultiScaleGridSpec, default_multiscale_spec
from ..scene_sim import ENCODINGS, SceneConfig


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 32
    heads: int = 4
    deform_heads: int = 4
    deform_points: int = 4
    cross_plane_layers: int = 3
    bev_layers: int = 6
    decoder_layers: int = 6
    num_queries: int = 100
    num_classes: int = NUM_CLASSES
    pe_mode: str = "fixed-sine"
    decoder_self_attention: bool = True
    feature_encoding: str = "gaussian-splat"

    def __post_init__(self):
        counts = (self.d_model, self.heads, self.deform_heads, self.deform_points, self.num_queries, self.num_classes)
        if min(counts) < 1 or self.decoder_layers < 1:
            raise ValueError(f"model counts must be positive: {self}")
        if min(self.cross_plane_layers, self.bev_layers) < 0:
            raise ValueError("layer counts must be >= 0")
        if self.d_model % self.heads or self.d_model % self.deform_heads:
            raise ValueError("d_model must be divisible by the head counts")
        if self.d_model % 2:
            raise ValueError("d_model must be even for sine positional encoding")
        if self.pe_mode not in PE_MODES:
            raise ValueError(f"pe_mode must be one of {PE_MODES}")
        if self.feature_encoding not in ENCODINGS:
            raise ValueError(f"feature_encoding must be one of {ENCODINGS}")


@dataclass(frozen=True)
class EvalConfig:
    thresholds: tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)
    near_max: float = 18.0
    far_min: float = 35.0


@dataclass(frozen=True)
class RunConfig:
    grid: MultiScaleGridSpec = field(default_factory=default_multiscale_spec)
    scene: SceneConfig = field(default_factory=SceneConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    scene_seed: int = 0
    param_seed: int = 0
    loss_mode: str = "cartesian"
    output_dir: str = "out"

    def __post_init__(self):
        if self.grid.feature_dim != self.model.d_model:
            raise ValueError(f"grid feature_dim {self.grid.feature_dim} != d_model {self.model.d_model}")
        if self.loss_mode not in ("cartesian", "polar"):
            raise ValueError(f"unknown loss_mode {self.loss_mode!r}")

    def to_dict(self) -> dict:
        return {
            "grid": self.grid.to_dict(),
            "scene": self.scene.to_dict(),
            "model": asdict(self.model),
            "eval": {**asdict(self.eval), "thresholds": list(self.eval.thresholds)},
            "scene_seed": self.scene_seed,
            "param_seed": self.param_seed,
            "loss_mode": self.loss_mode,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        model = ModelConfig(**d.get("model", {}))
        grid = (
            MultiScaleGridSpec.from_dict(d["grid"])
            if "grid" in d
            else default_multiscale_spec(feature_dim=model.d_model)
        )
        ev = dict(d.get("eval", {}))
        if "thresholds" in ev:
            ev["thresholds"] = tuple(float(t) for t in ev["thresholds"])
        return cls(
            grid=grid,
            scene=SceneConfig.from_dict(d.get("scene", {})),
            model=model,
            eval=EvalConfig(**ev),
            scene_seed=int(d.get("scene_seed", 0)),
            param_seed=int(d.get("param_seed", 0)),
            loss_mode=d.get("loss_mode", "cartesian"),
            output_dir=d.get("output_dir", "out"),
        )


def load_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig()
    return RunConfig.from_dict(json.loads(Path(path).read_text()))
