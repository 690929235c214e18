"""Model parameter sets: seeded initialization and the on-disk archive.

An archive is a directory holding one PBEV file per tensor plus
``manifest.json`` listing every tensor's name, file, shape and role.
Parameters are rounded to float32 at creation so that saving and reloading
an archive is lossless.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..attention import BevEncoderLayerParams, CrossPlaneLayerParams
from ..head import DecoderLayerParams
from ..scene_sim import feature_size
from .config import RunConfig
from .tensor_io import load_tensor, save_tensor

MANIFEST = "manifest.json"
ARCHIVE_FORMAT = "pbev-archive"


@dataclass(frozen=True)
class ScaleEncoderParams:
    queries: np.ndarray  # (R_u, d) polar-ray queries shared by all columns and cameras
    key_pe: np.ndarray  # (H_u, d) learned key PE, used only with pe_mode="learned"
    query_pe: np.ndarray  # (R_u, d)
    layers: tuple[CrossPlaneLayerParams, ...]


@dataclass(frozen=True)
class ModelParams:
    cross_plane: tuple[ScaleEncoderParams, ...]
    bev_encoder: tuple[BevEncoderLayerParams, ...]
    query_embed: np.ndarray  # (Q, d)
    ref_init: np.ndarray  # (Q, 3) logits of the initial normalized references
    decoder: tuple[DecoderLayerParams, ...]

    def initial_references(self) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.ref_init))


def init_params(config: RunConfig, seed: int) -> ModelParams:
    m = config.model
    rng = np.random.default_rng(seed)
    levels = len(config.grid)
    scales = []
    for u, level in enumerate(config.grid.levels):
        rows, _ = feature_size(config.scene, u)
        scales.append(
            ScaleEncoderParams(
                queries=rng.normal(0.0, 1.0, (level.radial_bins, m.d_model)),
                key_pe=rng.normal(0.0, 0.1, (rows, m.d_model)),
                query_pe=rng.normal(0.0, 0.1, (level.radial_bins, m.d_model)),
                layers=tuple(
                    CrossPlaneLayerParams.random(rng, m.d_model, m.heads) for _ in range(m.cross_plane_layers)
                ),
            )
        )
    params = ModelParams(
        cross_plane=tuple(scales),
        bev_encoder=tuple(
            BevEncoderLayerParams.random(rng, m.d_model, m.deform_heads, levels, m.deform_points)
            for _ in range(m.bev_layers)
        ),
        query_embed=rng.normal(0.0, 1.0, (m.num_queries, m.d_model)),
        ref_init=rng.normal(0.0, 1.0, (m.num_queries, 3)),
        decoder=tuple(
            DecoderLayerParams.random(rng, m.d_model, m.deform_heads, levels, m.deform_points, m.num_classes)
            for _ in range(m.decoder_layers)
        ),
    )
    return map_arrays(params, lambda a: a.astype(np.float32).astype(np.float64))


# -- flattening ------------------------------------------------------------------


def map_arrays(obj, fn):
    """Rebuild a nested dataclass/tuple structure with ``fn`` applied to every array."""
    if isinstance(obj, np.ndarray):
        return fn(obj)
    if dataclasses.is_dataclass(obj):
        return dataclasses.replace(
            obj, **{f.name: map_arrays(getattr(obj, f.name), fn) for f in dataclasses.fields(obj)}
        )
    if isinstance(obj, tuple):
        return tuple(map_arrays(v, fn) for v in obj)
    return obj


def flatten_params(obj, prefix: str = "") -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    if isinstance(obj, np.ndarray):
        out[prefix] = obj
    elif dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            out.update(flatten_params(getattr(obj, f.name), f"{prefix}.{f.name}" if prefix else f.name))
    elif isinstance(obj, tuple):
        for i, v in enumerate(obj):
            out.update(flatten_params(v, f"{prefix}.{i}"))
    return out


def unflatten_params(template, arrays: dict[str, np.ndarray], prefix: str = ""):
    """Fill ``template``'s arrays from ``arrays`` by dotted name, checking shapes."""
    if isinstance(template, np.ndarray):
        if prefix not in arrays:
            raise KeyError(f"archive lacks tensor {prefix!r}")
        new = np.asarray(arrays[prefix], dtype=np.float64)
        if new.shape != template.shape:
            raise ValueError(f"tensor {prefix}: shape {new.shape} != expected {template.shape}")
        return new
    if dataclasses.is_dataclass(template):
        return dataclasses.replace(
            template,
            **{
                f.name: unflatten_params(getattr(template, f.name), arrays, f"{prefix}.{f.name}" if prefix else f.name)
                for f in dataclasses.fields(template)
            },
        )
    if isinstance(template, tuple):
        return tuple(unflatten_params(v, arrays, f"{prefix}.{i}") for i, v in enumerate(template))
    return template


def tensor_role(name: str) -> str:
    leaf = name.rsplit(".", 1)[-1]
    if leaf in ("gamma", "beta"):
        return "norm"
    if leaf in ("queries", "query_embed", "key_pe", "query_pe"):
        return "embedding"
    if leaf == "ref_init":
        return "reference"
    if leaf.startswith("b") or leaf.endswith("_b"):
        return "bias"
    return "weight"


def save_params(path, params: ModelParams, config: RunConfig) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    entries = []
    for name, arr in sorted(flatten_params(params).items()):
        fname = f"{name}.pbev"
        save_tensor(root / fname, arr)
        entries.append({"name": name, "file": fname, "shape": list(arr.shape), "role": tensor_role(name)})
    manifest = {
        "format": ARCHIVE_FORMAT,
        "version": 1,
        "model": dataclasses.asdict(config.model),
        "grid": config.grid.to_dict(),
        "tensors": entries,
    }
    (root / MANIFEST).write_text(json.dumps(manifest, indent=2))


def load_params(path, config: RunConfig) -> ModelParams:
    root = Path(path)
    manifest = json.loads((root / MANIFEST).read_text())
    if manifest.get("format") != ARCHIVE_FORMAT:
        raise ValueError(f"{root} is not a parameter archive")
    arrays = {e["name"]: load_tensor(root / e["file"], expected_shape=e["shape"]) for e in manifest["tensors"]}
    return unflatten_params(init_params(config, seed=0), arrays)
