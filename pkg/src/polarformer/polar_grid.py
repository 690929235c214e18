"""Multi-scale polar BEV grid specifications and the cylindrical sample lattice."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .geometry import CameraIntrinsics

DEFAULT_RESOLUTIONS = ((64, 256), (32, 128), (16, 64))
DEFAULT_R_RANGE = (1.0, 51.0)
DEFAULT_Z_RANGE = (-3.0, 5.0)
DEFAULT_HEIGHT_SAMPLES = 8


@dataclass(frozen=True)
class PolarGridSpec:
    radial_bins: int
    azimuth_bins: int
    height_samples: int = DEFAULT_HEIGHT_SAMPLES
    r_min: float = DEFAULT_R_RANGE[0]
    r_max: float = DEFAULT_R_RANGE[1]
    z_min: float = DEFAULT_Z_RANGE[0]
    z_max: float = DEFAULT_Z_RANGE[1]
    scale_id: int = 1

    def __post_init__(self):
        if min(self.radial_bins, self.azimuth_bins, self.height_samples) < 1:
            raise ValueError(f"bin counts must be >= 1: {self}")
        if not (0 <= self.r_min < self.r_max):
            raise ValueError(f"need 0 <= r_min < r_max, got [{self.r_min}, {self.r_max}]")
        if not self.z_min < self.z_max:
            raise ValueError(f"need z_min < z_max, got [{self.z_min}, {self.z_max}]")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.radial_bins, self.azimuth_bins)

    def radii(self) -> np.ndarray:
        dr = (self.r_max - self.r_min) / self.radial_bins
        return self.r_min + (np.arange(self.radial_bins) + 0.5) * dr

    def azimuths(self) -> np.ndarray:
        dphi = 2.0 * np.pi / self.azimuth_bins
        return -np.pi + (np.arange(self.azimuth_bins) + 0.5) * dphi

    def heights(self) -> np.ndarray:
        dz = (self.z_max - self.z_min) / self.height_samples
        return self.z_min + (np.arange(self.height_samples) + 0.5) * dz

    def to_dict(self) -> dict:
        return {
            "radial_bins": self.radial_bins,
            "azimuth_bins": self.azimuth_bins,
            "height_samples": self.height_samples,
            "r_min": self.r_min,
            "r_max": self.r_max,
            "z_min": self.z_min,
            "z_max": self.z_max,
            "scale_id": self.scale_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolarGridSpec":
        return cls(**d)


@dataclass(frozen=True)
class MultiScaleGridSpec:
    levels: tuple[PolarGridSpec, ...]
    feature_dim: int = 32

    def __post_init__(self):
        levels = tuple(self.levels)
        object.__setattr__(self, "levels", levels)
        if not levels:
            raise ValueError("at least one level required")
        for fine, coarse in zip(levels, levels[1:]):
            if coarse.radial_bins > fine.radial_bins or coarse.azimuth_bins > fine.azimuth_bins:
                raise ValueError("levels must be ordered finest to coarsest")
        extents = {(lv.r_min, lv.r_max, lv.z_min, lv.z_max) for lv in levels}
        if len(extents) != 1:
            raise ValueError("all levels must share radial and height extents")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be positive")

    def __len__(self) -> int:
        return len(self.levels)

    def __getitem__(self, u: int) -> PolarGridSpec:
        return self.levels[u]

    def to_dict(self) -> dict:
        return {"feature_dim": self.feature_dim, "levels": [lv.to_dict() for lv in self.levels]}

    @classmethod
    def from_dict(cls, d: dict) -> "MultiScaleGridSpec":
        return cls(
            levels=tuple(PolarGridSpec.from_dict(lv) for lv in d["levels"]),
            feature_dim=int(d.get("feature_dim", 32)),
        )


@dataclass(frozen=True)
class RayGridSpec:
    range_bins: int
    width: int
    r_min: float = DEFAULT_R_RANGE[0]
    r_max: float = DEFAULT_R_RANGE[1]

    def __post_init__(self):
        if self.range_bins < 1 or self.width < 1:
            raise ValueError(f"range_bins and width must be >= 1: {self}")
        if not self.r_min < self.r_max:
            raise ValueError("need r_min < r_max")


def default_multiscale_spec(
    feature_dim: int = 32,
    height_samples: int = DEFAULT_HEIGHT_SAMPLES,
    r_range=DEFAULT_R_RANGE,
    z_range=DEFAULT_Z_RANGE,
) -> MultiScaleGridSpec:
    levels = tuple(
        PolarGridSpec(
            radial_bins=r,
            azimuth_bins=n,
            height_samples=height_samples,
            r_min=r_range[0],
            r_max=r_range[1],
            z_min=z_range[0],
            z_max=z_range[1],
            scale_id=u + 1,
        )
        for u, (r, n) in enumerate(DEFAULT_RESOLUTIONS)
    )
    return MultiScaleGridSpec(levels=levels, feature_dim=feature_dim)


def ray_spec_for(level: PolarGridSpec, width: int) -> RayGridSpec:
    """Ray grid matching a BEV level: one range bin per radial bin."""
    return RayGridSpec(range_bins=level.radial_bins, width=width, r_min=level.r_min, r_max=level.r_max)


def generate_cylindrical_points(spec: PolarGridSpec) -> np.ndarray:
    """Bin-center lattice of shape ``(R, N, Z, 3)`` holding ``(rho, phi, z)``."""
    rho, phi, z = np.meshgrid(spec.radii(), spec.azimuths(), spec.heights(), indexing="ij")
    return np.stack([rho, phi, z], axis=-1)


def normalize_indices(x_img, r_cam, k: CameraIntrinsics, ray: RayGridSpec):
    """Normalized (ray column, radius) indices and an in-bounds flag."""
    x_bar = np.asarray(x_img, dtype=np.float64) / k.width
    r_bar = (np.asarray(r_cam, dtype=np.float64) - ray.r_min) / (ray.r_max - ray.r_min)
    in_bounds = (x_bar >= 0) & (x_bar <= 1) & (r_bar >= 0) & (r_bar <= 1)
    if np.ndim(in_bounds) == 0:
        return float(x_bar), float(r_bar), bool(in_bounds)
    return x_bar, r_bar, in_bounds


def with_height_samples(spec: MultiScaleGridSpec, height_samples: int) -> MultiScaleGridSpec:
    return MultiScaleGridSpec(
        levels=tuple(replace(lv, height_samples=height_samples) for lv in spec.levels),
        feature_dim=spec.feature_dim,
    )
