"""Fuse per-camera polar ray maps into one BEV polar map per scale.

Every BEV cell is represented by its column of cylindrical samples.  Each
sample is projected into every camera; visible samples read the camera's ray
map bilinearly at (image column, distance from the camera), and the cell is
the visibility-weighted mean of those reads.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._sampling import bilinear_at_index
from .geometry import CameraView, CylindricalPoint, check_rig, project_cylindrical_array
from .polar_grid import PolarGridSpec, RayGridSpec, generate_cylindrical_points, normalize_indices

DEPTH_EPS = 1e-3


@dataclass(frozen=True)
class PolarBEVMap:
    """Aggregated (R, N, C) map with its grid spec and a cell coverage mask."""

    data: np.ndarray
    spec: PolarGridSpec
    coverage: np.ndarray

    def __post_init__(self):
        if self.data.shape[:2] != self.spec.shape:
            raise ValueError(f"map shape {self.data.shape[:2]} does not match spec {self.spec.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("BEV map has non-finite entries")


def visibility_array(rho, phi, z, cam: CameraView, depth_eps: float = DEPTH_EPS):
    """Binary visibility of cylindrical samples in ``cam`` plus their pixel coordinates."""
    x, y, s, _ = project_cylindrical_array(rho, phi, z, cam)
    k = cam.intrinsics
    with np.errstate(invalid="ignore"):
        vis = (s > depth_eps) & (x >= 0) & (x <= k.width) & (y >= 0) & (y <= k.height)
    return vis, x, y


def visibility(p: CylindricalPoint, cam: CameraView) -> int:
    vis, _, _ = visibility_array(p.rho, p.phi, p.z, cam)
    return int(vis)


def bilinear_sample(grid, x_norm, y_norm):
    """Sample an (R, W, C) map at normalized (x -> W axis, y -> R axis) coordinates.

    Coordinates outside [0, 1] are clamped.
    """
    grid = np.asarray(grid, dtype=np.float64)
    rows, cols = grid.shape[:2]
    x = np.clip(np.asarray(x_norm, dtype=np.float64), 0.0, 1.0)
    y = np.clip(np.asarray(y_norm, dtype=np.float64), 0.0, 1.0)
    return bilinear_at_index(grid, x * (cols - 1), y * (rows - 1))


def camera_bev_distance(rho, phi, cam: CameraView):
    """Distance in the ground plane between samples and the camera center."""
    origin = cam.extrinsics.origin
    return np.hypot(rho * np.sin(phi) - origin[0], rho * np.cos(phi) - origin[1])


def aggregate_bev(per_camera_maps, rig, spec: PolarGridSpec, ray: RayGridSpec | None = None) -> PolarBEVMap:
    """Visibility-weighted fusion of N per-camera (R_u, W_u, C) ray maps."""
    maps = [np.asarray(m, dtype=np.float64) for m in per_camera_maps]
    rig = list(rig)
    check_rig(rig)
    if len(maps) != len(rig):
        raise ValueError(f"{len(maps)} ray maps for {len(rig)} cameras")
    if not maps:
        raise ValueError("need at least one camera")
    shape = maps[0].shape
    if len(shape) != 3 or any(m.shape != shape for m in maps):
        raise ValueError(f"ray maps must share one (R, W, C) shape, got {[m.shape for m in maps]}")
    if ray is None:
        ray = RayGridSpec(range_bins=shape[0], width=shape[1], r_min=spec.r_min, r_max=spec.r_max)
    if (ray.range_bins, ray.width) != shape[:2]:
        raise ValueError(f"ray spec {ray} does not match map shape {shape}")

    pts = generate_cylindrical_points(spec)
    rho, phi, z = pts[..., 0], pts[..., 1], pts[..., 2]
    acc = np.zeros(spec.shape + (shape[2],))
    count = np.zeros(spec.shape)
    for cam, ray_map in zip(rig, maps):
        vis, x_img, _ = visibility_array(rho, phi, z, cam)
        r_cam = camera_bev_distance(rho[..., 0], phi[..., 0], cam)
        idx = np.nonzero(vis)
        if idx[0].size == 0:
            continue
        x_bar, r_bar, _ = normalize_indices(x_img[idx], r_cam[idx[:2]], cam.intrinsics, ray)
        samples = bilinear_sample(ray_map, x_bar, r_bar)
        # idx is lexicographic in (i, j, k): per-cell accumulation order is fixed
        np.add.at(acc, idx[:2], samples)
        np.add.at(count, idx[:2], 1.0)
    coverage = count > 0
    data = np.zeros_like(acc)
    data[coverage] = acc[coverage] / count[coverage][:, None]
    return PolarBEVMap(data=data, spec=spec, coverage=coverage)


def write_coverage_pgm(path, coverage) -> None:
    """Write a coverage mask as a binary (P5) portable graymap, 255 = covered."""
    mask = np.asarray(coverage, dtype=bool)
    rows, cols = mask.shape
    pixels = np.where(mask, 255, 0).astype(np.uint8)
    with open(Path(path), "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(pixels.tobytes())
