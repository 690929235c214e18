"""Pinhole camera model and transforms between camera, image and polar frames.

Frame conventions
-----------------
Ego / world frame: x lateral (right), y forward, z up, meters.
Camera frame: x right, y down, z along the optical axis (depth).
Azimuth: ``phi = atan2(x, forward)``, measured from ego-forward towards +x,
canonical interval [-pi, pi).

Extrinsics map world coordinates to camera coordinates.  A camera mounted at
the ego origin and looking along ego-forward therefore has the (proper)
rotation ``x -> x, z_up -> -y, forward -> z``; see ``CameraExtrinsics.from_yaw``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

DEGENERATE_DEPTH = 1e-12
_ORTHO_TOL = 1e-9


def wrap_angle(angle):
    """Wrap angles into [-pi, pi). Works on scalars and arrays."""
    raw = np.asarray(angle, dtype=np.float64)
    a = np.mod(raw + np.pi, 2.0 * np.pi) - np.pi
    # np.mod can return 2*pi for tiny negative inputs
    a = np.where(a >= np.pi, a - 2.0 * np.pi, a)
    # in-range angles pass through untouched
    a = np.where((raw >= -np.pi) & (raw < np.pi), raw, a)
    if np.ndim(a) == 0:
        return float(a)
    return a


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    u0: float
    v0: float
    width: float
    height: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (0 < self.u0 < self.width and 0 < self.v0 < self.height):
            raise ValueError(
                f"principal point ({self.u0}, {self.v0}) outside image "
                f"{self.width}x{self.height}"
            )

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.u0], [0.0, self.fy, self.v0], [0.0, 0.0, 1.0]]
        )

    @property
    def horizontal_fov(self) -> float:
        """Full horizontal field of view (radians) for a centered principal point."""
        return math.atan(self.u0 / self.fx) + math.atan((self.width - self.u0) / self.fx)

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "u0": self.u0,
            "v0": self.v0,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(**{k: float(d[k]) for k in ("fx", "fy", "u0", "v0", "width", "height")})


@dataclass(frozen=True)
class CameraExtrinsics:
    """Rigid world->camera transform stored as a 4x4 matrix."""

    matrix: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        m = np.array(self.matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise ValueError(f"extrinsics must be 4x4, got {m.shape}")
        if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
            raise ValueError(f"extrinsics last row must be (0,0,0,1), got {m[3]}")
        rot = m[:3, :3]
        if not np.allclose(rot @ rot.T, np.eye(3), atol=_ORTHO_TOL, rtol=0):
            raise ValueError("extrinsics rotation block is not orthonormal")
        if abs(np.linalg.det(rot) - 1.0) > _ORTHO_TOL:
            raise ValueError("extrinsics rotation block must have determinant +1")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_yaw(cls, yaw: float, position=(0.0, 0.0, 0.0)) -> "CameraExtrinsics":
        """Camera at ``position`` (ego frame) looking horizontally along azimuth ``yaw``."""
        s, c = math.sin(yaw), math.cos(yaw)
        right = (c, -s, 0.0)
        down = (0.0, 0.0, -1.0)
        forward = (s, c, 0.0)
        rot = np.array([right, down, forward])
        m = np.eye(4)
        m[:3, :3] = rot
        m[:3, 3] = -rot @ np.asarray(position, dtype=np.float64)
        return cls(m)

    @property
    def rotation(self) -> np.ndarray:
        return self.matrix[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.matrix[:3, 3]

    @property
    def origin(self) -> np.ndarray:
        """Camera center expressed in world coordinates."""
        return -self.rotation.T @ self.translation

    def to_list(self) -> list[float]:
        return [float(v) for v in self.matrix.reshape(-1)]

    @classmethod
    def from_list(cls, values) -> "CameraExtrinsics":
        values = list(values)
        if len(values) != 16:
            raise ValueError(f"extrinsics need 16 values, got {len(values)}")
        return cls(np.array(values, dtype=np.float64).reshape(4, 4))


@dataclass(frozen=True)
class CameraView:
    intrinsics: CameraIntrinsics
    extrinsics: CameraExtrinsics
    id: int = 1

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "intrinsics": self.intrinsics.to_dict(),
            "extrinsics": self.extrinsics.to_list(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraView":
        return cls(
            intrinsics=CameraIntrinsics.from_dict(d["intrinsics"]),
            extrinsics=CameraExtrinsics.from_list(d["extrinsics"]),
            id=int(d["id"]),
        )


def check_rig(rig) -> None:
    ids = [cam.id for cam in rig]
    if len(set(ids)) != len(ids):
        raise ValueError(f"camera ids must be unique within a rig, got {ids}")


@dataclass(frozen=True)
class CylindricalPoint:
    rho: float
    phi: float
    z: float

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError(f"rho must be >= 0, got {self.rho}")
        object.__setattr__(self, "phi", wrap_angle(self.phi))


@dataclass(frozen=True)
class ImagePoint:
    x: float
    y: float
    s: float
    degenerate: bool = False


# -- array kernels ---------------------------------------------------------


def project_points(p_cam, k: CameraIntrinsics):
    """Vectorized pinhole projection of camera-frame points ``(..., 3)``.

    Returns ``(x, y, s, degenerate)``; degenerate entries carry NaN pixels.
    """
    p = np.asarray(p_cam, dtype=np.float64)
    s = p[..., 2]
    degenerate = np.abs(s) < DEGENERATE_DEPTH
    safe = np.where(degenerate, 1.0, s)
    x = np.where(degenerate, np.nan, k.fx * p[..., 0] / safe + k.u0)
    y = np.where(degenerate, np.nan, k.fy * p[..., 1] / safe + k.v0)
    return x, y, s, degenerate


def polar_to_cartesian_array(rho, phi, z):
    rho = np.asarray(rho, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    return np.stack(np.broadcast_arrays(rho * np.sin(phi), rho * np.cos(phi), z), axis=-1)


def world_to_camera(points, extrinsics: CameraExtrinsics):
    p = np.asarray(points, dtype=np.float64)
    return p @ extrinsics.rotation.T + extrinsics.translation


def project_cylindrical_array(rho, phi, z, cam: CameraView):
    """Project cylindrical samples into ``cam``; returns ``(x, y, s, degenerate)``."""
    world = polar_to_cartesian_array(rho, phi, z)
    return project_points(world_to_camera(world, cam.extrinsics), cam.intrinsics)


# -- scalar operations -----------------------------------------------------


def project_cam_to_image(p_cam, k: CameraIntrinsics) -> ImagePoint:
    x, y, s, deg = project_points(np.asarray(p_cam, dtype=np.float64), k)
    return ImagePoint(float(x), float(y), float(s), bool(deg))


def azimuth_from_column(x_img, k: CameraIntrinsics):
    return np.arctan((np.asarray(x_img, dtype=np.float64) - k.u0) / k.fx)


def radius_from_depth(x_img, depth_z, k: CameraIntrinsics):
    depth_z = np.asarray(depth_z, dtype=np.float64)
    if np.any(depth_z <= 0):
        raise ValueError("depth must be strictly positive")
    t = (np.asarray(x_img, dtype=np.float64) - k.u0) / k.fx
    return depth_z * np.sqrt(t * t + 1.0)


def polar_to_cartesian(p: CylindricalPoint) -> tuple[float, float, float]:
    x, fwd, z = polar_to_cartesian_array(p.rho, p.phi, p.z)
    return (float(x), float(fwd), float(z))


def cartesian_to_polar(x: float, forward: float, z: float) -> CylindricalPoint:
    rho = math.hypot(x, forward)
    phi = 0.0 if rho == 0.0 else wrap_angle(math.atan2(x, forward))
    return CylindricalPoint(rho, phi, z)


def cartesian_to_polar_array(x, forward):
    x = np.asarray(x, dtype=np.float64)
    forward = np.asarray(forward, dtype=np.float64)
    rho = np.hypot(x, forward)
    phi = np.where(rho == 0.0, 0.0, wrap_angle(np.arctan2(x, forward)))
    return rho, phi


def project_cylindrical_point(p: CylindricalPoint, cam: CameraView) -> ImagePoint:
    x, y, s, deg = project_cylindrical_array(p.rho, p.phi, p.z, cam)
    return ImagePoint(float(x), float(y), float(s), bool(deg))
