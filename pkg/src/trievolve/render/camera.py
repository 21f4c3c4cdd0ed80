"""Perspective pinhole camera."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

Vec3 = tuple[float, float, float]

CUBE_CENTER: Vec3 = (0.5, 0.5, 0.5)


@dataclass(frozen=True)
class Camera:
    position: Vec3
    look_at: Vec3
    up: Vec3 = (0.0, 1.0, 0.0)
    vertical_fov: float = 45.0
    width: int = 224
    height: int = 224

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError("film dimensions must be positive")
        if not 0.0 < self.vertical_fov < 180.0:
            raise ValueError(f"vertical_fov must be in (0, 180), got {self.vertical_fov}")
        fwd = np.subtract(self.look_at, self.position, dtype=np.float64)
        norm = np.linalg.norm(fwd)
        if norm == 0.0:
            raise ValueError("camera position and look_at coincide")
        upv = np.asarray(self.up, dtype=np.float64)
        if np.linalg.norm(np.cross(fwd / norm, upv)) < 1e-9:
            raise ValueError("up vector is parallel to the view direction")

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Orthonormal (forward, right, up) frame of the camera."""
        fwd = np.subtract(self.look_at, self.position, dtype=np.float64)
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(self.up, dtype=np.float64))
        right /= np.linalg.norm(right)
        up = np.cross(right, fwd)
        return fwd, right, up

    def with_film(self, width: int, height: int) -> "Camera":
        return replace(self, width=width, height=height)


def side_cameras(
    count: int = 4,
    distance: float = 2.2,
    vertical_fov: float = 45.0,
    width: int = 224,
    height: int = 224,
) -> list[Camera]:
    """Cameras spaced at equal azimuths around the cube, looking at its center.

    ``count=4`` gives the four side views (+x, +z, -x, -z) at the cube's
    mid-height. Distance 2.2 frames the unit cube with a small margin at a
    45 degree vertical field of view.
    """
    cams = []
    for k in range(count):
        phi = 2.0 * math.pi * k / count
        pos = (
            0.5 + distance * math.cos(phi),
            0.5,
            0.5 + distance * math.sin(phi),
        )
        cams.append(
            Camera(
                position=pos,
                look_at=CUBE_CENTER,
                vertical_fov=vertical_fov,
                width=width,
                height=height,
            )
        )
    return cams


def orbit_camera(
    azimuth_deg: float,
    elevation_deg: float = 20.0,
    distance: float = 2.2,
    vertical_fov: float = 45.0,
    width: int = 224,
    height: int = 224,
) -> Camera:
    """Camera on a sphere around the cube center, for turntable exports."""
    phi = math.radians(azimuth_deg)
    theta = math.radians(elevation_deg)
    pos = (
        0.5 + distance * math.cos(theta) * math.cos(phi),
        0.5 + distance * math.sin(theta),
        0.5 + distance * math.cos(theta) * math.sin(phi),
    )
    return Camera(
        position=pos,
        look_at=CUBE_CENTER,
        vertical_fov=vertical_fov,
        width=width,
        height=height,
    )
