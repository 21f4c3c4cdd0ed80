"""Seeded Monte-Carlo path tracer for triangle scenes."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from ..genome import Scene
from . import _kernels
from ._kernels import T_EPSILON, mix64
from .bvh import Bvh, build_bvh, triangle_vertices
from .camera import Camera
from .film import Film
from .intersect import Hit

Vec3 = tuple[float, float, float]

TILE = 64


@dataclass(frozen=True)
class RenderSettings:
    samples_per_pixel: int = 8
    max_depth: int = 8
    environment: Vec3 = (1.0, 1.0, 1.0)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.samples_per_pixel < 1:
            raise ValueError("samples_per_pixel must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if any(c < 0 for c in self.environment):
            raise ValueError("environment radiance must be non-negative")


class SceneGeometry:
    """Packed triangle arrays plus their box tree, shareable across workers."""

    def __init__(self, scene: Scene):
        n = len(scene)
        verts = triangle_vertices(scene)
        self.v0 = np.ascontiguousarray(verts[:, 0, :])
        self.e1 = np.ascontiguousarray(verts[:, 1, :] - verts[:, 0, :])
        self.e2 = np.ascontiguousarray(verts[:, 2, :] - verts[:, 0, :])
        normal = np.cross(self.e1, self.e2)
        length = np.linalg.norm(normal, axis=1, keepdims=True)
        # degenerate triangles keep a zero normal; they can never be hit
        self.normal = np.where(length > 0.0, normal / np.where(length > 0.0, length, 1.0), 0.0)
        self.color = np.array([t.color for t in scene.triangles], dtype=np.float64).reshape(n, 3)
        self.alpha = np.array([t.alpha for t in scene.triangles], dtype=np.float64)
        self.bvh: Bvh = build_bvh(scene)

    def nearest_hit(
        self,
        origin: Vec3,
        direction: Vec3,
        t_min: float = T_EPSILON,
        t_max: float = math.inf,
    ) -> Optional[Hit]:
        """Nearest hit via box-tree traversal."""
        b = self.bvh
        t, i, u, v = _kernels.nearest_bvh(
            origin[0], origin[1], origin[2],
            direction[0], direction[1], direction[2],
            b.node_min, b.node_max, b.node_right, b.node_start, b.node_count,
            b.tri_order, self.v0, self.e1, self.e2, t_min, t_max,
        )
        return self._as_hit(t, i, u, v, direction)

    def nearest_hit_brute(
        self,
        origin: Vec3,
        direction: Vec3,
        t_min: float = T_EPSILON,
        t_max: float = math.inf,
    ) -> Optional[Hit]:
        """Nearest hit by scanning every triangle; reference for the tree."""
        t, i, u, v = _kernels.nearest_brute(
            origin[0], origin[1], origin[2],
            direction[0], direction[1], direction[2],
            self.v0, self.e1, self.e2, t_min, t_max,
        )
        return self._as_hit(t, i, u, v, direction)

    def _as_hit(self, t: float, i: int, u: float, v: float, direction: Vec3) -> Optional[Hit]:
        if i < 0:
            return None
        front = float(np.dot(self.normal[i], np.asarray(direction, dtype=np.float64))) < 0.0
        return Hit(t=float(t), triangle_index=int(i), barycentric=(float(u), float(v)), front_facing=front)


def _film_key(seed: int) -> np.uint64:
    return np.uint64(mix64(np.uint64(seed % (1 << 64))))


def _camera_arrays(camera: Camera):
    fwd, right, up = camera.basis()
    pos = np.asarray(camera.position, dtype=np.float64)
    tan_half = math.tan(math.radians(camera.vertical_fov) / 2.0)
    aspect = camera.width / camera.height
    return pos, fwd, right, up, tan_half, aspect


def render(
    scene: Union[Scene, SceneGeometry],
    camera: Camera,
    settings: RenderSettings,
    workers: Optional[int] = None,
) -> Film:
    """Render a film; bit-identical for identical inputs, serial or parallel.

    ``workers`` only sets thread parallelism over tiles; every (pixel, sample)
    pair draws from its own seed-derived random stream, so the image does not
    depend on tiling or scheduling.
    """
    geo = scene if isinstance(scene, SceneGeometry) else SceneGeometry(scene)
    w, h = camera.width, camera.height
    pos, fwd, right, up, tan_half, aspect = _camera_arrays(camera)
    env = settings.environment
    key = _film_key(settings.seed)
    b = geo.bvh

    film = np.empty((h, w, 3), dtype=np.float64)
    tiles = [
        (x0, y0, min(x0 + TILE, w), min(y0 + TILE, h))
        for y0 in range(0, h, TILE)
        for x0 in range(0, w, TILE)
    ]

    def run_tile(tile):
        x0, y0, x1, y1 = tile
        out = np.empty((y1 - y0, x1 - x0, 3), dtype=np.float64)
        _kernels.render_tile(
            out, x0, y0, w, h,
            settings.samples_per_pixel, settings.max_depth,
            pos, fwd, right, up, tan_half, aspect,
            env[0], env[1], env[2],
            b.node_min, b.node_max, b.node_right, b.node_start, b.node_count,
            b.tri_order, geo.v0, geo.e1, geo.e2, geo.normal, geo.color,
            geo.alpha, key,
        )
        film[y0:y1, x0:x1] = out

    if workers is not None and workers > 1 and len(tiles) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_tile, tiles))
    else:
        for tile in tiles:
            run_tile(tile)

    return Film(width=w, height=h, pixels=film)


def trace(
    origin: Vec3,
    direction: Vec3,
    scene: Union[Scene, SceneGeometry],
    settings: RenderSettings,
    stream: int = 0,
) -> Vec3:
    """One radiance estimate along a ray.

    ``stream`` selects the deterministic random stream; stream s here equals
    row s of :func:`radiance_samples` for the same seed.
    """
    samples = radiance_samples(origin, direction, scene, settings, 1, stream_offset=stream)
    return (float(samples[0, 0]), float(samples[0, 1]), float(samples[0, 2]))


def radiance_samples(
    origin: Vec3,
    direction: Vec3,
    scene: Union[Scene, SceneGeometry],
    settings: RenderSettings,
    n_samples: int,
    stream_offset: int = 0,
) -> np.ndarray:
    """(n_samples, 3) independent radiance estimates of one ray."""
    geo = scene if isinstance(scene, SceneGeometry) else SceneGeometry(scene)
    d = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(d)
    if norm == 0.0:
        raise ValueError("ray direction must be non-zero")
    d = d / norm
    env = settings.environment
    b = geo.bvh
    return _kernels.sample_radiance(
        float(origin[0]), float(origin[1]), float(origin[2]),
        float(d[0]), float(d[1]), float(d[2]),
        b.node_min, b.node_max, b.node_right, b.node_start, b.node_count,
        b.tri_order, geo.v0, geo.e1, geo.e2, geo.normal, geo.color, geo.alpha,
        settings.max_depth, env[0], env[1], env[2],
        np.uint64(settings.seed % (1 << 64)), n_samples, stream_offset,
    )
