"""Deterministic seeded path tracer: cameras, films, intersection, box tree."""

from .bvh import Bvh, build_bvh
from .camera import Camera, orbit_camera, side_cameras
from .film import Film, load_png, png_bytes, save_png, tonemap
from .intersect import Hit, intersect_triangle
from .tracer import (
    RenderSettings,
    SceneGeometry,
    T_EPSILON,
    radiance_samples,
    render,
    trace,
)

__all__ = [
    "Bvh",
    "Camera",
    "Film",
    "Hit",
    "RenderSettings",
    "SceneGeometry",
    "T_EPSILON",
    "build_bvh",
    "intersect_triangle",
    "load_png",
    "orbit_camera",
    "png_bytes",
    "radiance_samples",
    "render",
    "save_png",
    "side_cameras",
    "tonemap",
    "trace",
]
