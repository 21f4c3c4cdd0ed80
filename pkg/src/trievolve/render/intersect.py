"""Scalar ray/triangle intersection."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from ..genome import Triangle
from ._kernels import T_EPSILON

Vec3 = tuple[float, float, float]


@dataclass(frozen=True)
class Hit:
    t: float
    triangle_index: int
    barycentric: tuple[float, float]
    front_facing: bool


def intersect_triangle(
    origin: Vec3,
    direction: Vec3,
    tri: Triangle,
    t_max: float = math.inf,
    t_min: float = T_EPSILON,
) -> Optional[Hit]:
    """Nearest intersection with one triangle, or None.

    Moller-Trumbore; accepts hits with t strictly inside (t_min, t_max).
    Degenerate (zero-area) triangles never hit. ``triangle_index`` of the
    returned hit is 0, the index within the one-element query set.
    """
    ox, oy, oz = origin
    dx, dy, dz = direction
    if dx == 0.0 and dy == 0.0 and dz == 0.0:
        raise ValueError("ray direction must be non-zero")
    ax, ay, az = tri.v1
    e1x = tri.v2[0] - ax
    e1y = tri.v2[1] - ay
    e1z = tri.v2[2] - az
    e2x = tri.v3[0] - ax
    e2y = tri.v3[1] - ay
    e2z = tri.v3[2] - az

    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if abs(det) < 1e-12:
        return None
    inv = 1.0 / det
    tx = ox - ax
    ty = oy - ay
    tz = oz - az
    u = (tx * px + ty * py + tz * pz) * inv
    if u < 0.0 or u > 1.0:
        return None
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return None
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t <= t_min or t >= t_max:
        return None
    # det = -dot(d, cross(e1, e2)), so det > 0 means the ray opposes the
    # geometric normal, i.e. meets the front (counter-clockwise) side.
    return Hit(t=t, triangle_index=0, barycentric=(u, v), front_facing=det > 0.0)
