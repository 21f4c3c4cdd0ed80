"""Compiled inner loops of the path tracer.

Everything here is scalar per-ray code jitted by numba; the Python layer in
``tracer``/``bvh`` owns array packing and parallel dispatch.  Random numbers
come from a counter-based splitmix64 stream keyed by (seed, pixel, sample),
so results do not depend on tiling or thread scheduling.
"""

from __future__ import annotations

import numpy as np
from numba import njit, uint64

# BK7 glass, single fixed index of refraction
GLASS_IOR = 1.5046

# self-intersection guard, in cube units
T_EPSILON = 1e-4

_GOLDEN = uint64(0x9E3779B97F4A7C15)
_MIX1 = uint64(0xBF58476D1CE4E5B9)
_MIX2 = uint64(0x94D049BB133111EB)


@njit(uint64(uint64), cache=True, inline="always")
def mix64(x):
    z = x + _GOLDEN
    z = (z ^ (z >> uint64(30))) * _MIX1
    z = (z ^ (z >> uint64(27))) * _MIX2
    return z ^ (z >> uint64(31))


@njit(cache=True, inline="always")
def _next_u01(state):
    """Advance the stream state and return a uniform double in [0, 1)."""
    state = state + _GOLDEN
    z = (state ^ (state >> uint64(30))) * _MIX1
    z = (z ^ (z >> uint64(27))) * _MIX2
    z = z ^ (z >> uint64(31))
    return state, (z >> uint64(11)) * 1.1102230246251565e-16  # 2^-53


@njit(cache=True, inline="always")
def _mt_one(ox, oy, oz, dx, dy, dz,
            ax, ay, az, e1x, e1y, e1z, e2x, e2y, e2z,
            t_min, t_max):
    """Moller-Trumbore ray/triangle test.

    Returns (t, u, v, hit). Degenerate triangles give |det| = 0 and never hit.
    """
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    det = e1x * px + e1y * py + e1z * pz
    if abs(det) < 1e-12:
        return 0.0, 0.0, 0.0, False
    inv = 1.0 / det
    tx = ox - ax
    ty = oy - ay
    tz = oz - az
    u = (tx * px + ty * py + tz * pz) * inv
    if u < 0.0 or u > 1.0:
        return 0.0, 0.0, 0.0, False
    qx = ty * e1z - tz * e1y
    qy = tz * e1x - tx * e1z
    qz = tx * e1y - ty * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < 0.0 or u + v > 1.0:
        return 0.0, 0.0, 0.0, False
    t = (e2x * qx + e2y * qy + e2z * qz) * inv
    if t <= t_min or t >= t_max:
        return 0.0, 0.0, 0.0, False
    return t, u, v, True


@njit(cache=True)
def nearest_brute(ox, oy, oz, dx, dy, dz, v0, e1, e2, t_min, t_max):
    """Nearest hit by scanning every triangle in index order.

    Ties in t resolve to the lowest triangle index. Returns
    (t, index, u, v); index is -1 on a miss.
    """
    best_t = np.inf
    best_i = -1
    best_u = 0.0
    best_v = 0.0
    for i in range(v0.shape[0]):
        t, u, v, hit = _mt_one(
            ox, oy, oz, dx, dy, dz,
            v0[i, 0], v0[i, 1], v0[i, 2],
            e1[i, 0], e1[i, 1], e1[i, 2],
            e2[i, 0], e2[i, 1], e2[i, 2],
            t_min, t_max,
        )
        if hit and t < best_t:
            best_t = t
            best_i = i
            best_u = u
            best_v = v
    return best_t, best_i, best_u, best_v


@njit(cache=True, inline="always")
def _box_reachable(ox, oy, oz, dx, dy, dz,
                   bminx, bminy, bminz, bmaxx, bmaxy, bmaxz,
                   t_min, t_cap):
    """Slab test: can the ray meet this box at some t in [t_min, t_cap]?"""
    t_lo = t_min
    t_hi = t_cap
    if dx == 0.0:
        if ox < bminx or ox > bmaxx:
            return False
    else:
        inv = 1.0 / dx
        t0 = (bminx - ox) * inv
        t1 = (bmaxx - ox) * inv
        if t0 > t1:
            t0, t1 = t1, t0
        if t0 > t_lo:
            t_lo = t0
        if t1 < t_hi:
            t_hi = t1
        if t_lo > t_hi:
            return False
    if dy == 0.0:
        if oy < bminy or oy > bmaxy:
            return False
    else:
        inv = 1.0 / dy
        t0 = (bminy - oy) * inv
        t1 = (bmaxy - oy) * inv
        if t0 > t1:
            t0, t1 = t1, t0
        if t0 > t_lo:
            t_lo = t0
        if t1 < t_hi:
            t_hi = t1
        if t_lo > t_hi:
            return False
    if dz == 0.0:
        if oz < bminz or oz > bmaxz:
            return False
    else:
        inv = 1.0 / dz
        t0 = (bminz - oz) * inv
        t1 = (bmaxz - oz) * inv
        if t0 > t1:
            t0, t1 = t1, t0
        if t0 > t_lo:
            t_lo = t0
        if t1 < t_hi:
            t_hi = t1
        if t_lo > t_hi:
            return False
    return True


@njit(cache=True)
def nearest_bvh(ox, oy, oz, dx, dy, dz,
                nmin, nmax, nright, nstart, ncount, torder,
                v0, e1, e2, t_min, t_max):
    """Nearest hit through the box tree; same result contract as nearest_brute."""
    best_t = np.inf
    best_i = -1
    best_u = 0.0
    best_v = 0.0
    n_nodes = nmin.shape[0]
    if n_nodes == 0:
        return best_t, best_i, best_u, best_v
    stack = np.empty(128, np.int32)
    stack[0] = 0
    sp = 1
    while sp > 0:
        sp -= 1
        ni = stack[sp]
        cap = best_t if best_t < t_max else t_max
        if not _box_reachable(
            ox, oy, oz, dx, dy, dz,
            nmin[ni, 0], nmin[ni, 1], nmin[ni, 2],
            nmax[ni, 0], nmax[ni, 1], nmax[ni, 2],
            t_min, cap,
        ):
            continue
        if ncount[ni] > 0:
            for k in range(nstart[ni], nstart[ni] + ncount[ni]):
                i = torder[k]
                t, u, v, hit = _mt_one(
                    ox, oy, oz, dx, dy, dz,
                    v0[i, 0], v0[i, 1], v0[i, 2],
                    e1[i, 0], e1[i, 1], e1[i, 2],
                    e2[i, 0], e2[i, 1], e2[i, 2],
                    t_min, t_max,
                )
                if hit and (t < best_t or (t == best_t and i < best_i)):
                    best_t = t
                    best_i = i
                    best_u = u
                    best_v = v
        else:
            stack[sp] = ni + 1
            sp += 1
            stack[sp] = nright[ni]
            sp += 1
    return best_t, best_i, best_u, best_v


@njit(cache=True, inline="always")
def _thin_sheet_reflectance(cos_i):
    """Total reflectance of a thin glass sheet, internal bounces summed.

    cos_i is the unsigned cosine of the incidence angle. The single-interface
    unpolarized Fresnel term r folds into 2r/(1+r) for a sheet whose entry and
    exit refractions cancel.
    """
    eta = GLASS_IOR
    sin2_t = (1.0 - cos_i * cos_i) / (eta * eta)
    cos_t = np.sqrt(1.0 - sin2_t)
    rs = (cos_i - eta * cos_t) / (cos_i + eta * cos_t)
    rp = (eta * cos_i - cos_t) / (eta * cos_i + cos_t)
    r = 0.5 * (rs * rs + rp * rp)
    return 2.0 * r / (1.0 + r)


@njit(cache=True, inline="always")
def _cosine_hemisphere(nx, ny, nz, u1, u2):
    """Cosine-weighted direction around unit normal n (branchless frame)."""
    s = 1.0 if nz >= 0.0 else -1.0
    a = -1.0 / (s + nz)
    b = nx * ny * a
    t1x = 1.0 + s * nx * nx * a
    t1y = s * b
    t1z = -s * nx
    t2x = b
    t2y = s + ny * ny * a
    t2z = -ny
    r = np.sqrt(u1)
    phi = 6.283185307179586 * u2
    x = r * np.cos(phi)
    y = r * np.sin(phi)
    z = np.sqrt(max(0.0, 1.0 - u1))
    dx = x * t1x + y * t2x + z * nx
    dy = x * t1y + y * t2y + z * ny
    dz = x * t1z + y * t2z + z * nz
    return dx, dy, dz


@njit(cache=True)
def trace_path(ox, oy, oz, dx, dy, dz,
               nmin, nmax, nright, nstart, ncount, torder,
               v0, e1, e2, normal, color, alpha,
               max_depth, env_r, env_g, env_b, state):
    """One radiance sample along a ray.

    Per interaction: with probability alpha the surface is an ideal diffuse
    reflector with the triangle's albedo; otherwise it is a thin glass sheet
    that mirror-reflects with the sheet reflectance and passes straight
    through unbent the rest of the time. Escaped rays collect the constant
    environment; rays still alive after max_depth interactions return black.
    """
    tr = 1.0
    tg = 1.0
    tb = 1.0
    for _ in range(max_depth):
        t, i, _u, _v = nearest_bvh(
            ox, oy, oz, dx, dy, dz,
            nmin, nmax, nright, nstart, ncount, torder,
            v0, e1, e2, T_EPSILON, np.inf,
        )
        if i < 0:
            return tr * env_r, tg * env_g, tb * env_b, state
        hx = ox + t * dx
        hy = oy + t * dy
        hz = oz + t * dz
        nx = normal[i, 0]
        ny = normal[i, 1]
        nz = normal[i, 2]
        cos_d = dx * nx + dy * ny + dz * nz
        if cos_d > 0.0:
            nx = -nx
            ny = -ny
            nz = -nz
            cos_d = -cos_d
        state, u_lobe = _next_u01(state)
        if u_lobe < alpha[i]:
            tr *= color[i, 0]
            tg *= color[i, 1]
            tb *= color[i, 2]
            state, u1 = _next_u01(state)
            state, u2 = _next_u01(state)
            dx, dy, dz = _cosine_hemisphere(nx, ny, nz, u1, u2)
        else:
            state, u_f = _next_u01(state)
            if u_f < _thin_sheet_reflectance(-cos_d):
                dx = dx - 2.0 * cos_d * nx
                dy = dy - 2.0 * cos_d * ny
                dz = dz - 2.0 * cos_d * nz
            # else: pass straight through, direction unchanged
        norm = np.sqrt(dx * dx + dy * dy + dz * dz)
        dx /= norm
        dy /= norm
        dz /= norm
        ox = hx
        oy = hy
        oz = hz
    return 0.0, 0.0, 0.0, state


@njit(cache=True, nogil=True)
def render_tile(out, x0, y0, width, height, spp, max_depth,
                cam_pos, cam_fwd, cam_right, cam_up, tan_half, aspect,
                env_r, env_g, env_b,
                nmin, nmax, nright, nstart, ncount, torder,
                v0, e1, e2, normal, color, alpha, film_key):
    """Render one rectangular tile of the film in place.

    Each (pixel, sample) pair owns an independent random stream keyed by the
    film seed and the global pixel index, so the result is invariant to tile
    shape and execution order.
    """
    tile_h, tile_w = out.shape[0], out.shape[1]
    for yy in range(tile_h):
        for xx in range(tile_w):
            px = x0 + xx
            py = y0 + yy
            pixel = uint64(py * width + px)
            acc_r = 0.0
            acc_g = 0.0
            acc_b = 0.0
            for s in range(spp):
                state = mix64(film_key ^ mix64(pixel * uint64(spp) + uint64(s) + uint64(1)))
                state, jx = _next_u01(state)
                state, jy = _next_u01(state)
                ndc_x = 2.0 * ((px + jx) / width) - 1.0
                ndc_y = 1.0 - 2.0 * ((py + jy) / height)
                sx = ndc_x * tan_half * aspect
                sy = ndc_y * tan_half
                dx = cam_fwd[0] + sx * cam_right[0] + sy * cam_up[0]
                dy = cam_fwd[1] + sx * cam_right[1] + sy * cam_up[1]
                dz = cam_fwd[2] + sx * cam_right[2] + sy * cam_up[2]
                norm = np.sqrt(dx * dx + dy * dy + dz * dz)
                r, g, b, state = trace_path(
                    cam_pos[0], cam_pos[1], cam_pos[2],
                    dx / norm, dy / norm, dz / norm,
                    nmin, nmax, nright, nstart, ncount, torder,
                    v0, e1, e2, normal, color, alpha,
                    max_depth, env_r, env_g, env_b, state,
                )
                acc_r += r
                acc_g += g
                acc_b += b
            out[yy, xx, 0] = acc_r / spp
            out[yy, xx, 1] = acc_g / spp
            out[yy, xx, 2] = acc_b / spp


@njit(cache=True)
def sample_radiance(ox, oy, oz, dx, dy, dz,
                    nmin, nmax, nright, nstart, ncount, torder,
                    v0, e1, e2, normal, color, alpha,
                    max_depth, env_r, env_g, env_b, seed, n_samples, stream0):
    """n independent radiance samples of one ray; rows are RGB estimates.

    Row s draws from stream ``stream0 + s`` of the seed's stream family.
    """
    out = np.empty((n_samples, 3), np.float64)
    key = mix64(uint64(seed))
    for s in range(n_samples):
        state = mix64(key ^ mix64(uint64(s + stream0) + uint64(1)))
        r, g, b, state = trace_path(
            ox, oy, oz, dx, dy, dz,
            nmin, nmax, nright, nstart, ncount, torder,
            v0, e1, e2, normal, color, alpha,
            max_depth, env_r, env_g, env_b, state,
        )
        out[s, 0] = r
        out[s, 1] = g
        out[s, 2] = b
    return out
