"""Ray-cast renderer producing an aligned colour image and label mask.

Beads are vertically squashed capsules. One primary ray per pixel centre
is traced through a uniform grid over the capsules; the nearest hit wins
the colour, label and depth buffers alike, so the mask is exact by
construction (no antialiasing on either buffer).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numba
import numpy as np

from .scene import Camera, Light, Material, SceneInstance, Texture
from .semantics import ClassifiedToolpath, DatasetKind, relabel_for_dataset

__all__ = [
    "CapsulePrimitive",
    "Hit",
    "ImagePair",
    "RenderError",
    "FLAT_ID_COLORS",
    "parse_resolution",
    "project",
    "unproject",
    "pixel_ray",
    "raycast_capsule",
    "shade",
    "capsules_from_toolpath",
    "build_grid",
    "render_frame",
    "decode_flat_ids",
]

EPS = 1e-9
MAX_GRID_DIM = 160
GRID_CELL_FACTOR = 4.0

# unshaded colours used in flat-ID mode; bed and background render black
FLAT_ID_COLORS = {
    0: (0, 0, 0),
    85: (230, 25, 75),
    170: (60, 180, 75),
    255: (0, 130, 200),
}

_TEX_IDS = {"flat": 0, "checker": 1, "noise": 2, "gradient": 3}


class RenderError(ValueError):
    pass


def parse_resolution(text: str) -> tuple[int, int]:
    """``"640x480"`` -> ``(640, 480)``."""
    try:
        w, h = (int(v) for v in str(text).lower().split("x"))
    except ValueError:
        raise ValueError(f"resolution must look like WxH, got {text!r}") from None
    return w, h


# -- camera ------------------------------------------------------------------

def project(camera: Camera, p: Sequence[float]) -> tuple[float, float, float] | None:
    """Pinhole projection of world point ``p`` to ``(u, v, depth)``.

    ``u`` grows to the right and ``v`` downward, in pixels, with the
    principal point at the image centre. ``depth`` is the distance along the
    view axis. Returns ``None`` for points at or behind the camera plane.
    """
    right, up, fwd = camera.basis()
    d = (p[0] - camera.position[0], p[1] - camera.position[1], p[2] - camera.position[2])
    zc = d[0] * fwd[0] + d[1] * fwd[1] + d[2] * fwd[2]
    if zc <= 0.0:
        return None
    xc = d[0] * right[0] + d[1] * right[1] + d[2] * right[2]
    yc = d[0] * up[0] + d[1] * up[1] + d[2] * up[2]
    f = camera.focal_px
    w, h = camera.resolution
    return w / 2.0 + f * xc / zc, h / 2.0 - f * yc / zc, zc


def unproject(camera: Camera, u: float, v: float, depth: float) -> tuple[float, float, float]:
    """World point that projects to ``(u, v)`` at view-axis distance ``depth``."""
    right, up, fwd = camera.basis()
    f = camera.focal_px
    w, h = camera.resolution
    xc = (u - w / 2.0) * depth / f
    yc = (h / 2.0 - v) * depth / f
    return tuple(camera.position[i] + xc * right[i] + yc * up[i] + depth * fwd[i] for i in range(3))


def pixel_ray(camera: Camera, col: int, row: int) -> tuple[tuple[float, float, float], np.ndarray]:
    """Origin and unit direction of the primary ray through a pixel centre."""
    right, up, fwd = (np.array(v) for v in camera.basis())
    f = camera.focal_px
    w, h = camera.resolution
    d = (col + 0.5 - w / 2.0) / f * right - (row + 0.5 - h / 2.0) / f * up + fwd
    return camera.position, d / np.linalg.norm(d)


# -- primitives --------------------------------------------------------------

@dataclass(frozen=True)
class CapsulePrimitive:
    """Capsule from ``a`` to ``b``; z is squashed by ``vertical_scale`` about ``a.z``."""

    a: tuple[float, float, float]
    b: tuple[float, float, float]
    radius: float
    vertical_scale: float = 1.0
    class_label: int = 255
    color: tuple[float, float, float] = (0.8, 0.8, 0.8)

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("capsule radius must be positive")
        if not 0.0 < self.vertical_scale <= 1.0:
            raise ValueError("vertical_scale must lie in (0, 1]")


class Hit(NamedTuple):
    distance: float
    normal: tuple[float, float, float]


@numba.njit(cache=True)
def _capsule_t(ox, oy, oz, dx, dy, dz, ax, ay, az, bx, by, bz, r, s):
    """Smallest positive ray parameter hitting the capsule, or inf.

    The ray need not be unit length in the squashed frame, so the
    parameter stays a world-space distance along the original direction.
    """
    inv = 1.0 / s
    oz = az + (oz - az) * inv
    dz = dz * inv
    bz = az + (bz - az) * inv
    bax, bay, baz = bx - ax, by - ay, bz - az
    oax, oay, oaz = ox - ax, oy - ay, oz - az
    baba = bax * bax + bay * bay + baz * baz
    bard = bax * dx + bay * dy + baz * dz
    baoa = bax * oax + bay * oay + baz * oaz
    rdoa = dx * oax + dy * oay + dz * oaz
    oaoa = oax * oax + oay * oay + oaz * oaz
    dd = dx * dx + dy * dy + dz * dz
    rr = r * r
    best = np.inf

    if baba > 0.0:
        qa = baba * dd - bard * bard
        if qa > 0.0:
            qb = baba * rdoa - baoa * bard
            qc = baba * oaoa - baoa * baoa - rr * baba
            disc = qb * qb - qa * qc
            if disc >= 0.0:
                sq = math.sqrt(disc)
                for t in ((-qb - sq) / qa, (-qb + sq) / qa):
                    y = baoa + t * bard
                    if t > EPS and 0.0 <= y <= baba and t < best:
                        best = t

    for cap in range(2):
        if cap == 0:
            cx, cy, cz = ax, ay, az
        else:
            cx, cy, cz = bx, by, bz
        ocx, ocy, ocz = ox - cx, oy - cy, oz - cz
        hb = dx * ocx + dy * ocy + dz * ocz
        hc = ocx * ocx + ocy * ocy + ocz * ocz - rr
        disc = hb * hb - dd * hc
        if disc >= 0.0:
            sq = math.sqrt(disc)
            for t in ((-hb - sq) / dd, (-hb + sq) / dd):
                if t > EPS and t < best:
                    y = baoa + t * bard
                    if baba == 0.0 or (cap == 0 and y <= 0.0) or (cap == 1 and y >= baba):
                        best = t
    return best


@numba.njit(cache=True)
def _capsule_normal(px, py, pz, ax, ay, az, bx, by, bz, r, s):
    inv = 1.0 / s
    pz = az + (pz - az) * inv
    bz = az + (bz - az) * inv
    bax, bay, baz = bx - ax, by - ay, bz - az
    baba = bax * bax + bay * bay + baz * baz
    h = 0.0
    if baba > 0.0:
        h = ((px - ax) * bax + (py - ay) * bay + (pz - az) * baz) / baba
        h = min(max(h, 0.0), 1.0)
    nx = px - (ax + h * bax)
    ny = py - (ay + h * bay)
    nz = (pz - (az + h * baz)) * inv
    n = math.sqrt(nx * nx + ny * ny + nz * nz)
    return nx / n, ny / n, nz / n


def raycast_capsule(origin, direction, cap: CapsulePrimitive) -> Hit | None:
    """Nearest hit of a unit-direction ray with ``cap``, or ``None`` on a miss."""
    o = [float(v) for v in origin]
    d = [float(v) for v in direction]
    a, b = cap.a, cap.b
    t = _capsule_t(o[0], o[1], o[2], d[0], d[1], d[2], a[0], a[1], a[2], b[0], b[1], b[2],
                   cap.radius, cap.vertical_scale)
    if not math.isfinite(t):
        return None
    p = [o[i] + t * d[i] for i in range(3)]
    n = _capsule_normal(p[0], p[1], p[2], a[0], a[1], a[2], b[0], b[1], b[2], cap.radius, cap.vertical_scale)
    return Hit(t, n)


# -- shading -----------------------------------------------------------------

@numba.njit(cache=True)
def _shininess(roughness):
    return 2.0 + 126.0 * (1.0 - roughness) ** 2


@numba.njit(cache=True)
def _shade(nx, ny, nz, px, py, pz, ex, ey, ez, lights, br, bg, bb, roughness, specular, out):
    """Lambert + Blinn-Phong radiance summed over ``lights`` into ``out`` (unclamped)."""
    out[0] = 0.0
    out[1] = 0.0
    out[2] = 0.0
    vx, vy, vz = ex - px, ey - py, ez - pz
    vn = math.sqrt(vx * vx + vy * vy + vz * vz)
    if vn > 0.0:
        vx, vy, vz = vx / vn, vy / vn, vz / vn
    shin = _shininess(roughness)
    for i in range(lights.shape[0]):
        if lights[i, 0] == 0.0:
            lx, ly, lz = lights[i, 1], lights[i, 2], lights[i, 3]
            atten = lights[i, 4]
        else:
            lx, ly, lz = lights[i, 1] - px, lights[i, 2] - py, lights[i, 3] - pz
            d2 = lx * lx + ly * ly + lz * lz
            dl = math.sqrt(d2)
            lx, ly, lz = lx / dl, ly / dl, lz / dl
            atten = lights[i, 4] / d2
        ndl = nx * lx + ny * ly + nz * lz
        if ndl <= 0.0:
            continue
        spec = 0.0
        if specular > 0.0:
            hx, hy, hz = lx + vx, ly + vy, lz + vz
            hn = math.sqrt(hx * hx + hy * hy + hz * hz)
            if hn > 0.0:
                ndh = (nx * hx + ny * hy + nz * hz) / hn
                if ndh > 0.0:
                    spec = specular * ndh ** shin
        out[0] += lights[i, 5] * atten * (br * ndl + spec)
        out[1] += lights[i, 6] * atten * (bg * ndl + spec)
        out[2] += lights[i, 7] * atten * (bb * ndl + spec)


def _light_array(lights: Sequence[Light]) -> np.ndarray:
    arr = np.zeros((len(lights), 8))
    for i, light in enumerate(lights):
        arr[i, 0] = 0.0 if light.kind == "sun" else 1.0
        arr[i, 1:4] = light.vector
        arr[i, 4] = light.intensity
        arr[i, 5:8] = light.color
    return arr


def shade(normal, point, lights: Sequence[Light], material: Material, eye=None, clamp: bool = True) -> np.ndarray:
    """RGB radiance at a surface point.

    ``eye`` is the viewer position for the specular half-vector; without it
    the viewer is taken to sit along the normal. Pass ``clamp=False`` to get
    the raw sum before clamping to [0, 1].
    """
    n = np.asarray(normal, dtype=float)
    p = np.asarray(point, dtype=float)
    e = p + n if eye is None else np.asarray(eye, dtype=float)
    out = np.zeros(3)
    _shade(n[0], n[1], n[2], p[0], p[1], p[2], e[0], e[1], e[2], _light_array(lights),
           material.color[0], material.color[1], material.color[2], material.roughness, material.specular, out)
    return np.clip(out, 0.0, 1.0) if clamp else out


# -- textures ----------------------------------------------------------------

def _texture_array(tex: Texture) -> np.ndarray:
    return np.array([
        _TEX_IDS.get(tex.texture_id, 0), *tex.color_a, *tex.color_b,
        tex.scale, math.radians(tex.rotation), tex.offset[0], tex.offset[1],
    ], dtype=np.float64)


@numba.njit(cache=True)
def _hash2(ix, iy):
    h = (ix * 374761393 + iy * 668265263) & 0xFFFFFFFF
    h = ((h ^ (h >> 13)) * 1274126177) & 0xFFFFFFFF
    h = h ^ (h >> 16)
    return (h & 0xFFFFFF) / 16777215.0


@numba.njit(cache=True)
def _texture(tex, x, y, out):
    tid = int(tex[0])
    scale = tex[7]
    c, s = math.cos(tex[8]), math.sin(tex[8])
    x, y = x - tex[9], y - tex[10]
    x, y = c * x - s * y, s * x + c * y
    if tid == 1:
        k = (math.floor(x / scale) + math.floor(y / scale)) % 2
        w = 0.0 if k == 0 else 1.0
    elif tid == 2:
        gx, gy = x / scale, y / scale
        ix, iy = math.floor(gx), math.floor(gy)
        fx, fy = gx - ix, gy - iy
        fx = fx * fx * (3.0 - 2.0 * fx)
        fy = fy * fy * (3.0 - 2.0 * fy)
        i, j = np.int64(ix), np.int64(iy)
        v00 = _hash2(i, j)
        v10 = _hash2(i + 1, j)
        v01 = _hash2(i, j + 1)
        v11 = _hash2(i + 1, j + 1)
        w = (v00 * (1 - fx) + v10 * fx) * (1 - fy) + (v01 * (1 - fx) + v11 * fx) * fy
    elif tid == 3:
        w = min(max(0.5 + y, 0.0), 1.0)
    else:
        w = 0.0
    for k in range(3):
        out[k] = tex[1 + k] * (1.0 - w) + tex[4 + k] * w


# -- acceleration grid -------------------------------------------------------

@dataclass
class Grid:
    origin: np.ndarray
    cell: float
    dims: np.ndarray
    cell_start: np.ndarray
    items: np.ndarray


def _capsule_bounds(caps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a, b = caps[:, 0:3], caps[:, 3:6]
    r = caps[:, 6]
    ext = np.stack([r, r, r * caps[:, 7]], axis=1)
    return np.minimum(a, b) - ext, np.maximum(a, b) + ext


@numba.njit(cache=True)
def _fill_grid(lo, hi, origin, cell, dims):
    n = lo.shape[0]
    nx, ny, nz = dims[0], dims[1], dims[2]
    counts = np.zeros(nx * ny * nz + 1, dtype=np.int64)
    ranges = np.zeros((n, 6), dtype=np.int64)
    for i in range(n):
        for k in range(3):
            ranges[i, k] = min(max(int(math.floor((lo[i, k] - origin[k]) / cell)), 0), dims[k] - 1)
            ranges[i, 3 + k] = min(max(int(math.floor((hi[i, k] - origin[k]) / cell)), 0), dims[k] - 1)
        for x in range(ranges[i, 0], ranges[i, 3] + 1):
            for y in range(ranges[i, 1], ranges[i, 4] + 1):
                for z in range(ranges[i, 2], ranges[i, 5] + 1):
                    counts[(x * ny + y) * nz + z + 1] += 1
    start = np.cumsum(counts)
    fill = start[:-1].copy()
    items = np.zeros(start[-1], dtype=np.int32)
    for i in range(n):
        for x in range(ranges[i, 0], ranges[i, 3] + 1):
            for y in range(ranges[i, 1], ranges[i, 4] + 1):
                for z in range(ranges[i, 2], ranges[i, 5] + 1):
                    c = (x * ny + y) * nz + z
                    items[fill[c]] = i
                    fill[c] += 1
    return start, items


def build_grid(caps: np.ndarray) -> Grid:
    """Uniform grid keyed by capsule bounding boxes.

    Cell size is four times the widest bead, grown when needed so no axis
    exceeds :data:`MAX_GRID_DIM` cells.
    """
    if len(caps) == 0:
        return Grid(np.zeros(3), 1.0, np.ones(3, dtype=np.int64), np.zeros(2, dtype=np.int64),
                    np.zeros(0, dtype=np.int32))
    lo, hi = _capsule_bounds(caps)
    gmin, gmax = lo.min(axis=0), hi.max(axis=0)
    extent = np.maximum(gmax - gmin, 1e-6)
    cell = max(GRID_CELL_FACTOR * 2.0 * caps[:, 6].max(), extent.max() / MAX_GRID_DIM)
    dims = np.maximum(np.ceil(extent / cell).astype(np.int64), 1)
    start, items = _fill_grid(lo, hi, gmin, cell, dims)
    return Grid(gmin, float(cell), dims, start, items)


@numba.njit(cache=True)
def _trace(ox, oy, oz, dx, dy, dz, tmax, caps, origin, cell, dims, start, items, any_hit):
    """Walk the grid along the ray; return (t, capsule index) of the nearest hit.

    With ``any_hit`` the walk stops at the first hit closer than ``tmax``.
    """
    best_t = tmax
    best_i = -1
    if caps.shape[0] == 0:
        return best_t, best_i
    o = (ox, oy, oz)
    d = (dx, dy, dz)
    t0 = 0.0
    t1 = tmax
    for k in range(3):
        lo = origin[k]
        hi = origin[k] + dims[k] * cell
        if d[k] != 0.0:
            ta = (lo - o[k]) / d[k]
            tb = (hi - o[k]) / d[k]
            if ta > tb:
                ta, tb = tb, ta
            t0 = max(t0, ta)
            t1 = min(t1, tb)
        elif o[k] < lo or o[k] > hi:
            return best_t, best_i
    if t0 > t1:
        return best_t, best_i

    idx = np.zeros(3, dtype=np.int64)
    step = np.zeros(3, dtype=np.int64)
    tnext = np.zeros(3)
    tdelta = np.zeros(3)
    for k in range(3):
        p = o[k] + t0 * d[k]
        c = int(math.floor((p - origin[k]) / cell))
        idx[k] = min(max(c, 0), dims[k] - 1)
        if d[k] > 0.0:
            step[k] = 1
            tnext[k] = (origin[k] + (idx[k] + 1) * cell - o[k]) / d[k]
            tdelta[k] = cell / d[k]
        elif d[k] < 0.0:
            step[k] = -1
            tnext[k] = (origin[k] + idx[k] * cell - o[k]) / d[k]
            tdelta[k] = -cell / d[k]
        else:
            tnext[k] = np.inf
            tdelta[k] = np.inf

    ny, nz = dims[1], dims[2]
    while True:
        c = (idx[0] * ny + idx[1]) * nz + idx[2]
        for j in range(start[c], start[c + 1]):
            i = items[j]
            t = _capsule_t(ox, oy, oz, dx, dy, dz, caps[i, 0], caps[i, 1], caps[i, 2],
                           caps[i, 3], caps[i, 4], caps[i, 5], caps[i, 6], caps[i, 7])
            if t < best_t or (t == best_t and best_i >= 0 and i < best_i):
                best_t = t
                best_i = i
                if any_hit:
                    return best_t, best_i
        k = 0
        if tnext[1] < tnext[k]:
            k = 1
        if tnext[2] < tnext[k]:
            k = 2
        if best_t <= tnext[k] or tnext[k] > t1:
            break
        idx[k] += step[k]
        if idx[k] < 0 or idx[k] >= dims[k]:
            break
        tnext[k] += tdelta[k]
    return best_t, best_i


@numba.njit(cache=True)
def _render(W, H, cam, caps, labels, cap_color, origin, cell, dims, start, items,
            lights, material, bed, bed_tex, bg_tex, flat, flat_lut, shadows,
            color_buf, label_buf, depth_buf, id_buf):
    px, py, pz = cam[0], cam[1], cam[2]
    rx, ry, rz = cam[3], cam[4], cam[5]
    ux, uy, uz = cam[6], cam[7], cam[8]
    fx, fy, fz = cam[9], cam[10], cam[11]
    f = cam[12]
    bed_z, bed_cx, bed_cy, bed_half = bed[0], bed[1], bed[2], bed[3]
    rgb = np.zeros(3)
    tex = np.zeros(3)
    for row in range(H):
        for col in range(W):
            sx = (col + 0.5 - W / 2.0) / f
            sy = -(row + 0.5 - H / 2.0) / f
            dx = sx * rx + sy * ux + fx
            dy = sx * ry + sy * uy + fy
            dz = sx * rz + sy * uz + fz
            dn = math.sqrt(dx * dx + dy * dy + dz * dz)
            dx, dy, dz = dx / dn, dy / dn, dz / dn

            t, ci = _trace(px, py, pz, dx, dy, dz, np.inf, caps, origin, cell, dims, start, items, False)
            # finite bed plane
            tb = np.inf
            if dz != 0.0:
                cand = (bed_z - pz) / dz
                if cand > EPS:
                    hx = px + cand * dx
                    hy = py + cand * dy
                    if abs(hx - bed_cx) <= bed_half and abs(hy - bed_cy) <= bed_half:
                        tb = cand
            level = 0
            if ci >= 0 and t <= tb:
                hx, hy, hz = px + t * dx, py + t * dy, pz + t * dz
                level = labels[ci]
                depth_buf[row, col] = t * (dx * fx + dy * fy + dz * fz)
                if flat:
                    for k in range(3):
                        rgb[k] = flat_lut[level, k] / 255.0
                else:
                    nx, ny, nz = _capsule_normal(hx, hy, hz, caps[ci, 0], caps[ci, 1], caps[ci, 2],
                                                 caps[ci, 3], caps[ci, 4], caps[ci, 5], caps[ci, 6], caps[ci, 7])
                    if nx * dx + ny * dy + nz * dz > 0.0:
                        nx, ny, nz = -nx, -ny, -nz
                    _lit(hx, hy, hz, nx, ny, nz, px, py, pz, lights, cap_color[ci, 0], cap_color[ci, 1],
                         cap_color[ci, 2], material[0], material[1], shadows, caps, origin, cell, dims,
                         start, items, rgb)
            elif tb < np.inf:
                hx, hy, hz = px + tb * dx, py + tb * dy, bed_z
                depth_buf[row, col] = tb * (dx * fx + dy * fy + dz * fz)
                if flat:
                    rgb[:] = 0.0
                else:
                    _texture(bed_tex, (hx - bed_cx) / (2.0 * bed_half), (hy - bed_cy) / (2.0 * bed_half), tex)
                    nz = 1.0 if pz >= bed_z else -1.0
                    _lit(hx, hy, hz, 0.0, 0.0, nz, px, py, pz, lights, tex[0], tex[1], tex[2], 0.9, 0.05,
                         shadows, caps, origin, cell, dims, start, items, rgb)
            else:
                depth_buf[row, col] = np.inf
                if flat:
                    rgb[:] = 0.0
                else:
                    _texture(bg_tex, (col + 0.5) / W - 0.5, 0.5 - (row + 0.5) / H, rgb)
            label_buf[row, col] = level
            id_buf[row, col] = ci if (ci >= 0 and t <= tb) else -1
            for k in range(3):
                v = min(max(rgb[k], 0.0), 1.0)
                color_buf[row, col, k] = np.uint8(math.floor(v * 255.0 + 0.5))


@numba.njit(cache=True)
def _lit(hx, hy, hz, nx, ny, nz, ex, ey, ez, lights, br, bg, bb, roughness, specular, shadows,
         caps, origin, cell, dims, start, items, out):
    if not shadows:
        _shade(nx, ny, nz, hx, hy, hz, ex, ey, ez, lights, br, bg, bb, roughness, specular, out)
        return
    # drop occluded lights, then shade with the rest
    visible = np.zeros_like(lights)
    nvis = 0
    ox, oy, oz = hx + 1e-4 * nx, hy + 1e-4 * ny, hz + 1e-4 * nz
    for i in range(lights.shape[0]):
        if lights[i, 0] == 0.0:
            lx, ly, lz = lights[i, 1], lights[i, 2], lights[i, 3]
            dist = np.inf
        else:
            lx, ly, lz = lights[i, 1] - ox, lights[i, 2] - oy, lights[i, 3] - oz
            dist = math.sqrt(lx * lx + ly * ly + lz * lz)
            lx, ly, lz = lx / dist, ly / dist, lz / dist
        _, hit = _trace(ox, oy, oz, lx, ly, lz, dist, caps, origin, cell, dims, start, items, True)
        if hit < 0:
            visible[nvis] = lights[i]
            nvis += 1
    _shade(nx, ny, nz, hx, hy, hz, ex, ey, ez, visible[:nvis], br, bg, bb, roughness, specular, out)


# -- frame -------------------------------------------------------------------

@dataclass
class ImagePair:
    image: np.ndarray
    mask: np.ndarray
    depth: np.ndarray
    meta: dict = field(default_factory=dict)
    # index of the capsule seen at each pixel, -1 for bed/background
    ids: np.ndarray | None = None


def capsules_from_toolpath(ct: ClassifiedToolpath, kind: DatasetKind, color=(0.8, 0.8, 0.8)) -> tuple[np.ndarray, np.ndarray]:
    """Capsule table (N x 8: a, b, radius, vertical scale) and per-capsule labels.

    The capsule axis sits half a layer below the nozzle height so each bead
    spans from ``z - height`` to ``z``.
    """
    segs = ct.segments
    caps = np.zeros((len(segs), 8))
    for i, s in enumerate(segs):
        r = s.width / 2.0
        zc = s.start[2] - s.height / 2.0
        caps[i] = (s.start[0], s.start[1], zc, s.end[0], s.end[1], s.end[2] - s.height / 2.0,
                   r, min(1.0, s.height / s.width))
    return caps, relabel_for_dataset(ct, kind)


def capsule_primitives(ct: ClassifiedToolpath, kind: DatasetKind, color=(0.8, 0.8, 0.8)) -> list[CapsulePrimitive]:
    caps, labels = capsules_from_toolpath(ct, kind)
    return [CapsulePrimitive(tuple(c[0:3]), tuple(c[3:6]), c[6], c[7], int(lab), tuple(color))
            for c, lab in zip(caps, labels)]


def _flat_lut() -> np.ndarray:
    lut = np.zeros((256, 3), dtype=np.uint8)
    for level, rgb in FLAT_ID_COLORS.items():
        lut[level] = rgb
    return lut


def decode_flat_ids(image: np.ndarray) -> np.ndarray:
    """Map a flat-ID colour render back to label levels."""
    out = np.zeros(image.shape[:2], dtype=np.uint8)
    matched = np.zeros(image.shape[:2], dtype=bool)
    for level, rgb in FLAT_ID_COLORS.items():
        hit = np.all(image == np.array(rgb, dtype=image.dtype), axis=-1)
        out[hit] = level
        matched |= hit
    if not matched.all():
        raise RenderError(f"{int((~matched).sum())} pixels carry no flat-ID colour")
    return out


def render_frame(
    scene: SceneInstance,
    ct: ClassifiedToolpath,
    kind: DatasetKind,
    *,
    flat_ids: bool = False,
    shadows: bool = False,
    bed_z: float | None = None,
    frame_index: int = 0,
) -> ImagePair:
    """Render one image/mask pair.

    ``bed_z`` defaults to the bottom of the lowest bead (0 for an empty
    toolpath). With ``flat_ids`` every bead gets its class's flat colour and
    everything else is black, which lets the mask be checked against the
    colour buffer.
    """
    kind = DatasetKind.parse(kind)
    cam = scene.camera
    W, H = cam.resolution
    if W <= 0 or H <= 0:
        raise RenderError(f"zero-area resolution {W}x{H}")
    caps, labels = capsules_from_toolpath(ct, kind)
    grid = build_grid(caps)
    colors = np.tile(np.asarray(scene.material.color, dtype=float), (len(caps), 1))
    segs = ct.segments
    if bed_z is None:
        bed_z = min((s.start[2] - s.height for s in segs), default=0.0)
    if segs:
        lo, hi = ct.toolpath.bounds()
        bed_c = ((lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0)
    else:
        bed_c = (cam.look_at[0], cam.look_at[1])

    right, up, fwd = cam.basis()
    cam_arr = np.array([*cam.position, *right, *up, *fwd, cam.focal_px], dtype=np.float64)
    mat = np.array([scene.material.roughness, scene.material.specular])
    bed = np.array([bed_z, bed_c[0], bed_c[1], scene.bed_size / 2.0])

    color = np.zeros((H, W, 3), dtype=np.uint8)
    label = np.zeros((H, W), dtype=np.uint8)
    depth = np.full((H, W), np.inf)
    ids = np.full((H, W), -1, dtype=np.int64)
    _render(W, H, cam_arr, caps, labels, colors, grid.origin, grid.cell, grid.dims, grid.cell_start,
            grid.items, _light_array(scene.lights), mat, bed, _texture_array(scene.bed),
            _texture_array(scene.background), flat_ids, _flat_lut(), shadows, color, label, depth, ids)

    meta = {
        "source_digest": ct.toolpath.source_digest,
        "kind": kind.value,
        "completion_layer": ct.completion_layer,
        "frame_index": frame_index,
        "seed": scene.rng_seed,
    }
    return ImagePair(color, label, depth, meta, ids)


def trace(origin, direction, caps: np.ndarray, grid: Grid, tmax: float = math.inf) -> tuple[float, int]:
    """Nearest capsule along a ray through ``grid``: ``(distance, index)``, index -1 on a miss."""
    o = [float(v) for v in origin]
    d = [float(v) for v in direction]
    t, i = _trace(o[0], o[1], o[2], d[0], d[1], d[2], tmax, caps, grid.origin, grid.cell, grid.dims,
                  grid.cell_start, grid.items, False)
    return float(t), int(i)
