"""Randomized render scenes and keyframe interpolation.

All randomness comes from :class:`Xoshiro256`, a pure-Python
xoshiro256** generator seeded through SplitMix64, so a seed produces the
same scene on every platform and Python version.

SplitMix64 (seeding)::

    state += 0x9E3779B97F4A7C15
    z = (state ^ (state >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)

xoshiro256** (output)::

    result = rotl(s1 * 5, 7) * 9
    t = s1 << 17
    s2 ^= s0; s3 ^= s1; s1 ^= s2; s0 ^= s3; s2 ^= t; s3 = rotl(s3, 45)

Floats are ``(next() >> 11) * 2**-53``, uniform on [0, 1).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Sequence

__all__ = [
    "Xoshiro256",
    "derive_seed",
    "Camera",
    "Light",
    "Material",
    "Texture",
    "SceneInstance",
    "Keyframe",
    "SceneRanges",
    "SceneConfigError",
    "sample_scene",
    "interpolate",
    "load_scene_ranges",
]

MASK64 = (1 << 64) - 1


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return state, z ^ (z >> 31)


class Xoshiro256:
    """xoshiro256** PRNG (Blackman & Vigna), seeded with SplitMix64."""

    def __init__(self, seed: int):
        state = seed & MASK64
        s = []
        for _ in range(4):
            state, z = _splitmix64(state)
            s.append(z)
        self.s = s

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self.s
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def integers(self, lo: int, hi: int) -> int:
        """Uniform integer in the closed range [lo, hi]."""
        span = hi - lo + 1
        # rejection sampling keeps the draw unbiased
        limit = (1 << 64) - ((1 << 64) % span)
        while True:
            v = self.next_u64()
            if v < limit:
                return lo + v % span

    def choice(self, items: Sequence):
        return items[self.integers(0, len(items) - 1)]


def derive_seed(*parts: Any) -> int:
    """Stable 64-bit seed from any mix of ints and strings."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(repr(p).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


Vec3 = tuple[float, float, float]


def _sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def _norm(a):
    n = math.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])
    return (a[0] / n, a[1] / n, a[2] / n)


def _lerp(a: float, b: float, t: float) -> float:
    # exact at both endpoints
    return (1.0 - t) * a + t * b


def _lerp_vec(a, b, t):
    return tuple(_lerp(x, y, t) for x, y in zip(a, b))


class SceneConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Camera:
    position: Vec3
    look_at: Vec3
    up: Vec3 = (0.0, 0.0, 1.0)
    vertical_fov: float = 40.0
    resolution: tuple[int, int] = (256, 256)

    def __post_init__(self):
        if not 10.0 < self.vertical_fov < 120.0:
            raise ValueError(f"vertical_fov {self.vertical_fov} outside (10, 120)")
        if tuple(self.position) == tuple(self.look_at):
            raise ValueError("camera position equals look_at")
        if min(self.resolution) < 16:
            raise ValueError(f"resolution {self.resolution} below 16 px")

    @property
    def focal_px(self) -> float:
        return (self.resolution[1] / 2.0) / math.tan(math.radians(self.vertical_fov) / 2.0)

    def basis(self) -> tuple[Vec3, Vec3, Vec3]:
        """(right, true_up, forward) unit vectors in world space."""
        f = _norm(_sub(self.look_at, self.position))
        u = self.up
        r = (f[1] * u[2] - f[2] * u[1], f[2] * u[0] - f[0] * u[2], f[0] * u[1] - f[1] * u[0])
        if math.hypot(*r) < 1e-12:
            raise ValueError("camera up vector is parallel to the view direction")
        r = _norm(r)
        up = (r[1] * f[2] - r[2] * f[1], r[2] * f[0] - r[0] * f[2], r[0] * f[1] - r[1] * f[0])
        return r, up, f


@dataclass(frozen=True)
class Light:
    """A Sun (``vector`` points toward the light) or a Point light (``vector`` is its position)."""

    kind: str
    vector: Vec3
    intensity: float = 1.0
    color: Vec3 = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.kind not in ("sun", "point"):
            raise ValueError(f"unknown light kind {self.kind!r}")
        if self.intensity < 0:
            raise ValueError("light intensity must be non-negative")
        if self.kind == "sun":
            n = math.hypot(*self.vector)
            if abs(n - 1.0) > 1e-9:
                object.__setattr__(self, "vector", _norm(self.vector))


@dataclass(frozen=True)
class Material:
    color: Vec3 = (0.8, 0.3, 0.2)
    roughness: float = 0.5
    specular: float = 0.3

    def __post_init__(self):
        if not all(0.0 <= c <= 1.0 for c in self.color):
            raise ValueError("material color channels must lie in [0, 1]")
        if not (0.0 <= self.roughness <= 1.0 and 0.0 <= self.specular <= 1.0):
            raise ValueError("roughness and specular must lie in [0, 1]")


TEXTURE_IDS = ("checker", "noise", "gradient", "flat")


@dataclass(frozen=True)
class Texture:
    """Procedural texture; ``offset``/``rotation``/``scale`` place it on its plane."""

    texture_id: str = "checker"
    color_a: Vec3 = (0.6, 0.6, 0.6)
    color_b: Vec3 = (0.3, 0.3, 0.3)
    scale: float = 10.0
    rotation: float = 0.0
    offset: tuple[float, float] = (0.0, 0.0)


@dataclass(frozen=True)
class SceneInstance:
    camera: Camera
    lights: tuple[Light, ...]
    bed: Texture = Texture()
    background: Texture = Texture("gradient", (0.75, 0.8, 0.85), (0.35, 0.4, 0.45), 1.0)
    material: Material = Material()
    bed_size: float = 250.0
    rng_seed: int = 0

    def __post_init__(self):
        if not self.lights:
            raise ValueError("a scene needs at least one light")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SceneInstance":
        def tup(v):
            return tuple(tup(x) for x in v) if isinstance(v, list) else v

        def tex(t):
            return Texture(**{k: tup(v) for k, v in t.items()})

        return cls(
            camera=Camera(**{k: tup(v) for k, v in d["camera"].items()}),
            lights=tuple(Light(**{k: tup(v) for k, v in light.items()}) for light in d["lights"]),
            bed=tex(d["bed"]),
            background=tex(d["background"]),
            material=Material(**{k: tup(v) for k, v in d["material"].items()}),
            bed_size=d["bed_size"],
            rng_seed=d["rng_seed"],
        )


@dataclass(frozen=True)
class Keyframe:
    frame_index: int
    scene: SceneInstance


DEFAULT_PALETTE = (
    (0.85, 0.15, 0.12),
    (0.95, 0.55, 0.10),
    (0.95, 0.85, 0.20),
    (0.20, 0.60, 0.25),
    (0.15, 0.35, 0.80),
    (0.55, 0.25, 0.70),
    (0.92, 0.92, 0.90),
    (0.12, 0.12, 0.12),
    (0.55, 0.55, 0.58),
)


@dataclass(frozen=True)
class SceneRanges:
    """Ranges for :func:`sample_scene`. Angles are degrees, lengths millimetres.

    The camera radius is measured from the part centroid. Defaults frame a
    part of roughly 20 to 100 mm.
    """

    camera_radius: tuple[float, float] = (60.0, 160.0)
    camera_elevation: tuple[float, float] = (20.0, 70.0)
    camera_azimuth: tuple[float, float] = (0.0, 360.0)
    camera_fov: tuple[float, float] = (30.0, 45.0)
    # fraction of the bounding box half-extent the look-at point may stray from the centroid
    look_at_jitter: float = 0.5
    light_count: tuple[int, int] = (1, 4)
    light_radius: tuple[float, float] = (100.0, 300.0)
    light_elevation: tuple[float, float] = (20.0, 85.0)
    light_intensity: tuple[float, float] = (3.0e3, 1.5e4)
    sun_elevation: tuple[float, float] = (35.0, 85.0)
    sun_intensity: tuple[float, float] = (0.35, 0.7)
    light_tint: float = 0.15
    material_palette: tuple[Vec3, ...] = DEFAULT_PALETTE
    material_roughness: tuple[float, float] = (0.2, 0.8)
    material_specular: tuple[float, float] = (0.0, 0.5)
    bed_textures: tuple[str, ...] = ("checker", "noise", "gradient")
    background_textures: tuple[str, ...] = ("gradient", "noise", "flat")
    bed_size: float = 250.0
    resolution: tuple[int, int] = (256, 256)
    max_retries: int = 20

    def __post_init__(self):
        for name in ("camera_radius", "camera_elevation", "camera_azimuth", "camera_fov", "light_count",
                     "light_radius", "light_elevation", "light_intensity", "sun_elevation", "sun_intensity",
                     "material_roughness", "material_specular"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise SceneConfigError(f"empty range for {name}: min {lo} > max {hi}")
        if self.light_count[0] < 1 or self.light_count[1] > 4:
            raise SceneConfigError("point light count must lie within [1, 4]")
        if not self.material_palette:
            raise SceneConfigError("material palette is empty")
        if self.camera_elevation[0] < 0.0 or self.camera_elevation[1] >= 90.0:
            raise SceneConfigError("camera elevation must lie in [0, 90)")
        if self.camera_fov[0] <= 10.0 or self.camera_fov[1] >= 120.0:
            raise SceneConfigError("camera fov must lie in (10, 120)")
        if self.camera_radius[0] <= 0:
            raise SceneConfigError("camera radius must be positive")
        if min(self.resolution) < 16:
            raise SceneConfigError("resolution below 16 px")


# dotted config key -> (field name, index into a (min, max) pair or None)
_CONFIG_KEYS = {
    "camera.radius.min": ("camera_radius", 0),
    "camera.radius.max": ("camera_radius", 1),
    "camera.elevation.min": ("camera_elevation", 0),
    "camera.elevation.max": ("camera_elevation", 1),
    "camera.azimuth.min": ("camera_azimuth", 0),
    "camera.azimuth.max": ("camera_azimuth", 1),
    "camera.fov.min": ("camera_fov", 0),
    "camera.fov.max": ("camera_fov", 1),
    "camera.look_at_jitter": ("look_at_jitter", None),
    "lights.count.min": ("light_count", 0),
    "lights.count.max": ("light_count", 1),
    "lights.radius.min": ("light_radius", 0),
    "lights.radius.max": ("light_radius", 1),
    "lights.elevation.min": ("light_elevation", 0),
    "lights.elevation.max": ("light_elevation", 1),
    "lights.intensity.min": ("light_intensity", 0),
    "lights.intensity.max": ("light_intensity", 1),
    "lights.tint": ("light_tint", None),
    "sun.elevation.min": ("sun_elevation", 0),
    "sun.elevation.max": ("sun_elevation", 1),
    "sun.intensity.min": ("sun_intensity", 0),
    "sun.intensity.max": ("sun_intensity", 1),
    "material.palette": ("material_palette", None),
    "material.roughness.min": ("material_roughness", 0),
    "material.roughness.max": ("material_roughness", 1),
    "material.specular.min": ("material_specular", 0),
    "material.specular.max": ("material_specular", 1),
    "bed.textures": ("bed_textures", None),
    "bed.size": ("bed_size", None),
    "background.textures": ("background_textures", None),
    "resolution": ("resolution", None),
    "max_retries": ("max_retries", None),
}


def _flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _to_tuple(v):
    return tuple(_to_tuple(x) for x in v) if isinstance(v, (list, tuple)) else v


def ranges_from_mapping(mapping: dict, base: SceneRanges | None = None) -> SceneRanges:
    """Build :class:`SceneRanges` over ``base``.

    Keys are the documented dotted names (``camera.radius.min``; nesting
    like ``{"camera": {"radius": {"min": ...}}}`` is equivalent) or the
    :class:`SceneRanges` field names themselves.
    """
    base = base or SceneRanges()
    values = {f.name: getattr(base, f.name) for f in fields(base)}
    names = set(values)
    for key, v in _flatten(mapping).items():
        if key == "resolution" and isinstance(v, str):
            from .raster import parse_resolution

            v = parse_resolution(v)
        if key in names:
            values[key] = _to_tuple(v)
            continue
        if key not in _CONFIG_KEYS:
            raise SceneConfigError(f"unknown scene config key {key!r}")
        name, idx = _CONFIG_KEYS[key]
        if idx is None:
            values[name] = _to_tuple(v)
        else:
            pair = list(values[name])
            pair[idx] = v
            values[name] = tuple(pair)
    return SceneRanges(**values)


def load_scene_ranges(path: str | Path) -> SceneRanges:
    """Read a JSON scene-range file (see :data:`_CONFIG_KEYS` for the keys)."""
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    return ranges_from_mapping(data.get("scene", data))


def _spherical(center: Vec3, radius: float, elevation: float, azimuth: float) -> Vec3:
    el, az = math.radians(elevation), math.radians(azimuth)
    return (
        center[0] + radius * math.cos(el) * math.cos(az),
        center[1] + radius * math.cos(el) * math.sin(az),
        center[2] + radius * math.sin(el),
    )


def _box_visible(camera: Camera, lo: Vec3, hi: Vec3) -> bool:
    """True if any bounding-box corner (or the centre) projects inside the frame."""
    from .raster import project

    w, h = camera.resolution
    corners = [(x, y, z) for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])]
    corners.append(tuple((a + b) / 2 for a, b in zip(lo, hi)))
    for p in corners:
        hit = project(camera, p)
        if hit is not None and 0 <= hit[0] < w and 0 <= hit[1] < h:
            return True
    return False


def _sample_texture(rng: Xoshiro256, ids: Sequence[str], bright: bool) -> Texture:
    # texture coordinates are normalized: bed by its size, background by the frame
    tid = rng.choice(list(ids))
    base = rng.uniform(0.45, 0.85) if bright else rng.uniform(0.15, 0.45)
    tint = [rng.uniform(-0.08, 0.08) for _ in range(3)]
    a = tuple(min(1.0, max(0.0, base + t)) for t in tint)
    contrast = rng.uniform(0.1, 0.35)
    b = tuple(max(0.0, c - contrast) for c in a)
    scale = rng.uniform(1.0 / 40.0, 1.0 / 8.0)
    return Texture(tid, a, b, scale, rng.uniform(0.0, 360.0), (rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05)))


def sample_scene(
    rng_seed: int,
    config: SceneRanges = SceneRanges(),
    bounds: tuple[Vec3, Vec3] = ((-10.0, -10.0, 0.0), (10.0, 10.0, 10.0)),
) -> SceneInstance:
    """Draw a scene for a part with bounding box ``bounds``.

    Fully determined by ``rng_seed``. The camera sits on a spherical shell
    around the box centroid and looks at a point inside the box; a draw whose
    box falls outside the frame is redrawn up to ``config.max_retries`` times.
    """
    rng = Xoshiro256(rng_seed)
    lo, hi = bounds
    center = tuple((a + b) / 2 for a, b in zip(lo, hi))
    half = tuple((b - a) / 2 for a, b in zip(lo, hi))

    camera = None
    for _ in range(config.max_retries + 1):
        radius = rng.uniform(*config.camera_radius)
        elevation = rng.uniform(*config.camera_elevation)
        azimuth = rng.uniform(*config.camera_azimuth)
        fov = rng.uniform(*config.camera_fov)
        j = config.look_at_jitter
        look_at = tuple(c + j * hw * rng.uniform(-1.0, 1.0) for c, hw in zip(center, half))
        candidate = Camera(_spherical(center, radius, elevation, azimuth), look_at, (0.0, 0.0, 1.0), fov,
                           tuple(config.resolution))
        if _box_visible(candidate, lo, hi):
            camera = candidate
            break
    if camera is None:
        # pointing straight at the centroid always frames the box
        camera = replace(candidate, look_at=center)

    sun_el = rng.uniform(*config.sun_elevation)
    sun_az = rng.uniform(0.0, 360.0)
    sun = Light("sun", _spherical((0.0, 0.0, 0.0), 1.0, sun_el, sun_az), rng.uniform(*config.sun_intensity))
    lights = [sun]
    for _ in range(rng.integers(*config.light_count)):
        pos = _spherical(center, rng.uniform(*config.light_radius), rng.uniform(*config.light_elevation),
                         rng.uniform(0.0, 360.0))
        color = tuple(1.0 - config.light_tint * rng.random() for _ in range(3))
        lights.append(Light("point", pos, rng.uniform(*config.light_intensity), color))

    material = Material(
        rng.choice(list(config.material_palette)),
        rng.uniform(*config.material_roughness),
        rng.uniform(*config.material_specular),
    )
    bed = _sample_texture(rng, config.bed_textures, bright=False)
    background = _sample_texture(rng, config.background_textures, bright=True)
    return SceneInstance(camera, tuple(lights), bed, background, material, config.bed_size, rng_seed & MASK64)


def _lerp_texture(a: Texture, b: Texture, t: float) -> Texture:
    return Texture(
        a.texture_id,
        _lerp_vec(a.color_a, b.color_a, t),
        _lerp_vec(a.color_b, b.color_b, t),
        _lerp(a.scale, b.scale, t),
        _lerp(a.rotation, b.rotation, t),
        _lerp_vec(a.offset, b.offset, t),
    )


def interpolate(a: Keyframe, b: Keyframe, t: float) -> SceneInstance:
    """Linear blend of two keyframes.

    Continuous fields (positions, look-at, fov, intensities, colours,
    material scalars, texture placement) are lerped; discrete fields
    (texture ids, light kinds, resolution, seed) come from ``a``. Lights
    pair up by index; when counts differ only ``a``'s extra lights are kept
    at their own values.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"interpolation parameter {t} outside [0, 1]")
    if not a.frame_index < b.frame_index:
        raise ValueError("keyframes must have increasing frame indices")
    sa, sb = a.scene, b.scene
    camera = Camera(
        _lerp_vec(sa.camera.position, sb.camera.position, t),
        _lerp_vec(sa.camera.look_at, sb.camera.look_at, t),
        sa.camera.up,
        _lerp(sa.camera.vertical_fov, sb.camera.vertical_fov, t),
        sa.camera.resolution,
    )
    lights = []
    for i, la in enumerate(sa.lights):
        lb = sb.lights[i] if i < len(sb.lights) and sb.lights[i].kind == la.kind else la
        vec = _lerp_vec(la.vector, lb.vector, t)
        if la.kind == "sun" and 0.0 < t < 1.0:
            vec = _norm(vec)
        lights.append(Light(la.kind, vec, _lerp(la.intensity, lb.intensity, t), _lerp_vec(la.color, lb.color, t)))
    material = Material(
        _lerp_vec(sa.material.color, sb.material.color, t),
        _lerp(sa.material.roughness, sb.material.roughness, t),
        _lerp(sa.material.specular, sb.material.specular, t),
    )
    return SceneInstance(
        camera,
        tuple(lights),
        _lerp_texture(sa.bed, sb.bed, t),
        _lerp_texture(sa.background, sb.background, t),
        material,
        _lerp(sa.bed_size, sb.bed_size, t),
        sa.rng_seed,
    )
