"""CPU volume renderer: pinhole rays, occupancy skipping, fixed-step marching.

Rays are clipped to the scene AABB and marched with a fixed step. Per-step
opacity is alpha = 1 - exp(-sigma * dt), so transmittance along a constant
density segment is the exact exponential. Marching stops once accumulated
transmittance falls below the termination threshold and the remainder is
composited onto the background color.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .encoding import positional_encode, sh_encode
from .field import query_feature
from .mlp import density_forward, mlp_forward

# number of field+MLP sample evaluations, for empty-space-skipping checks
eval_counter = 0

SHADE_CHUNK = 65536


@dataclass
class Camera:
    """OpenGL-convention pinhole camera: looks along -Z of camera space."""

    c2w: np.ndarray  # 4x4 camera-to-world, row-major
    fov_x: float  # horizontal field of view, radians
    width: int
    height: int

    def __post_init__(self):
        self.c2w = np.asarray(self.c2w, dtype=np.float64)
        if self.c2w.shape != (4, 4):
            raise ValueError(f"c2w must be 4x4, got {self.c2w.shape}")
        rot = self.c2w[:3, :3]
        if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-4):
            raise ValueError("rotation block of c2w is not orthonormal")
        if not 0.0 < self.fov_x < np.pi:
            raise ValueError("fov must lie in (0, pi)")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")

    @property
    def focal(self) -> float:
        return (self.width / 2.0) / np.tan(self.fov_x / 2.0)


@dataclass
class OccupancyGrid:
    """Binary cells over the scene AABB, shape (G, G, G) with axes (x, y, z)."""

    cells: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.cells, dtype=bool)
        if c.ndim != 3 or len(set(c.shape)) != 1:
            raise ValueError(f"occupancy cells must be a cube, got {c.shape}")
        self.cells = c

    @property
    def resolution(self):
        return self.cells.shape[0]

    @property
    def fill_fraction(self):
        return float(np.count_nonzero(self.cells)) / self.cells.size

    @classmethod
    def all_occupied(cls, resolution):
        return cls(np.ones((resolution,) * 3, dtype=bool))


@dataclass
class RayMarchConfig:
    step_size: float | None = None  # world units; None -> aabb diagonal / 512
    termination_threshold: float = 1e-4
    background: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step size must be positive")
        if not 0.0 < self.termination_threshold < 1.0:
            raise ValueError("termination threshold must lie in (0, 1)")

    def resolve_step(self, aabb: np.ndarray) -> float:
        if self.step_size is not None:
            return self.step_size
        aabb = np.asarray(aabb, dtype=np.float64)
        return float(np.linalg.norm(aabb[1] - aabb[0])) / 512.0


def generate_rays(cam: Camera) -> tuple[np.ndarray, np.ndarray]:
    """Rays through every pixel center. Returns origins, dirs of shape (H, W, 3)."""
    px = np.arange(cam.width) + 0.5
    py = np.arange(cam.height) + 0.5
    xs = (px - cam.width / 2.0) / cam.focal
    ys = -(py - cam.height / 2.0) / cam.focal
    d_cam = np.stack(
        [
            np.broadcast_to(xs[None, :], (cam.height, cam.width)),
            np.broadcast_to(ys[:, None], (cam.height, cam.width)),
            np.full((cam.height, cam.width), -1.0),
        ],
        axis=-1,
    )
    d_world = d_cam @ cam.c2w[:3, :3].T
    d_world /= np.linalg.norm(d_world, axis=-1, keepdims=True)
    origins = np.broadcast_to(cam.c2w[:3, 3], d_world.shape).copy()
    return origins, d_world


def generate_ray(cam: Camera, pixel: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    """Single ray through the center of pixel (px, py)."""
    px, py = pixel
    if not (0 <= px < cam.width and 0 <= py < cam.height):
        raise ValueError(f"pixel {pixel} outside {cam.width}x{cam.height} image")
    x = (px + 0.5 - cam.width / 2.0) / cam.focal
    y = -(py + 0.5 - cam.height / 2.0) / cam.focal
    d = cam.c2w[:3, :3] @ np.array([x, y, -1.0])
    return cam.c2w[:3, 3].copy(), d / np.linalg.norm(d)


def intersect_aabb(origins, dirs, aabb):
    """Slab test. Returns (t_near, t_far) with t_near >= 0; miss -> t_near >= t_far."""
    aabb = np.asarray(aabb, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t_lo = (aabb[0] - origins) * inv
        t_hi = (aabb[1] - origins) * inv
    t_lo = np.nan_to_num(t_lo, nan=-np.inf)
    t_hi = np.nan_to_num(t_hi, nan=np.inf)
    t0 = np.maximum(np.minimum(t_lo, t_hi).max(axis=-1), 0.0)
    t1 = np.maximum(t_lo, t_hi).min(axis=-1)
    return t0, t1


def _sample_rays(origins, dirs, aabb, dt):
    """Fixed-step sample points for a ray batch, flattened ray-major.

    Returns (ray_ids, t, positions). Samples sit at t0 + (k + 1/2) dt.
    """
    t0, t1 = intersect_aabb(origins, dirs, aabb)
    span = t1 - t0
    span = np.where(np.isfinite(span) & (span > 0), span, 0.0)
    n = np.floor(span / dt + 1e-9).astype(np.int64)
    ray_ids = np.repeat(np.arange(len(n)), n)
    total = int(n.sum())
    starts = np.concatenate([[0], np.cumsum(n)[:-1]])
    k = np.arange(total) - np.repeat(starts, n)
    t = t0[ray_ids] + (k + 0.5) * dt
    pos = origins[ray_ids] + t[:, None] * dirs[ray_ids]
    return ray_ids, t, pos


def _occupancy_mask(pos, aabb, occ: OccupancyGrid):
    aabb = np.asarray(aabb, dtype=np.float64)
    G = occ.resolution
    rel = (pos - aabb[0]) / (aabb[1] - aabb[0])
    cell = np.clip((rel * G).astype(np.int64), 0, G - 1)
    return occ.cells[cell[:, 0], cell[:, 1], cell[:, 2]]


def _normalize_positions(pos, aabb):
    aabb = np.asarray(aabb, dtype=np.float64)
    rel = (pos - aabb[0]) / (aabb[1] - aabb[0])
    return np.clip(rel, 0.0, 1.0)


def compute_dtype(model) -> np.dtype:
    """Precision of the shading path: follows the field parameters.

    Training stores float32 parameters; float64 models keep the whole
    forward/backward chain in double (used by finite-difference checks).
    """
    return next(iter(model.field.params().values())).dtype


def shade_samples(pos, dirs, model, want_cache=False, sh=None):
    """Field query + MLP decode at world positions with per-sample view dirs.

    Returns (color (M,3), sigma (M,), cache or None). Chunks the field
    gather to bound memory; the cache concatenates per-chunk results.
    ``sh`` optionally supplies precomputed per-sample direction encodings
    (directions are constant along a ray, so callers can encode per ray).
    """
    global eval_counter
    M = len(pos)
    eval_counter += M
    dt = compute_dtype(model)
    colors = np.empty((M, 3))
    sigmas = np.empty(M)
    F = 2 * model.sched.levels * model.field.channels
    zs = np.empty((M, F), dtype=dt) if want_cache else None
    coords_all = np.empty((M, 2 * model.sched.levels, 3), dtype=dt) if want_cache else None
    sh_all = np.empty((M, 16), dtype=dt) if want_cache else None
    caches = []
    for lo in range(0, M, SHADE_CHUNK):
        hi = min(lo + SHADE_CHUNK, M)
        p = _normalize_positions(pos[lo:hi], model.aabb).astype(dt)
        coords = positional_encode(p, model.sched)
        z = query_feature(coords, model.field)
        sh_c = sh[lo:hi] if sh is not None else sh_encode(dirs[lo:hi].astype(dt))
        c, s, cache = mlp_forward(z, sh_c, model.mlp)
        colors[lo:hi] = c
        sigmas[lo:hi] = s
        if want_cache:
            zs[lo:hi] = z
            coords_all[lo:hi] = coords
            sh_all[lo:hi] = sh_c
            caches.append(cache)
    full_cache = (coords_all, zs, sh_all, caches) if want_cache else None
    return colors, sigmas, full_cache


def composite(ray_ids, sigma, color, n_rays, dt, cfg: RayMarchConfig):
    """Emission-absorption quadrature with early termination.

    Returns (pixels (n_rays, 3), aux) where aux carries the per-sample
    transmittance, alpha, weights, inclusion mask and per-ray final
    transmittance needed by the training backward pass.
    """
    bg = np.asarray(cfg.background, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    if len(sigma) == 0:
        pixels = np.tile(bg, (n_rays, 1))
        aux = {
            "T": np.zeros(0), "alpha": np.zeros(0), "w": np.zeros(0),
            "included": np.zeros(0, dtype=bool), "t_final": np.ones(n_rays),
        }
        return pixels, aux
    cum = np.cumsum(sigma)
    first = np.searchsorted(ray_ids, np.arange(n_rays))
    counts = np.bincount(ray_ids, minlength=n_rays)
    base = np.where(counts > 0, (cum - sigma)[np.clip(first, 0, len(sigma) - 1)], 0.0)
    prefix = (cum - sigma) - base[ray_ids]
    T = np.exp(-dt * prefix)
    alpha = -np.expm1(-dt * sigma)
    included = T >= cfg.termination_threshold
    w = np.where(included, T * alpha, 0.0)
    sigma_sum = np.bincount(ray_ids, weights=sigma * included, minlength=n_rays)
    t_final = np.exp(-dt * sigma_sum)
    pixels = np.empty((n_rays, 3))
    for ch in range(3):
        pixels[:, ch] = np.bincount(ray_ids, weights=w * color[:, ch], minlength=n_rays)
    pixels += t_final[:, None] * bg
    aux = {"T": T, "alpha": alpha, "w": w, "included": included, "t_final": t_final}
    return pixels, aux


def render_rays(origins, dirs, model, cfg: RayMarchConfig, want_cache=False):
    """Render a batch of rays. Returns (colors (B, 3), cache or None)."""
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    n_rays = len(origins)
    dt = cfg.resolve_step(model.aabb)
    ray_ids, t, pos = _sample_rays(origins, dirs, model.aabb, dt)
    keep = _occupancy_mask(pos, model.aabb, model.occupancy)
    ray_ids, t, pos = ray_ids[keep], t[keep], pos[keep]
    if len(pos) == 0:
        pixels = np.tile(np.asarray(cfg.background, dtype=np.float64), (n_rays, 1))
        if want_cache:
            empty_aux = {
                "T": np.zeros(0), "alpha": np.zeros(0), "w": np.zeros(0),
                "included": np.zeros(0, dtype=bool), "t_final": np.ones(n_rays),
            }
            return pixels, {
                "ray_ids": ray_ids, "pos": pos, "dirs": dirs, "dt": dt,
                "sigma": np.zeros(0), "color": np.zeros((0, 3)),
                "shade_cache": None, "aux": empty_aux, "n_rays": n_rays,
                "background": cfg.background,
            }
        return pixels, None
    sample_dirs = dirs[ray_ids]
    sh_rays = sh_encode(dirs.astype(compute_dtype(model)))
    color, sigma, shade_cache = shade_samples(
        pos, sample_dirs, model, want_cache, sh=sh_rays[ray_ids]
    )
    pixels, aux = composite(ray_ids, sigma, color, n_rays, dt, cfg)
    cache = None
    if want_cache:
        cache = {
            "ray_ids": ray_ids, "pos": pos, "dirs": dirs, "dt": dt,
            "sigma": sigma, "color": color, "shade_cache": shade_cache,
            "aux": aux, "n_rays": n_rays, "background": cfg.background,
        }
    return pixels, cache


def render_ray(ray, model, cfg: RayMarchConfig) -> np.ndarray:
    """Render one ray (origin, direction) to an RGB color in [0,1]^3."""
    origin, direction = ray
    pixels, _ = render_rays(origin[None], np.asarray(direction)[None] / np.linalg.norm(direction), model, cfg)
    return np.clip(pixels[0], 0.0, 1.0)


def render_image(cam: Camera, model, cfg: RayMarchConfig, ray_chunk=16384) -> np.ndarray:
    """Render a full image, shape (H, W, 3) floats in [0, 1]. Deterministic."""
    origins, dirs = generate_rays(cam)
    flat_o = origins.reshape(-1, 3)
    flat_d = dirs.reshape(-1, 3)
    out = np.empty((len(flat_o), 3))
    for lo in range(0, len(flat_o), ray_chunk):
        hi = min(lo + ray_chunk, len(flat_o))
        out[lo:hi], _ = render_rays(flat_o[lo:hi], flat_d[lo:hi], model, cfg)
    return np.clip(out.reshape(cam.height, cam.width, 3), 0.0, 1.0)


def image_to_bytes(img: np.ndarray) -> np.ndarray:
    """Linear [0,1] floats -> 8-bit channels via round(255 * clamp)."""
    return np.round(255.0 * np.clip(img, 0.0, 1.0)).astype(np.uint8)


def build_occupancy(model, resolution=128, threshold=0.01, seed=0) -> OccupancyGrid:
    """Threshold density at one jittered sample per cell."""
    density = sample_cell_densities(model, resolution, np.random.default_rng(seed))
    return OccupancyGrid(density > threshold)


def sample_cell_densities(model, resolution, rng, chunk=1 << 17) -> np.ndarray:
    """Density at one jittered point per cell, shape (G, G, G), axes (x, y, z)."""
    G = resolution
    idx = np.indices((G, G, G)).reshape(3, -1).T.astype(np.float64)
    jitter = rng.random(idx.shape)
    p = (idx + jitter) / G  # normalized [0,1]^3
    out = np.empty(len(p))
    p = p.astype(compute_dtype(model))
    for lo in range(0, len(p), chunk):
        hi = min(lo + chunk, len(p))
        coords = positional_encode(p[lo:hi], model.sched)
        z = query_feature(coords, model.field)
        out[lo:hi] = density_forward(z, model.mlp)
    return out.reshape(G, G, G)
