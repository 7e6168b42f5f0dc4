"""Analytic toy scene: Lambertian colored sphere over a ground disc.

Ground-truth images are ray-traced in closed form (sphere and disc
intersections, Lambertian shading, white background), so they are an
independent oracle for the learned renderer.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
from PIL import Image

from ppng.cli import orbit_camera
from ppng.renderer import Camera, generate_rays
from ppng.trainer import PosedDataset

AABB = np.array([[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]])
SPHERE_CENTER = np.array([0.0, 0.0, 0.1])
SPHERE_RADIUS = 0.45
SPHERE_ALBEDO = np.array([0.8, 0.3, 0.25])
DISC_Z = -0.35
DISC_RADIUS = 0.85
DISC_ALBEDO = np.array([0.3, 0.5, 0.8])
LIGHT_DIR = np.array([0.4, 0.2, 1.0]) / np.linalg.norm([0.4, 0.2, 1.0])
AMBIENT = 0.25


def _shade(albedo, normal):
    lam = np.maximum(normal @ LIGHT_DIR, 0.0)
    return albedo * (AMBIENT + (1.0 - AMBIENT) * lam)[..., None]


def trace_rays(origins, dirs):
    """Closed-form render of the scene for rays (..., 3). Returns colors (..., 3)."""
    o = origins.reshape(-1, 3)
    d = dirs.reshape(-1, 3)
    color = np.ones_like(o)
    t_hit = np.full(len(o), np.inf)

    # sphere
    oc = o - SPHERE_CENTER
    b = np.einsum("ij,ij->i", oc, d)
    c = np.einsum("ij,ij->i", oc, oc) - SPHERE_RADIUS**2
    disc = b * b - c
    hit = disc > 0
    t_s = -b - np.sqrt(np.where(hit, disc, 0.0))
    hit &= t_s > 1e-6
    p = o[hit] + t_s[hit, None] * d[hit]
    n = (p - SPHERE_CENTER) / SPHERE_RADIUS
    color[hit] = _shade(SPHERE_ALBEDO, n)
    t_hit[hit] = t_s[hit]

    # ground disc
    dz = d[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        t_p = (DISC_Z - o[:, 2]) / dz
    p = o + t_p[:, None] * d
    on_disc = (np.abs(dz) > 1e-9) & (t_p > 1e-6) & (np.hypot(p[:, 0], p[:, 1]) <= DISC_RADIUS)
    closer = on_disc & (t_p < t_hit)
    normal_up = np.array([0.0, 0.0, 1.0])
    color[closer] = _shade(DISC_ALBEDO, np.broadcast_to(normal_up, (int(closer.sum()), 3)))
    return color.reshape(origins.shape)


def toy_cameras(n_views, width=64, height=64, start_azimuth=0.0, fov_deg=45.0):
    cams = []
    for i in range(n_views):
        az = start_azimuth + 360.0 * i / n_views
        el = 20.0 + 25.0 * ((i * 7) % n_views) / n_views
        cams.append(orbit_camera(f"{az},{el},2.8", AABB, math.radians(fov_deg), width, height))
    return cams


def make_toy_dataset(n_views=20, width=64, height=64, start_azimuth=0.0) -> PosedDataset:
    cams = toy_cameras(n_views, width, height, start_azimuth)
    images = []
    for cam in cams:
        o, d = generate_rays(cam)
        images.append(trace_rays(o, d))
    return PosedDataset(np.stack(images), cams, AABB)


def write_toy_dataset(directory, n_views=4, width=32, height=32) -> Path:
    """Write the scene as a transforms.json dataset with PNG frames."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ds = make_toy_dataset(n_views, width, height)
    frames = []
    for i, (img, cam) in enumerate(zip(ds.images, ds.cameras)):
        name = f"r_{i}.png"
        Image.fromarray(np.round(255 * img).astype(np.uint8)).save(directory / name)
        frames.append({"file_path": name, "transform_matrix": cam.c2w.tolist()})
    meta = {
        "camera_angle_x": ds.cameras[0].fov_x,
        "aabb": AABB.tolist(),
        "frames": frames,
    }
    (directory / "transforms.json").write_text(json.dumps(meta, indent=1))
    return directory
