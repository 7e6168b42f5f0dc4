"""End-to-end fitting of a scene model to posed images.

The training loop samples pixel batches without replacement within an
epoch, renders them with the current occupancy grid, applies a Huber
photometric loss, backpropagates exactly through the quadrature, MLP, and
feature grid, and takes Adam steps. The occupancy grid starts fully
occupied and is refreshed periodically from an EMA of jittered density
samples.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dataclass_field
from pathlib import Path

import numpy as np
from PIL import Image

from .encoding import FrequencySchedule
from .field import (
    CpFactorSet,
    FourierVolumeSet,
    TriplaneFactorSet,
    query_feature_backward,
)
from .mlp import ShallowMlp, mlp_backward
from .model import SceneModel
from .renderer import (
    SHADE_CHUNK,
    Camera,
    OccupancyGrid,
    RayMarchConfig,
    compute_dtype,
    generate_rays,
    render_rays,
    sample_cell_densities,
)

DEFAULT_AABB = np.array([[-1.5, -1.5, -1.5], [1.5, 1.5, 1.5]])
FIELD_INIT_SCALE = 1e-4


class DatasetError(Exception):
    pass


class DatasetNotFoundError(DatasetError):
    pass


class MalformedDatasetError(DatasetError):
    pass


class InconsistentResolutionError(DatasetError):
    pass


class DivergenceError(Exception):
    """Mean batch loss became non-finite."""


@dataclass
class PosedDataset:
    images: np.ndarray  # (N, H, W, 3) linear floats in [0, 1]
    cameras: list[Camera]
    aabb: np.ndarray  # (2, 3)

    def __post_init__(self):
        self.aabb = np.asarray(self.aabb, dtype=np.float64).reshape(2, 3)
        if len(self.cameras) != len(self.images):
            raise ValueError("camera count does not match image count")
        if not np.all(np.isfinite([c.c2w for c in self.cameras])):
            raise ValueError("camera poses must be finite")
        if np.any(self.aabb[1] <= self.aabb[0]):
            raise ValueError("AABB must have positive extent")


def load_dataset(directory) -> PosedDataset:
    """Read a transforms.json dataset (camera_angle_x + per-frame c2w poses).

    Images with alpha are composited over white. The scene AABB comes from
    an optional top-level "aabb" entry ([[min],[max]]); without one the
    conventional [-1.5, 1.5]^3 synthetic-scene box is used.
    """
    directory = Path(directory)
    meta_path = directory / "transforms.json"
    if not meta_path.is_file():
        raise DatasetNotFoundError(f"no transforms.json in {directory}")
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedDatasetError(f"invalid JSON in {meta_path}: {exc}") from exc
    try:
        angle_x = float(meta["camera_angle_x"])
        frames = meta["frames"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedDatasetError(f"missing camera_angle_x or frames: {exc}") from exc
    if not frames:
        raise MalformedDatasetError("dataset has no frames")
    images, cameras = [], []
    for frame in frames:
        try:
            rel = frame["file_path"]
            c2w = np.array(frame["transform_matrix"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedDatasetError(f"malformed frame entry: {exc}") from exc
        img_path = directory / rel
        if not img_path.is_file():
            candidates = [img_path.with_suffix(ext) for ext in (".png", ".jpg")]
            img_path = next((p for p in candidates if p.is_file()), None)
            if img_path is None:
                raise DatasetNotFoundError(f"image {rel!r} not found under {directory}")
        rgba = np.asarray(Image.open(img_path).convert("RGBA"), dtype=np.float64) / 255.0
        rgb = rgba[..., :3] * rgba[..., 3:4] + (1.0 - rgba[..., 3:4])
        images.append(rgb)
        h, w = rgb.shape[:2]
        cameras.append(Camera(c2w, angle_x, w, h))
    shapes = {img.shape for img in images}
    if len(shapes) != 1:
        raise InconsistentResolutionError(f"mixed image resolutions: {sorted(shapes)}")
    aabb = np.array(meta["aabb"], dtype=np.float64) if "aabb" in meta else DEFAULT_AABB
    return PosedDataset(np.stack(images), cameras, aabb)


@dataclass
class TrainConfig:
    ppng_type: int = 3
    resolution: int = 80  # Q
    levels: int = 4  # L
    channels: int = 4  # D
    rank: int = 8  # R, ignored for type 3
    steps: int = 2000
    batch_rays: int = 4096
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-15
    huber_delta: float = 0.1
    occupancy_interval: int = 16
    occupancy_decay: float = 0.95
    occupancy_threshold: float = 0.01
    occupancy_resolution: int = 128
    step_size: float | None = None
    background: tuple[float, float, float] = (1.0, 1.0, 1.0)
    density_layers: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.ppng_type not in (1, 2, 3):
            raise ValueError("ppng_type must be 1, 2, or 3")
        for name in ("resolution", "levels", "channels", "steps", "batch_rays",
                     "occupancy_interval", "occupancy_resolution"):
            if getattr(self, name) < 0 or (name != "steps" and getattr(self, name) == 0):
                raise ValueError(f"{name} must be positive")
        if self.ppng_type != 3 and self.rank <= 0:
            raise ValueError("rank must be positive for factorized types")
        if self.huber_delta <= 0:
            raise ValueError("huber_delta must be positive")

    def render_config(self) -> RayMarchConfig:
        return RayMarchConfig(step_size=self.step_size, background=self.background)

    @property
    def default_rank(self) -> int:
        return {1: 8, 2: 2, 3: 0}[self.ppng_type]


def init_model(config: TrainConfig, aabb) -> SceneModel:
    rng = np.random.default_rng(config.seed)
    Q, L, D, R = config.resolution, config.levels, config.channels, config.rank

    def uniform(shape):
        return rng.uniform(-FIELD_INIT_SCALE, FIELD_INIT_SCALE, size=shape).astype(np.float32)

    if config.ppng_type == 1:
        shape = (2 * L, R, Q, D)
        field = CpFactorSet(uniform(shape), uniform(shape), uniform(shape))
    elif config.ppng_type == 2:
        shape = (2 * L, R, Q, Q, D)
        field = TriplaneFactorSet(uniform(shape), uniform(shape), uniform(shape))
    else:
        field = FourierVolumeSet(uniform((2 * L, Q, Q, Q, D)))
    mlp = ShallowMlp.init(
        feature_dim=2 * L * D, density_layers=config.density_layers, seed=config.seed
    )
    occ = OccupancyGrid.all_occupied(config.occupancy_resolution)
    return SceneModel(field, mlp, occ, FrequencySchedule.default(L), aabb)


def huber_loss(pred: np.ndarray, target: np.ndarray, delta: float):
    """Per-ray Huber loss summed over channels, with gradient w.r.t. pred."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    pred = np.atleast_2d(pred)
    target = np.atleast_2d(target)
    r = pred - target
    quad = np.abs(r) <= delta
    loss = np.where(quad, 0.5 * r * r, delta * (np.abs(r) - 0.5 * delta))
    grad = np.where(quad, r, delta * np.sign(r))
    return loss.sum(axis=-1), grad


def model_params(model: SceneModel) -> dict[str, np.ndarray]:
    out = {f"field.{k}": v for k, v in model.field.params().items()}
    out.update({f"mlp.{k}": v for k, v in model.mlp.params().items()})
    return out


def backprop_batch(cache: dict, d_pixels: np.ndarray, model: SceneModel) -> dict:
    """Gradients of a rendered batch w.r.t. all model parameters.

    cache comes from render_rays(..., want_cache=True); d_pixels is the
    loss gradient per ray, shape (B, 3). Early-termination truncation is
    part of the forward function, so excluded samples get zero gradient.
    """
    grads = {name: np.zeros_like(p, dtype=np.float64) for name, p in model_params(model).items()}
    ray_ids = cache["ray_ids"]
    if len(ray_ids) == 0:
        return grads
    aux = cache["aux"]
    dt, n_rays = cache["dt"], cache["n_rays"]
    sigma, color = cache["sigma"], cache["color"]
    T, alpha, w, included, t_final = (
        aux["T"], aux["alpha"], aux["w"], aux["included"], aux["t_final"],
    )
    bg = np.asarray(cache["background"], dtype=np.float64)
    d_pixels = np.asarray(d_pixels, dtype=np.float64)

    # suffix radiance behind each sample: sum_{j>k} w_j c_j + T_final * bg
    wc = w[:, None] * color  # (M, 3)
    first = np.searchsorted(ray_ids, np.arange(n_rays))
    counts = np.bincount(ray_ids, minlength=n_rays)
    suffix = np.empty_like(wc)
    for ch in range(3):
        cum = np.cumsum(wc[:, ch])
        base = np.where(counts > 0, (cum - wc[:, ch])[np.clip(first, 0, len(wc) - 1)], 0.0)
        incl_prefix = cum - base[ray_ids]
        total = np.bincount(ray_ids, weights=wc[:, ch], minlength=n_rays)
        suffix[:, ch] = total[ray_ids] - incl_prefix + t_final[ray_ids] * bg[ch]

    u = d_pixels[ray_ids]  # (M, 3)
    d_color = w[:, None] * u
    d_sigma = dt * np.einsum(
        "mc,mc->m", u, (T * (1.0 - alpha))[:, None] * color - suffix
    )
    d_sigma = np.where(included, d_sigma, 0.0)
    d_color[~included] = 0.0

    coords_all, _, _, mlp_caches = cache["shade_cache"]
    # backward pass matches the forward shading precision
    dt_compute = compute_dtype(model)
    d_color = d_color.astype(dt_compute)
    d_sigma = d_sigma.astype(dt_compute)
    M = len(ray_ids)
    for idx, lo in enumerate(range(0, M, SHADE_CHUNK)):
        hi = min(lo + SHADE_CHUNK, M)
        mg, dz = mlp_backward(mlp_caches[idx], d_color[lo:hi], d_sigma[lo:hi], model.mlp)
        for k, g in mg.items():
            grads[f"mlp.{k}"] += g
        fg = query_feature_backward(coords_all[lo:hi], model.field, dz)
        for k, g in fg.items():
            grads[f"field.{k}"] += g
    return grads


def backprop_ray(ray, model: SceneModel, cfg: RayMarchConfig, d_pixel: np.ndarray) -> dict:
    """Forward-render one ray with caching, then backpropagate d_pixel."""
    origin, direction = ray
    _, cache = render_rays(np.asarray(origin)[None], np.asarray(direction)[None], model, cfg, want_cache=True)
    return backprop_batch(cache, np.asarray(d_pixel)[None], model)


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: dict[str, np.ndarray]) -> "AdamState":
        return cls(
            {k: np.zeros_like(p, dtype=np.float64) for k, p in params.items()},
            {k: np.zeros_like(p, dtype=np.float64) for k, p in params.items()},
        )


def adam_step(params, grads, state: AdamState, config: TrainConfig) -> list[str]:
    """Bias-corrected Adam update in place. Returns names skipped as non-finite."""
    state.step += 1
    b1, b2 = config.beta1, config.beta2
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    skipped = []
    for name, p in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            skipped.append(name)
            continue
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + config.eps)
        p -= update.astype(p.dtype)
    return skipped


def _refresh_occupancy(model: SceneModel, ema: np.ndarray, config: TrainConfig, rng):
    sampled = sample_cell_densities(model, config.occupancy_resolution, rng)
    np.maximum(ema * config.occupancy_decay, sampled, out=ema)
    model.occupancy.cells = ema > config.occupancy_threshold


def train(dataset: PosedDataset, config: TrainConfig, progress=None):
    """Fit a model to the dataset. Returns (model, trace).

    trace is a list of (step, mean_huber_loss, psnr_estimate) rows.
    """
    model = init_model(config, dataset.aabb)
    params = model_params(model)
    state = AdamState.for_params(params)
    cfg = config.render_config()
    rng = np.random.default_rng(config.seed)

    origins, dirs, targets = [], [], []
    for img, cam in zip(dataset.images, dataset.cameras):
        o, d = generate_rays(cam)
        origins.append(o.reshape(-1, 3))
        dirs.append(d.reshape(-1, 3))
        targets.append(img.reshape(-1, 3))
    origins = np.concatenate(origins)
    dirs = np.concatenate(dirs)
    targets = np.concatenate(targets)
    n_pixels = len(origins)

    ema = np.zeros((config.occupancy_resolution,) * 3)
    trace = []
    order = rng.permutation(n_pixels)
    cursor = 0
    for step in range(1, config.steps + 1):
        if cursor + config.batch_rays > n_pixels:
            order = rng.permutation(n_pixels)
            cursor = 0
        batch = order[cursor : cursor + config.batch_rays]
        cursor += config.batch_rays

        pixels, cache = render_rays(origins[batch], dirs[batch], model, cfg, want_cache=True)
        loss, d_pred = huber_loss(pixels, targets[batch], config.huber_delta)
        mean_loss = float(loss.mean())
        if not np.isfinite(mean_loss):
            raise DivergenceError(f"non-finite loss at step {step}")
        mse = float(np.mean((pixels - targets[batch]) ** 2))
        psnr = 10.0 * np.log10(1.0 / mse) if mse > 0 else np.inf
        trace.append((step, mean_loss, psnr))

        grads = backprop_batch(cache, d_pred / len(batch), model)
        adam_step(params, grads, state, config)

        if step % config.occupancy_interval == 0:
            _refresh_occupancy(model, ema, config, rng)
        if progress is not None:
            progress(step, mean_loss, psnr)
    return model, trace


def evaluate_psnr(model: SceneModel, dataset: PosedDataset, cfg: RayMarchConfig) -> list[float]:
    """Per-view PSNR of rendered images against the dataset images."""
    from .renderer import render_image

    out = []
    for img, cam in zip(dataset.images, dataset.cameras):
        rendered = render_image(cam, model, cfg)
        mse = float(np.mean((rendered - img) ** 2))
        out.append(10.0 * np.log10(1.0 / mse) if mse > 0 else np.inf)
    return out
