"""Compact trainable radiance fields with a portable .ppng binary format."""

from .encoding import FrequencySchedule, positional_encode, sh_encode
from .field import (
    CpFactorSet,
    FourierVolumeSet,
    TriplaneFactorSet,
    compose_cp,
    compose_triplane,
    query_feature,
    query_feature_backward,
)
from .mlp import ShallowMlp, mlp_backward, mlp_forward
from .model import SceneModel
from .renderer import (
    Camera,
    OccupancyGrid,
    RayMarchConfig,
    build_occupancy,
    generate_ray,
    render_image,
    render_ray,
)
from .codec import convert, load, save
from .trainer import PosedDataset, TrainConfig, huber_loss, load_dataset, train

__all__ = [
    "Camera",
    "CpFactorSet",
    "FourierVolumeSet",
    "FrequencySchedule",
    "OccupancyGrid",
    "PosedDataset",
    "RayMarchConfig",
    "SceneModel",
    "ShallowMlp",
    "TrainConfig",
    "TriplaneFactorSet",
    "build_occupancy",
    "compose_cp",
    "compose_triplane",
    "convert",
    "generate_ray",
    "huber_loss",
    "load",
    "load_dataset",
    "mlp_backward",
    "mlp_forward",
    "positional_encode",
    "query_feature",
    "query_feature_backward",
    "render_image",
    "render_ray",
    "save",
    "sh_encode",
    "train",
]
