"""Scene model container shared by trainer, renderer, and codec."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoding import FrequencySchedule
from .field import CpFactorSet, FourierVolumeSet, TriplaneFactorSet
from .mlp import ShallowMlp
from .renderer import OccupancyGrid


@dataclass
class SceneModel:
    field: FourierVolumeSet | CpFactorSet | TriplaneFactorSet
    mlp: ShallowMlp
    occupancy: OccupancyGrid
    sched: FrequencySchedule
    aabb: np.ndarray  # (2, 3) min/max corners

    def __post_init__(self):
        self.aabb = np.asarray(self.aabb, dtype=np.float64).reshape(2, 3)
        if np.any(self.aabb[1] <= self.aabb[0]):
            raise ValueError("AABB must have positive extent on every axis")
        if self.field.levels != self.sched.levels:
            raise ValueError("field level count does not match frequency schedule")
        F = 2 * self.sched.levels * self.field.channels
        if self.mlp.feature_dim != F:
            raise ValueError(f"mlp expects {self.mlp.feature_dim} features, field yields {F}")

    @property
    def ppng_type(self) -> int:
        if isinstance(self.field, CpFactorSet):
            return 1
        if isinstance(self.field, TriplaneFactorSet):
            return 2
        return 3

    @property
    def param_count(self) -> int:
        return self.field.param_count + self.mlp.param_count
