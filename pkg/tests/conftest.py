import numpy as np
import pytest

from ppng.encoding import FrequencySchedule
from ppng.field import CpFactorSet, FourierVolumeSet, TriplaneFactorSet
from ppng.mlp import ShallowMlp
from ppng.model import SceneModel
from ppng.renderer import OccupancyGrid


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def random_field(rng, ppng_type, levels=2, resolution=4, channels=2, rank=2,
                 scale=0.5, dtype=np.float32):
    """Random factor/volume banks with float16-representable entries."""
    def bank(shape):
        a = rng.uniform(-scale, scale, size=shape).astype(np.float16)
        return a.astype(dtype)

    n = 2 * levels
    if ppng_type == 1:
        shape = (n, rank, resolution, channels)
        return CpFactorSet(bank(shape), bank(shape), bank(shape))
    if ppng_type == 2:
        shape = (n, rank, resolution, resolution, channels)
        return TriplaneFactorSet(bank(shape), bank(shape), bank(shape))
    return FourierVolumeSet(bank((n, resolution, resolution, resolution, channels)))


def random_model(rng, ppng_type, levels=2, resolution=4, channels=2, rank=2,
                 occ_resolution=8, dtype=np.float32):
    field = random_field(rng, ppng_type, levels, resolution, channels, rank, dtype=dtype)
    mlp = ShallowMlp.init(feature_dim=2 * levels * channels,
                          seed=int(rng.integers(1 << 31)), dtype=dtype)
    for w in mlp.params().values():
        w[...] = w.astype(np.float16).astype(dtype)
    occ = OccupancyGrid(rng.random((occ_resolution,) * 3) < 0.7)
    sched = FrequencySchedule.default(levels)
    return SceneModel(field, mlp, occ, sched, np.array([[-1.0] * 3, [1.0] * 3]))
